"""Special constants of the fractional Laplacian on balls.

Everything downstream (kernels, exit laws, walk scoring, Harnack/Hopf
constants) reads its numbers from :class:`SolverParams`, so this module is
the single place where the normalization conventions live:

* ``c_ns``      -- singular-integral constant of (-Delta)^s,
                   ``4^s s Gamma(n/2+s) / (pi^{n/2} Gamma(1-s))``.
                   This is the unique normalization under which the ball
                   torsion function has fractional Laplacian exactly 1.
* ``gamma_ns``  -- ball torsion amplitude, ``4^{-s} Gamma(n/2) /
                   (Gamma(n/2+s) Gamma(1+s))``; recovers the classical
                   ``1/(2n)`` as s -> 1.
* ``poisson_C`` -- normalization of the ball Poisson kernel,
                   ``Gamma(n/2) sin(pi s) / pi^{n/2+1}``, which makes the
                   kernel a probability density (the exit law of the
                   2s-stable process).
* ``harnack_K`` -- explicit boundary-Harnack constant for antisymmetric
                   s-harmonic functions, ``(4/3)^s (7/2)^{n+2} 2n``.
* ``omega_n``   -- surface measure of the unit sphere (so the unit-ball
                   volume is ``omega_n / n``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class ParameterError(ValueError):
    """Raised for out-of-range solver parameters."""


@dataclass(frozen=True)
class SolverParams:
    """Dimension, fractional order, and all derived constants.

    Instances are immutable and safe to share across workers.
    """

    n: int
    s: float
    c_ns: float
    gamma_ns: float
    poisson_C: float
    harnack_K: float
    omega_n: float

    @property
    def ball_volume(self) -> float:
        """Volume of the unit ball in dimension n."""
        return self.omega_n / self.n


def eval_constants(n: int, s: float) -> SolverParams:
    """Evaluate all closed-form constants for dimension ``n`` and order ``s``.

    Parameters
    ----------
    n : int
        Ambient dimension, >= 1.
    s : float
        Fractional order, strictly inside (0, 1).

    Raises
    ------
    ParameterError
        If ``n < 1`` or ``s`` is outside the open interval (0, 1).
    """
    if not isinstance(n, (int,)) or isinstance(n, bool):
        raise ParameterError(f"dimension n must be an integer, got {n!r}")
    if n < 1:
        raise ParameterError(f"dimension n must be >= 1, got {n}")
    if not (0.0 < s < 1.0):
        raise ParameterError(f"fractional order s must lie in (0, 1), got {s}")

    half_n = 0.5 * n
    # logs throughout: the Gamma ratios overflow float64 already for n ~ 300
    log_c = (s * math.log(4.0) + math.log(s) + math.lgamma(half_n + s)
             - half_n * math.log(math.pi) - math.lgamma(1.0 - s))
    log_gamma = (-s * math.log(4.0) + math.lgamma(half_n)
                 - math.lgamma(half_n + s) - math.lgamma(1.0 + s))
    log_poisson = (math.lgamma(half_n) + math.log(math.sin(math.pi * s))
                   - (half_n + 1.0) * math.log(math.pi))
    omega = 2.0 * math.pi ** half_n / math.gamma(half_n)
    harnack = (4.0 / 3.0) ** s * 3.5 ** (n + 2) * 2.0 * n
    return SolverParams(
        n=n,
        s=float(s),
        c_ns=math.exp(log_c),
        gamma_ns=math.exp(log_gamma),
        poisson_C=math.exp(log_poisson),
        harnack_K=harnack,
        omega_n=omega,
    )
