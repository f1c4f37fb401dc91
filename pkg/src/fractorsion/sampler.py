"""Exact exit sampling of the isotropic 2s-stable process from a ball.

Started at the center of a ball of radius r, the process exits at radius
``r / sqrt(V)`` with ``V ~ Beta(s, 1-s)``, in a direction uniform on the
sphere, the two independent. This follows from the radial form of the exit
kernel: the ``rho^{n-1}`` surface factor cancels the ``|y|^{-n}`` of the
kernel, so the radial law is dimension-free.

All randomness is derived from counter-based Philox streams keyed by a
64-bit seed. Every transform consumes a *fixed* number of uniforms
(inverse-CDF Beta, inverse-CDF gaussians), so the draw consumed by walk i
at step k is a pure function of (seed, i, k). That alignment is what makes
the coupled common-random-number estimators exact and the results
independent of worker scheduling.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import special

from .params import SolverParams

# fixed per-point block size of the vectorized walkers; part of the
# reproducibility contract (results are reduced in block order)
BLOCK = 16384

_U_LO = 1e-15
_U_HI = 1.0 - 1e-15


class SampleDomainError(ValueError):
    """Raised for arguments outside an operation's domain."""


@dataclass(frozen=True)
class ExitSample:
    """One exit event: absolute position and the ratio |exit - center| / r."""

    point: np.ndarray
    radius_factor: float


def derive_key(seed: int, tag: str) -> np.ndarray:
    """Derive a 128-bit Philox key from (seed, tag) via SHA-256."""
    h = hashlib.sha256(f"{int(seed) & 0xFFFFFFFFFFFFFFFF}:{tag}".encode()).digest()
    return np.frombuffer(h[:16], dtype=np.uint64).copy()


def block_uniforms(key: np.ndarray, block: int, step: int, rows: int,
                   cols: int) -> np.ndarray:
    """Uniforms in (0,1) for (block, step), shape (rows, cols).

    The Philox counter is positioned at (step, block), so the array depends
    only on (key, block, step) — never on how many draws other blocks or
    steps consumed.
    """
    bg = np.random.Philox(key=key, counter=[0, step, block, 0])
    u = np.random.Generator(bg).random((rows, cols))
    return np.clip(u, _U_LO, _U_HI)


def exit_factors_from_uniforms(u, s: float) -> np.ndarray:
    """Map uniforms to exit-radius factors 1/sqrt(V), V ~ Beta(s, 1-s)."""
    v = special.betaincinv(s, 1.0 - s, np.asarray(u, dtype=float))
    v = np.clip(v, 1e-300, _U_HI)
    return 1.0 / np.sqrt(v)


def directions_from_uniforms(u) -> np.ndarray:
    """Map uniforms of shape (..., n) to uniform unit vectors on S^{n-1}."""
    g = special.ndtri(np.asarray(u, dtype=float))
    norm = np.sqrt(np.sum(g * g, axis=-1, keepdims=True))
    # a zero gaussian vector has probability 0; keep the guard total anyway
    norm[norm == 0.0] = 1.0
    return g / norm


def exit_stream(base_seed: int, sample_index: int) -> np.random.Generator:
    """Stream for one exit sample, reproducible in isolation.

    Sample ``i`` never shares Philox counter space with sample ``j != i``.
    """
    key = derive_key(base_seed, "exit")
    bg = np.random.Philox(key=key, counter=[0, 0, int(sample_index), 1])
    return np.random.Generator(bg)


def sample_exit(center, r: float, params: SolverParams,
                rng: np.random.Generator) -> ExitSample:
    """Sample the exit position of the 2s-stable process from B_r(center).

    The exit radius factor is strictly greater than 1 almost surely; the
    direction is uniform on the sphere and independent of the radius.
    """
    if r <= 0:
        raise SampleDomainError(f"ball radius must be positive, got {r}")
    center = np.asarray(center, dtype=float)
    n = params.n
    u = np.clip(rng.random(1 + n), _U_LO, _U_HI)
    factor = float(exit_factors_from_uniforms(u[:1], params.s)[0])
    direction = directions_from_uniforms(u[1:])
    return ExitSample(point=center + r * factor * direction,
                      radius_factor=factor)


def sample_exit_many(center, r: float, params: SolverParams, base_seed: int,
                     n_samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized exits; sample i drawn from its isolated counter stream.

    Returns (points, radius_factors). Equivalent to calling
    :func:`sample_exit` with ``exit_stream(base_seed, i)`` for each i.
    """
    key = derive_key(base_seed, "exit")
    n = params.n
    # counters [0, 0, i, 1] laid out contiguously: generate per-sample rows
    u = np.empty((n_samples, 1 + n))
    for i in range(n_samples):
        bg = np.random.Philox(key=key, counter=[0, 0, i, 1])
        u[i] = np.random.Generator(bg).random(1 + n)
    u = np.clip(u, _U_LO, _U_HI)
    factors = exit_factors_from_uniforms(u[:, 0], params.s)
    dirs = directions_from_uniforms(u[:, 1:])
    return np.asarray(center, dtype=float) + r * factors[:, None] * dirs, factors


def exit_radius_cdf(rho, s: float):
    """CDF of the exit-radius factor: P(factor <= rho) = 1 - I_{1/rho^2}(s, 1-s).

    Monotone from 0 at rho = 1 to 1 as rho -> inf. Raises for rho < 1.
    """
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(rho_arr < 1.0):
        raise SampleDomainError("exit radius factor is >= 1 by construction")
    out = 1.0 - special.betainc(s, 1.0 - s, 1.0 / rho_arr ** 2)
    return float(out) if np.isscalar(rho) else out
