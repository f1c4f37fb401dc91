"""Closed-form ball kernels of the fractional Laplacian.

The three kernels here are the analytic backbone of the solver:

* :func:`psi_ball` -- the ball torsion function
  ``gamma_ns (r^2 - |x-c|^2)_+^s``, used both as the exact solution on balls
  and as the per-step score of the walk-on-spheres estimator.
* :func:`poisson_kernel` -- the exit density of the 2s-stable process from a
  ball, ``poisson_C ((R^2-|x|^2)/(|y|^2-R^2))^s |x-y|^{-n}``.
* :func:`antisym_kernel` -- the antisymmetrized Poisson kernel
  ``P(x,y) - P(x,y')`` (``y'`` the mirror of ``y`` across ``{x_1 = 0}``),
  whose two-point ratios obey the explicit boundary-Harnack sandwich with
  constant ``harnack_K``.

Quadrature cross-checks (:func:`frac_laplacian_psi_center`,
:func:`poisson_total_mass`) evaluate the defining singular integrals
directly and are used to pin the normalizations.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from .params import SolverParams


class KernelDomainError(ValueError):
    """Arguments violate the kernel's domain (x inside, y outside the ball)."""


def _sqdist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return np.sum(d * d, axis=-1)


def psi_ball(x, center, r: float, params: SolverParams):
    """Torsion function of the ball B_r(center), zero outside.

    Total function: accepts any point (or array of points, shape (..., n))
    and returns ``gamma_ns (r^2 - |x - center|^2)_+^s``.
    """
    if r <= 0:
        raise KernelDomainError(f"ball radius must be positive, got {r}")
    gap = r * r - _sqdist(x, center)
    return params.gamma_ns * np.maximum(gap, 0.0) ** params.s


def poisson_kernel(x, y, R: float, params: SolverParams):
    """Exit density of the 2s-stable process from B_R(0), evaluated at (x, y).

    Requires |x| < R and |y| > R (callers translate for balls not centered at
    the origin). Integrates to 1 in y over the complement of the ball for any
    fixed interior x; strictly positive on its domain.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xx = np.sum(x * x, axis=-1)
    yy = np.sum(y * y, axis=-1)
    if np.any(xx >= R * R):
        raise KernelDomainError("x must lie in the open ball B_R")
    if np.any(yy <= R * R):
        raise KernelDomainError("y must lie outside the closed ball B_R")
    n = params.n
    return (params.poisson_C
            * ((R * R - xx) / (yy - R * R)) ** params.s
            * _sqdist(x, y) ** (-0.5 * n))


def _reflect_first(y: np.ndarray) -> np.ndarray:
    yr = np.array(y, dtype=float, copy=True)
    yr[..., 0] = -yr[..., 0]
    return yr


def antisym_kernel(x, y, R: float, params: SolverParams):
    """Antisymmetric ball kernel T(x,y) = P(x,y) - P(x,y').

    ``y'`` mirrors ``y`` across the hyperplane {x_1 = 0}. Defined for
    |x| < R < |y| with x_1 > 0 and y_1 > 0, where it is nonnegative.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x[..., 0] <= 0.0) or np.any(y[..., 0] <= 0.0):
        raise KernelDomainError("antisym_kernel requires x_1 > 0 and y_1 > 0")
    xx = np.sum(x * x, axis=-1)
    yy = np.sum(y * y, axis=-1)
    if np.any(xx >= R * R):
        raise KernelDomainError("x must lie in the open ball B_R")
    if np.any(yy <= R * R):
        raise KernelDomainError("y must lie outside the closed ball B_R")
    n = params.n
    fac = params.poisson_C * ((R * R - xx) / (yy - R * R)) ** params.s
    return fac * (_sqdist(x, y) ** (-0.5 * n)
                  - _sqdist(x, _reflect_first(y)) ** (-0.5 * n))


def sandwich_ratio_bounds(x, z, y, R: float, params: SolverParams):
    """Normalized two-point kernel ratio T(x,y)/T(z,y) * (z_1/x_1).

    The boundary-Harnack sandwich asserts this lies in [1/K, K] with
    K = harnack_K for every admissible triple: z in the half-ball B_{R/2}
    with z_1 > 0, x in B_{R/4}(z) with x_1 > 0 and |x| < R, and y in the
    half-space y_1 > 0 outside B_R.
    """
    t_x = antisym_kernel(x, y, R, params)
    t_z = antisym_kernel(z, y, R, params)
    x1 = np.asarray(x, dtype=float)[..., 0]
    z1 = np.asarray(z, dtype=float)[..., 0]
    return (t_x / t_z) * (z1 / x1)


def frac_laplacian_psi_center(params: SolverParams, r: float = 1.0,
                              rel_tol: float = 1e-10) -> float:
    """(-Delta)^s of the ball torsion function, evaluated at the center.

    Computes the defining singular integral by adaptive radial quadrature
    (the angular part is analytic at the center by symmetry):

        c_ns * omega_n * int_0^inf (psi(0) - psi(t)) t^{-1-2s} dt.

    Equals 1 for the correct normalization of ``c_ns``; deviations flag a
    broken constant. Scale-invariant in ``r`` (kept as a parameter so the
    invariance itself can be tested).
    """
    s = params.s
    g = params.gamma_ns * r ** (2 * s)

    def integrand(t: float) -> float:
        # psi(|z|=t) for a ball of radius r, center value g
        return (g - params.gamma_ns * max(r * r - t * t, 0.0) ** s) * t ** (-1.0 - 2.0 * s)

    inner, _ = integrate.quad(integrand, 0.0, r, epsrel=rel_tol, limit=200)
    tail = g * r ** (-2.0 * s) / (2.0 * s)  # psi vanishes beyond r
    return params.c_ns * params.omega_n * (inner + tail)


def poisson_total_mass(params: SolverParams, R: float = 1.0,
                       rel_tol: float = 1e-6) -> float:
    """Total mass of the exit kernel from the center of B_R.

    Adaptive radial quadrature of ``poisson_kernel(0, y, R)`` over |y| > R;
    equals 1 for the exit-law normalization.
    """
    s = params.s
    n = params.n

    def radial(t: float) -> float:
        # kernel at radius t times the sphere area t^{n-1} omega_n
        return (R * R / (t * t - R * R)) ** s * t ** (-n) * t ** (n - 1)

    # substitute t = R/u to map (R, inf) onto (0, 1): dt = -R/u^2 du
    def mapped(u: float) -> float:
        t = R / u
        return radial(t) * R / (u * u)

    val, _ = integrate.quad(mapped, 0.0, 1.0, epsrel=rel_tol, limit=200)
    return params.poisson_C * params.omega_n * val


def exit_radius_density(rho, s: float):
    """Radial density of the exit-distance factor |exit|/R from the center.

    Proportional to ``(rho^2 - 1)^{-s} / rho`` on (1, inf); the constant
    ``2 sin(pi s)/pi`` normalizes it. Dimension-free: the ``rho^{n-1}``
    surface factor cancels the ``|y|^{-n}`` of the kernel.
    """
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    ok = rho > 1.0
    out[ok] = (2.0 * math.sin(math.pi * s) / math.pi
               * (rho[ok] ** 2 - 1.0) ** (-s) / rho[ok])
    return out
