"""Domain representation and geometric functionals.

Domains are given by a pair of vectorized oracles: exact membership and a
distance-to-boundary that is always a *lower bound* on the true distance
(exact for balls and their Minkowski dilations, within 1e-6 of exact for
the perturbed disk). Lower bounds never bias the walk-on-spheres estimator;
they only shrink steps.

Supported kinds:

* ``Ball`` and (pairwise disjoint) ``UnionOfBalls`` in any dimension;
* ``PerturbedBall2D`` -- the radial graph r(t) = a (1 + eps cos(k t)),
  restricted to eps * k < 1 so the boundary is a valid star-shaped curve;
* ``Segment`` -- a zero-interior set usable only as a Minkowski inner set
  (segment + B_R is the stadium);
* ``MinkowskiSum(inner, R)`` -- the R-dilation, with signed distance
  ``sdf(x) = sdf_inner(x) - R`` and interior-ball radius exactly R.

On top of the oracles sit the shape functionals: the inradius/outradius
deviation rho, critical moving-plane offsets, reflected symmetric
differences, tubular-neighborhood volumes, perimeters, and the
closure-dilation identity check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, optimize, spatial
from scipy.stats import qmc

from .estimates import Estimate
from .sampler import derive_key

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class GeometryError(ValueError):
    """Invalid shape parameters or unsupported geometric operation."""


# ---------------------------------------------------------------------------
# hyperplane frames (moving planes)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HyperplaneFrame:
    """A direction with offset: the hyperplane {x . e = lam}.

    ``xi(x) = lam - x . e`` is positive on the side a critical cap reflects
    into; the antisymmetric comparison function u - u o reflect is
    nonnegative there at the critical offset.
    """

    e: np.ndarray
    lam: float
    Lambda_e: float
    case_tag: str = "undetermined"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.e, dtype=float)
        nrm = float(np.linalg.norm(e))
        if not math.isfinite(nrm) or nrm == 0.0:
            raise GeometryError("frame direction must be a nonzero vector")
        if abs(nrm - 1.0) > 1e-12:
            raise GeometryError("frame direction must be a unit vector")
        object.__setattr__(self, "e", e)
        if self.lam > self.Lambda_e + 1e-12:
            raise GeometryError("offset exceeds the supremum extent Lambda_e")

    def reflect(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x - 2.0 * (x @ self.e - self.lam)[..., None] * self.e \
            if x.ndim > 1 else x - 2.0 * (float(x @ self.e) - self.lam) * self.e

    def reflect_direction(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        return d - 2.0 * (d @ self.e)[..., None] * self.e \
            if d.ndim > 1 else d - 2.0 * float(d @ self.e) * self.e

    def xi(self, x):
        """Signed distance-like coordinate, positive on the reflected side."""
        x = np.asarray(x, dtype=float)
        return self.lam - x @ self.e


def frame_through(e, lam: float, Lambda_e: Optional[float] = None) -> HyperplaneFrame:
    """Frame with a prescribed offset (no criticality claim)."""
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    return HyperplaneFrame(e=e, lam=float(lam),
                           Lambda_e=float(lam if Lambda_e is None else Lambda_e))


# ---------------------------------------------------------------------------
# domain kinds
# ---------------------------------------------------------------------------

def _as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise GeometryError(f"point has dimension {arr.shape[0]}, domain has {dim}")
        return arr[None, :], True
    if arr.shape[-1] != dim:
        raise GeometryError(f"points have dimension {arr.shape[-1]}, domain has {dim}")
    return arr, False


class DomainSpec:
    """Base class: bounded domain with membership + distance oracles.

    Immutable after construction; all queries are pure and accept arrays of
    shape (m, n) or single points of shape (n,).
    """

    dim: int
    empty_interior: bool = False

    # -- oracles -----------------------------------------------------------
    def signed(self, x: np.ndarray) -> np.ndarray:
        """Signed distance to the boundary, negative inside (lower-bound safe)."""
        raise NotImplementedError

    def contains(self, x) -> np.ndarray:
        pts, single = _as_points(x, self.dim)
        res = self.signed(pts) < 0.0
        return bool(res[0]) if single else res

    def distance_bounds(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Cheap two-sided bounds on the unsigned boundary distance.

        Default falls back to the exact oracle; shapes with expensive
        oracles override this with closed-form bounds so membership tests
        can short-circuit.
        """
        d = np.abs(self.signed(pts))
        return d, d

    def distance_boundary(self, x) -> np.ndarray:
        pts, single = _as_points(x, self.dim)
        res = np.abs(self.signed(pts))
        return float(res[0]) if single else res

    # -- cached geometry ----------------------------------------------------
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def diameter(self) -> float:
        raise NotImplementedError

    @property
    def r_inner(self) -> float:
        """Radius of the uniform interior ball condition."""
        raise NotImplementedError

    def center_hint(self) -> np.ndarray:
        lo, hi = self.bounding_box()
        return 0.5 * (lo + hi)

    # -- support functions ---------------------------------------------------
    def support_max(self, e: np.ndarray) -> float:
        """sup { x . e : x in the closure }."""
        raise NotImplementedError

    def outradius(self, p: np.ndarray) -> float:
        """inf { t : domain subset of B_t(p) } = sup_y |y - p|."""
        raise NotImplementedError

    # -- boundary access ------------------------------------------------------
    def boundary_points(self, m: int, seed: int = 0) -> np.ndarray:
        raise NotImplementedError

    def boundary_with_normals(self, m: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def perimeter(self) -> float:
        raise GeometryError(f"perimeter unsupported for {type(self).__name__}")

    # -- Monte Carlo volume ----------------------------------------------------
    def volume_estimate(self, n_samples: int = 1 << 20, seed: int = 2024) -> Estimate:
        key = (n_samples, seed)
        cache = getattr(self, "_vol_cache", None)
        if cache is not None and cache[0] == key:
            return cache[1]
        lo, hi = self.bounding_box()
        gen = np.random.Generator(np.random.Philox(key=derive_key(seed, "volume")))
        pts = lo + (hi - lo) * gen.random((n_samples, self.dim))
        hit = self.contains(pts).astype(float)
        box = float(np.prod(hi - lo))
        mean = box * float(hit.mean())
        stderr = box * float(hit.std(ddof=1)) / math.sqrt(n_samples)
        est = Estimate(mean=mean, stderr=stderr, n_samples=n_samples)
        self._vol_cache = (key, est)
        return est


class Ball(DomainSpec):
    def __init__(self, center, r: float):
        if r <= 0:
            raise GeometryError(f"ball radius must be positive, got {r}")
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.r = float(r)
        self.dim = self.center.shape[0]

    def signed(self, x):
        d = x - self.center
        return np.sqrt(np.sum(d * d, axis=-1)) - self.r

    def bounding_box(self):
        return self.center - self.r, self.center + self.r

    @property
    def diameter(self):
        return 2.0 * self.r

    @property
    def r_inner(self):
        return self.r

    def support_max(self, e):
        return float(self.center @ e) + self.r

    def outradius(self, p):
        return float(np.linalg.norm(self.center - np.asarray(p, float))) + self.r

    def boundary_points(self, m, seed: int = 0):
        return self.boundary_with_normals(m, seed)[0]

    def boundary_with_normals(self, m, seed: int = 0):
        nu = _sphere_directions(self.dim, m, seed)
        return self.center + self.r * nu, nu

    def perimeter(self):
        if self.dim != 2:
            raise GeometryError("perimeter is a 2-D functional")
        return 2.0 * math.pi * self.r

    def center_hint(self):
        return self.center.copy()


def _sphere_directions(dim: int, m: int, seed: int) -> np.ndarray:
    """Deterministic well-spread unit vectors: equispaced in 2-D, seeded
    gaussian directions otherwise."""
    if dim == 1:
        return np.array([[-1.0], [1.0]])[np.arange(m) % 2]
    if dim == 2:
        t = 2.0 * math.pi * (np.arange(m) + 0.5) / m
        return np.column_stack([np.cos(t), np.sin(t)])
    gen = np.random.Generator(np.random.Philox(key=derive_key(seed, f"sphere{dim}")))
    g = gen.standard_normal((m, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


class UnionOfBalls(DomainSpec):
    """Finite union of balls. The distance oracle takes the min over the
    per-ball unsigned distances: exact for pairwise disjoint components and
    an underestimate inside overlaps, which only shrinks walk steps."""

    def __init__(self, centers, radii):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.radii = np.atleast_1d(np.asarray(radii, dtype=float))
        if len(self.centers) != len(self.radii) or len(self.radii) == 0:
            raise GeometryError("need one radius per center")
        if np.any(self.radii <= 0):
            raise GeometryError("ball radii must be positive")
        self.dim = self.centers.shape[1]

    def signed(self, x):
        x = np.asarray(x, dtype=float)
        mindist = None
        inside = None
        for c, r in zip(self.centers, self.radii):  # few components: loop
            d = x - c
            sd = np.sqrt(np.sum(d * d, axis=-1)) - r
            a = np.abs(sd)
            if mindist is None:
                mindist, inside = a, sd < 0.0
            else:
                np.minimum(mindist, a, out=mindist)
                inside |= sd < 0.0
        return np.where(inside, -mindist, mindist)

    def distance_bounds(self, pts):
        d = np.abs(self.signed(pts))
        return d, d

    def bounding_box(self):
        lo = np.min(self.centers - self.radii[:, None], axis=0)
        hi = np.max(self.centers + self.radii[:, None], axis=0)
        return lo, hi

    @property
    def diameter(self):
        c, r = self.centers, self.radii
        gaps = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1)
        return float(np.max(gaps + r[:, None] + r[None, :]))

    @property
    def r_inner(self):
        return float(np.min(self.radii))

    def support_max(self, e):
        return float(np.max(self.centers @ e + self.radii))

    def outradius(self, p):
        return float(np.max(np.linalg.norm(self.centers - np.asarray(p, float), axis=1)
                            + self.radii))

    def pairwise_disjoint(self) -> bool:
        c, r = self.centers, self.radii
        for i in range(len(r)):
            for j in range(i + 1, len(r)):
                if np.linalg.norm(c[i] - c[j]) < r[i] + r[j]:
                    return False
        return True

    def boundary_points(self, m, seed: int = 0):
        return self.boundary_with_normals(m, seed)[0]

    def boundary_with_normals(self, m, seed: int = 0):
        k = len(self.radii)
        per = [m // k + (1 if i < m % k else 0) for i in range(k)]
        pts, nus = [], []
        for i, cnt in enumerate(per):
            if cnt == 0:
                continue
            nu = _sphere_directions(self.dim, cnt, seed + i)
            pts.append(self.centers[i] + self.radii[i] * nu)
            nus.append(nu)
        return np.vstack(pts), np.vstack(nus)

    def boundary_components(self, m: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Boundary points plus the index of the component sphere they lie on."""
        k = len(self.radii)
        per = [m // k + (1 if i < m % k else 0) for i in range(k)]
        pts, comp = [], []
        for i, cnt in enumerate(per):
            if cnt == 0:
                continue
            nu = _sphere_directions(self.dim, cnt, seed + i)
            pts.append(self.centers[i] + self.radii[i] * nu)
            comp.append(np.full(cnt, i))
        return np.vstack(pts), np.concatenate(comp)

    def perimeter(self):
        if self.dim != 2:
            raise GeometryError("perimeter is a 2-D functional")
        if not self.pairwise_disjoint():
            raise GeometryError("perimeter of overlapping unions is unsupported")
        return float(np.sum(2.0 * math.pi * self.radii))

    def center_hint(self):
        return np.mean(self.centers, axis=0)


class Segment(DomainSpec):
    """Closed segment: zero interior, valid only as a Minkowski inner set."""

    empty_interior = True

    def __init__(self, a, b):
        self.a = np.atleast_1d(np.asarray(a, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        if self.a.shape != self.b.shape:
            raise GeometryError("segment endpoints must share a dimension")
        self.dim = self.a.shape[0]
        self._ab = self.b - self.a
        self._len2 = float(self._ab @ self._ab)
        if self._len2 == 0.0:
            raise GeometryError("segment endpoints coincide")

    def signed(self, x):
        t = np.clip(((x - self.a) @ self._ab) / self._len2, 0.0, 1.0)
        foot = self.a + t[..., None] * self._ab
        d = x - foot
        return np.sqrt(np.sum(d * d, axis=-1))

    def bounding_box(self):
        return np.minimum(self.a, self.b), np.maximum(self.a, self.b)

    @property
    def diameter(self):
        return float(np.linalg.norm(self._ab))

    @property
    def r_inner(self):
        return 0.0

    def support_max(self, e):
        return float(max(self.a @ e, self.b @ e))

    def outradius(self, p):
        p = np.asarray(p, float)
        return float(max(np.linalg.norm(self.a - p), np.linalg.norm(self.b - p)))

    def boundary_points(self, m, seed: int = 0):
        t = (np.arange(m) + 0.5) / m
        return self.a + t[:, None] * self._ab


class PerturbedBall2D(DomainSpec):
    """Star-shaped planar domain with radius a (1 + eps cos(k t)).

    Membership is exact (compare |x| with the radial graph). The distance
    oracle locates the nearest boundary parameter by a coarse cyclic scan
    followed by golden-section refinement of the best basins, then subtracts
    a small slack so the result stays a lower bound (within 1e-6 * a of the
    true distance).
    """

    _COARSE_MIN = 96
    _REFINE_ITERS = 24
    _SLACK = 1e-7

    def __init__(self, a: float, eps: float, k: int):
        if a <= 0:
            raise GeometryError(f"base radius must be positive, got {a}")
        if eps < 0:
            raise GeometryError(f"perturbation amplitude must be >= 0, got {eps}")
        if eps * k >= 1.0:
            raise GeometryError(
                f"need eps*k < 1 for a star-shaped C^1 boundary, got {eps * k}")
        self.a, self.eps, self.k = float(a), float(eps), int(k)
        self.dim = 2
        self._m0 = max(self._COARSE_MIN, 32 * max(self.k, 1))
        t = 2.0 * math.pi * np.arange(self._m0) / self._m0
        self._coarse_t = t
        self._coarse_b = self._curve(t)

    # boundary curve and its derived quantities -----------------------------
    def radius_at(self, t):
        return self.a * (1.0 + self.eps * np.cos(self.k * np.asarray(t, float)))

    def _curve(self, t):
        r = self.radius_at(t)
        return np.stack([r * np.cos(t), r * np.sin(t)], axis=-1)

    def _curve_speed(self, t):
        t = np.asarray(t, float)
        r = self.radius_at(t)
        dr = -self.a * self.eps * self.k * np.sin(self.k * t)
        return np.sqrt(r * r + dr * dr)

    def curvature(self, t):
        t = np.asarray(t, float)
        r = self.radius_at(t)
        dr = -self.a * self.eps * self.k * np.sin(self.k * t)
        ddr = -self.a * self.eps * self.k * self.k * np.cos(self.k * t)
        return (r * r + 2.0 * dr * dr - r * ddr) / (r * r + dr * dr) ** 1.5

    def normal_at(self, t):
        t = np.asarray(t, float)
        r = self.radius_at(t)
        dr = -self.a * self.eps * self.k * np.sin(self.k * t)
        # tangent (dr cos - r sin, dr sin + r cos), rotated by -90 degrees
        tx = dr * np.cos(t) - r * np.sin(t)
        ty = dr * np.sin(t) + r * np.cos(t)
        nu = np.stack([ty, -tx], axis=-1)
        return nu / np.linalg.norm(nu, axis=-1, keepdims=True)

    # oracles ----------------------------------------------------------------
    def contains(self, x):
        pts, single = _as_points(x, 2)
        theta = np.arctan2(pts[:, 1], pts[:, 0])
        res = np.sum(pts * pts, axis=1) < self.radius_at(theta) ** 2
        return bool(res[0]) if single else res

    def _nearest_sq(self, pts: np.ndarray) -> np.ndarray:
        """Squared distance to the boundary curve, refined per point."""
        m0 = self._m0
        d2 = np.sum((pts[:, None, :] - self._coarse_b[None, :, :]) ** 2, axis=2)
        # cyclic local minima of the coarse profile; keep the best 3 basins
        ismin = (d2 <= np.roll(d2, 1, axis=1)) & (d2 <= np.roll(d2, -1, axis=1))
        masked = np.where(ismin, d2, np.inf)
        order = np.argpartition(masked, min(2, m0 - 1), axis=1)[:, :3]
        best = np.min(d2, axis=1)
        h = 2.0 * math.pi / m0
        for c in range(order.shape[1]):
            t0 = self._coarse_t[order[:, c]]
            a, b = t0 - h, t0 + h
            for _ in range(self._REFINE_ITERS):
                x1 = b - _GOLDEN * (b - a)
                x2 = a + _GOLDEN * (b - a)
                f1 = np.sum((pts - self._curve(x1)) ** 2, axis=1)
                f2 = np.sum((pts - self._curve(x2)) ** 2, axis=1)
                left = f1 < f2
                b = np.where(left, x2, b)
                a = np.where(left, a, x1)
            tm = 0.5 * (a + b)
            fm = np.sum((pts - self._curve(tm)) ** 2, axis=1)
            best = np.minimum(best, fm)
        return best

    def signed(self, x):
        pts, single = _as_points(x, 2)
        out = np.empty(len(pts))
        for lo in range(0, len(pts), 32768):
            chunk = pts[lo:lo + 32768]
            d = np.sqrt(self._nearest_sq(chunk))
            d = np.maximum(d - self._SLACK * self.a, 0.0)
            theta = np.arctan2(chunk[:, 1], chunk[:, 0])
            inside = np.sum(chunk * chunk, axis=1) < self.radius_at(theta) ** 2
            out[lo:lo + 32768] = np.where(inside, -d, d)
        return out[0] if single else out

    def distance_bounds(self, pts):
        # the boundary lies inside the annulus [a(1-eps), a(1+eps)], and the
        # radial gap to the boundary graph bounds the distance from above
        rad = np.sqrt(np.sum(pts * pts, axis=-1))
        theta = np.arctan2(pts[..., 1], pts[..., 0])
        upper = np.abs(rad - self.radius_at(theta))
        lower = np.maximum.reduce([rad - self.a * (1.0 + self.eps),
                                   self.a * (1.0 - self.eps) - rad,
                                   np.zeros_like(rad)])
        return lower, upper

    # cached geometry ----------------------------------------------------------
    def bounding_box(self):
        r = self.a * (1.0 + self.eps)
        return np.array([-r, -r]), np.array([r, r])

    @property
    def diameter(self):
        if self.eps == 0.0:
            return 2.0 * self.a
        if self.k % 2 == 0:
            # antipodal parameters share a radius, so the two fattest rays align
            return 2.0 * self.a * (1.0 + self.eps)
        pts = self._curve(2.0 * math.pi * np.arange(4096) / 4096)
        hull = pts[spatial.ConvexHull(pts).vertices]
        gaps = np.linalg.norm(hull[:, None, :] - hull[None, :, :], axis=2)
        return float(np.max(gaps))

    @property
    def r_inner(self):
        t = 2.0 * math.pi * np.arange(8192) / 8192
        kap = self.curvature(t)
        kmax = float(np.max(kap))
        rmin = float(np.min(self.radius_at(t)))
        return min(1.0 / kmax if kmax > 0 else rmin, rmin)

    def support_max(self, e):
        t = self._coarse_t
        proj = self._coarse_b @ np.asarray(e, float)
        i = int(np.argmax(proj))
        h = 2.0 * math.pi / self._m0
        a, b = t[i] - h, t[i] + h
        for _ in range(40):
            x1 = b - _GOLDEN * (b - a)
            x2 = a + _GOLDEN * (b - a)
            if self._curve(x1) @ e > self._curve(x2) @ e:
                b = x2
            else:
                a = x1
        return float(self._curve(0.5 * (a + b)) @ e)

    def outradius(self, p):
        p = np.asarray(p, float)
        t = self._coarse_t
        d2 = np.sum((self._coarse_b - p) ** 2, axis=1)
        i = int(np.argmax(d2))
        h = 2.0 * math.pi / self._m0
        a, b = t[i] - h, t[i] + h
        for _ in range(40):
            x1 = b - _GOLDEN * (b - a)
            x2 = a + _GOLDEN * (b - a)
            f1 = float(np.sum((self._curve(x1) - p) ** 2))
            f2 = float(np.sum((self._curve(x2) - p) ** 2))
            if f1 > f2:
                b = x2
            else:
                a = x1
        return math.sqrt(max(float(np.sum((self._curve(0.5 * (a + b)) - p) ** 2)),
                             float(d2[i])))

    def boundary_points(self, m, seed: int = 0):
        t = 2.0 * math.pi * (np.arange(m) + 0.5) / m
        return self._curve(t)

    def boundary_with_normals(self, m, seed: int = 0):
        t = 2.0 * math.pi * (np.arange(m) + 0.5) / m
        return self._curve(t), self.normal_at(t)

    def perimeter(self):
        val, _ = integrate.quad(lambda t: float(self._curve_speed(t)),
                                0.0, 2.0 * math.pi, epsrel=1e-9, limit=400)
        return val

    def center_hint(self):
        return np.zeros(2)


class MinkowskiSum(DomainSpec):
    """Dilation of an inner set by the ball B_R: sdf(x) = sdf_inner(x) - R.

    Dilation distributes over unions of balls, so for ball-like inners the
    oracle delegates to the grown balls directly.
    """

    def __init__(self, inner: DomainSpec, R: float):
        if R <= 0:
            raise GeometryError(f"Minkowski radius must be positive, got {R}")
        self.inner = inner
        self.R = float(R)
        self.dim = inner.dim
        if isinstance(inner, Ball):
            self._grown = Ball(inner.center, inner.r + R)
        elif isinstance(inner, UnionOfBalls):
            self._grown = UnionOfBalls(inner.centers, inner.radii + R)
        else:
            self._grown = None

    def signed(self, x):
        if self._grown is not None:
            return self._grown.signed(x)
        return self.inner.signed(x) - self.R

    def contains(self, x):
        if self._grown is not None:
            return self._grown.contains(x)
        pts, single = _as_points(x, self.dim)
        res = self.inner.contains(pts)  # inner points are inside any dilation
        rest = np.flatnonzero(~res)
        if len(rest):
            res = res.copy()
            lo_b, hi_b = self.inner.distance_bounds(pts[rest])
            sure_in = hi_b < self.R
            sure_out = lo_b >= self.R
            res[rest[sure_in]] = True
            need = rest[~(sure_in | sure_out)]
            if len(need):
                res[need] = self.inner.signed(pts[need]) < self.R
        return bool(res[0]) if single else res

    def bounding_box(self):
        lo, hi = self.inner.bounding_box()
        return lo - self.R, hi + self.R

    @property
    def diameter(self):
        return self.inner.diameter + 2.0 * self.R

    @property
    def r_inner(self):
        # every boundary point is touched from inside by a radius-R ball,
        # by construction of the dilation
        return self.R

    def support_max(self, e):
        return self.inner.support_max(e) + self.R

    def outradius(self, p):
        return self.inner.outradius(p) + self.R

    def boundary_points(self, m, seed: int = 0):
        return self.boundary_with_normals(m, seed)[0]

    def boundary_with_normals(self, m, seed: int = 0):
        inner = self.inner
        if isinstance(inner, Ball):
            return Ball(inner.center, inner.r + self.R).boundary_with_normals(m, seed)
        if isinstance(inner, UnionOfBalls):
            return UnionOfBalls(inner.centers, inner.radii + self.R).boundary_with_normals(m, seed)
        if isinstance(inner, Segment) and self.dim == 2:
            return _stadium_boundary(inner, self.R, m)
        if isinstance(inner, PerturbedBall2D):
            t = 2.0 * math.pi * (np.arange(m) + 0.5) / m
            nu = inner.normal_at(t)
            return inner._curve(t) + self.R * nu, nu
        raise GeometryError(f"no boundary parametrization for inner {type(inner).__name__}")

    def perimeter(self):
        if self.dim != 2:
            raise GeometryError("perimeter is a 2-D functional")
        inner = self.inner
        if isinstance(inner, Ball):
            return 2.0 * math.pi * (inner.r + self.R)
        if isinstance(inner, UnionOfBalls):
            if not inner.pairwise_disjoint():
                raise GeometryError("perimeter of overlapping unions is unsupported")
            grown = UnionOfBalls(inner.centers, inner.radii + self.R)
            if not grown.pairwise_disjoint():
                raise GeometryError("dilated components overlap; perimeter unsupported")
            return grown.perimeter()
        if isinstance(inner, Segment):
            return 2.0 * inner.diameter + 2.0 * math.pi * self.R
        if isinstance(inner, PerturbedBall2D):
            def speed(t):
                kap = float(inner.curvature(t))
                fac = 1.0 + self.R * kap
                if fac <= 0:
                    raise GeometryError("offset curve self-intersects (R beyond focal radius)")
                return float(inner._curve_speed(t)) * fac
            val, _ = integrate.quad(speed, 0.0, 2.0 * math.pi, epsrel=1e-9, limit=400)
            return val
        raise GeometryError(f"perimeter unsupported for inner {type(inner).__name__}")

    def center_hint(self):
        return self.inner.center_hint()


def _stadium_boundary(seg: Segment, R: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    length = seg.diameter
    per = 2.0 * length + 2.0 * math.pi * R
    u = (seg.b - seg.a) / length
    v = np.array([-u[1], u[0]])
    s = per * (np.arange(m) + 0.5) / m
    pts = np.empty((m, 2))
    nus = np.empty((m, 2))
    for i, si in enumerate(s):
        if si < length:                       # top edge
            pts[i] = seg.a + si * u + R * v
            nus[i] = v
        elif si < length + math.pi * R:       # cap around b
            ang = (si - length) / R
            nu = math.cos(ang) * v + math.sin(ang) * u
            pts[i] = seg.b + R * nu
            nus[i] = nu
        elif si < 2.0 * length + math.pi * R:  # bottom edge
            t = si - length - math.pi * R
            pts[i] = seg.b - t * u - R * v
            nus[i] = -v
        else:                                  # cap around a
            ang = (si - 2.0 * length - math.pi * R) / R
            nu = -math.cos(ang) * v - math.sin(ang) * u
            pts[i] = seg.a + R * nu
            nus[i] = nu
    return pts, nus


# ---------------------------------------------------------------------------
# construction from declarative descriptions
# ---------------------------------------------------------------------------

def build_domain(spec: dict) -> DomainSpec:
    """Build a domain from a declarative shape description.

    Recognized kinds: ``ball``, ``union_of_balls``, ``perturbed_ball_2d``,
    ``segment``, ``minkowski`` (with an ``inner`` description and ``radius``).
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise GeometryError("shape description must be a dict with a 'kind'")
    kind = spec["kind"]
    known = {
        "ball": {"center", "radius"},
        "union_of_balls": {"centers", "radii"},
        "perturbed_ball_2d": {"a", "eps", "k"},
        "segment": {"a", "b"},
        "minkowski": {"inner", "radius"},
    }
    if kind not in known:
        raise GeometryError(f"unknown shape kind {kind!r}")
    extra = set(spec) - known[kind] - {"kind"}
    if extra:
        raise GeometryError(f"unknown keys for {kind}: {sorted(extra)}")
    missing = known[kind] - set(spec)
    if missing:
        raise GeometryError(f"missing keys for {kind}: {sorted(missing)}")
    if kind == "ball":
        return Ball(spec["center"], spec["radius"])
    if kind == "union_of_balls":
        return UnionOfBalls(spec["centers"], spec["radii"])
    if kind == "perturbed_ball_2d":
        return PerturbedBall2D(spec["a"], spec["eps"], spec["k"])
    if kind == "segment":
        return Segment(spec["a"], spec["b"])
    return MinkowskiSum(build_domain(spec["inner"]), spec["radius"])


@dataclass(frozen=True)
class QueryResult:
    inside: bool
    dist_boundary: float


def domain_query(d: DomainSpec, x) -> QueryResult:
    """Membership plus a lower bound on the distance to the boundary."""
    return QueryResult(inside=bool(d.contains(x)),
                       dist_boundary=float(d.distance_boundary(x)))


# ---------------------------------------------------------------------------
# shape functionals
# ---------------------------------------------------------------------------

def rho_deviation(d: DomainSpec, n_restarts: int = 9, rel_tol: float = 1e-4) -> float:
    """Inradius/outradius deviation: inf_p [outradius(p) - inradius(p)].

    Zero exactly for balls. Minimized by Nelder-Mead restarted from the
    centroid and 8 perturbed seeds; the objective is Lipschitz in p, so
    local descent with restarts suffices. Refined to rel_tol * diameter.
    """
    if d.empty_interior:
        raise GeometryError("rho is undefined for domains with empty interior")
    diam = d.diameter
    if not math.isfinite(diam):
        raise GeometryError("rho requires a bounded domain")

    # outradius(p) + signed(p): equals outradius - inradius inside, and for
    # centers outside the domain the positive signed distance acts as a
    # penalty that never undercuts the interior infimum
    def objective(p):
        return d.outradius(p) + float(d.signed(np.asarray(p, dtype=float)))

    c0 = d.center_hint()
    seeds = [c0]
    step = 0.25 * diam
    for i in range(max(0, n_restarts - 1)):
        delta = np.zeros(d.dim)
        axis = i % d.dim
        delta[axis] = step if (i // d.dim) % 2 == 0 else -step
        if i >= 2 * d.dim:  # diagonal perturbations once axes are used up
            delta = np.full(d.dim, step / math.sqrt(d.dim))
            delta[: (i % d.dim)] *= -1.0
        seeds.append(c0 + delta)

    best = min(objective(p) for p in seeds)
    for p in seeds[:n_restarts]:
        simplex = np.vstack([p] + [p + 0.05 * diam * np.eye(d.dim)[j]
                                   for j in range(d.dim)])
        res = optimize.minimize(objective, p, method="Nelder-Mead",
                                options={"xatol": rel_tol * diam * 1e-2,
                                         "fatol": rel_tol * diam * 1e-3,
                                         "maxiter": 600,
                                         "initial_simplex": simplex})
        best = min(best, float(res.fun))
    return max(best, 0.0)


def critical_plane(d: DomainSpec, e, n_cap_samples: int = 10_000,
                   n_iters: int = 40, class_tol: Optional[float] = None,
                   seed: int = 0) -> HyperplaneFrame:
    """Critical moving-plane offset in direction e, with case classification.

    Bisects the predicate "the reflected cap is contained in the domain",
    evaluated on a low-discrepancy sample of the cap (refreshed per level).
    The returned frame carries a case tag: ``case1_tangent`` when the
    reflected cap grazes the boundary away from the plane,
    ``case2_orthogonal`` when the plane meets the boundary orthogonally,
    ``undetermined`` when neither test is conclusive. When both trigger the
    tag is case1 with an ``ambiguous`` diagnostic flag.
    """
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    diam = d.diameter
    Lambda = d.support_max(e)
    lam_lo = -d.support_max(-e)
    lo_box, hi_box = d.bounding_box()
    tol_in = 1e-9 * diam

    def reflected_contained(lam: float, level: int) -> bool:
        # low-discrepancy points in the slab box {x.e in [lam, Lambda]}
        sampler = qmc.Halton(d=d.dim, seed=seed + level, scramble=True)
        raw = sampler.random(3 * n_cap_samples)
        pts = lo_box + (hi_box - lo_box) * raw
        proj = pts @ e
        # squeeze the e-extent onto the slab to concentrate points in the cap
        span = np.max(proj) - np.min(proj)
        if span > 0 and Lambda > lam:
            new_proj = lam + (proj - np.min(proj)) * ((Lambda - lam) / span)
            pts = pts + np.outer(new_proj - proj, e)
        keep = (pts @ e > lam) & d.contains(pts)
        cap = pts[keep]
        if len(cap) == 0:
            return True
        refl = cap - 2.0 * np.outer(cap @ e - lam, e)
        # tolerate boundary-grazing reflections within tol_in
        lo_d, _ = d.distance_bounds(refl)
        suspect = ~d.contains(refl)
        if not np.any(suspect):
            return True
        return bool(np.all(lo_d[suspect] <= tol_in)
                    and np.all(np.abs(d.signed(refl[suspect])) <= tol_in))

    lo, hi = lam_lo, Lambda
    if reflected_contained(lo, 0):
        raise GeometryError("containment bisection not bracketed (degenerate domain)")
    for level in range(1, n_iters + 1):
        mid = 0.5 * (lo + hi)
        if reflected_contained(mid, level):
            hi = mid
        else:
            lo = mid
    lam = 0.5 * (lo + hi)

    tol = class_tol if class_tol is not None else 1e-3 * diam
    pts, nus = d.boundary_with_normals(4096, seed=seed)
    proj = pts @ e
    diag: dict = {}
    case1 = False
    off_plane = proj - lam > tol
    if np.any(off_plane):
        refl = pts[off_plane] - 2.0 * np.outer(proj[off_plane] - lam, e)
        depth = np.abs(d.signed(refl))
        i = int(np.argmin(depth))
        diag["tangency_depth"] = float(depth[i])
        case1 = depth[i] <= tol
    near_plane = np.abs(proj - lam) <= tol
    case2 = False
    if np.any(near_plane):
        align = np.abs(nus[near_plane] @ e)
        diag["orthogonality_misalignment"] = float(np.min(align))
        case2 = bool(np.min(align) <= 5e-2)

    if case1 and case2:
        tag = "case1_tangent"
        diag["ambiguous"] = True
    elif case1:
        tag = "case1_tangent"
    elif case2:
        tag = "case2_orthogonal"
    else:
        tag = "undetermined"
    return HyperplaneFrame(e=e, lam=float(lam), Lambda_e=float(Lambda),
                           case_tag=tag, diagnostics=diag)


def symdiff_measure(d: DomainSpec, frame: HyperplaneFrame,
                    n_samples: int = 1 << 20, seed: int = 77) -> Estimate:
    """Volume of the symmetric difference between the domain and its
    reflection across the frame, by uniform box sampling."""
    lo, hi = d.bounding_box()
    corners = np.array(np.meshgrid(*zip(lo, hi))).T.reshape(-1, d.dim)
    refl_c = frame.reflect(corners)
    lo = np.minimum(lo, refl_c.min(axis=0))
    hi = np.maximum(hi, refl_c.max(axis=0))
    box = float(np.prod(hi - lo))
    if box <= 0:
        raise GeometryError("degenerate bounding box")
    gen = np.random.Generator(np.random.Philox(key=derive_key(seed, "symdiff")))
    pts = lo + (hi - lo) * gen.random((n_samples, d.dim))
    g = d.contains(pts) != d.contains(frame.reflect(pts))
    g = g.astype(float)
    return Estimate(mean=box * float(g.mean()),
                    stderr=box * float(g.std(ddof=1)) / math.sqrt(n_samples),
                    n_samples=n_samples)


def tubular_volume(d: DomainSpec, delta: float, n_samples: int = 1 << 20,
                   seed: int = 78) -> Estimate:
    """Volume of the inner collar {x inside : dist(x, boundary) < delta}."""
    if delta <= 0:
        raise GeometryError(f"collar width must be positive, got {delta}")
    lo, hi = d.bounding_box()
    box = float(np.prod(hi - lo))
    gen = np.random.Generator(np.random.Philox(key=derive_key(seed, "tubular")))
    pts = lo + (hi - lo) * gen.random((n_samples, d.dim))
    sd = d.signed(pts)
    g = ((sd < 0.0) & (-sd < delta)).astype(float)
    return Estimate(mean=box * float(g.mean()),
                    stderr=box * float(g.std(ddof=1)) / math.sqrt(n_samples),
                    n_samples=n_samples)


def perimeter_2d(d: DomainSpec) -> float:
    """Boundary length of a 2-D domain with a parametrizable boundary."""
    if d.dim != 2:
        raise GeometryError("perimeter is a 2-D functional")
    return d.perimeter()


def minkowski_closure_check(d_inner: DomainSpec, R: float, trials: int = 10_000,
                            seed: int = 9) -> bool:
    """Sampled check of the closure-dilation identity  A + B_R = closure(A) + B_R.

    Half the trial points are anchored at interior points of A, half at
    boundary points of closure(A); each is offset by a uniform point of B_R
    and must be accepted by the dilation's membership oracle. Samples that
    graze the dilated boundary within 1e-9 are discarded.
    """
    if R <= 0:
        raise GeometryError(f"dilation radius must be positive, got {R}")
    gen = np.random.Generator(np.random.Philox(key=derive_key(seed, "closure")))
    dim = d_inner.dim
    dilated = MinkowskiSum(d_inner, R)

    def ball_offsets(m):
        g = gen.standard_normal((m, dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = R * gen.random(m) ** (1.0 / dim)
        return g * rad[:, None]

    half = trials // 2
    # interior anchors by rejection
    lo, hi = d_inner.bounding_box()
    anchors = []
    needed = half
    attempts = 0
    while needed > 0 and attempts < 60:
        cand = lo + (hi - lo) * gen.random((4 * needed, dim))
        cand = cand[d_inner.contains(cand)]
        anchors.append(cand[:needed])
        needed -= len(cand[:needed])
        attempts += 1
    if needed > 0:
        raise GeometryError("could not rejection-sample the inner set")
    interior = np.vstack(anchors)
    boundary = d_inner.boundary_points(trials - half, seed=seed)

    for anchor in (interior, boundary):
        x = anchor + ball_offsets(len(anchor))
        sd = dilated.signed(x)
        keep = np.abs(sd) > 1e-9
        if not np.all(sd[keep] < 0.0):
            return False
    return True
