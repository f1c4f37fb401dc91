"""Unbiased walk-on-spheres estimation of the fractional torsion function.

The estimator rests on one identity: if u solves (-Delta)^s u = 1 in the
domain with u = 0 outside, then for any ball B_r(p) inside the domain

    u(p) = gamma_ns r^{2s} + E[ u(exit position of the 2s-stable process) ].

The first term is the ball torsion function evaluated at its own center;
the exit law is the ball Poisson kernel, sampled exactly. Iterating until
the exit lands outside the domain gives an unbiased score
``sum_k gamma_ns r_k^{2s}`` with no discretization error and no
epsilon-shell: the process jumps out of the domain in finitely many steps
almost surely. The identity holds for every radius r below the true
boundary distance, so conservative (lower-bound) distance oracles never
bias the estimate; they only shrink steps.

Walks are simulated in fixed blocks of :data:`~fractorsion.sampler.BLOCK`
slots. The draws consumed by slot i at step k are a pure function of
(seed, block, step), so results are bit-identical for any worker count and
any scheduling, and coupled estimators (mirrored walks for antisymmetric
differences, control-variate walks against component balls, shared streams
across boundary points) consume *identical* draw streams by construction.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .estimates import Estimate
from .geometry import (Ball, DomainSpec, HyperplaneFrame, MinkowskiSum,
                       UnionOfBalls)
from .kernels import psi_ball
from .params import SolverParams
from .sampler import (BLOCK, block_uniforms, derive_key,
                      directions_from_uniforms, exit_factors_from_uniforms)


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class WalkConfig:
    """Walk budget and stepping policy.

    ``n_walks`` is rounded up to a whole number of blocks; ``step_shrink``
    scales the inscribed-ball radius used per step (any value in (0, 1]
    preserves unbiasedness). ``base_seed`` keys every stream.
    """

    n_walks: int = 100_000
    max_steps: int = 10_000
    step_shrink: float = 1.0
    base_seed: int = 0

    def __post_init__(self):
        if self.n_walks < 1:
            raise SolverError(f"n_walks must be >= 1, got {self.n_walks}")
        if self.max_steps < 1:
            raise SolverError(f"max_steps must be >= 1, got {self.max_steps}")
        if not (0.0 < self.step_shrink <= 1.0):
            raise SolverError(
                f"step_shrink must lie in (0, 1], got {self.step_shrink}")

    @property
    def n_blocks(self) -> int:
        return -(-self.n_walks // BLOCK)

    def scaled(self, factor: float) -> "WalkConfig":
        return replace(self, n_walks=max(1, int(round(self.n_walks * factor))))


@dataclass
class _RunStats:
    """Per-output reduction of a full run (fixed block order)."""

    n: int
    sums: np.ndarray          # (n_out,)
    sumsqs: np.ndarray        # (n_out,)
    block_means: np.ndarray   # (n_blocks, n_out)
    truncated: np.ndarray     # (n_out,) walk-slots still active at max_steps

    def estimate(self, j: int) -> Estimate:
        mean = self.sums[j] / self.n
        var = max(0.0, (self.sumsqs[j] - self.n * mean * mean) / max(self.n - 1, 1))
        return Estimate(mean=float(mean), stderr=float(math.sqrt(var / self.n)),
                        n_samples=self.n, max_steps_hit=int(self.truncated[j]))

    def pair_mean(self, i: int, j: int) -> float:
        return float((self.sums[i] - self.sums[j]) / self.n)

    def pair_stderr(self, i: int, j: int) -> float:
        d = self.block_means[:, i] - self.block_means[:, j]
        if len(d) < 2:
            return float("inf")
        return float(d.std(ddof=1) / math.sqrt(len(d)))


@dataclass(frozen=True)
class _ColumnSet:
    """Walk columns: start points walking the shared main domain.

    ``mirrored`` columns apply the frame reflection to every direction
    draw. Columns with escape tracking additionally accumulate the portion
    of the score earned after the walk first leaves its private tracking
    ball; that suffix equals, walk by walk, the coupled difference against
    the walk in the tracking ball under shared draws (the two walks
    coincide until the main walk leaves the ball, where the ball walk
    terminates).
    """

    starts: np.ndarray                          # (C, n)
    main: DomainSpec
    mirror_mask: Optional[np.ndarray] = None    # (C,) bool
    frame: Optional[HyperplaneFrame] = None
    escape_centers: Optional[np.ndarray] = None  # (C, n)
    escape_radii: Optional[np.ndarray] = None    # (C,)


def _simulate_block(cols: _ColumnSet, params: SolverParams, cfg: WalkConfig,
                    key: np.ndarray, block: int, outputs: Optional[np.ndarray],
                    channel: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run one block of walks for every column; return per-output
    (sum, sumsq, truncated-count). Only active slots are touched per step."""
    n = params.n
    s = params.s
    gamma = params.gamma_ns
    C = len(cols.starts)
    B = BLOCK
    two_s = 2.0 * s
    track = cols.escape_centers is not None

    pos = np.broadcast_to(cols.starts, (B, C, n)).reshape(-1, n).copy()
    scores = np.zeros(B * C)
    after = np.zeros(B * C) if track else None

    col_idx = np.tile(np.arange(C), B)
    live = np.arange(B * C)
    esc = None
    if track:
        gap0 = (np.sqrt(np.sum((cols.starts - cols.escape_centers) ** 2, axis=1))
                - cols.escape_radii)
        esc = np.broadcast_to(gap0 >= 0.0, (B, C)).reshape(-1).copy()

    mirror = cols.mirror_mask
    has_mirror = mirror is not None and bool(mirror.any())

    for step in range(cfg.max_steps):
        if live.size == 0:
            break
        u = block_uniforms(key, block, step, B, 1 + n)

        # one oracle call per step: cull slots whose previous jump left the
        # domain (or that started outside), then score and move the rest
        pts = pos[live]
        r = -cfg.step_shrink * cols.main.signed(pts)
        keep = r > 0.0  # also drops zero-radius boundary-stuck slots
        if not keep.all():
            live = live[keep]
            if live.size == 0:
                break
            pts, r = pts[keep], r[keep]
        rows = live // C

        # the inverse-CDF transforms are elementwise, so applying them only
        # to rows that still host live walks changes nothing downstream
        if live.size >= B:
            factors = exit_factors_from_uniforms(u[:, 0], s)
            dirs = directions_from_uniforms(u[:, 1:])
        else:
            need = np.unique(rows)
            factors = np.empty(B)
            dirs = np.empty((B, n))
            factors[need] = exit_factors_from_uniforms(u[need, 0], s)
            dirs[need] = directions_from_uniforms(u[need, 1:])

        sc = gamma * r ** two_s
        scores[live] += sc
        if track:
            hit = esc[live]
            if hit.any():
                after[live[hit]] += sc[hit]

        d_eff = dirs[rows]
        if has_mirror:
            msk = mirror[col_idx[live]]
            if msk.any():
                d_eff = d_eff.copy()
                d_eff[msk] = cols.frame.reflect_direction(d_eff[msk])
        newpos = pts + (r * factors[rows])[:, None] * d_eff
        pos[live] = newpos

        if track:
            cidx = col_idx[live]
            gap = (np.sqrt(np.sum(
                (newpos - cols.escape_centers[cidx]) ** 2, axis=1))
                - cols.escape_radii[cidx])
            esc[live] |= gap >= 0.0

    truncated = np.zeros(B * C, dtype=bool)
    if live.size:  # cull slots whose final jump already left the domain
        still_in = cols.main.contains(pos[live])
        truncated[live[still_in]] = True

    base = after if channel == "after_escape" else scores
    base = base.reshape(B, C)
    trunc = truncated.reshape(B, C)
    if outputs is None:
        out_scores = base
        out_trunc = trunc
    else:
        out_scores = base[:, outputs[:, 0]] - base[:, outputs[:, 1]]
        out_trunc = trunc[:, outputs[:, 0]] | trunc[:, outputs[:, 1]]
    return (out_scores.sum(axis=0), (out_scores ** 2).sum(axis=0),
            out_trunc.sum(axis=0))


def _run(cols: _ColumnSet, params: SolverParams, cfg: WalkConfig, tag: str,
         outputs: Optional[np.ndarray] = None, workers: int = 1,
         channel: str = "total") -> _RunStats:
    key = derive_key(cfg.base_seed, tag)
    nb = cfg.n_blocks
    n_out = len(outputs) if outputs is not None else len(cols.starts)

    def job(b: int):
        return _simulate_block(cols, params, cfg, key, b, outputs, channel)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(nb)))
    else:
        results = [job(b) for b in range(nb)]

    sums = np.zeros(n_out)
    sumsqs = np.zeros(n_out)
    trunc = np.zeros(n_out, dtype=np.int64)
    block_means = np.empty((nb, n_out))
    for b, (bs, bq, bt) in enumerate(results):  # fixed block order
        sums += bs
        sumsqs += bq
        trunc += bt
        block_means[b] = bs / BLOCK
    return _RunStats(n=nb * BLOCK, sums=sums, sumsqs=sumsqs,
                     block_means=block_means, truncated=trunc)


# ---------------------------------------------------------------------------
# public estimators
# ---------------------------------------------------------------------------

def estimate_u(x, d: DomainSpec, params: SolverParams, cfg: WalkConfig,
               workers: int = 1, tag: str = "u") -> Estimate:
    """Unbiased estimate of the torsion function at one point.

    Exterior points return exactly (0, 0, n_samples): every walk is born
    outside and scores nothing.
    """
    return estimate_u_many(np.asarray(x, dtype=float)[None, :], d, params,
                           cfg, workers=workers, tag=tag)[0]


_MAX_COLUMNS = 128


def estimate_u_many(points, d: DomainSpec, params: SolverParams,
                    cfg: WalkConfig, workers: int = 1,
                    tag: str = "u") -> list[Estimate]:
    """Estimates at several points, sharing one draw stream across points.

    Sharing makes the estimates positively correlated (useful for
    differences); each marginal estimate is unbiased regardless. Large
    point sets are processed in fixed chunks of 128 columns.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != d.dim:
        raise SolverError(f"points of dimension {pts.shape[1]} in a "
                          f"{d.dim}-dimensional domain")
    out: list[Estimate] = []
    for c, lo in enumerate(range(0, len(pts), _MAX_COLUMNS)):
        chunk = pts[lo:lo + _MAX_COLUMNS]
        stats = _run(_ColumnSet(starts=chunk, main=d), params, cfg,
                     tag if lo == 0 else f"{tag}.{c}", workers=workers)
        out.extend(stats.estimate(j) for j in range(len(chunk)))
    return out


def estimate_v_coupled(x, frame: HyperplaneFrame, d: DomainSpec,
                       params: SolverParams, cfg: WalkConfig,
                       workers: int = 1, tag: str = "v") -> Estimate:
    """Antisymmetric difference v(x) = u(x) - u(reflected x), coupled.

    Both walks consume the identical stream of (radius, direction) draws,
    the mirrored walk applying the frame reflection to each direction. On a
    domain symmetric across the frame the two walks are exact mirror images
    and every paired difference vanishes identically.
    """
    return estimate_v_coupled_many(np.asarray(x, dtype=float)[None, :],
                                   frame, d, params, cfg,
                                   workers=workers, tag=tag)[0]


def estimate_v_coupled_many(points, frame: HyperplaneFrame, d: DomainSpec,
                            params: SolverParams, cfg: WalkConfig,
                            workers: int = 1, tag: str = "v") -> list[Estimate]:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out: list[Estimate] = []
    half = _MAX_COLUMNS // 2
    for c, lo in enumerate(range(0, len(pts), half)):
        chunk = pts[lo:lo + half]
        m = len(chunk)
        starts = np.vstack([chunk, frame.reflect(chunk)])
        mirror = np.zeros(2 * m, dtype=bool)
        mirror[m:] = True
        outputs = np.column_stack([np.arange(m), np.arange(m) + m])
        stats = _run(_ColumnSet(starts=starts, main=d, mirror_mask=mirror,
                                frame=frame), params, cfg,
                     tag if lo == 0 else f"{tag}.{c}",
                     outputs=outputs, workers=workers)
        out.extend(stats.estimate(j) for j in range(m))
    return out


def coupled_control_differences(points, d: DomainSpec, ball_centers,
                                ball_radii, params: SolverParams,
                                cfg: WalkConfig, workers: int = 1,
                                tag: str = "ctrl") -> _RunStats:
    """Per-point differences u(x_i) - u_ball_i(x_i) with shared streams.

    The control walk in the private ball B(ball_centers[i], ball_radii[i])
    consumes the same draws as the main walk, so the two coincide until the
    main walk first leaves the ball (where the control walk dies). The
    difference is therefore exactly the score the main walk earns after
    that escape, which is accumulated directly: zero on every walk that
    never crosses out of its ball into the rest of the domain.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    centers = np.atleast_2d(np.asarray(ball_centers, dtype=float))
    radii = np.atleast_1d(np.asarray(ball_radii, dtype=float))
    return _run(_ColumnSet(starts=pts, main=d, escape_centers=centers,
                           escape_radii=radii),
                params, cfg, tag, workers=workers, channel="after_escape")


# ---------------------------------------------------------------------------
# Lipschitz seminorm on a parallel surface
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeminormResult:
    """Estimated sup-pair difference quotient of u on the inner surface.

    ``value`` is max over admissible point pairs of |u(x)-u(y)|/|x-y|;
    ``noise_floor`` is 3 (sigma_x + sigma_y)/|x-y| for the pair attaining
    the value, so a caller judges significance by value > noise_floor.
    """

    value: float
    noise_floor: float
    points: np.ndarray
    estimates: np.ndarray
    sigmas: np.ndarray
    details: dict = field(default_factory=dict)

    @property
    def significant(self) -> bool:
        return self.value > self.noise_floor


def lipschitz_seminorm(d_inner: DomainSpec, R: float, params: SolverParams,
                       cfg: WalkConfig, m_boundary: int = 64,
                       min_pair_dist: Optional[float] = None,
                       workers: int = 1, tag: str = "lip") -> SeminormResult:
    """Lipschitz seminorm of the torsion function of G + B_R on the surface
    of G, from coupled boundary estimates.

    Boundary points are equispaced in the boundary parameter (2-D) or
    spread over each sphere component (unions of balls). For a union of
    balls the estimate at each point is coupled against the walk in its own
    dilated component ball, whose torsion value is known in closed form;
    the paired difference is nonzero only on walks that cross between
    components, which is what makes remote configurations resolvable.
    For other shapes all points share one draw stream and differences are
    taken pairwise, cancelling the common noise.

    Pairs closer than ``min_pair_dist`` (default: domain diameter / 100)
    are excluded from the sup to avoid 0/0 noise amplification.
    """
    if m_boundary < 2:
        raise SolverError(f"need at least 2 boundary points, got {m_boundary}")
    omega = MinkowskiSum(d_inner, R)
    cutoff = (omega.diameter / 100.0) if min_pair_dist is None else float(min_pair_dist)

    if isinstance(d_inner, UnionOfBalls):
        pts, comp = d_inner.boundary_components(m_boundary, seed=cfg.base_seed & 0xFFFF)
        centers = d_inner.centers[comp]
        radii = d_inner.radii[comp] + R
        stats = coupled_control_differences(pts, omega, centers, radii,
                                            params, cfg, workers=workers, tag=tag)
        base = np.array([float(psi_ball(pts[i], centers[i], radii[i], params))
                         for i in range(len(pts))])
        diffs = stats.sums / stats.n
        est = base + diffs
        sig = np.array([stats.block_means[:, i].std(ddof=1)
                        / math.sqrt(stats.block_means.shape[0])
                        for i in range(len(pts))])
        pair_mean = lambda i, j: est[i] - est[j]
        pair_sig = stats.pair_stderr
        deficit = float(np.max(np.abs(diffs)))
        deficit_sigma = float(sig[int(np.argmax(np.abs(diffs)))])
        extra = {"deficit": deficit, "deficit_sigma": deficit_sigma,
                 "scheme": "component-ball control variate"}
    else:
        pts = d_inner.boundary_points(m_boundary, seed=cfg.base_seed & 0xFFFF)
        stats = _run(_ColumnSet(starts=pts, main=omega), params, cfg, tag,
                     workers=workers)
        est = stats.sums / stats.n
        nb = stats.block_means.shape[0]
        # per-point sigma relative to the reference point 0 (coupled streams)
        sig = np.empty(len(pts))
        sig[0] = 0.0
        for i in range(1, len(pts)):
            sig[i] = stats.pair_stderr(i, 0)
        pair_mean = lambda i, j: float(est[i] - est[j])
        pair_sig = stats.pair_stderr
        extra = {"scheme": "shared-stream reference differences"}

    m = len(pts)
    gaps = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    best = (-1.0, 0, 1)
    n_pairs = 0
    for i in range(m):
        for j in range(i + 1, m):
            if gaps[i, j] < cutoff:
                continue
            n_pairs += 1
            q = abs(pair_mean(i, j)) / gaps[i, j]
            if q > best[0]:
                best = (q, i, j)
    if n_pairs == 0:
        raise SolverError("no admissible boundary pairs above the distance cutoff")
    value, bi, bj = best
    floor = 3.0 * (sig[bi] + sig[bj]) / gaps[bi, bj]
    details = {"argmax_pair": (bi, bj), "pair_distance": float(gaps[bi, bj]),
               "paired_sigma": pair_sig(bi, bj), "n_pairs": n_pairs,
               "truncated": int(stats.truncated.max()), **extra}
    return SeminormResult(value=float(value), noise_floor=float(floor),
                          points=pts, estimates=est, sigmas=sig,
                          details=details)
