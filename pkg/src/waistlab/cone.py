"""Cone-measure sampling and Monte Carlo measure estimation on unit spheres.

The cone (conical) probability measure of a sphere subset is the normalized
volume of the cone it spans inside the unit ball; on the round sphere it is
the uniform measure. Samplers:

* euclidean / l_p: exact draws via normalized generalized Gaussians
  (iid coordinates with density proportional to exp(-|t|^p)), which give
  precisely the cone measure on the l_p sphere;
* any other kind: rejection from a bounding Euclidean ball followed by
  radial projection.

Determinism contract: every estimator is a pure function of
(norm, seed, budgets); parallel-safe substreams are derived from the seed
with a counter-based generator.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .norms import (
    NormDescriptor,
    norm_eval,
    radial_project,
    sandwich_bounds,
)

__all__ = [
    "SampleBatch",
    "MeasureEstimate",
    "EmptyFiberError",
    "RankDeficientError",
    "EmptySetError",
    "rng_stream",
    "sample_conical",
    "sample_in_ball",
    "set_measure",
    "fiber_points",
    "min_norm_distance",
    "tube_measure",
    "best_fiber",
    "neighborhood_measure",
    "batch_to_csv",
    "estimate_to_json",
]


class EmptyFiberError(ValueError):
    """The affine slice does not meet the open unit ball."""


class RankDeficientError(ValueError):
    """The linear map does not have full row rank."""


class EmptySetError(ValueError):
    """No sample points landed in the target set within budget."""


def rng_stream(seed: int, *path: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, path), so substreams are
    reproducible independently of execution order or worker count."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SampleBatch:
    """Seeded points on the unit sphere under the cone measure.

    Regenerating with the same (norm, seed, count) reproduces the points
    bit for bit.
    """

    norm: NormDescriptor
    seed: int
    points: np.ndarray  # (count, dim)
    count: int

    def __post_init__(self):
        if self.points.shape != (self.count, self.norm.dim):
            raise ValueError("points shape does not match (count, dim)")


@dataclass(frozen=True)
class MeasureEstimate:
    """A Monte Carlo probability estimate with its binomial standard error."""

    mean: float
    std_error: float
    count: int
    seed: Optional[int] = None

    def __post_init__(self):
        if not (0.0 <= self.mean <= 1.0):
            raise ValueError(f"mean {self.mean} outside [0, 1]")

    @classmethod
    def from_hits(cls, hits: int, count: int, seed: Optional[int] = None
                  ) -> "MeasureEstimate":
        mean = hits / count
        return cls(mean=mean,
                   std_error=math.sqrt(mean * (1.0 - mean) / count),
                   count=count, seed=seed)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error,
                "count": self.count, "seed": self.seed}


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------

def _generalized_gaussian(rng: np.random.Generator, p: float, size) -> np.ndarray:
    # |t|^p ~ Gamma(1/p) gives density proportional to exp(-|t|^p).
    u = rng.gamma(shape=1.0 / p, scale=1.0, size=size)
    signs = rng.integers(0, 2, size=size) * 2 - 1
    return signs * np.power(u, 1.0 / p)


def _direct_sphere_sample(norm: NormDescriptor, count: int,
                          rng: np.random.Generator) -> np.ndarray:
    if norm.kind == "euclidean":
        g = rng.standard_normal((count, norm.dim))
    else:
        g = _generalized_gaussian(rng, norm.p, (count, norm.dim))
    r = np.asarray(norm_eval(norm, g))
    # A zero draw has probability zero; guard against it anyway.
    bad = r == 0
    while np.any(bad):
        idx = np.flatnonzero(bad)
        g[idx] = (rng.standard_normal((idx.size, norm.dim))
                  if norm.kind == "euclidean"
                  else _generalized_gaussian(rng, norm.p, (idx.size, norm.dim)))
        r = np.asarray(norm_eval(norm, g))
        bad = r == 0
    return g / r[:, None]


def _rejection_sphere_sample(norm: NormDescriptor, count: int,
                             rng: np.random.Generator) -> np.ndarray:
    # Uniform in a Euclidean ball covering the unit ball, keep points inside
    # the norm ball, project radially: uniform-in-ball projects to the cone
    # measure.
    c1, c2 = sandwich_bounds(norm)
    radius = 1.0 / c1
    dim = norm.dim
    out = np.empty((count, dim))
    filled = 0
    # acceptance rate is at least vol(B2(1/c2)) / vol(B2(1/c1)) = (c1/c2)^dim
    rate = max(0.02, (c1 / c2) ** dim)
    while filled < count:
        n_draw = max(1024, int(1.5 * (count - filled) / rate))
        g = rng.standard_normal((n_draw, dim))
        g /= np.linalg.norm(g, axis=-1, keepdims=True)
        r = radius * rng.random(n_draw) ** (1.0 / dim)
        pts = g * r[:, None]
        keep = pts[np.asarray(norm_eval(norm, pts)) <= 1.0]
        take = min(count - filled, keep.shape[0])
        out[filled : filled + take] = keep[:take]
        filled += take
    return radial_project(norm, out)


def sample_conical(norm: NormDescriptor, count: int, seed: int,
                   method: str = "auto") -> SampleBatch:
    """Draw ``count`` cone-measure points on the unit sphere of ``norm``.

    ``method``: "auto" picks the exact generalized-Gaussian generator for
    euclidean/lp and rejection otherwise; "direct" and "rejection" force a
    choice so the two samplers can be compared against each other.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = rng_stream(seed, 0)
    if method == "auto":
        method = "direct" if norm.kind in ("euclidean", "lp") else "rejection"
    if method == "direct":
        if norm.kind not in ("euclidean", "lp"):
            method = "rejection"
    if method == "direct":
        pts = _direct_sphere_sample(norm, count, rng)
    elif method == "rejection":
        pts = _rejection_sphere_sample(norm, count, rng)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    return SampleBatch(norm=norm, seed=seed, points=pts, count=count)


def sample_in_ball(norm: NormDescriptor, count: int, seed: int) -> np.ndarray:
    """Uniform samples in the closed unit ball of ``norm`` (cone sample times
    a radius factor U^(1/dim)); used for homogeneity checks of the cone
    measure before projection."""
    batch = sample_conical(norm, count, seed)
    rng = rng_stream(seed, 1)
    radii = rng.random(count) ** (1.0 / norm.dim)
    return batch.points * radii[:, None]


def set_measure(batch: SampleBatch, indicator: Callable) -> MeasureEstimate:
    """Fraction of batch points satisfying a vectorized indicator
    (points array (count, dim) -> bool array)."""
    if batch.count < 1:
        raise ValueError("empty batch")
    hits = np.asarray(indicator(batch.points), dtype=bool)
    if hits.shape != (batch.count,):
        raise ValueError("indicator must return one bool per point")
    return MeasureEstimate.from_hits(int(hits.sum()), batch.count, seed=batch.seed)


# ---------------------------------------------------------------------------
# Fibers of linear maps
# ---------------------------------------------------------------------------

def fiber_points(norm: NormDescriptor, f, z, count: int, seed: int) -> np.ndarray:
    """Points y with ||y|| = 1 and f y = z (exactly, up to 1e-10 on the norm).

    Takes the minimal-Euclidean-norm solution x0 of f x = z, draws random
    kernel directions v, and solves ||x0 + t v|| = 1 for t > 0 by bisection;
    the root is unique because t -> ||x0 + t v|| is convex with value < 1
    at t = 0.
    """
    f = np.atleast_2d(np.asarray(f, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    k, d = f.shape
    if d != norm.dim:
        raise ValueError(f"map must have {norm.dim} columns, got {d}")
    if z.shape != (k,):
        raise ValueError(f"target must have length {k}")
    if np.linalg.matrix_rank(f) < k:
        raise RankDeficientError("linear map must have full row rank")
    x0 = np.linalg.pinv(f) @ z
    if float(norm_eval(norm, x0)) >= 1.0:
        raise EmptyFiberError(
            "slice does not meet the open unit ball (minimal-norm point has "
            f"norm {float(norm_eval(norm, x0)):.6f})"
        )
    # Orthonormal kernel basis from the SVD.
    _, _, vt = np.linalg.svd(f)
    kernel = vt[k:].T  # (d, d-k)
    rng = rng_stream(seed, 0)
    dirs = rng.standard_normal((count, d - k))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    v = dirs @ kernel.T
    lo = np.zeros(count)
    hi = np.ones(count)
    for _ in range(64):
        outside = np.asarray(norm_eval(norm, x0 + hi[:, None] * v)) < 1.0
        if not np.any(outside):
            break
        hi[outside] *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        inside = np.asarray(norm_eval(norm, x0 + mid[:, None] * v)) < 1.0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    t = 0.5 * (lo + hi)
    return x0 + t[:, None] * v


def min_norm_distance(norm: NormDescriptor, points: np.ndarray,
                      cloud: np.ndarray,
                      upper: Optional[float] = None) -> np.ndarray:
    """Norm distance from each point to the nearest cloud point.

    euclidean/lp: a single Minkowski KD-tree query. Other kinds: Euclidean
    KD prefilter with sandwich constants, exact norm distances only on the
    ambiguous band. ``upper`` prunes the search: entries whose distance
    exceeds it are reported as inf (much faster when only a threshold test
    is needed).
    """
    bound = math.inf if upper is None else float(upper)
    if norm.kind in ("euclidean", "lp"):
        p = 2.0 if norm.kind == "euclidean" else norm.p
        dist, _ = cKDTree(cloud).query(points, k=1, p=p,
                                       distance_upper_bound=bound)
        return np.asarray(dist)
    c1, c2 = sandwich_bounds(norm)
    tree = cKDTree(cloud)
    k_batch = min(16, cloud.shape[0])
    d2, idx = tree.query(points, k=k_batch, distance_upper_bound=bound / c1)
    d2 = np.atleast_2d(np.asarray(d2))
    idx = np.atleast_2d(np.asarray(idx))
    out = np.full(points.shape[0], np.inf)
    found = np.isfinite(d2[:, 0])
    if np.any(found):
        # Norm distances to the k nearest Euclidean candidates in one shot.
        safe_idx = np.where(np.isfinite(d2[found]), idx[found], idx[found][:, :1])
        diffs = points[found][:, None, :] - cloud[safe_idx]
        dists = np.asarray(norm_eval(norm, diffs))
        dists[~np.isfinite(d2[found])] = np.inf
        out[found] = dists.min(axis=1)
    # A cloud point beyond the k-th Euclidean neighbor can only win if
    # c1 * d2_k is still below the current minimum; refine those few exactly.
    d2_last = d2[:, -1]
    unresolved = found & np.isfinite(d2_last) & \
        (c1 * d2_last < np.minimum(out, bound) - 1e-15)
    for i in np.flatnonzero(unresolved):
        cand = tree.query_ball_point(
            points[i], r=float(min(out[i], bound) / c1) + 1e-12)
        if cand:
            di = norm_eval(norm, points[i][None, :] - cloud[cand])
            out[i] = min(out[i], float(np.min(di)))
    return out


def tube_measure(
    norm: NormDescriptor,
    f,
    z,
    eps: float,
    sample_budget: int,
    fiber_budget: int,
    seed: int,
) -> MeasureEstimate:
    """Estimate the cone measure of the eps-neighborhood (norm distance) of
    the fiber {f x = z} on the sphere.

    Distances are taken to a finite fiber point cloud, which can only
    overestimate the true distance to the fiber, so the estimate is a lower
    bound in expectation (the conservative direction for checking waist
    bounds).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    cloud = fiber_points(norm, f, z, fiber_budget, _sub_seed(seed, 1))
    batch = sample_conical(norm, sample_budget, _sub_seed(seed, 2))
    dmin = min_norm_distance(norm, batch.points, cloud, upper=eps)
    return MeasureEstimate.from_hits(int((dmin <= eps).sum()), sample_budget,
                                     seed=seed)


def _sub_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence(entropy=int(seed),
                                      spawn_key=(tag,)).generate_state(1)[0])


def best_fiber(
    norm: NormDescriptor,
    f,
    eps: float,
    z_grid: Sequence,
    sample_budget: int,
    fiber_budget: int,
    seed: int,
) -> tuple[np.ndarray, MeasureEstimate, list[MeasureEstimate]]:
    """Grid argmax of the tube measure over fiber locations.

    One shared cone-measure batch is used for every grid point (cheaper and
    lower-variance for comparisons); fiber clouds get per-z substreams. Ties
    break toward the first grid entry; grid points with empty fibers are
    skipped. Returns (z_star, best_estimate, all_estimates).
    """
    z_grid = [np.atleast_1d(np.asarray(z, dtype=float)) for z in z_grid]
    if not z_grid:
        raise ValueError("z_grid must be nonempty")
    batch = sample_conical(norm, sample_budget, _sub_seed(seed, 2))
    estimates: list[Optional[MeasureEstimate]] = []
    for i, z in enumerate(z_grid):
        try:
            cloud = fiber_points(norm, f, z, fiber_budget, _sub_seed(seed, 3 + i))
        except EmptyFiberError:
            estimates.append(None)
            continue
        dmin = min_norm_distance(norm, batch.points, cloud, upper=eps)
        estimates.append(
            MeasureEstimate.from_hits(int((dmin <= eps).sum()), sample_budget,
                                      seed=seed)
        )
    if all(e is None for e in estimates):
        raise EmptyFiberError("every grid point has an empty fiber")
    best_i = max(
        (i for i, e in enumerate(estimates) if e is not None),
        key=lambda i: (estimates[i].mean, -i),
    )
    kept = [e for e in estimates if e is not None]
    return z_grid[best_i], estimates[best_i], kept


def neighborhood_measure(
    norm: NormDescriptor,
    indicator: Callable,
    eps: float,
    sample_budget: int,
    cloud_budget: int,
    seed: int,
) -> MeasureEstimate:
    """Estimate the cone measure of the eps-neighborhood of a set A given by
    a vectorized indicator.

    Two-stage: a point cloud inside A is drawn by rejection from cone-measure
    samples, then fresh samples are counted if they either satisfy the
    indicator (A is always inside its own neighborhood) or lie within eps of
    the cloud. Cloud distances overestimate distances to A, so the estimate
    is again a conservative lower bound.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    first = sample_conical(norm, sample_budget, _sub_seed(seed, 1))
    in_a = np.asarray(indicator(first.points), dtype=bool)
    cloud = first.points[in_a][:cloud_budget]
    if cloud.shape[0] == 0:
        raise EmptySetError("no sample points landed in the set within budget")
    second = sample_conical(norm, sample_budget, _sub_seed(seed, 2))
    hits = np.asarray(indicator(second.points), dtype=bool)
    miss = ~hits
    if np.any(miss):
        dmin = min_norm_distance(norm, second.points[miss], cloud, upper=eps)
        hits[np.flatnonzero(miss)[dmin <= eps]] = True
    return MeasureEstimate.from_hits(int(hits.sum()), sample_budget, seed=seed)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def batch_to_csv(batch: SampleBatch) -> str:
    """One point per row, coordinates in columns x0..x{dim-1}."""
    buf = io.StringIO()
    buf.write(",".join(f"x{i}" for i in range(batch.norm.dim)) + "\n")
    for row in batch.points:
        buf.write(",".join(format(v, ".17g") for v in row) + "\n")
    return buf.getvalue()


def estimate_to_json(estimate: MeasureEstimate) -> str:
    return json.dumps(estimate.to_dict(), sort_keys=True)
