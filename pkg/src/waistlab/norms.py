"""Uniformly convex norms on finite-dimensional spaces.

Provides norm descriptors (Euclidean, l_p, regularized/smoothed variants),
norm evaluation, moduli of convexity (closed forms plus a numeric estimator
over 2-D sections), radial projection, and Euclidean sandwich constants.

All objects are immutable after construction and every operation is a pure
function, so everything here is safe to call from concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "NormDescriptor",
    "ModulusCurve",
    "DimensionMismatchError",
    "UnsupportedNormError",
    "euclidean_norm",
    "lp_norm",
    "parse_norm",
    "format_norm",
    "norm_eval",
    "radial_project",
    "euclidean_sandwich",
    "euclidean_modulus",
    "lp_modulus",
    "euclidean_modulus_curve",
    "lp_modulus_curve",
    "analytic_modulus_curve",
    "modulus_of_convexity",
    "numeric_modulus_curve",
    "smooth_norm",
    "squared_norm_hessian",
    "radial_bilipschitz",
]


class DimensionMismatchError(ValueError):
    """Input vector length does not match the norm's ambient dimension."""


class UnsupportedNormError(ValueError):
    """Operation not available for this norm kind."""


# Gauss-Legendre nodes per axis for the mollifying ball quadrature.
_MOLLIFIER_NODES = 8
_SMOOTH_MAX_DIM = 4
# Radius of the reference sphere used to re-homogenize the mollified norm.
_HOMOG_RADIUS = 10.0


@dataclass(frozen=True)
class NormDescriptor:
    """A finite-dimensional norm: Euclidean, l_p (1 < p < inf), or a
    regularized variant sqrt(smoothed_base(x)^2 + delta_reg*|x|_2^2).

    ``dim`` is the ambient dimension n+1; the unit sphere has dimension n.
    """

    kind: str  # "euclidean" | "lp" | "regularized"
    dim: int
    p: Optional[float] = None
    base: Optional["NormDescriptor"] = None
    mollifier_width: float = 0.0
    delta_reg: float = 0.0

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.kind == "euclidean":
            pass
        elif self.kind == "lp":
            if self.p is None or not (1.0 < self.p < math.inf):
                raise ValueError(
                    f"lp norm requires 1 < p < inf (uniform convexity fails at "
                    f"p=1 and p=inf), got p={self.p}"
                )
        elif self.kind == "regularized":
            if self.base is None:
                raise ValueError("regularized norm requires a base norm")
            if self.base.dim != self.dim:
                raise DimensionMismatchError("base norm dimension mismatch")
            if self.mollifier_width < 0 or self.delta_reg < 0:
                raise ValueError("mollifier_width and delta_reg must be >= 0")
            object.__setattr__(
                self, "_quad", _ball_quadrature(self.dim, self.mollifier_width)
            )
        else:
            raise ValueError(f"unknown norm kind {self.kind!r}")

    @property
    def sphere_dim(self) -> int:
        """Dimension n of the unit sphere."""
        return self.dim - 1

    def __str__(self) -> str:
        return format_norm(self)


def euclidean_norm(dim: int) -> NormDescriptor:
    return NormDescriptor(kind="euclidean", dim=dim)


def lp_norm(p: float, dim: int) -> NormDescriptor:
    return NormDescriptor(kind="lp", dim=dim, p=float(p))


def format_norm(norm: NormDescriptor) -> str:
    """Serialize a descriptor as ``euclidean:3``, ``lp:4:3`` or
    ``reg:lp:1.5:2:w=0.05:d=0.01``."""
    if norm.kind == "euclidean":
        return f"euclidean:{norm.dim}"
    if norm.kind == "lp":
        return f"lp:{_fmt_num(norm.p)}:{norm.dim}"
    base = norm.base
    if base.kind == "lp":
        head = f"reg:lp:{_fmt_num(base.p)}:{norm.dim}"
    else:
        head = f"reg:euclidean:{norm.dim}"
    return f"{head}:w={_fmt_num(norm.mollifier_width)}:d={_fmt_num(norm.delta_reg)}"


def _fmt_num(x: float) -> str:
    return repr(float(x)).rstrip("0").rstrip(".") if "." in repr(float(x)) else repr(float(x))


def parse_norm(text: str) -> NormDescriptor:
    """Parse a descriptor string produced by :func:`format_norm`."""
    parts = text.strip().split(":")
    try:
        if parts[0] == "euclidean":
            if len(parts) != 2:
                raise ValueError
            return euclidean_norm(int(parts[1]))
        if parts[0] == "lp":
            if len(parts) != 3:
                raise ValueError
            return lp_norm(float(parts[1]), int(parts[2]))
        if parts[0] == "reg":
            if parts[1] == "lp":
                p, dim, rest = float(parts[2]), int(parts[3]), parts[4:]
                base = lp_norm(p, dim)
            elif parts[1] == "euclidean":
                dim, rest = int(parts[2]), parts[3:]
                base = euclidean_norm(dim)
            else:
                raise ValueError
            opts = dict(item.split("=", 1) for item in rest)
            return smooth_norm(base, float(opts["w"]), float(opts["d"]))
        raise ValueError
    except ValueError as exc:
        if "1 < p < inf" in str(exc):
            raise
        raise ValueError(f"malformed norm string {text!r}") from exc


# ---------------------------------------------------------------------------
# Norm evaluation
# ---------------------------------------------------------------------------

def norm_eval(norm: NormDescriptor, x) -> np.ndarray | float:
    """Evaluate ||x||. Accepts a single vector of shape (dim,) or a batch of
    shape (..., dim); returns a scalar or an array of matching leading shape.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != norm.dim:
        raise DimensionMismatchError(
            f"expected vectors of length {norm.dim}, got {x.shape[-1]}"
        )
    scalar = x.ndim == 1
    x2 = x[None, :] if scalar else x
    if norm.kind == "euclidean":
        out = np.linalg.norm(x2, axis=-1)
    elif norm.kind == "lp":
        out = _lp_eval(x2, norm.p)
    else:
        out = _regularized_eval(norm, x2)
    return float(out[0]) if scalar else out


def _lp_eval(x: np.ndarray, p: float) -> np.ndarray:
    # Factor out the max component so huge/tiny inputs neither overflow
    # nor underflow before the 1/p root.
    ax = np.abs(x)
    m = ax.max(axis=-1)
    out = np.zeros_like(m)
    nz = m > 0
    if np.any(nz):
        scaled = ax[nz] / m[nz][..., None]
        out[nz] = m[nz] * np.power(np.power(scaled, p).sum(axis=-1), 1.0 / p)
    return out


def _ball_quadrature(dim: int, width: float):
    """Product Gauss-Legendre nodes on the cube [-w, w]^dim, masked to the
    Euclidean ball of radius w and renormalized. Returns (offsets, weights);
    a zero width yields the single node at the origin."""
    if width <= 0:
        return np.zeros((1, dim)), np.ones(1)
    nodes, weights = np.polynomial.legendre.leggauss(_MOLLIFIER_NODES)
    nodes = nodes * width
    weights = weights * width
    grids = np.meshgrid(*([nodes] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([weights] * dim), indexing="ij")
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    mask = np.linalg.norm(pts, axis=-1) <= width
    pts, w = pts[mask], w[mask]
    return pts, w / w.sum()


def _mollified_base(norm: NormDescriptor, x: np.ndarray) -> np.ndarray:
    """Smoothed base norm: average the base norm over a Euclidean ball of
    radius ``mollifier_width``, evaluated on the reference sphere and extended
    positively 1-homogeneous."""
    base = norm.base
    offsets, weights = norm._quad  # type: ignore[attr-defined]
    r = np.linalg.norm(x, axis=-1)
    out = np.zeros_like(r)
    nz = r > 0
    if not np.any(nz):
        return out
    ref = _HOMOG_RADIUS * x[nz] / r[nz][..., None]
    vals = np.zeros(ref.shape[0])
    # Chunk so the (points x nodes x dim) intermediate stays small.
    step = max(1, 2_000_000 // max(1, offsets.shape[0] * norm.dim))
    for lo in range(0, ref.shape[0], step):
        block = ref[lo : lo + step]
        diffs = block[:, None, :] - offsets[None, :, :]
        vals[lo : lo + step] = norm_eval(base, diffs) @ weights
    out[nz] = vals * r[nz] / _HOMOG_RADIUS
    return out


def _regularized_eval(norm: NormDescriptor, x: np.ndarray) -> np.ndarray:
    smoothed = _mollified_base(norm, x)
    if norm.delta_reg > 0:
        return np.sqrt(smoothed**2 + norm.delta_reg * np.einsum("...i,...i->...", x, x))
    return smoothed


# ---------------------------------------------------------------------------
# Radial projection and sandwich constants
# ---------------------------------------------------------------------------

def radial_project(norm: NormDescriptor, x) -> np.ndarray:
    """Project x (or a batch) to the unit sphere, x/||x||.

    Between points of norm >= 1 this map is 2-Lipschitz in the norm metric.
    """
    x = np.asarray(x, dtype=float)
    n = norm_eval(norm, x)
    if np.any(np.asarray(n) == 0):
        raise ValueError("cannot radially project the zero vector")
    return x / np.asarray(n)[..., None] if x.ndim > 1 else x / n


def euclidean_sandwich(norm: NormDescriptor) -> tuple[float, float]:
    """Extremal constants (c1, c2) with c1*|x|_2 <= ||x|| <= c2*|x|_2.

    For l_p the constants are the closed-form extremes d^(1/p - 1/2) and 1
    (attained on the diagonal and on basis vectors), so c2/c1 <= sqrt(dim).
    """
    if norm.kind == "euclidean":
        return 1.0, 1.0
    if norm.kind == "lp":
        t = norm.dim ** (1.0 / norm.p - 0.5)
        return min(1.0, t), max(1.0, t)
    raise UnsupportedNormError(
        "euclidean_sandwich has closed forms only for euclidean and lp kinds"
    )


def sandwich_bounds(norm: NormDescriptor) -> tuple[float, float]:
    """(c1, c2) valid for any supported kind, for envelopes and prefilters.

    For regularized norms the constants follow from the base's closed form:
    averaging the base norm over a ball of radius w perturbs it by at most
    c2_base * w / R relative to the Euclidean length (R the homogenization
    radius), and the delta term adds in quadrature.
    """
    if norm.kind in ("euclidean", "lp"):
        return euclidean_sandwich(norm)
    b1, b2 = euclidean_sandwich(norm.base)
    slack = b2 * norm.mollifier_width / _HOMOG_RADIUS
    lo = max(0.0, b1 - slack)
    hi = b2 + slack
    return (math.sqrt(lo**2 + norm.delta_reg),
            math.sqrt(hi**2 + norm.delta_reg))


# ---------------------------------------------------------------------------
# Modulus of convexity
# ---------------------------------------------------------------------------

def euclidean_modulus(eps) -> np.ndarray | float:
    """Euclidean modulus of convexity, 1 - sqrt(1 - eps^2/4)."""
    eps = np.asarray(eps, dtype=float)
    out = 1.0 - np.sqrt(np.clip(1.0 - eps**2 / 4.0, 0.0, None))
    return float(out) if out.ndim == 0 else out


def lp_modulus(p: float, eps) -> np.ndarray | float:
    """Closed-form modulus estimate for l_p.

    p >= 2: 1 - (1 - (eps/2)^p)^(1/p), the sharp two-point value.
    1 < p < 2: the quadratic lower estimate (p-1) eps^2 / 8. Both are valid
    lower bounds for the true modulus and are cross-checked numerically in
    the test suite.
    """
    eps = np.asarray(eps, dtype=float)
    if p >= 2:
        out = 1.0 - np.power(np.clip(1.0 - np.power(eps / 2.0, p), 0.0, None), 1.0 / p)
    else:
        out = (p - 1.0) * eps**2 / 8.0
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ModulusCurve:
    """The modulus of convexity delta(eps) as an evaluable curve.

    ``source`` records provenance: "analytic" for closed forms or
    "numeric_lower_estimate" for grid estimates (kept monotone, linearly
    interpolated, delta(0) = 0 by continuity).
    """

    source: str  # "analytic" | "numeric_lower_estimate"
    label: str
    fn: Optional[Callable] = None
    grid: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.source not in ("analytic", "numeric_lower_estimate"):
            raise ValueError(f"unknown modulus source {self.source!r}")
        if self.source == "analytic" and self.fn is None:
            raise ValueError("analytic curve requires fn")
        if self.source == "numeric_lower_estimate":
            if self.grid is None or self.values is None:
                raise ValueError("numeric curve requires grid and values")
            object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))
            # Search noise can produce tiny dips; the curve contract is
            # nondecreasing, so take the running maximum.
            vals = np.maximum.accumulate(np.asarray(self.values, dtype=float))
            object.__setattr__(self, "values", vals)

    def __call__(self, eps) -> np.ndarray | float:
        eps = np.asarray(eps, dtype=float)
        if self.fn is not None:
            out = np.where(eps <= 0, 0.0, self.fn(eps))
        else:
            out = np.interp(eps, np.concatenate([[0.0], self.grid]),
                            np.concatenate([[0.0], self.values]))
        out = np.asarray(out, dtype=float)
        return float(out) if out.ndim == 0 else out


def euclidean_modulus_curve() -> ModulusCurve:
    return ModulusCurve(source="analytic", label="euclidean", fn=euclidean_modulus)


def lp_modulus_curve(p: float) -> ModulusCurve:
    return ModulusCurve(
        source="analytic", label=f"lp({_fmt_num(p)})", fn=lambda e: lp_modulus(p, e)
    )


def analytic_modulus_curve(norm: NormDescriptor) -> ModulusCurve:
    """Closed-form curve for euclidean/lp kinds."""
    if norm.kind == "euclidean" or (norm.kind == "lp" and norm.p == 2):
        return euclidean_modulus_curve()
    if norm.kind == "lp":
        return lp_modulus_curve(norm.p)
    raise UnsupportedNormError(
        "no analytic modulus for regularized norms; use method='numeric'"
    )


def modulus_of_convexity(
    norm: NormDescriptor,
    eps: float,
    method: str = "auto",
    budget: int = 100_000,
    seed: int = 0,
) -> float:
    """Modulus of convexity delta(eps) = inf 1 - ||x+y||/2 over unit x, y
    with ||x-y|| >= eps.

    ``analytic`` uses the closed forms above; ``numeric`` searches random
    2-D sections (plus all coordinate-pair sections) with a chord-matching
    bisection and golden-section refinement, returning the smallest value
    found (an upper estimate of the infimum). delta(0) = 0 by continuity.
    """
    if eps < 0 or eps > 2:
        raise ValueError(f"eps must lie in (0, 2], got {eps}")
    if eps == 0:
        return 0.0
    if method == "auto":
        method = "numeric" if norm.kind == "regularized" else "analytic"
    if method == "analytic":
        return float(analytic_modulus_curve(norm)(eps))
    if method != "numeric":
        raise ValueError(f"unknown method {method!r}")
    return _numeric_modulus(norm, eps, budget, seed)


def _section_units(norm, u, v, theta):
    """Unit vectors at angles theta inside per-lane sections: ``u``, ``v``
    are row-aligned (B, dim) orthonormal pairs, theta has shape (B,)."""
    theta = np.asarray(theta, dtype=float)
    d = np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v
    return d / np.asarray(norm_eval(norm, d))[:, None]


def _section_objective(norm, u, v, theta1, eps):
    """1 - ||x + y||/2 where x = x(theta1) and y = x(theta1 + delta) with
    delta bisected in (0, pi] so the chord ||x - y|| equals eps; one lane
    per row of (u, v, theta1)."""
    theta1 = np.asarray(theta1, dtype=float)
    x1 = _section_units(norm, u, v, theta1)
    lo = np.zeros_like(theta1)
    hi = np.full_like(theta1, math.pi)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        chord = norm_eval(norm, _section_units(norm, u, v, theta1 + mid) - x1)
        too_small = chord < eps
        lo = np.where(too_small, mid, lo)
        hi = np.where(too_small, hi, mid)
    y = _section_units(norm, u, v, theta1 + 0.5 * (lo + hi))
    return np.asarray(norm_eval(norm, x1 + y)) * -0.5 + 1.0


def _numeric_modulus(norm, eps, budget, seed) -> float:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    dim = norm.dim
    n_random = int(np.clip(budget // 3000, 4, 64))
    starts = int(np.clip(budget // (n_random * 30), 16, 96))
    sections = []
    for i in range(dim):
        for j in range(i + 1, dim):
            e_i, e_j = np.zeros(dim), np.zeros(dim)
            e_i[i] = 1.0
            e_j[j] = 1.0
            sections.append((e_i, e_j))
    for _ in range(n_random):
        a = rng.standard_normal(dim)
        a /= np.linalg.norm(a)
        b = rng.standard_normal(dim)
        b -= (b @ a) * a
        b /= np.linalg.norm(b)
        sections.append((a, b))
    n_sec = len(sections)
    u = np.repeat(np.stack([s[0] for s in sections]), starts, axis=0)
    v = np.repeat(np.stack([s[1] for s in sections]), starts, axis=0)
    grid = np.tile(np.linspace(0.0, 2.0 * math.pi, starts, endpoint=False),
                   n_sec)
    vals = _section_objective(norm, u, v, grid, eps).reshape(n_sec, starts)
    best = float(vals.min())

    # Golden-section refinement of the three best starts per section, all
    # lanes advanced together so each iteration costs one batched objective.
    order = np.argsort(vals, axis=1)[:, :3]
    sec_idx = np.repeat(np.arange(n_sec), 3)
    centers = grid.reshape(n_sec, starts)[
        np.arange(n_sec)[:, None], order].ravel()
    h = 2.0 * math.pi / starts
    bu = np.stack([sections[i][0] for i in sec_idx])
    bv = np.stack([sections[i][1] for i in sec_idx])
    a = centers - h
    b = centers + h
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _section_objective(norm, bu, bv, c, eps)
    fd = _section_objective(norm, bu, bv, d, eps)
    for _ in range(24):
        left = fc < fd  # minimum bracketed in [a, d] vs [c, b]
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        carry_pt = np.where(left, c, d)  # survives as the new d (resp. c)
        carry_f = np.where(left, fc, fd)
        probe = np.where(left, b - invphi * (b - a), a + invphi * (b - a))
        f_probe = _section_objective(norm, bu, bv, probe, eps)
        c = np.where(left, probe, carry_pt)
        fc = np.where(left, f_probe, carry_f)
        d = np.where(left, carry_pt, probe)
        fd = np.where(left, carry_f, f_probe)
    return min(best, float(fc.min()), float(fd.min()))


def numeric_modulus_curve(
    norm: NormDescriptor,
    eps_grid=None,
    budget: int = 100_000,
    seed: int = 0,
) -> ModulusCurve:
    """Estimate the modulus on a grid and wrap it as a monotone curve."""
    if eps_grid is None:
        eps_grid = np.linspace(0.1, 1.9, 19)
    eps_grid = np.asarray(eps_grid, dtype=float)
    vals = np.array(
        [_numeric_modulus(norm, e, budget, seed) for e in eps_grid]
    )
    return ModulusCurve(
        source="numeric_lower_estimate",
        label=f"numeric({format_norm(norm)})",
        grid=eps_grid,
        values=vals,
    )


# ---------------------------------------------------------------------------
# Norm smoothing
# ---------------------------------------------------------------------------

def smooth_norm(
    norm: NormDescriptor, mollifier_width: float, delta_reg: float
) -> NormDescriptor:
    """Regularize a norm: mollify over a Euclidean ball of the given width,
    re-homogenize, and add a delta_reg Euclidean square under the root.

    Desk-scale only (dim <= 4): the mollification is a product quadrature
    over a ball, so cost grows exponentially with dimension.
    """
    if norm.kind == "regularized":
        raise UnsupportedNormError("norm is already regularized")
    if norm.dim > _SMOOTH_MAX_DIM:
        raise UnsupportedNormError(
            f"smooth_norm supports dim <= {_SMOOTH_MAX_DIM}, got {norm.dim}"
        )
    if mollifier_width < 0 or delta_reg < 0:
        raise ValueError("mollifier_width and delta_reg must be >= 0")
    return NormDescriptor(
        kind="regularized",
        dim=norm.dim,
        base=norm,
        mollifier_width=float(mollifier_width),
        delta_reg=float(delta_reg),
    )


def squared_norm_hessian(norm: NormDescriptor, x, step: float = 1e-4) -> np.ndarray:
    """Central finite-difference Hessian of y -> ||y||^2 at x."""
    x = np.asarray(x, dtype=float)
    d = x.size
    sq = lambda y: float(norm_eval(norm, y)) ** 2
    hess = np.zeros((d, d))
    f0 = sq(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = step
        hess[i, i] = (sq(x + ei) - 2.0 * f0 + sq(x - ei)) / step**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = step
            hess[i, j] = hess[j, i] = (
                sq(x + ei + ej) - sq(x + ei - ej) - sq(x - ei + ej) + sq(x - ei - ej)
            ) / (4.0 * step**2)
    return hess


def radial_bilipschitz(
    norm_a: NormDescriptor,
    norm_b: NormDescriptor,
    pairs: int = 2000,
    seed: int = 0,
) -> float:
    """Measured biLipschitz constant of the radial projection from the unit
    sphere of ``norm_a`` onto that of ``norm_b``, each sphere metrized by its
    own norm. Tends to 1 as the two norms approach each other."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    g = rng.standard_normal((2 * pairs, norm_a.dim))
    xs = g / np.asarray(norm_eval(norm_a, g))[..., None]
    x, y = xs[:pairs], xs[pairs:]
    da = norm_eval(norm_a, x - y)
    tx = radial_project(norm_b, x)
    ty = radial_project(norm_b, y)
    db = norm_eval(norm_b, tx - ty)
    ok = da > 1e-9
    ratio = db[ok] / da[ok]
    return float(max(ratio.max(), 1.0 / ratio.min()))
