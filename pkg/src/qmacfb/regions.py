"""Rate bounds on cq joint states, the binary-adder closed form, and 2-D region boundaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ensemble import CqJointState, adder_ensemble, build_joint_state
from .errors import DomainError, EmptyGrid, MissingLabel
from .qcore import adder_channel, adder_instrument
from .qinfo import mutual_information

GAMMA_FLOOR = 1e-12
QCL_VARIANTS = ("statement", "outline", "swapped")
Z = ("Z1", "Z2")
BZ = ("Bbar", "Z1", "Z2")

__all__ = [
    "h2",
    "RateBounds",
    "AdderParams",
    "adder_closed_form",
    "adder_closed_form_batch",
    "qcl_bounds",
    "general_bounds",
    "RegionBoundary",
    "ContainmentReport",
    "no_feedback_adder_region",
    "bounds_to_pentagon",
    "pentagon_vertices",
    "AdderFamily",
    "PipelineFamily",
    "ConstantFamily",
    "adder_grid",
    "trace_boundary",
    "compare_regions",
    "direction_grid",
    "adder_pipeline_family",
    "QCL_VARIANTS",
]


def h2(x):
    """Binary entropy in bits with H2(0) = H2(1) = 0; works elementwise."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -x * np.log2(x) - (1 - x) * np.log2(1 - x)
    out = np.where((x <= 0) | (x >= 1), 0.0, out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class RateBounds:
    b1: float
    b2: float
    bsum: float
    bsum_layered: float | None = None

    @property
    def sum_bound(self) -> float:
        if self.bsum_layered is None:
            return self.bsum
        return min(self.bsum, self.bsum_layered)

    def as_tuple(self) -> tuple:
        t = (self.b1, self.b2)
        return t + ((self.bsum,) if self.bsum_layered is None else (self.bsum_layered, self.bsum))


@dataclass(frozen=True)
class AdderParams:
    """X1 | U=u ~ Bernoulli(alpha_u), X2 | U=u ~ Bernoulli(beta_u), U ~ Bernoulli(p_u)."""

    alpha0: float
    alpha1: float
    beta0: float
    beta1: float
    p_u: float = 0.5
    full_range: bool = False

    def __post_init__(self):
        hi = 1.0 if self.full_range else 0.5
        for name in ("alpha0", "alpha1", "beta0", "beta1"):
            v = getattr(self, name)
            if not (0.0 <= v <= hi) or not math.isfinite(v):
                hint = "" if self.full_range else " (the adder example's stated domain; use full_range for [0, 1])"
                raise DomainError(f"{name} = {v} lies outside [0, {hi}]{hint}")
        if not 0.0 <= self.p_u <= 1.0:
            raise DomainError(f"p_u = {self.p_u} is not a probability")

    @property
    def weights(self) -> tuple[float, float]:
        return (1.0 - self.p_u, self.p_u)

    @property
    def gamma(self) -> float:
        """P(X1 = X2)."""
        w0, w1 = self.weights
        a0, a1, b0, b1 = self.alpha0, self.alpha1, self.beta0, self.beta1
        return w0 * (a0 * b0 + (1 - a0) * (1 - b0)) + w1 * (a1 * b1 + (1 - a1) * (1 - b1))

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha0, self.alpha1, self.beta0, self.beta1])


def adder_closed_form_batch(a0, a1, b0, b1, p_u=0.5):
    """Vectorized closed form; returns arrays (b1, b2, bsum, gamma)."""
    a0, a1, b0, b1 = (np.asarray(v, dtype=float) for v in (a0, a1, b0, b1))
    w0, w1 = 1.0 - p_u, p_u
    r1 = w0 * h2(a0) + w1 * h2(a1)
    r2 = w0 * h2(b0) + w1 * h2(b1)
    p11 = w0 * a0 * b0 + w1 * a1 * b1
    gamma = w0 * (a0 * b0 + (1 - a0) * (1 - b0)) + w1 * (a1 * b1 + (1 - a1) * (1 - b1))
    safe = np.where(gamma < GAMMA_FLOOR, 1.0, gamma)
    s = np.where(gamma < GAMMA_FLOOR, 0.0, h2(gamma) + gamma * h2(np.clip(p11 / safe, 0.0, 1.0)))
    return r1, r2, s, gamma


def adder_closed_form(p: AdderParams) -> RateBounds:
    """Feedback-region bounds of the binary adder with outcome-revealing feedback.

    R1 <= E_U H2(alpha_U), R2 <= E_U H2(beta_U) and
    R1 + R2 <= H2(gamma) + gamma H2(P(X1 = X2 = 1) / gamma), with the sum
    bound taken as 0 when gamma underflows.
    """
    r1, r2, s, _ = adder_closed_form_batch(p.alpha0, p.alpha1, p.beta0, p.beta1, p.p_u)
    return RateBounds(float(r1), float(r2), float(s))


def _require(joint: CqJointState, labels: Sequence[str]):
    missing = [l for l in labels if l not in joint.labels]
    if missing:
        raise MissingLabel(f"joint state lacks labels {missing}")


def qcl_bounds(joint: CqJointState, variant: str = "statement") -> RateBounds:
    """Cover-Leung-type bounds.

    ``variant``:
      * ``"statement"``: R1 <= I(X1;Z2|U X2), R2 <= I(X2;Z1|U X1)
      * ``"outline"``: R1 <= I(X1;Bbar Z1 Z2|U X2), R2 <= I(X2;Z1|U X1)
      * ``"swapped"``: R1 <= I(X1;Z2|U X2), R2 <= I(X2;Bbar Z1 Z2|U X1)

    All variants share R1 + R2 <= I(X1 X2; Bbar Z1 Z2).
    """
    if variant not in QCL_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {QCL_VARIANTS}")
    _require(joint, ("U", "X1", "X2") + BZ)
    mi = lambda a, b, c: mutual_information(joint, a, b, c)
    b1 = mi("X1", BZ if variant == "outline" else "Z2", ("U", "X2"))
    b2 = mi("X2", BZ if variant == "swapped" else "Z1", ("U", "X1"))
    bsum = mi(("X1", "X2"), BZ, ())
    return RateBounds(b1, b2, bsum)


def general_bounds(joint: CqJointState) -> RateBounds:
    """Rate-splitting bounds.

    R1 <= I(X1;Bbar Z|U V1 X2) + I(V1;Z2|U X2),
    R2 <= I(X2;Bbar Z|U V2 X1) + I(V2;Z1|U X1),
    R1 + R2 <= I(V1;Z2|X2 U) + I(V2;Z1|X1 U) + I(X1 X2;Bbar Z|U V1 V2),
    R1 + R2 <= I(X1 X2;Bbar Z).
    """
    _require(joint, ("U", "V1", "V2", "X1", "X2") + BZ)
    mi = lambda a, b, c: mutual_information(joint, a, b, c)
    f1 = mi("V1", "Z2", ("U", "X2"))
    f2 = mi("V2", "Z1", ("U", "X1"))
    b1 = mi("X1", BZ, ("U", "V1", "X2")) + f1
    b2 = mi("X2", BZ, ("U", "V2", "X1")) + f2
    layered = f1 + f2 + mi(("X1", "X2"), BZ, ("U", "V1", "V2"))
    bsum = mi(("X1", "X2"), BZ, ())
    return RateBounds(b1, b2, bsum, layered)


# ---------------------------------------------------------------------------
# boundaries


def pentagon_vertices(b1, b2, s) -> np.ndarray:
    """Upper-right corners of {0 <= R1 <= b1, 0 <= R2 <= b2, R1 + R2 <= s}.

    Vectorized: inputs of shape (N,) give an (N, 4, 2) array.
    """
    b1, b2, s = (np.maximum(np.asarray(v, dtype=float), 0.0) for v in (b1, b2, s))
    top = np.minimum(b2, s)
    right = np.minimum(b1, s)
    xa = np.clip(s - top, 0.0, b1)
    yb = np.clip(s - right, 0.0, b2)
    zero = np.zeros_like(top)
    return np.stack(
        [np.stack([zero, top], -1), np.stack([xa, top], -1), np.stack([right, yb], -1), np.stack([right, zero], -1)],
        axis=-2,
    )


def _upper_hull(points: np.ndarray) -> np.ndarray:
    """Upper-right boundary of the downward closure of ``points`` (nonnegative quadrant)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    pts = np.clip(pts, 0.0, None)
    max1, max2 = pts[:, 0].max(), pts[:, 1].max()
    # Pareto filter: sort by R1 descending (R2 descending on ties), keep new R2 maxima
    order = np.lexsort((-pts[:, 1], -pts[:, 0]))
    p = pts[order]
    prev = np.concatenate([[-np.inf], np.maximum.accumulate(p[:, 1])[:-1]])
    p = p[p[:, 1] > prev][::-1]
    if p[0, 0] > 0:
        p = np.vstack([[0.0, max2], p])
    if p[-1, 1] > 0:
        p = np.vstack([p, [max1, 0.0]])
    # monotone chain, clockwise from (0, max2) to (max1, 0)
    hull: list[tuple[float, float]] = []
    for x, y in p:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1) >= -1e-15:
                hull.pop()
            else:
                break
        hull.append((float(x), float(y)))
    return np.array(hull)


def direction_grid(n: int = 257) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


@dataclass(frozen=True, eq=False)
class RegionBoundary:
    """Vertices of the upper-right boundary, from (0, max R2) to (max R1, 0)."""

    vertices: np.ndarray

    @classmethod
    def from_points(cls, points) -> "RegionBoundary":
        return cls(_upper_hull(points))

    def __eq__(self, other):
        return isinstance(other, RegionBoundary) and np.array_equal(self.vertices, other.vertices)

    def support(self, mu) -> np.ndarray:
        """max over the region of <n, R> with n = (mu, 1 - mu) / |(mu, 1 - mu)|."""
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        n = np.stack([mu, 1.0 - mu], axis=1)
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        return np.max(n @ self.vertices.T, axis=1).clip(0.0)

    def contains(self, point, tol: float = 1e-9) -> bool:
        x, y = (float(v) for v in point)
        if x < -tol or y < -tol:
            return False
        v = self.vertices
        if x > v[:, 0].max() + tol or y > v[:, 1].max() + tol:
            return False
        for (x1, y1), (x2, y2) in zip(v[:-1], v[1:]):
            length = math.hypot(x2 - x1, y2 - y1)
            if length == 0:
                continue
            cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
            if cross > tol * length:
                return False
        return True

    def to_csv_rows(self) -> list[str]:
        return ["R1,R2"] + [f"{x:.12g},{y:.12g}" for x, y in self.vertices]


def bounds_to_pentagon(b: RateBounds) -> RegionBoundary:
    return RegionBoundary.from_points(pentagon_vertices(b.b1, b.b2, b.sum_bound))


def no_feedback_adder_region() -> RegionBoundary:
    """R1 <= 1, R2 <= 1, R1 + R2 <= 3/2."""
    return bounds_to_pentagon(RateBounds(1.0, 1.0, 1.5))


@dataclass(frozen=True, eq=False)
class ContainmentReport:
    contains: bool
    max_gap: float
    direction: float
    directions: np.ndarray = field(repr=False)
    support_a: np.ndarray = field(repr=False)
    support_b: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "contains": bool(self.contains),
            "max_gap": float(self.max_gap),
            "direction": float(self.direction),
            "per_direction": [
                {"mu": float(m), "support_a": float(a), "support_b": float(b), "gap": float(a - b)}
                for m, a, b in zip(self.directions, self.support_a, self.support_b)
            ],
        }


def compare_regions(a: RegionBoundary, b: RegionBoundary, n_directions: int = 257, tol: float = 1e-9) -> ContainmentReport:
    """Check a ⊇ b and report max_mu [h_a(mu) - h_b(mu)] with its direction."""
    mus = direction_grid(n_directions)
    ha, hb = a.support(mus), b.support(mus)
    gap = ha - hb
    k = int(np.argmax(gap))
    contains = all(a.contains(v, tol) for v in b.vertices)
    return ContainmentReport(contains, float(gap[k]), float(mus[k]), mus, ha, hb)


# ---------------------------------------------------------------------------
# parameter families


class AdderFamily:
    """Binary-adder bounds over (alpha0, alpha1, beta0, beta1), evaluated in closed form.

    All three bound variants coincide for this channel because the
    outcome reveals x1 + x2 and Bbar carries nothing beyond it.
    """

    n_params = 4

    def __init__(self, p_u: float = 0.5, full_range: bool = False):
        self.p_u = float(p_u)
        self.full_range = bool(full_range)
        hi = 1.0 if full_range else 0.5
        self.domain = [(0.0, hi)] * 4

    def __call__(self, params: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(params, dtype=float))
        r1, r2, s, _ = adder_closed_form_batch(p[:, 0], p[:, 1], p[:, 2], p[:, 3], self.p_u)
        return np.stack([r1, r2, s], axis=1)


class PipelineFamily:
    """Bounds from the full ensemble -> channel -> instrument pipeline.

    ``builder(params)`` returns an InputEnsemble.  Each enabled variant adds
    one row per parameter tuple.
    """

    def __init__(self, builder: Callable, channel, instrument, n_params: int, domain,
                 variants: Sequence[str] = ("statement",), bounds: str = "qcl"):
        self.builder = builder
        self.channel = channel
        self.instrument = instrument
        self.n_params = n_params
        self.domain = list(domain)
        self.variants = tuple(variants)
        self.bounds = bounds

    def _rows(self, params):
        joint = build_joint_state(self.builder(params), self.channel, self.instrument)
        if self.bounds == "general":
            b = general_bounds(joint)
            return [(b.b1, b.b2, b.sum_bound)]
        return [(b.b1, b.b2, b.bsum) for b in (qcl_bounds(joint, v) for v in self.variants)]

    def __call__(self, params: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(params, dtype=float))
        return np.array([row for q in p for row in self._rows(q)], dtype=float).reshape(-1, 3)


class ConstantFamily:
    """A single fixed set of bounds, whatever the parameters."""

    n_params = 1
    domain = [(0.0, 1.0)]

    def __init__(self, bounds: RateBounds):
        self.row = (bounds.b1, bounds.b2, bounds.sum_bound)

    def __call__(self, params: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(params, dtype=float))
        return np.tile(self.row, (len(p), 1))


def adder_pipeline_family(p_u: float = 0.5, variants=("statement",), register: str = "classical"):
    """The adder evaluated through the generic pipeline (cross-check for AdderFamily)."""
    ch, inst = adder_channel(), adder_instrument(register)

    def builder(q):
        return adder_ensemble([q[0], q[1]], [q[2], q[3]], [1 - p_u, p_u])

    return PipelineFamily(builder, ch, inst, 4, [(0.0, 0.5)] * 4, variants)


def adder_grid(points: int = 33, full_range: bool = False) -> np.ndarray:
    """Cartesian grid over (alpha0, alpha1, beta0, beta1) with ``points`` per axis."""
    if points < 1:
        raise EmptyGrid("grid needs at least one point per axis")
    axis = np.linspace(0.0, 1.0 if full_range else 0.5, points)
    mesh = np.meshgrid(axis, axis, axis, axis, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def trace_boundary(family, grid, refine: bool = False, n_directions: int = 64,
                   maxiter: int = 200, xatol: float = 1e-6) -> RegionBoundary:
    """Convex hull of the union of per-parameter pentagons.

    Time sharing makes the convex hull achievable.  With ``refine=True``,
    each of ``n_directions`` weighted-sum objectives mu R1 + (1 - mu) R2 is
    locally maximized by Nelder-Mead started from the best grid point, and
    the optimized pentagons join the union.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.size == 0 or len(grid) == 0:
        raise EmptyGrid("parameter grid is empty")
    rows = family(grid)
    per = len(rows) // len(grid)
    verts = pentagon_vertices(rows[:, 0], rows[:, 1], rows[:, 2])
    cloud = [verts.reshape(-1, 2)]
    if refine:
        cloud.append(_refine(family, grid, verts, per, n_directions, maxiter, xatol))
    return RegionBoundary.from_points(np.vstack(cloud))


def _refine(family, grid, verts, per, n_directions, maxiter, xatol) -> np.ndarray:
    from scipy.optimize import minimize

    lo = np.array([d[0] for d in family.domain])
    hi = np.array([d[1] for d in family.domain])
    found = []
    # best weighted sum per parameter tuple, over its variant rows and corners
    for mu in np.linspace(0.0, 1.0, n_directions):
        w = np.array([mu, 1.0 - mu])
        score = (verts @ w).max(axis=1).reshape(len(grid), per).max(axis=1)
        x0 = grid[int(np.argmax(score))]

        def neg(q, w=w):
            q = np.clip(q, lo, hi)
            r = family(q[None, :])
            return -float((pentagon_vertices(r[:, 0], r[:, 1], r[:, 2]) @ w).max())

        res = minimize(neg, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                       options={"maxiter": maxiter, "xatol": xatol, "fatol": 1e-12})
        q = np.clip(res.x, lo, hi)
        r = family(q[None, :])
        found.append(pentagon_vertices(r[:, 0], r[:, 1], r[:, 2]).reshape(-1, 2))
    return np.vstack(found)
