"""Multiplex Bayesian networks and layered random-codebook generation."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from decimal import ROUND_FLOOR, Decimal, localcontext
from typing import Mapping

import numpy as np

from ..errors import InvalidConfig, InvalidNetwork

MAX_CODEBOOK_SYMBOLS = 200_000_000

__all__ = [
    "MultiplexBayesNet",
    "NetworkReport",
    "Codebook",
    "message_set_size",
    "validate_network",
    "topological_order",
    "generate_codebook",
    "build_qcl_network",
    "build_ratesplit_network",
    "example_mac_network",
    "to_dot",
]


def message_set_size(n: int, rate: float) -> int:
    """|M| = max(1, floor(2^(n R))) as an exact integer."""
    if rate < 0 or not math.isfinite(rate):
        raise InvalidConfig(f"rate must be finite and nonnegative, got {rate}")
    nr = Decimal(repr(float(rate))) * int(n)
    if nr < 60:
        return max(1, int(2 ** float(nr)))
    with localcontext() as ctx:
        ctx.prec = int(nr * Decimal("0.30103")) + 40
        return max(1, int((Decimal(2) ** nr).to_integral_value(rounding=ROUND_FLOOR)))


@dataclass
class MultiplexBayesNet:
    """DAG of codeword layers plus the map ind: vertex -> encoded message indices.

    Attributes
    ----------
    vertices : dict name -> alphabet size (declaration order is kept)
    parents : dict name -> tuple of parent names
    conditionals : dict name -> array of shape (*parent alphabets, alphabet)
    message_sizes : dict message name -> |M_j| (declaration order fixes axis order)
    ind : dict name -> set of message names
    """

    vertices: dict[str, int]
    parents: dict[str, tuple[str, ...]]
    conditionals: dict[str, np.ndarray]
    message_sizes: dict[str, int]
    ind: dict[str, frozenset[str]]

    def __post_init__(self):
        self.vertices = {str(k): int(v) for k, v in self.vertices.items()}
        self.parents = {v: tuple(self.parents.get(v, ())) for v in self.vertices}
        self.ind = {v: frozenset(self.ind.get(v, ())) for v in self.vertices}
        self.conditionals = {k: np.asarray(c, dtype=float) for k, c in self.conditionals.items()}
        self.message_sizes = {str(k): int(v) for k, v in self.message_sizes.items()}

    def message_axes(self, v: str) -> tuple[str, ...]:
        """ind(v) in the global message declaration order."""
        return tuple(m for m in self.message_sizes if m in self.ind[v])


@dataclass
class NetworkReport:
    valid: bool
    problems: list[str] = field(default_factory=list)

    def __bool__(self):
        return self.valid


def _find_cycle(net: MultiplexBayesNet) -> list[str] | None:
    color = dict.fromkeys(net.vertices, 0)
    stack: list[str] = []

    def visit(v):
        color[v] = 1
        stack.append(v)
        for p in net.parents[v]:
            if p not in color:
                continue
            if color[p] == 1:
                return stack[stack.index(p):] + [p]
            if color[p] == 0:
                found = visit(p)
                if found:
                    return found
        stack.pop()
        color[v] = 2
        return None

    for v in net.vertices:
        if color[v] == 0:
            found = visit(v)
            if found:
                return found
    return None


def validate_network(net: MultiplexBayesNet) -> NetworkReport:
    """Report every violated invariant (never raises)."""
    problems = []
    for v, ps in net.parents.items():
        for p in ps:
            if p not in net.vertices:
                problems.append(f"vertex {v!r} has unknown parent {p!r}")
    cycle = _find_cycle(net)
    if cycle:
        problems.append("cycle: " + " -> ".join(reversed(cycle)))
    for v in net.vertices:
        unknown = sorted(net.ind[v] - set(net.message_sizes))
        if unknown:
            problems.append(f"ind({v}) refers to unknown messages {unknown}")
        for p in net.parents[v]:
            if p in net.ind and not net.ind[p] <= net.ind[v]:
                extra = sorted(net.ind[p] - net.ind[v])
                problems.append(f"ind({p}) is not contained in ind({v}): parent encodes {extra}")
    for m, size in net.message_sizes.items():
        if size < 1:
            problems.append(f"message set {m!r} has size {size} < 1")
    for v, size in net.vertices.items():
        if size < 1:
            problems.append(f"vertex {v!r} has empty alphabet")
        c = net.conditionals.get(v)
        if c is None:
            problems.append(f"vertex {v!r} has no conditional table")
            continue
        want = tuple(net.vertices.get(p, -1) for p in net.parents[v]) + (size,)
        if c.shape != want:
            problems.append(f"conditional of {v!r} has shape {c.shape}, expected {want}")
            continue
        if np.any(c < 0):
            problems.append(f"conditional of {v!r} has negative entries")
        dev = float(np.max(np.abs(c.sum(axis=-1) - 1.0))) if c.size else 0.0
        if dev > 1e-12:
            problems.append(f"conditional of {v!r} rows deviate from 1 by {dev:.3e}")
    return NetworkReport(not problems, problems)


def topological_order(net: MultiplexBayesNet) -> list[str]:
    """Kahn's algorithm; ties broken by declaration order."""
    indeg = {v: len(net.parents[v]) for v in net.vertices}
    children: dict[str, list[str]] = {v: [] for v in net.vertices}
    for v, ps in net.parents.items():
        for p in ps:
            children[p].append(v)
    rank = {v: i for i, v in enumerate(net.vertices)}
    ready = sorted((v for v, d in indeg.items() if d == 0), key=rank.get)
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
                ready.sort(key=rank.get)
    if len(order) != len(net.vertices):
        raise InvalidNetwork("network has a cycle")
    return order


@dataclass(eq=False)
class Codebook:
    """Codeword tables: ``tables[v]`` has shape (*|M_j| for j in ind(v), n)."""

    n: int
    axes: dict[str, tuple[str, ...]]
    tables: dict[str, np.ndarray]
    order: list[str]
    seed: int | None = None

    def query(self, v: str, messages: Mapping[str, int]) -> np.ndarray:
        """Codeword of ``v``; messages outside ind(v) are ignored."""
        return self.tables[v][tuple(int(messages[m]) for m in self.axes[v])]

    @property
    def codeword_count(self) -> int:
        return sum(int(np.prod(t.shape[:-1], dtype=np.int64)) for t in self.tables.values())

    def to_bytes(self) -> bytes:
        parts = [f"n={self.n};".encode()]
        for v in self.order:
            t = np.ascontiguousarray(self.tables[v])
            parts.append(f"{v}:{t.shape}:{t.dtype.str};".encode())
            parts.append(t.tobytes())
        return b"".join(parts)

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def _sample_rows(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling: smallest a with u < cdf[..., a]."""
    k = cdf.shape[-1]
    sym = (u[..., None] >= cdf[..., : k - 1]).sum(axis=-1)
    return sym


def generate_codebook(net: MultiplexBayesNet, n: int, rng: np.random.Generator, seed: int | None = None) -> Codebook:
    """Layered random codebook: every vertex, in topological order, draws one
    length-n codeword per tuple of its own messages, symbol by symbol from its
    conditional given the parents' codewords for the restricted tuple.
    """
    report = validate_network(net)
    if not report.valid:
        raise InvalidNetwork("; ".join(report.problems))
    order = topological_order(net)
    total = sum(
        int(np.prod([net.message_sizes[m] for m in net.message_axes(v)], dtype=object)) for v in order
    ) * int(n)
    if total > MAX_CODEBOOK_SYMBOLS:
        raise InvalidNetwork(f"codebook would hold {total} symbols (cap {MAX_CODEBOOK_SYMBOLS})")
    tables: dict[str, np.ndarray] = {}
    axes: dict[str, tuple[str, ...]] = {}
    for v in order:
        ax = net.message_axes(v)
        shape = tuple(net.message_sizes[m] for m in ax)
        idx = []
        for p in net.parents[v]:
            # embed the parent's table in v's message axes (ind(p) ⊆ ind(v))
            pshape = tuple(net.message_sizes[m] if m in net.ind[p] else 1 for m in ax) + (n,)
            idx.append(np.broadcast_to(tables[p].reshape(pshape), shape + (n,)))
        cond = net.conditionals[v]
        probs = cond[tuple(idx)] if idx else np.broadcast_to(cond, shape + (n, cond.shape[-1]))
        cdf = np.cumsum(probs, axis=-1)
        u = rng.random(shape + (n,))
        dtype = np.uint8 if net.vertices[v] <= 256 else np.int32
        tables[v] = _sample_rows(cdf, u).astype(dtype)
        axes[v] = ax
    return Codebook(int(n), axes, tables, order, seed)


def example_mac_network(n: int, R1: float, R2: float, p_u=(0.5, 0.5), p_x1_u=None, p_x2_u=None) -> MultiplexBayesNet:
    """U -> X1, U -> X2 with ind(U) = {}, ind(X1) = {1}, ind(X2) = {2}."""
    p_u = np.asarray(p_u, dtype=float)
    nu = p_u.size
    p_x1_u = np.full((nu, 2), 0.5) if p_x1_u is None else np.asarray(p_x1_u, dtype=float)
    p_x2_u = np.full((nu, 2), 0.5) if p_x2_u is None else np.asarray(p_x2_u, dtype=float)
    return MultiplexBayesNet(
        vertices={"U": nu, "X1": p_x1_u.shape[1], "X2": p_x2_u.shape[1]},
        parents={"U": (), "X1": ("U",), "X2": ("U",)},
        conditionals={"U": p_u, "X1": p_x1_u, "X2": p_x2_u},
        message_sizes={"1": message_set_size(n, R1), "2": message_set_size(n, R2)},
        ind={"U": (), "X1": ("1",), "X2": ("2",)},
    )


def _default_tables(p_u, p_x1_u, p_x2_u):
    p_u = np.array([0.5, 0.5]) if p_u is None else np.asarray(p_u, dtype=float)
    nu = p_u.size
    p_x1_u = np.full((nu, 2), 0.5) if p_x1_u is None else np.asarray(p_x1_u, dtype=float)
    p_x2_u = np.full((nu, 2), 0.5) if p_x2_u is None else np.asarray(p_x2_u, dtype=float)
    return p_u, p_x1_u, p_x2_u


def build_qcl_network(T: int, R1: float, R2: float, n: int, p_u=None, p_x1_u=None, p_x2_u=None) -> MultiplexBayesNet:
    """Block-Markov network of the Cover-Leung scheme.

    Per block t: u[t] encodes m2[t-1]; x1[t] encodes (m2[t-1], m1[t]);
    x2[t] encodes (m2[t-1], m2[t]).  |m2[0]| = |m2[T]| = 1.
    """
    if int(T) < 2:
        raise InvalidConfig(f"need at least 2 blocks, got T = {T}")
    p_u, p_x1_u, p_x2_u = _default_tables(p_u, p_x1_u, p_x2_u)
    m1 = message_set_size(n, R1)
    m2 = message_set_size(n, R2)
    sizes = {"m2[0]": 1}
    for t in range(1, T + 1):
        sizes[f"m1[{t}]"] = m1
        sizes[f"m2[{t}]"] = 1 if t == T else m2
    vertices, parents, conds, ind = {}, {}, {}, {}
    for t in range(1, T + 1):
        u, x1, x2 = f"u[{t}]", f"x1[{t}]", f"x2[{t}]"
        vertices.update({u: p_u.size, x1: p_x1_u.shape[1], x2: p_x2_u.shape[1]})
        parents.update({u: (), x1: (u,), x2: (u,)})
        conds.update({u: p_u, x1: p_x1_u, x2: p_x2_u})
        ind.update({
            u: {f"m2[{t-1}]"},
            x1: {f"m2[{t-1}]", f"m1[{t}]"},
            x2: {f"m2[{t-1}]", f"m2[{t}]"},
        })
    return MultiplexBayesNet(vertices, parents, conds, sizes, ind)


def build_ratesplit_network(T: int, R1p: float, R1pp: float, R2p: float, R2pp: float, n: int,
                            p_u=None, p_v1x1_u=None, p_v2x2_u=None, u_to_x: bool = False) -> MultiplexBayesNet:
    """Five-layer block-Markov network of the rate-splitting scheme.

    Edges U -> V1 -> X1 and U -> V2 -> X2 inside each block.  The X layer's
    conditional is p(x | v) (averaged over u) unless ``u_to_x`` adds the
    extra edge U -> X so that p(x | u, v) is used exactly.
    """
    if int(T) < 2:
        raise InvalidConfig(f"need at least 2 blocks, got T = {T}")
    p_u = np.array([0.5, 0.5]) if p_u is None else np.asarray(p_u, dtype=float)
    nu = p_u.size
    if p_v1x1_u is None:
        p_v1x1_u = np.tile(np.eye(2)[None] / 2, (nu, 1, 1))
    if p_v2x2_u is None:
        p_v2x2_u = np.tile(np.eye(2)[None] / 2, (nu, 1, 1))
    p_v1x1_u = np.asarray(p_v1x1_u, dtype=float)
    p_v2x2_u = np.asarray(p_v2x2_u, dtype=float)

    def layers(t_vx):
        p_v_u = t_vx.sum(axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            p_x_uv = np.where(p_v_u[..., None] > 0, t_vx / p_v_u[..., None], 1.0 / t_vx.shape[2])
            joint_vx = (p_u[:, None, None] * t_vx).sum(axis=0)
            pv = joint_vx.sum(axis=1, keepdims=True)
            p_x_v = np.where(pv > 0, joint_vx / np.where(pv > 0, pv, 1), 1.0 / t_vx.shape[2])
        return p_v_u, p_x_uv, p_x_v

    pv1_u, px1_uv1, px1_v1 = layers(p_v1x1_u)
    pv2_u, px2_uv2, px2_v2 = layers(p_v2x2_u)
    size = lambda r: message_set_size(n, r)
    sizes = {"m1p[0]": 1, "m2p[0]": 1}
    for t in range(1, T + 1):
        last = t == T
        sizes[f"m1p[{t}]"] = 1 if last else size(R1p)
        sizes[f"m1pp[{t}]"] = 1 if last else size(R1pp)
        sizes[f"m2p[{t}]"] = 1 if last else size(R2p)
        sizes[f"m2pp[{t}]"] = 1 if last else size(R2pp)
    vertices, parents, conds, ind = {}, {}, {}, {}
    for t in range(1, T + 1):
        U, V1, V2, X1, X2 = (f"{s}[{t}]" for s in ("U", "V1", "V2", "X1", "X2"))
        prev = {f"m1p[{t-1}]", f"m2p[{t-1}]"}
        vertices.update({U: nu, V1: pv1_u.shape[1], V2: pv2_u.shape[1],
                         X1: p_v1x1_u.shape[2], X2: p_v2x2_u.shape[2]})
        parents.update({U: (), V1: (U,), V2: (U,),
                        X1: (U, V1) if u_to_x else (V1,), X2: (U, V2) if u_to_x else (V2,)})
        conds.update({U: p_u, V1: pv1_u, V2: pv2_u,
                      X1: px1_uv1 if u_to_x else px1_v1, X2: px2_uv2 if u_to_x else px2_v2})
        ind.update({
            U: prev,
            V1: prev | {f"m1p[{t}]"},
            V2: prev | {f"m2p[{t}]"},
            X1: prev | {f"m1p[{t}]", f"m1pp[{t}]"},
            X2: prev | {f"m2p[{t}]", f"m2pp[{t}]"},
        })
    return MultiplexBayesNet(vertices, parents, conds, sizes, ind)


def to_dot(net: MultiplexBayesNet) -> str:
    """Graphviz rendering; dashed edges join messages to the vertices that encode them."""
    lines = ["digraph multiplex {", "  rankdir=LR;"]
    for v, a in net.vertices.items():
        lines.append(f'  "{v}" [shape=ellipse, label="{v} |{a}|"];')
    for m, s in net.message_sizes.items():
        lines.append(f'  "{m}" [shape=box, label="{m} ({s if s < 10**6 else "2^%.1f" % math.log2(s)})"];')
    for v, ps in net.parents.items():
        for p in ps:
            lines.append(f'  "{p}" -> "{v}";')
    for v in net.vertices:
        for m in net.message_axes(v):
            lines.append(f'  "{m}" -> "{v}" [style=dashed];')
    lines.append("}")
    return "\n".join(lines) + "\n"
