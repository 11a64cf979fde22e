"""Entropies, mutual information and hypothesis-testing divergence (all in bits)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionCapExceeded,
    DimensionMismatch,
    InvalidEpsilon,
    LabelOverlap,
    UnknownLabel,
)
from .qcore import DensityOperator, partial_trace

SUPPORT_CUTOFF = 1e-12
MAX_DIM = 4096

__all__ = [
    "HypothesisTest",
    "shannon_entropy",
    "von_neumann_entropy",
    "quantum_relative_entropy",
    "entropy_of",
    "mutual_information",
    "hypothesis_testing_divergence",
    "stein_probe",
]


def _matrix(x) -> np.ndarray:
    return x.matrix if isinstance(x, DensityOperator) else np.asarray(x, dtype=complex)


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p))) if p.size else 0.0


def von_neumann_entropy(rho) -> float:
    """-tr(rho log2 rho), with 0 log 0 = 0."""
    m = _matrix(rho)
    if m.shape == (1, 1):
        return 0.0
    w = np.linalg.eigvalsh(m)
    return max(shannon_entropy(w[w > SUPPORT_CUTOFF]), 0.0)


def quantum_relative_entropy(rho, sigma) -> float:
    """D(rho || sigma) = tr rho (log2 rho - log2 sigma); +inf off support."""
    r, s = _matrix(rho), _matrix(sigma)
    if r.shape != s.shape:
        raise DimensionMismatch(f"shapes differ: {r.shape} vs {s.shape}")
    wr, vr = np.linalg.eigh(r)
    ws, vs = np.linalg.eigh(s)
    # weight of rho outside supp(sigma)
    ker = vs[:, ws <= SUPPORT_CUTOFF]
    if ker.size and np.real(np.trace(ker.conj().T @ r @ ker)) > SUPPORT_CUTOFF:
        return float("inf")
    pos_r = wr > SUPPORT_CUTOFF
    term1 = float(np.sum(wr[pos_r] * np.log2(wr[pos_r])))
    pos_s = ws > SUPPORT_CUTOFF
    log_s = (vs[:, pos_s] * np.log2(ws[pos_s])) @ vs[:, pos_s].conj().T
    term2 = float(np.real(np.trace(r @ log_s)))
    return max(term1 - term2, 0.0)


def _label_set(x) -> tuple[str, ...]:
    if x is None:
        return ()
    if isinstance(x, str):
        return (x,)
    return tuple(x)


def entropy_of(state, labels) -> float:
    """Joint entropy of the subsystems ``labels`` of a state.

    ``state`` is a :class:`DensityOperator` or anything exposing an
    ``entropy(labels)`` method (e.g. a classical-quantum joint state).
    """
    labels = _label_set(labels)
    if isinstance(state, DensityOperator):
        if not labels:
            return 0.0
        return von_neumann_entropy(partial_trace(state, labels))
    return state.entropy(labels)


def mutual_information(state, part_a, part_b, conditioning=()) -> float:
    """I(A;B|C) = H(AC) + H(BC) - H(ABC) - H(C)."""
    a, b, c = _label_set(part_a), _label_set(part_b), _label_set(conditioning)
    sa, sb, sc = set(a), set(b), set(c)
    if sa & sb or sa & sc or sb & sc:
        raise LabelOverlap(f"label sets must be disjoint: A={a}, B={b}, C={c}")
    known = set(state.labels)
    unknown = (sa | sb | sc) - known
    if unknown:
        raise UnknownLabel(f"unknown labels {sorted(unknown)}; state has {sorted(known)}")
    h = lambda ls: entropy_of(state, ls)
    return h(a + c) + h(b + c) - h(a + b + c) - h(c)


@dataclass(frozen=True)
class HypothesisTest:
    """Optimal Neyman-Pearson test for rho against sigma.

    The test is ``Pi = P{rho - t sigma > 0} + w P{rho - t sigma = 0}`` with
    ``t = threshold`` and ``w = boundary_weight``.  ``threshold`` is ``inf``
    when the optimum never touches the support of sigma.
    """

    epsilon: float
    value_bits: float
    threshold: float
    boundary_weight: float
    test: np.ndarray = field(repr=False, compare=False)


def _commuting_basis(r, s):
    scale = max(np.abs(r).max(), np.abs(s).max(), 1.0)
    if np.abs(r @ s - s @ r).max() > 1e-10 * scale:
        return None
    if np.allclose(r, np.diag(np.diag(r)), atol=1e-14) and np.allclose(
        s, np.diag(np.diag(s)), atol=1e-14
    ):
        return np.eye(r.shape[0])
    # generic combination separates common eigenspaces
    _, v = np.linalg.eigh(r + 0.6180339887498949 * s)
    off_r = v.conj().T @ r @ v
    off_s = v.conj().T @ s @ v
    if (
        np.abs(off_r - np.diag(np.diag(off_r))).max() > 1e-9 * scale
        or np.abs(off_s - np.diag(np.diag(off_s))).max() > 1e-9 * scale
    ):
        return None
    return v


def _classical_np(p, q, target):
    """Neyman-Pearson on probability vectors; returns (tr(Pi sigma), t, w, weights)."""
    p = np.where(p > SUPPORT_CUTOFF, p, 0.0)
    q = np.where(q > SUPPORT_CUTOFF, q, 0.0)
    weights = np.zeros_like(p)
    zero_q = q == 0
    pz = float(p[zero_q].sum())
    weights[zero_q & (p > 0)] = 1.0
    if pz >= target - 1e-12:
        return 0.0, float("inf"), 1.0, weights
    idx = np.flatnonzero(~zero_q)
    ratio = p[idx] / q[idx]
    order = idx[np.argsort(-ratio, kind="stable")]
    ratio_sorted = p[order] / q[order]
    acc_p, acc_q = pz, 0.0
    i = 0
    while i < len(order):
        j = i + 1
        while j < len(order) and np.isclose(ratio_sorted[j], ratio_sorted[i], rtol=1e-12, atol=0):
            j += 1
        group = order[i:j]
        gp, gq = float(p[group].sum()), float(q[group].sum())
        if acc_p + gp >= target or j == len(order):
            w = min(max((target - acc_p) / gp, 0.0), 1.0) if gp > 0 else 1.0
            weights[group] = w
            return acc_q + w * gq, float(ratio_sorted[i]), w, weights
        weights[group] = 1.0
        acc_p += gp
        acc_q += gq
        i = j
    return acc_q, 0.0, 1.0, weights


def _general_np(r, s, target):
    """Neyman-Pearson for non-commuting pairs: bisection on t in rho - t sigma."""
    norm_s = max(np.linalg.norm(s, 2), 1e-300)
    eta = 1e-12 * max(1.0, np.linalg.norm(r, 2))

    def g(t):
        w, v = np.linalg.eigh(r - t * s)
        sel = w >= -eta
        return float(np.real(np.einsum("ij,ik,kj->", v[:, sel].conj(), r, v[:, sel])))

    # weight of rho on ker(sigma): the t -> inf limit
    ws, vs = np.linalg.eigh(s)
    ker = vs[:, ws <= SUPPORT_CUTOFF]
    if ker.size and np.real(np.trace(ker.conj().T @ r @ ker)) >= target - 1e-12:
        test = ker @ ker.conj().T
        return 0.0, float("inf"), 1.0, test
    lo, hi = 0.0, 1.0
    while g(hi) >= target:
        lo, hi = hi, hi * 2.0
        if hi > 1e15:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if g(mid) >= target:
            lo = mid
        else:
            hi = mid
    w, v = np.linalg.eigh(r - lo * s)
    band = (hi - lo) * norm_s + eta
    rho_w = np.real(np.einsum("ij,ik,kj->j", v.conj(), r, v))
    pos = w > band
    zero = np.abs(w) <= band
    a = float(rho_w[pos].sum())
    b = float(rho_w[zero].sum())
    if a + b < target - 1e-12:
        # widen the boundary downward until the constraint can be met
        for k in np.argsort(-w):
            if pos[k] or zero[k]:
                continue
            zero[k] = True
            b += rho_w[k]
            if a + b >= target - 1e-12:
                break
    wt = min(max((target - a) / b, 0.0), 1.0) if b > 0 else 0.0
    diag = pos.astype(float) + wt * zero
    test = (v * diag) @ v.conj().T
    tr_s = float(np.real(np.trace(test @ s)))
    return tr_s, lo, wt, test


def hypothesis_testing_divergence(rho, sigma, epsilon: float) -> HypothesisTest:
    """D_H^eps(rho || sigma) = max -log2 tr(Pi sigma) over 0 <= Pi <= I, tr(Pi rho) >= 1 - eps.

    The optimum has Neyman-Pearson form.  Commuting pairs are solved
    exactly by a likelihood-ratio sweep in a joint eigenbasis; otherwise the
    threshold t is located by bisection and the boundary eigenspace of
    rho - t sigma receives the fractional weight that makes
    tr(Pi rho) = 1 - eps.
    """
    eps = float(epsilon)
    if not 0.0 <= eps < 1.0:
        raise InvalidEpsilon(f"epsilon must lie in [0, 1), got {epsilon}")
    r, s = _matrix(rho), _matrix(sigma)
    if r.shape != s.shape:
        raise DimensionMismatch(f"shapes differ: {r.shape} vs {s.shape}")
    target = 1.0 - eps
    v = _commuting_basis(r, s)
    if v is not None:
        p = np.real(np.einsum("ij,ik,kj->j", v.conj(), r, v))
        q = np.real(np.einsum("ij,ik,kj->j", v.conj(), s, v))
        tr_s, t, w, weights = _classical_np(p, q, target)
        test = (v * weights) @ v.conj().T
    else:
        tr_s, t, w, test = _general_np(r, s, target)
    value = float("inf") if tr_s <= 0 else max(-np.log2(tr_s), 0.0)
    return HypothesisTest(eps, value, t, w, test)


def _dh_vectors(p, q, eps):
    tr_s, *_ = _classical_np(p, q, 1.0 - eps)
    return float("inf") if tr_s <= 0 else max(-np.log2(tr_s), 0.0)


def stein_probe(rho, sigma, epsilon: float, n_max: int) -> list[tuple[int, float]]:
    """(n, D_H^eps(rho^n || sigma^n) / n) for n = 1 .. n_max, computed exactly.

    Raises DimensionCapExceeded when dim^n_max exceeds 4096.
    """
    r, s = _matrix(rho), _matrix(sigma)
    if r.shape != s.shape:
        raise DimensionMismatch(f"shapes differ: {r.shape} vs {s.shape}")
    d = r.shape[0]
    if d ** int(n_max) > MAX_DIM:
        raise DimensionCapExceeded(
            f"dim^n = {d}^{n_max} exceeds the tensor-power cap {MAX_DIM}"
        )
    eps = float(epsilon)
    if not 0.0 <= eps < 1.0:
        raise InvalidEpsilon(f"epsilon must lie in [0, 1), got {epsilon}")
    out = []
    v = _commuting_basis(r, s)
    if v is not None:
        # tensor powers stay diagonal in the product basis
        p1 = np.clip(np.real(np.einsum("ij,ik,kj->j", v.conj(), r, v)), 0, None)
        q1 = np.clip(np.real(np.einsum("ij,ik,kj->j", v.conj(), s, v)), 0, None)
        p, q = np.ones(1), np.ones(1)
        for n in range(1, int(n_max) + 1):
            p, q = np.kron(p, p1), np.kron(q, q1)
            out.append((n, _dh_vectors(p, q, eps) / n))
        return out
    rn, sn = np.ones((1, 1), dtype=complex), np.ones((1, 1), dtype=complex)
    for n in range(1, int(n_max) + 1):
        rn, sn = np.kron(rn, r), np.kron(sn, s)
        out.append((n, hypothesis_testing_divergence(rn, sn, eps).value_bits / n))
    return out
