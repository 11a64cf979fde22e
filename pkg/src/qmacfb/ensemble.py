"""Classical-quantum joint states over (U, V1, V2, X1, X2, Z1, Z2) with a quantum block on Bbar."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidState, MissingStateAssignment, UnknownLabel
from .qcore import (
    DensityOperator,
    KrausChannel,
    QuantumInstrument,
    apply_channel,
    apply_instrument,
    basis_state,
    tensor_product,
)

CLASSICAL_LABELS = ("U", "V1", "V2", "X1", "X2", "Z1", "Z2")
QUANTUM_LABEL = "Bbar"
PROB_TOL = 1e-12

__all__ = [
    "CLASSICAL_LABELS",
    "QUANTUM_LABEL",
    "InputEnsemble",
    "CqJointState",
    "functional_v_table",
    "build_joint_state",
    "marginalize",
    "adder_ensemble",
]


def _check_table(t: np.ndarray, name: str) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < -PROB_TOL):
        raise InvalidState(f"{name} has negative entries")
    rows = t.reshape(t.shape[0], -1).sum(axis=1) if t.ndim > 1 else np.array([t.sum()])
    dev = float(np.max(np.abs(rows - 1.0)))
    if dev > PROB_TOL:
        raise InvalidState(f"{name} rows must sum to 1 (deviation {dev:.3e})")
    return np.clip(t, 0.0, None)


def functional_v_table(p_x_given_u, v_of_x: Sequence[int] | None = None) -> np.ndarray:
    """Joint table p(v, x | u) for V a deterministic function of X.

    ``v_of_x=None`` gives a constant V; ``v_of_x=range(|X|)`` gives V = X.
    """
    p = np.asarray(p_x_given_u, dtype=float)
    nu, nx = p.shape
    f = np.zeros(nx, dtype=int) if v_of_x is None else np.asarray(v_of_x, dtype=int)
    if f.shape != (nx,) or np.any(f < 0):
        raise ValueError("v_of_x must map every x to a nonnegative index")
    table = np.zeros((nu, int(f.max()) + 1, nx))
    table[:, f, np.arange(nx)] = p
    return table


@dataclass(frozen=True)
class InputEnsemble:
    """p_U, p(v1, x1 | u), p(v2, x2 | u) and the input states theta[x1], phi[x2].

    The joint law p_U p_{V1X1|U} p_{V2X2|U} makes V1X1 - U - V2X2 a Markov chain
    by construction.
    """

    p_u: np.ndarray
    p_v1x1_u: np.ndarray
    p_v2x2_u: np.ndarray
    theta: Mapping[int, DensityOperator]
    phi: Mapping[int, DensityOperator]

    def __post_init__(self):
        p_u = _check_table(self.p_u, "p_U")
        t1 = _check_table(self.p_v1x1_u, "p_V1X1|U")
        t2 = _check_table(self.p_v2x2_u, "p_V2X2|U")
        if t1.ndim != 3 or t2.ndim != 3 or t1.shape[0] != p_u.size or t2.shape[0] != p_u.size:
            raise DimensionMismatch("conditional tables must have shape (|U|, |V|, |X|)")
        object.__setattr__(self, "p_u", p_u)
        object.__setattr__(self, "p_v1x1_u", t1)
        object.__setattr__(self, "p_v2x2_u", t2)
        object.__setattr__(self, "theta", dict(self.theta))
        object.__setattr__(self, "phi", dict(self.phi))

    @classmethod
    def from_x_tables(cls, p_u, p_x1_u, p_x2_u, theta, phi, v1_of_x1=None, v2_of_x2=None):
        """Build an ensemble whose V's are deterministic functions of the X's."""
        return cls(
            np.asarray(p_u, dtype=float),
            functional_v_table(p_x1_u, v1_of_x1),
            functional_v_table(p_x2_u, v2_of_x2),
            theta,
            phi,
        )

    @property
    def alphabet_sizes(self) -> dict[str, int]:
        nu, nv1, nx1 = self.p_v1x1_u.shape
        _, nv2, nx2 = self.p_v2x2_u.shape
        return {"U": nu, "V1": nv1, "V2": nv2, "X1": nx1, "X2": nx2}


class CqJointState:
    """Block-diagonal state sum_c p_c |c><c| (x) rho_c over classical tuples c.

    Parameters
    ----------
    labels : sequence of str
        Names of the classical registers, in column order.
    probs : (N,) array
    classical : (N, len(labels)) int array
    blocks : (N, d, d) complex array or None
        Quantum blocks on ``Bbar``; ``None`` when the quantum register has
        been traced out.
    """

    def __init__(self, labels, probs, classical, blocks=None):
        self.classical_labels = tuple(labels)
        self.probs = np.asarray(probs, dtype=float)
        self.classical = np.asarray(classical, dtype=np.int64).reshape(len(self.probs), len(self.classical_labels))
        self.blocks = None if blocks is None else np.asarray(blocks, dtype=complex)
        total = float(self.probs.sum())
        if abs(total - 1.0) > 1e-9:
            raise InvalidState(f"joint probabilities sum to {total}, not 1")

    @property
    def has_quantum(self) -> bool:
        return self.blocks is not None

    @property
    def labels(self) -> tuple[str, ...]:
        return self.classical_labels + ((QUANTUM_LABEL,) if self.has_quantum else ())

    def __len__(self):
        return len(self.probs)

    def entries(self):
        """Iterate (probability, classical tuple, block or None)."""
        for i, p in enumerate(self.probs):
            block = None if self.blocks is None else self.blocks[i]
            yield float(p), tuple(int(c) for c in self.classical[i]), block

    def _columns(self, labels) -> list[int]:
        missing = [l for l in labels if l not in self.classical_labels]
        if missing:
            raise UnknownLabel(f"unknown labels {missing}; state has {list(self.labels)}")
        return [self.classical_labels.index(l) for l in labels]

    def _group(self, cols):
        if not cols:
            return np.zeros(len(self.probs), dtype=np.int64), 1
        _, inv = np.unique(self.classical[:, cols], axis=0, return_inverse=True)
        inv = inv.ravel()
        return inv, int(inv.max()) + 1

    def entropy(self, labels) -> float:
        """H(labels) = H(classical marginal) + sum_g p_g H(average block of g)."""
        labels = (labels,) if isinstance(labels, str) else tuple(labels)
        quantum = QUANTUM_LABEL in labels
        if quantum and not self.has_quantum:
            raise UnknownLabel(f"label {QUANTUM_LABEL!r} was traced out")
        cols = self._columns([l for l in labels if l != QUANTUM_LABEL])
        inv, ng = self._group(cols)
        pg = np.bincount(inv, weights=self.probs, minlength=ng)
        pos = pg > 0
        h = float(-np.sum(pg[pos] * np.log2(pg[pos])))
        if quantum:
            d = self.blocks.shape[1]
            acc = np.zeros((ng, d, d), dtype=complex)
            np.add.at(acc, inv, self.probs[:, None, None] * self.blocks)
            acc[pos] /= pg[pos, None, None]
            w = np.linalg.eigvalsh(acc[pos])
            w = np.where(w > 1e-12, w, 1.0)
            h += float(-np.sum(pg[pos] * np.sum(w * np.log2(w), axis=1)))
        return max(h, 0.0)


def marginalize(joint: CqJointState, keep) -> CqJointState:
    """Sum out every classical label not in ``keep``; trace out Bbar when absent."""
    keep = (keep,) if isinstance(keep, str) else tuple(keep)
    quantum = QUANTUM_LABEL in keep
    if quantum and not joint.has_quantum:
        raise UnknownLabel(f"label {QUANTUM_LABEL!r} was traced out")
    classical = [l for l in joint.classical_labels if l in keep]
    joint._columns([l for l in keep if l != QUANTUM_LABEL])
    cols = joint._columns(classical)
    if cols:
        keys, inv = np.unique(joint.classical[:, cols], axis=0, return_inverse=True)
        inv = inv.ravel()
    else:
        keys, inv = np.zeros((1, 0), dtype=np.int64), np.zeros(len(joint.probs), dtype=np.int64)
    pg = np.bincount(inv, weights=joint.probs, minlength=len(keys))
    blocks = None
    if quantum:
        d = joint.blocks.shape[1]
        blocks = np.zeros((len(keys), d, d), dtype=complex)
        np.add.at(blocks, inv, joint.probs[:, None, None] * joint.blocks)
        blocks /= np.where(pg > 0, pg, 1.0)[:, None, None]
    return CqJointState(classical, pg, keys, blocks)


def build_joint_state(
    ens: InputEnsemble, channel: KrausChannel, inst: QuantumInstrument
) -> CqJointState:
    """Apply the channel then the instrument to every classical tuple of ``ens``.

    Entries are emitted in lexicographic order of (u, v1, v2, x1, x2) followed
    by instrument branch order; zero-probability tuples are dropped.
    """
    in_dims = tuple(s.dimension for s in channel.input_space)
    out_dims = tuple(s.dimension for s in channel.output_space)
    inst_dims = tuple(s.dimension for s in inst.input_space)
    if out_dims != inst_dims:
        raise DimensionMismatch(f"channel output dims {out_dims} != instrument input dims {inst_dims}")
    if len(channel.input_space) != 2:
        raise DimensionMismatch("channel must have exactly two input systems (A1, A2)")
    a1, a2 = (s.name for s in channel.input_space)
    sizes = ens.alphabet_sizes
    for name, states, n in (("theta", ens.theta, sizes["X1"]), ("phi", ens.phi, sizes["X2"])):
        missing = [x for x in range(n) if x not in states]
        if missing:
            raise MissingStateAssignment(f"{name} has no state for letters {missing}")

    # instrument records depend only on (x1, x2)
    records = {}
    for x1 in range(sizes["X1"]):
        for x2 in range(sizes["X2"]):
            th, ph = ens.theta[x1], ens.phi[x2]
            rho = tensor_product(th.relabel([a1]) if len(th.space) == 1 else th,
                                 ph.relabel([a2]) if len(ph.space) == 1 else ph)
            if rho.dims != in_dims:
                raise DimensionMismatch(f"input state dims {rho.dims} != channel input dims {in_dims}")
            out = apply_channel(channel, rho)
            records[x1, x2] = [r for r in apply_instrument(inst, out) if r.post_state is not None]

    probs, classical, blocks = [], [], []
    t1, t2 = ens.p_v1x1_u, ens.p_v2x2_u
    for u in range(sizes["U"]):
        if ens.p_u[u] <= 0:
            continue
        for v1 in range(sizes["V1"]):
            for v2 in range(sizes["V2"]):
                for x1 in range(sizes["X1"]):
                    for x2 in range(sizes["X2"]):
                        p = ens.p_u[u] * t1[u, v1, x1] * t2[u, v2, x2]
                        if p <= 0:
                            continue
                        for rec in records[x1, x2]:
                            probs.append(p * rec.probability)
                            classical.append((u, v1, v2, x1, x2) + tuple(rec.outcome))
                            blocks.append(rec.post_state.matrix)
    probs = np.array(probs)
    probs /= probs.sum()  # drops the sub-tolerance branch mass
    return CqJointState(CLASSICAL_LABELS, probs, np.array(classical), np.array(blocks))


def adder_ensemble(alphas, betas, p_u=None, v1_of_x1=None, v2_of_x2=None) -> InputEnsemble:
    """Computational-basis inputs with X1 | U=u ~ Bernoulli(alphas[u]), X2 | U=u ~ Bernoulli(betas[u]).

    ``p_u`` defaults to uniform over ``len(alphas)`` values.
    """
    alphas = np.asarray(alphas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    if alphas.shape != betas.shape:
        raise DimensionMismatch("alphas and betas need one entry per value of U")
    nu = alphas.size
    p_u = np.full(nu, 1.0 / nu) if p_u is None else np.asarray(p_u, dtype=float)
    p_x1 = np.stack([1 - alphas, alphas], axis=1)
    p_x2 = np.stack([1 - betas, betas], axis=1)
    theta = {x: basis_state(x, [("A1", 2)]) for x in (0, 1)}
    phi = {x: basis_state(x, [("A2", 2)]) for x in (0, 1)}
    return InputEnsemble.from_x_tables(p_u, p_x1, p_x2, theta, phi, v1_of_x1, v2_of_x2)
