"""Small-dimension quantum states, channels and instruments.

Every Hilbert space is finite and carries an explicit label.  Composite
spaces are ordered by declaration; matrices use the big-endian Kronecker
layout (first label is the most significant index).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateLabel,
    NotHermitian,
    NotPSD,
    NotTracePreserving,
    TraceNotOne,
    UnknownLabel,
)

TAU_HERM = 1e-9
TAU_TR = 1e-9
TAU_PSD = 1e-9

__all__ = [
    "HilbertLabel",
    "DensityOperator",
    "KrausChannel",
    "InstrumentBranch",
    "QuantumInstrument",
    "MeasurementRecord",
    "density_from_matrix",
    "basis_state",
    "maximally_mixed",
    "tensor_product",
    "partial_trace",
    "apply_channel",
    "swap_operator",
    "adder_channel",
    "binary_adder_channel",
    "adder_instrument",
    "identity_channel",
    "identity_instrument",
    "apply_instrument",
    "sample_outcome",
]


@dataclass(frozen=True)
class HilbertLabel:
    name: str
    dimension: int

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise ValueError(f"dimension of {self.name!r} must be >= 1, got {self.dimension}")


def _as_space(space) -> tuple[HilbertLabel, ...]:
    out = []
    for s in space:
        if isinstance(s, HilbertLabel):
            out.append(s)
        else:
            name, dim = s
            out.append(HilbertLabel(str(name), int(dim)))
    names = [s.name for s in out]
    if len(set(names)) != len(names):
        raise DuplicateLabel(f"label names must be unique, got {names}")
    return tuple(out)


def _space_dim(space: Sequence[HilbertLabel]) -> int:
    return int(np.prod([s.dimension for s in space], dtype=np.int64)) if space else 1


def _readonly(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=complex)
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """A validated density matrix on a labeled composite space.

    Construct through :func:`density_from_matrix`; the constructor itself
    trusts its input.
    """

    space: tuple[HilbertLabel, ...]
    matrix: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.space)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dimension for s in self.space)

    def relabel(self, names: Sequence[str]) -> "DensityOperator":
        if len(names) != len(self.space):
            raise DimensionMismatch("relabel needs one name per subsystem")
        space = _as_space((n, s.dimension) for n, s in zip(names, self.space))
        return DensityOperator(space, self.matrix)

    def __repr__(self):
        return f"DensityOperator({list(self.labels)}, dims={list(self.dims)})"


def density_from_matrix(m, space=None) -> DensityOperator:
    """Validate ``m`` as a density operator on ``space``.

    Small negative eigenvalues (down to ``-TAU_PSD``) are clipped to zero and
    the result renormalized; anything worse raises.

    Raises
    ------
    NotHermitian, NotPSD, TraceNotOne
        With the measured deviation in the message.
    DimensionMismatch
        If the matrix side differs from the product of the label dimensions.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if space is None:
        space = [("S", m.shape[0])]
    space = _as_space(space)
    if _space_dim(space) != m.shape[0]:
        raise DimensionMismatch(
            f"matrix side {m.shape[0]} != product of dimensions {_space_dim(space)}"
        )
    herm_dev = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    if herm_dev > TAU_HERM:
        raise NotHermitian(f"Hermiticity violated: max |M - M^dagger| = {herm_dev:.3e}")
    m = 0.5 * (m + m.conj().T)
    tr = float(np.trace(m).real)
    if abs(tr - 1.0) > TAU_TR:
        raise TraceNotOne(f"trace must be 1, got {tr:.12g} (deviation {abs(tr - 1.0):.3e})")
    w, v = np.linalg.eigh(m)
    if w[0] < -TAU_PSD:
        raise NotPSD(f"negative eigenvalue {w[0]:.3e} below -{TAU_PSD:g}")
    if w[0] < 0:
        w = np.clip(w, 0.0, None)
        m = (v * w) @ v.conj().T
        m = m / np.trace(m).real
    return DensityOperator(space, _readonly(m))


def basis_state(index, space) -> DensityOperator:
    """Computational-basis projector |index><index| on ``space``.

    ``index`` may be an integer or a tuple of per-subsystem indices.
    """
    space = _as_space(space)
    d = _space_dim(space)
    if not np.isscalar(index):
        index = int(np.ravel_multi_index(tuple(index), [s.dimension for s in space]))
    m = np.zeros((d, d), dtype=complex)
    m[index, index] = 1.0
    return DensityOperator(space, _readonly(m))


def maximally_mixed(space) -> DensityOperator:
    space = _as_space(space)
    d = _space_dim(space)
    return DensityOperator(space, _readonly(np.eye(d) / d))


def tensor_product(a: DensityOperator, b: DensityOperator) -> DensityOperator:
    if set(a.labels) & set(b.labels):
        raise DuplicateLabel(f"labels overlap: {sorted(set(a.labels) & set(b.labels))}")
    return DensityOperator(a.space + b.space, _readonly(np.kron(a.matrix, b.matrix)))


def _ptrace_array(m: np.ndarray, dims: Sequence[int], keep_idx: Sequence[int]) -> np.ndarray:
    n = len(dims)
    t = m.reshape(tuple(dims) + tuple(dims))
    keep_idx = list(keep_idx)
    # einsum subscripts: row index i -> letter i, column index -> letter n+i,
    # traced subsystems share the row letter
    letters = [chr(ord("a") + i) for i in range(2 * n)]
    row = [letters[i] for i in range(n)]
    col = [letters[n + i] if i in keep_idx else letters[i] for i in range(n)]
    out = [letters[i] for i in keep_idx] + [letters[n + i] for i in keep_idx]
    expr = "".join(row) + "".join(col) + "->" + "".join(out)
    r = np.einsum(expr, t)
    dk = int(np.prod([dims[i] for i in keep_idx], dtype=np.int64)) if keep_idx else 1
    return r.reshape(dk, dk)


def partial_trace(rho: DensityOperator, keep) -> DensityOperator:
    """Reduced state on the labels in ``keep``; survivors keep their order."""
    keep = set(keep)
    unknown = keep - set(rho.labels)
    if unknown:
        raise UnknownLabel(f"unknown labels {sorted(unknown)}; state has {list(rho.labels)}")
    idx = [i for i, s in enumerate(rho.space) if s.name in keep]
    m = _ptrace_array(rho.matrix, rho.dims, idx)
    return DensityOperator(tuple(rho.space[i] for i in idx), _readonly(m))


@dataclass(frozen=True, eq=False)
class KrausChannel:
    input_space: tuple[HilbertLabel, ...]
    output_space: tuple[HilbertLabel, ...]
    kraus_ops: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_space", _as_space(self.input_space))
        object.__setattr__(self, "output_space", _as_space(self.output_space))
        ops = tuple(_readonly(k) for k in self.kraus_ops)
        din, dout = _space_dim(self.input_space), _space_dim(self.output_space)
        for k in ops:
            if k.shape != (dout, din):
                raise DimensionMismatch(f"Kraus operator shape {k.shape} != {(dout, din)}")
        s = sum(k.conj().T @ k for k in ops)
        dev = float(np.max(np.abs(s - np.eye(din))))
        if dev > TAU_TR:
            raise NotTracePreserving(f"sum K^dagger K deviates from identity by {dev:.3e}")
        object.__setattr__(self, "kraus_ops", ops)


def _locate_block(rho: DensityOperator, sub: Sequence[HilbertLabel]) -> int:
    names = [s.name for s in sub]
    labels = list(rho.labels)
    for start in range(len(labels) - len(names) + 1):
        if labels[start : start + len(names)] == names:
            if list(rho.dims[start : start + len(names)]) != [s.dimension for s in sub]:
                raise DimensionMismatch("subsystem dimensions disagree with the operator")
            return start
    raise DimensionMismatch(
        f"operator acts on {names}, which is not a contiguous part of {labels}"
    )


def _apply_kraus(rho: DensityOperator, in_space, out_space, ops) -> np.ndarray:
    start = _locate_block(rho, in_space)
    dims = rho.dims
    a = int(np.prod(dims[:start], dtype=np.int64))
    b = int(np.prod(dims[start + len(in_space) :], dtype=np.int64))
    din, dout = _space_dim(in_space), _space_dim(out_space)
    t = rho.matrix.reshape(a, din, b, a, din, b)
    out = np.zeros((a, dout, b, a, dout, b), dtype=complex)
    for k in ops:
        out += np.einsum("oi,xiyzjw,pj->xoyzpw", k, t, k.conj(), optimize=True)
    return out.reshape(a * dout * b, a * dout * b)


def _replace_space(rho: DensityOperator, in_space, out_space):
    start = _locate_block(rho, in_space)
    new = rho.space[:start] + tuple(out_space) + rho.space[start + len(in_space) :]
    return _as_space(new)


def apply_channel(ch: KrausChannel, rho: DensityOperator) -> DensityOperator:
    """Apply ``ch`` to its labels inside ``rho`` (identity elsewhere)."""
    m = _apply_kraus(rho, ch.input_space, ch.output_space, ch.kraus_ops)
    return density_from_matrix(m, _replace_space(rho, ch.input_space, ch.output_space))


def identity_channel(space) -> KrausChannel:
    space = _as_space(space)
    return KrausChannel(space, space, (np.eye(_space_dim(space)),))


def swap_operator(d: int = 2) -> np.ndarray:
    """SWAP = sum_ij |ji><ij| on C^d (x) C^d."""
    s = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            s[j * d + i, i * d + j] = 1.0
    return s


def adder_channel(inputs=(("A1", 2), ("A2", 2)), output=("B", 4)) -> KrausChannel:
    """Quantum binary adder: rho -> (rho + SWAP rho SWAP^dagger) / 2."""
    s = swap_operator(2)
    return KrausChannel(inputs, (output,), (np.eye(4) / np.sqrt(2), s / np.sqrt(2)))


def binary_adder_channel(rho: DensityOperator) -> DensityOperator:
    if rho.dims != (2, 2):
        raise DimensionMismatch(f"binary adder acts on two qubits, got dims {rho.dims}")
    ch = adder_channel(inputs=rho.space, output=("B", 4))
    return apply_channel(ch, rho)


@dataclass(frozen=True, eq=False)
class InstrumentBranch:
    outcome: tuple[int, int]
    kraus_ops: tuple[np.ndarray, ...]

    @property
    def effect(self) -> np.ndarray:
        return sum(k.conj().T @ k for k in self.kraus_ops)


@dataclass(frozen=True, eq=False)
class QuantumInstrument:
    """Measurement with classical outcomes (z1, z2) and a post-measurement system.

    Each branch may hold several Kraus operators; the branch map is
    rho -> sum_j K_j rho K_j^dagger.
    """

    input_space: tuple[HilbertLabel, ...]
    output_space: tuple[HilbertLabel, ...]
    branches: tuple[InstrumentBranch, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_space", _as_space(self.input_space))
        object.__setattr__(self, "output_space", _as_space(self.output_space))
        din, dout = _space_dim(self.input_space), _space_dim(self.output_space)
        branches = []
        for br in self.branches:
            if not isinstance(br, InstrumentBranch):
                br = InstrumentBranch(*br)
            ops = tuple(_readonly(k) for k in br.kraus_ops)
            for k in ops:
                if k.shape != (dout, din):
                    raise DimensionMismatch(f"Kraus operator shape {k.shape} != {(dout, din)}")
            branches.append(InstrumentBranch(tuple(int(z) for z in br.outcome), ops))
        outcomes = [b.outcome for b in branches]
        if len(set(outcomes)) != len(outcomes):
            raise ValueError(f"instrument outcome labels must be distinct, got {outcomes}")
        total = sum(b.effect for b in branches)
        dev = float(np.max(np.abs(total - np.eye(din))))
        if dev > TAU_TR:
            raise NotTracePreserving(f"instrument effects sum to identity only within {dev:.3e}")
        object.__setattr__(self, "branches", tuple(branches))

    @property
    def outcomes(self) -> list[tuple[int, int]]:
        return [b.outcome for b in self.branches]

    @property
    def effects(self) -> list[np.ndarray]:
        return [b.effect for b in self.branches]


@dataclass(frozen=True)
class MeasurementRecord:
    outcome: tuple[int, int]
    probability: float
    post_state: DensityOperator | None = field(repr=False)


def adder_instrument(register: str = "classical") -> QuantumInstrument:
    """Feedback measurement {D_0, D_1, D_2} for the binary adder output.

    D_0 = |00><00|, D_1 = |01><01| + |10><10|, D_2 = |11><11|.  Outcome y is
    written to both z1 and z2.  With ``register="classical"`` the
    post-measurement system is a qutrit holding |y><y|; ``"lueders"`` keeps
    the projected two-qubit state D_y rho D_y / p instead.
    """
    basis = {0: [0], 1: [1, 2], 2: [3]}
    branches = []
    if register == "classical":
        out = (("Bbar", 3),)
        for y, idx in basis.items():
            ops = []
            for j in idx:
                k = np.zeros((3, 4))
                k[y, j] = 1.0
                ops.append(k)
            branches.append(InstrumentBranch((y, y), tuple(ops)))
    elif register == "lueders":
        out = (("Bbar", 4),)
        for y, idx in basis.items():
            d = np.zeros((4, 4))
            d[idx, idx] = 1.0
            branches.append(InstrumentBranch((y, y), (d,)))
    else:
        raise ValueError(f"register must be 'classical' or 'lueders', got {register!r}")
    return QuantumInstrument((("B", 4),), out, tuple(branches))


def identity_instrument(space=(("B", 4),), out_name: str = "Bbar") -> QuantumInstrument:
    """Single-outcome instrument that leaves the state untouched (no feedback)."""
    space = _as_space(space)
    if len(space) == 1:
        out = ((out_name, space[0].dimension),)
    else:
        out = tuple((f"{out_name}{i}", s.dimension) for i, s in enumerate(space))
    return QuantumInstrument(space, out, (InstrumentBranch((0, 0), (np.eye(_space_dim(space)),)),))


def apply_instrument(inst: QuantumInstrument, rho: DensityOperator) -> list[MeasurementRecord]:
    """Born-rule probabilities and normalized post-measurement states, one per branch.

    Branches with probability <= TAU_PSD get ``post_state=None``.
    """
    if rho.dims != tuple(s.dimension for s in inst.input_space):
        raise DimensionMismatch(
            f"instrument expects dims {[s.dimension for s in inst.input_space]}, got {list(rho.dims)}"
        )
    records = []
    for br in inst.branches:
        unnorm = sum(k @ rho.matrix @ k.conj().T for k in br.kraus_ops)
        p = float(np.trace(unnorm).real)
        if p <= TAU_PSD:
            records.append(MeasurementRecord(br.outcome, max(p, 0.0), None))
        else:
            post = density_from_matrix(unnorm / p, inst.output_space)
            records.append(MeasurementRecord(br.outcome, p, post))
    return records


def sample_outcome(inst: QuantumInstrument, rho: DensityOperator, rng: np.random.Generator):
    """Draw one branch with Born-rule probabilities."""
    records = apply_instrument(inst, rho)
    p = np.array([r.probability for r in records])
    k = rng.choice(len(records), p=p / p.sum())
    return records[k]
