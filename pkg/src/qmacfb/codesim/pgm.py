"""Pretty-good (square-root) measurement for small candidate ensembles."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import DimensionCapExceeded, DimensionMismatch
from ..qcore import DensityOperator

MAX_DIM = 4096
SUPPORT_CUTOFF = 1e-12
REMAINDER = -1

__all__ = ["pgm_povm", "pgm_probabilities", "pgm_decode", "REMAINDER"]


def _check(candidates: Sequence[DensityOperator], received: DensityOperator | None = None) -> int:
    if not candidates:
        raise ValueError("need at least one candidate")
    dims = {c.dims for c in candidates}
    if received is not None:
        dims.add(received.dims)
    if len(dims) != 1:
        raise DimensionMismatch(f"candidates and received state must share one space, got dims {sorted(dims)}")
    d = candidates[0].dim
    if d > MAX_DIM:
        raise DimensionCapExceeded(f"dimension {d} exceeds the PGM cap {MAX_DIM}")
    return d


def pgm_povm(candidates: Sequence[DensityOperator]) -> tuple[list[np.ndarray], np.ndarray]:
    """Elements S^-1/2 rho_i S^-1/2 / N with S the uniform average, plus the kernel projector."""
    d = _check(candidates)
    n = len(candidates)
    s = sum(c.matrix for c in candidates) / n
    evals, evecs = np.linalg.eigh(s)
    keep = evals > SUPPORT_CUTOFF
    inv_sqrt = (evecs[:, keep] / np.sqrt(evals[keep])) @ evecs[:, keep].conj().T
    elems = [inv_sqrt @ c.matrix @ inv_sqrt / n for c in candidates]
    remainder = np.eye(d) - evecs[:, keep] @ evecs[:, keep].conj().T
    return elems, remainder


def pgm_probabilities(candidates: Sequence[DensityOperator], received: DensityOperator) -> np.ndarray:
    """Born probabilities of each candidate index followed by the remainder outcome."""
    _check(candidates, received)
    elems, remainder = pgm_povm(candidates)
    probs = np.array([np.real(np.trace(e @ received.matrix)) for e in elems + [remainder]])
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def pgm_decode(candidates: Sequence[DensityOperator], received: DensityOperator,
               rng: np.random.Generator | None = None) -> int:
    """Sample a candidate index by measuring ``received`` with the pretty-good measurement.

    Returns ``REMAINDER`` (-1) when the outcome falls outside the candidates' support.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    probs = pgm_probabilities(candidates, received)
    k = int(rng.choice(len(probs), p=probs))
    return REMAINDER if k == len(candidates) else k
