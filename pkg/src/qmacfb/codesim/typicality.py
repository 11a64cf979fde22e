"""Robust delta-typicality and exact typicality probabilities for fresh codewords."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from ..errors import LengthMismatch

BAND_FUDGE = 1e-9

__all__ = ["count_bands", "joint_codes", "typicality_check", "typical_mask", "fresh_typical_logprob"]


def count_bands(p: np.ndarray, n: int, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Integer count range [lo, hi] with |count/n - p| <= delta p; p = 0 forces count 0."""
    p = np.asarray(p, dtype=float)
    lo = np.ceil(n * p * (1 - delta) - BAND_FUDGE).astype(np.int64)
    hi = np.floor(n * p * (1 + delta) + BAND_FUDGE).astype(np.int64)
    lo = np.where(p > 0, np.maximum(lo, 0), 0)
    hi = np.where(p > 0, hi, 0)
    return lo, hi


def joint_codes(sequences: Sequence[np.ndarray], shape: Sequence[int]) -> np.ndarray:
    """Row-major joint symbol index of aligned sequences (last axis is time)."""
    seqs = [np.asarray(s) for s in sequences]
    n = seqs[0].shape[-1]
    if any(s.shape[-1] != n for s in seqs):
        raise LengthMismatch(f"sequence lengths differ: {[s.shape[-1] for s in seqs]}")
    for s, k in zip(seqs, shape):
        if s.size and (s.min() < 0 or s.max() >= k):
            raise ValueError(f"symbol outside alphabet of size {k}")
    code = np.zeros(np.broadcast_shapes(*(s.shape for s in seqs)), dtype=np.int64)
    for s, k in zip(seqs, shape):
        code = code * k + s
    return code


def typical_mask(codes: np.ndarray, p_flat: np.ndarray, delta: float) -> np.ndarray:
    """Typicality of each row of ``codes`` (shape (..., n)) against ``p_flat``."""
    codes = np.asarray(codes)
    n = codes.shape[-1]
    k = p_flat.size
    lo, hi = count_bands(p_flat, n, delta)
    flat = codes.reshape(-1, n)
    offs = np.arange(flat.shape[0])[:, None] * k
    counts = np.bincount((flat + offs).ravel(), minlength=flat.shape[0] * k).reshape(-1, k)
    ok = np.all((counts >= lo) & (counts <= hi), axis=1)
    return ok.reshape(codes.shape[:-1])


def typicality_check(sequences, dist, delta: float) -> bool:
    """True iff every joint symbol's empirical frequency lies in the multiplicative delta-band.

    Parameters
    ----------
    sequences : tuple of aligned integer arrays of length n
    dist : joint probability array with one axis per sequence
    delta : band half-width relative to each probability
    """
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != len(sequences):
        raise LengthMismatch(f"{len(sequences)} sequences but a {dist.ndim}-dimensional law")
    codes = joint_codes(sequences, dist.shape)
    return bool(typical_mask(codes, dist.ravel(), delta))


def _log_conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log of the convolution of exp(a) and exp(b), stable for any dynamic range."""
    la, lb = len(a), len(b)
    m = np.full((la, la + lb - 1), -np.inf)
    rows = np.arange(la)[:, None]
    m[rows, rows + np.arange(lb)[None, :]] = a[:, None] + b[None, :]
    return logsumexp(m, axis=0)


def _log_box(nk: int, p: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """log P(Multinomial(nk, p) has every count c_j in [lo_j, hi_j])."""
    if lo.sum() > nk or hi.sum() < nk:
        return -math.inf
    acc = np.zeros(1)
    base = 0
    for pj, l, h in zip(p, lo, hi):
        if l > h:
            return -math.inf
        c = np.arange(l, h + 1)
        if pj <= 0:
            if l > 0:
                return -math.inf
            term = np.array([0.0])
        else:
            term = c * math.log(pj) - gammaln(c + 1)
        acc = _log_conv(acc, term)
        base += l
    idx = nk - base
    if idx < 0 or idx >= len(acc):
        return -math.inf
    return float(gammaln(nk + 1) + acc[idx])


def fresh_typical_logprob(known_counts: np.ndarray, joint: np.ndarray, fresh_law: np.ndarray,
                          n: int, delta: float) -> float:
    """Natural-log probability that a fresh codeword makes the joint tuple typical.

    The sequence symbols split into a known part (class k, with ``known_counts[k]``
    occurrences) and a fresh part drawn independently per position from
    ``fresh_law[k, :]``.  Within class k the fresh counts are multinomial, so
    the probability is the product over k of multinomial box probabilities.

    Parameters
    ----------
    known_counts : (K,) int array, counts of each known-part symbol
    joint : (K, J) target law of (known, fresh) symbols that defines typicality
    fresh_law : (K, J) row-stochastic generating law of the fresh part
    """
    lo, hi = count_bands(joint.ravel(), n, delta)
    lo = lo.reshape(joint.shape)
    hi = hi.reshape(joint.shape)
    total = 0.0
    for k, nk in enumerate(np.asarray(known_counts, dtype=np.int64)):
        if nk == 0:
            if np.any(lo[k] > 0):
                return -math.inf
            continue
        val = _log_box(int(nk), fresh_law[k], lo[k], hi[k])
        if val == -math.inf:
            return -math.inf
        total += val
    return total
