"""Explicit-codebook Monte Carlo of the rate-splitting feedback scheme.

Runtime grows like the product of all four message-set sizes, so this is
meant for tiny rates and block lengths; the CLI keeps it behind a flag.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..ensemble import InputEnsemble
from ..errors import InvalidRates
from ..qcore import KrausChannel, QuantumInstrument
from .network import build_ratesplit_network, generate_codebook, message_set_size
from .qcl import SimReport, classical_channel_law, worker_count
from .typicality import joint_codes, typical_mask

MAX_CANDIDATES = 1 << 16

__all__ = ["simulate_ratesplit_scheme"]


def _gather(cb, v: str, assign: dict) -> np.ndarray:
    """Codewords of ``v`` with broadcastable message arrays (advanced indexing)."""
    return cb.tables[v][tuple(assign[m] for m in cb.axes[v])].astype(np.int64)


def _generating_joint(net, t: int, w: np.ndarray) -> np.ndarray:
    """P(u, v1, v2, x1, x2, b) realized by the codebook of block t."""
    c = net.conditionals
    pu = c[f"U[{t}]"]
    pv1, pv2 = c[f"V1[{t}]"], c[f"V2[{t}]"]
    px1, px2 = c[f"X1[{t}]"], c[f"X2[{t}]"]
    if px1.ndim == 3:
        j1 = pv1[:, :, None] * px1                     # (u, v1, x1)
        j2 = pv2[:, :, None] * px2
    else:
        j1 = pv1[:, :, None] * px1[None]
        j2 = pv2[:, :, None] * px2[None]
    j = (pu[:, None, None, None, None] * j1[:, :, None, :, None] * j2[:, None, :, None, :])
    return j[..., None] * w[None, None, None]


def _feedback_joint(joint: np.ndarray, zmap: np.ndarray) -> np.ndarray:
    out = np.zeros(joint.shape[:5] + (int(zmap.max()) + 1,))
    for b, z in enumerate(zmap):
        out[..., z] += joint[..., b]
    return out


def simulate_ratesplit_scheme(channel: KrausChannel, inst: QuantumInstrument, ensemble: InputEnsemble,
                              rates, n: int, T: int, delta: float, trials: int, rng=0,
                              threads: int | None = None, u_to_x: bool = False) -> SimReport:
    """Monte Carlo of the rate-splitting scheme with a fully generated codebook.

    Parameters
    ----------
    rates : (R1', R1'', R2', R2'')
        Cooperative (feedback-decoded) and direct parts of each message.
    """
    rates = tuple(float(r) for r in rates)
    if len(rates) != 4 or any(not math.isfinite(r) or r < 0 for r in rates):
        raise InvalidRates(f"need four finite nonnegative rates, got {rates}")
    if int(T) < 2:
        raise InvalidRates(f"need at least 2 blocks, got T = {T}")
    R1p, R1pp, R2p, R2pp = rates
    sizes = [message_set_size(n, r) for r in rates]
    if math.prod(sizes) > MAX_CANDIDATES:
        raise InvalidRates(f"{math.prod(sizes)} joint candidates per block exceeds {MAX_CANDIDATES}")
    seed = int(rng) if not isinstance(rng, np.random.Generator) else int(rng.integers(2**63))
    law = classical_channel_law(ensemble, channel, inst)
    net = build_ratesplit_network(T, R1p, R1pp, R2p, R2pp, n, ensemble.p_u, ensemble.p_v1x1_u,
                                  ensemble.p_v2x2_u, u_to_x=u_to_x)
    ms = net.message_sizes

    def one(k: int):
        trng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        cb = generate_codebook(net, n, trng)
        msg = {m: int(trng.integers(s)) for m, s in ms.items()}
        est1 = {f"m2p[0]": 0}                     # Alice 1's view of m2'
        est2 = {f"m1p[0]": 0}                     # Alice 2's view of m1'
        cdf = np.cumsum(law.w, axis=2)
        ys, e1, e2 = {}, [], []
        counts = np.zeros(law.w.shape[2], dtype=np.int64)
        for t in range(1, T + 1):
            joint = _generating_joint(net, t, law.w)
            a1 = {**msg, f"m2p[{t-1}]": est1[f"m2p[{t-1}]"]}
            a2 = {**msg, f"m1p[{t-1}]": est2[f"m1p[{t-1}]"]}
            u1, v1, x1 = (_gather(cb, f"{s}[{t}]", a1) for s in ("U", "V1", "X1"))
            u2, v2, x2 = (_gather(cb, f"{s}[{t}]", a2) for s in ("U", "V2", "X2"))
            y = (trng.random(n)[:, None] >= cdf[x1, x2][:, :-1]).sum(axis=1).astype(np.int64)
            counts += np.bincount(y, minlength=len(counts))
            ys[t] = y
            if t == T:
                break
            # Alice 1 decodes m2'[t]: candidates v2(t, own context, m2')
            j1 = _feedback_joint(joint, law.z1).sum(axis=4)        # (u, v1, v2, x1, z1)
            cand = np.arange(ms[f"m2p[{t}]"])
            v2c = _gather(cb, f"V2[{t}]", {**a1, f"m2p[{t}]": cand})
            codes = joint_codes((u1[None], v1[None], v2c, x1[None], law.z1[y][None]), j1.shape)
            ok = np.flatnonzero(typical_mask(codes, j1.ravel(), delta))
            est1[f"m2p[{t}]"] = int(ok[0]) if len(ok) == 1 else 0
            e1.append(est1[f"m2p[{t}]"] != msg[f"m2p[{t}]"])
            j2 = _feedback_joint(joint, law.z2).sum(axis=3)        # (u, v1, v2, x2, z2)
            cand = np.arange(ms[f"m1p[{t}]"])
            v1c = _gather(cb, f"V1[{t}]", {**a2, f"m1p[{t}]": cand})
            codes = joint_codes((u2[None], v1c, v2[None], x2[None], law.z2[y][None]), j2.shape)
            ok = np.flatnonzero(typical_mask(codes, j2.ravel(), delta))
            est2[f"m1p[{t}]"] = int(ok[0]) if len(ok) == 1 else 0
            e2.append(est2[f"m1p[{t}]"] != msg[f"m1p[{t}]"])
        # backward decoding at Bob
        known = {f"m1p[{T}]": 0, f"m2p[{T}]": 0}
        block_err = [False] * T
        for t in range(T, 0, -1):
            joint = _generating_joint(net, t, law.w)
            names = (f"m1p[{t-1}]", f"m2p[{t-1}]", f"m1pp[{t}]", f"m2pp[{t}]")
            grids = np.meshgrid(*(np.arange(ms[m]) for m in names), indexing="ij")
            assign = {**known, **{m: g.ravel() for m, g in zip(names, grids)}}
            seqs = [_gather(cb, f"{s}[{t}]", assign) for s in ("U", "V1", "V2", "X1", "X2")]
            codes = joint_codes(tuple(seqs) + (ys[t][None],), joint.shape)
            ok = np.flatnonzero(typical_mask(codes, joint.ravel(), delta))
            pick = [int(g.ravel()[ok[0]]) for g in grids] if len(ok) == 1 else [0, 0, 0, 0]
            block_err[t - 1] = any(p != msg[m] for p, m in zip(pick, names))
            known = {names[0]: pick[0], names[1]: pick[1]}
        return block_err, e1, e2, counts

    workers = worker_count(threads)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, range(trials)))
    else:
        results = [one(k) for k in range(trials)]
    denom = max(trials, 1)
    per_block = np.zeros(T, dtype=np.int64)
    first = np.zeros(T, dtype=np.int64)
    frame = e1 = e2 = 0
    counts = np.zeros(law.w.shape[2], dtype=np.int64)
    for be, a, b, c in results:
        per_block += np.array(be, dtype=np.int64)
        frame += any(be)
        e1 += sum(a)
        e2 += sum(b)
        wrong = [i for i, (p, q) in enumerate(zip(a, b)) if p or q]
        if wrong:
            first[wrong[0] + 1] += 1
        counts += c
    return SimReport(
        scheme="ratesplit", mode="explicit", decoder="typicality", trials=trials, n=int(n), T=int(T),
        delta=float(delta), rates=list(rates), seed=seed,
        log2_message_sizes={k: math.log2(s) for k, s in zip(("m1p", "m1pp", "m2p", "m2pp"), sizes)},
        decoder_block_error_rate=frame / denom, decoder_frame_errors=int(frame),
        mean_block_error_rate=float(per_block.sum()) / (denom * T),
        per_block_error_counts=[int(c) for c in per_block],
        encoder_estimate_error_rate=[e1 / (denom * (T - 1)), e2 / (denom * (T - 1))],
        encoder_first_error_counts=[int(c) for c in first],
        outcome_counts=[int(c) for c in counts],
    )
