"""Monte Carlo of the Cover-Leung block-Markov feedback scheme with backward decoding.

Two execution modes share the encoder, channel and decision rules:

``explicit``
    The full codebook is generated layer by layer in topological order and
    every decoder checks every candidate.  Only feasible while 2^(nR) stays
    small.
``ensemble``
    Codewords are drawn lazily the first time anyone touches them, which is
    the same random experiment as pre-generating them.  Candidates whose
    codewords were never materialized are independent fresh draws; for them
    only the number of typical ones matters, and it is sampled from the exact
    single-candidate typicality probability (see ``fresh_typical_logprob``).
"""

from __future__ import annotations

import math
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..ensemble import InputEnsemble, adder_ensemble
from ..errors import InvalidRates, NotClassicalComplete
from ..qcore import KrausChannel, QuantumInstrument, apply_channel, apply_instrument, tensor_product
from .network import MAX_CODEBOOK_SYMBOLS, build_qcl_network, generate_codebook, message_set_size
from .typicality import fresh_typical_logprob, joint_codes, typical_mask

SMALL_INDEX = 2**62

__all__ = ["ChannelLaw", "SimReport", "classical_channel_law", "simulate_qcl_scheme", "worker_count"]


def worker_count(threads: int | None = None) -> int:
    """Requested worker count, capped by the QMACFB_THREADS environment variable."""
    env = os.environ.get("QMACFB_THREADS")
    cap = int(env) if env and env.strip().isdigit() and int(env) > 0 else None
    want = 1 if threads is None else max(1, int(threads))
    if threads is None and cap is not None:
        want = cap
    return min(want, cap) if cap is not None else want


@dataclass(frozen=True, eq=False)
class ChannelLaw:
    """Per-symbol statistics of a classical-complete channel + instrument.

    ``w[x1, x2, b]`` is the Born probability of branch b; ``z1[b]`` and
    ``z2[b]`` index the feedback symbols seen by each transmitter.
    """

    p_u: np.ndarray
    p_x1_u: np.ndarray
    p_x2_u: np.ndarray
    w: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    outcomes: tuple

    @property
    def bob_joint(self) -> np.ndarray:
        """P(u, x1, x2, b)."""
        return (self.p_u[:, None, None, None] * self.p_x1_u[:, :, None, None]
                * self.p_x2_u[:, None, :, None] * self.w[None])

    def feedback_joint(self, which: int = 1) -> np.ndarray:
        """P(u, x1, x2, z_which)."""
        zmap = self.z1 if which == 1 else self.z2
        j = self.bob_joint
        out = np.zeros(j.shape[:3] + (int(zmap.max()) + 1,))
        for b, z in enumerate(zmap):
            out[..., z] += j[..., b]
        return out

    @property
    def outcome_marginal(self) -> np.ndarray:
        return self.bob_joint.sum(axis=(0, 1, 2))


def classical_channel_law(ensemble: InputEnsemble, channel: KrausChannel, inst: QuantumInstrument,
                          tol: float = 1e-9) -> ChannelLaw:
    """Born table of the instrument on every channel output, checking classical completeness.

    Raises NotClassicalComplete unless each branch leaves one fixed
    post-measurement state whatever the inputs, so that Bob's whole
    observation is the branch index.
    """
    sizes = ensemble.alphabet_sizes
    # the QCL scheme has no V layer, so V is marginalized away
    p_x1_u = ensemble.p_v1x1_u.sum(axis=1)
    p_x2_u = ensemble.p_v2x2_u.sum(axis=1)
    a1, a2 = (s.name for s in channel.input_space)
    nb = len(inst.branches)
    w = np.zeros((sizes["X1"], sizes["X2"], nb))
    posts: dict[int, np.ndarray] = {}
    for x1 in range(sizes["X1"]):
        for x2 in range(sizes["X2"]):
            rho = tensor_product(ensemble.theta[x1].relabel([a1]), ensemble.phi[x2].relabel([a2]))
            for b, rec in enumerate(apply_instrument(inst, apply_channel(channel, rho))):
                w[x1, x2, b] = rec.probability
                if rec.post_state is None:
                    continue
                ref = posts.setdefault(b, rec.post_state.matrix)
                if np.max(np.abs(ref - rec.post_state.matrix)) > tol:
                    raise NotClassicalComplete(
                        f"branch {rec.outcome} leaves input-dependent post-measurement states; "
                        "block-length simulation needs an instrument whose branches fix the state"
                    )
    w /= w.sum(axis=2, keepdims=True)
    outcomes = tuple(br.outcome for br in inst.branches)
    z1_labels = sorted({o[0] for o in outcomes})
    z2_labels = sorted({o[1] for o in outcomes})
    z1 = np.array([z1_labels.index(o[0]) for o in outcomes])
    z2 = np.array([z2_labels.index(o[1]) for o in outcomes])
    return ChannelLaw(ensemble.p_u, p_x1_u, p_x2_u, w, z1, z2, outcomes)


@dataclass
class SimReport:
    scheme: str
    mode: str
    decoder: str
    trials: int
    n: int
    T: int
    delta: float
    rates: list
    seed: int
    log2_message_sizes: dict
    decoder_block_error_rate: float
    decoder_frame_errors: int
    mean_block_error_rate: float
    per_block_error_counts: list
    encoder_estimate_error_rate: list
    encoder_first_error_counts: list
    outcome_counts: list
    extension: bool = False
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def stderr(self) -> float:
        p = self.decoder_block_error_rate
        return math.sqrt(max(p * (1 - p), 1e-12) / max(self.trials, 1))


def _uniform_index(rng: np.random.Generator, size: int) -> int:
    if size <= SMALL_INDEX:
        return int(rng.integers(size))
    bits = size.bit_length()
    nbytes = (bits + 7) // 8
    while True:
        x = int.from_bytes(rng.bytes(nbytes), "big") >> (8 * nbytes - bits)
        if x < size:
            return x


def _draw(rng, table_rows: np.ndarray, parent: np.ndarray | None, n: int) -> np.ndarray:
    """One codeword: symbol i ~ table_rows[parent[i]] (or table_rows if no parent)."""
    u = rng.random(n)
    cdf = np.cumsum(table_rows if parent is None else table_rows[parent], axis=-1)
    if parent is None:
        cdf = np.broadcast_to(cdf, (n, cdf.shape[-1]))
    return (u[:, None] >= cdf[:, :-1]).sum(axis=1).astype(np.int64)


class _LazyBook:
    """Codebook whose entries are drawn on first access (keyed by restricted message tuple)."""

    complete = False

    def __init__(self, law: ChannelLaw, n: int, rng: np.random.Generator):
        self.law, self.n, self.rng = law, n, rng
        self.u: dict = {}
        self.x1: dict = {}
        self.x2: dict = {}
        self.x1_members = defaultdict(dict)
        self.x2_members = defaultdict(dict)
        self.u_groups = defaultdict(list)

    def u_seq(self, t, g):
        key = (t, g)
        if key not in self.u:
            self.u[key] = _draw(self.rng, self.law.p_u, None, self.n)
            self.u_groups[t].append(g)
        return self.u[key]

    def x1_seq(self, t, g, m):
        members = self.x1_members[t, g]
        if m not in members:
            members[m] = _draw(self.rng, self.law.p_x1_u, self.u_seq(t, g), self.n)
        return members[m]

    def x2_seq(self, t, g, m):
        members = self.x2_members[t, g]
        if m not in members:
            members[m] = _draw(self.rng, self.law.p_x2_u, self.u_seq(t, g), self.n)
        return members[m]


class _FullBook:
    """Adapter over a fully generated codebook of the QCL network."""

    complete = True

    def __init__(self, codebook, T):
        self.cb = codebook
        for t in range(1, T + 1):
            assert codebook.axes[f"x1[{t}]"] == (f"m2[{t-1}]", f"m1[{t}]")
            assert codebook.axes[f"x2[{t}]"] == (f"m2[{t-1}]", f"m2[{t}]")

    def u_seq(self, t, g):
        return self.cb.tables[f"u[{t}]"][g].astype(np.int64)

    def x1_seq(self, t, g, m):
        return self.cb.tables[f"x1[{t}]"][g, m].astype(np.int64)

    def x2_seq(self, t, g, m):
        return self.cb.tables[f"x2[{t}]"][g, m].astype(np.int64)

    def u_table(self, t):
        return self.cb.tables[f"u[{t}]"].astype(np.int64)

    def x1_table(self, t):
        return self.cb.tables[f"x1[{t}]"].astype(np.int64)

    def x2_table(self, t):
        return self.cb.tables[f"x2[{t}]"].astype(np.int64)


def _count_category(rng, size: int, log_q: float) -> int:
    """Sample min(#typical, 2) among ``size`` independent candidates each typical w.p. exp(log_q)."""
    if size <= 0 or log_q == -math.inf:
        return 0
    log_n = math.log(size)
    q = math.exp(log_q)
    if q >= 1.0:
        return 1 if size == 1 else 2
    log_a = math.log(-math.log1p(-q)) if q > 1e-300 else log_q
    ln_p0 = -math.exp(min(log_n + log_a, 700.0))
    ln_p1 = log_n + log_q + ln_p0 - math.log1p(-q)
    p0 = math.exp(ln_p0)
    p1 = math.exp(min(ln_p1, 0.0)) if size > 0 else 0.0
    r = rng.random()
    if r < p0:
        return 0
    if r < p0 + p1:
        return 1
    return 2


class _Trial:
    def __init__(self, law, sizes, n, T, delta, rng, book, decoder):
        self.law, self.n, self.T, self.delta, self.rng = law, n, T, delta, rng
        self.M1, self.M2 = sizes  # per-block sizes, index t
        self.book = book
        self.decoder = decoder
        self.bob_joint = law.bob_joint
        self.alice_joint = law.feedback_joint(1)
        self.token = 0
        nu, nx1, nx2, nb = self.bob_joint.shape
        self.shape = (nu, nx1, nx2, nb)
        self.nz1 = self.alice_joint.shape[3]
        # fresh-class laws: rows = known-part classes, columns = fresh part
        self.bob_x1_joint = self.bob_joint.transpose(0, 2, 3, 1).reshape(-1, nx1)
        self.bob_x1_law = np.repeat(law.p_x1_u, nx2 * nb, axis=0)
        self.bob_c_joint = self.bob_joint.transpose(3, 0, 1, 2).reshape(nb, -1)
        prior = (law.p_u[:, None, None] * law.p_x1_u[:, :, None] * law.p_x2_u[:, None, :]).ravel()
        self.bob_c_law = np.tile(prior, (nb, 1))
        self.alice_joint_k = self.alice_joint.transpose(0, 1, 3, 2).reshape(-1, nx2)
        self.alice_law = np.repeat(law.p_x2_u, nx1 * self.nz1, axis=0)

    def anonymous(self, size: int, taken) -> int:
        """An index outside ``taken`` (uniform when enumerable, else a fresh token)."""
        if size <= SMALL_INDEX and len(taken) < size:
            while True:
                m = int(self.rng.integers(size))
                if m not in taken:
                    return m
        self.token -= 1
        return self.token

    # -- Alice 1 ---------------------------------------------------------
    def alice_estimate(self, t, g, u, x1, z1) -> int:
        nu, nx1, nx2, _ = self.shape
        size = self.M2[t]
        p_flat = self.alice_joint.ravel()
        if self.book.complete:
            x2 = self.book.x2_table(t)[g]
            codes = joint_codes((u[None], x1[None], x2, z1[None]), self.alice_joint.shape)
            if self.decoder == "ml":
                return int(np.argmax(self._alice_loglik(u, x1, x2, z1)))
            ok = np.flatnonzero(typical_mask(codes, p_flat, self.delta))
            return int(ok[0]) if len(ok) == 1 else 0
        members = self.book.x2_members[t, g]
        keys = list(members)
        found = []
        if keys:
            x2 = np.stack([members[k] for k in keys])
            codes = joint_codes((u[None], x1[None], x2, z1[None]), self.alice_joint.shape)
            found = [keys[i] for i in np.flatnonzero(typical_mask(codes, p_flat, self.delta))]
        fresh = size - len(keys)
        cat = 0
        if fresh > 0:
            known = np.bincount((u * nx1 + x1) * self.nz1 + z1, minlength=nu * nx1 * self.nz1)
            lq = fresh_typical_logprob(known, self.alice_joint_k, self.alice_law, self.n, self.delta)
            cat = _count_category(self.rng, fresh, lq)
        total = len(found) + cat
        if total != 1:
            return 0
        return found[0] if found else self.anonymous(size, members)

    def _alice_loglik(self, u, x1, x2, z1):
        with np.errstate(divide="ignore"):
            lw = np.log(self.alice_joint / self.alice_joint.sum(axis=3, keepdims=True))
        return lw[u[None], x1[None], x2, z1[None]].sum(axis=-1)

    # -- Bob -------------------------------------------------------------
    def bob_decode(self, t, m2_next, y) -> tuple[int, int]:
        nu, nx1, nx2, nb = self.shape
        p_flat = self.bob_joint.ravel()
        m1_size, g_size = self.M1[t], self.M2[t - 1]
        if self.book.complete:
            u = self.book.u_table(t)
            x1 = self.book.x1_table(t)
            x2 = self.book.x2_table(t)[:, m2_next]
            if self.decoder == "ml":
                with np.errstate(divide="ignore"):
                    lw = np.log(self.law.w)
                ll = lw[x1, x2[:, None, :], y[None, None, :]].sum(axis=-1)
                g, m = np.unravel_index(int(np.argmax(ll)), ll.shape)
                return int(m), int(g)
            codes = joint_codes((u[:, None, :], x1, x2[:, None, :], y[None, None, :]), self.shape)
            ok = np.argwhere(typical_mask(codes, p_flat, self.delta))
            if len(ok) == 1:
                return int(ok[0][1]), int(ok[0][0])
            return 0, 0
        found = []
        cats = []
        groups = list(self.book.u_groups[t])
        for g in groups:
            u = self.book.u[t, g]
            x2 = self.book.x2_seq(t, g, m2_next)
            members = self.book.x1_members[t, g]
            keys = list(members)
            if keys:
                x1 = np.stack([members[k] for k in keys])
                codes = joint_codes((u[None], x1, x2[None], y[None]), self.shape)
                found += [(keys[i], g) for i in np.flatnonzero(typical_mask(codes, p_flat, self.delta))]
            fresh = m1_size - len(keys)
            if fresh > 0:
                known = np.bincount((u * nx2 + x2) * nb + y, minlength=nu * nx2 * nb)
                lq = fresh_typical_logprob(known, self.bob_x1_joint, self.bob_x1_law, self.n, self.delta)
                c = _count_category(self.rng, fresh, lq)
                cats += [("group", g)] * c
        fresh_groups = g_size - len(groups)
        if fresh_groups > 0:
            known = np.bincount(y, minlength=nb)
            lq = fresh_typical_logprob(known, self.bob_c_joint, self.bob_c_law, self.n, self.delta)
            c = _count_category(self.rng, fresh_groups * m1_size, lq)
            cats += [("cloud", None)] * c
        if len(found) + len(cats) != 1:
            return 0, 0
        if found:
            return found[0]
        kind, g = cats[0]
        if kind == "group":
            return self.anonymous(m1_size, self.book.x1_members[t, g]), g
        g = self.anonymous(g_size, set(groups))
        return self.anonymous(m1_size, ()), g

    # -- one trial -------------------------------------------------------
    def run(self):
        T, n, rng, law = self.T, self.n, self.rng, self.law
        m1 = [0] + [_uniform_index(rng, self.M1[t]) for t in range(1, T + 1)]
        m2 = [0] + [_uniform_index(rng, self.M2[t]) for t in range(1, T + 1)]
        est = [0] * (T + 1)
        ys = [None] * (T + 1)
        est_err = [False] * (T + 1)
        cdf = np.cumsum(law.w, axis=2)
        counts = np.zeros(law.w.shape[2], dtype=np.int64)
        for t in range(1, T + 1):
            g = est[t - 1]
            u = self.book.u_seq(t, g)
            x1 = self.book.x1_seq(t, g, m1[t])
            x2 = self.book.x2_seq(t, m2[t - 1], m2[t])
            r = rng.random(n)
            y = (r[:, None] >= cdf[x1, x2][:, :-1]).sum(axis=1).astype(np.int64)
            counts += np.bincount(y, minlength=len(counts))
            ys[t] = y
            if t < T:
                est[t] = self.alice_estimate(t, g, u, x1, law.z1[y])
                est_err[t] = est[t] != m2[t]
        block_err = [False] * (T + 1)
        m2_hat = 0
        for t in range(T, 0, -1):
            m1_hat, m2_prev_hat = self.bob_decode(t, m2_hat, ys[t])
            block_err[t] = (m1_hat != m1[t]) or (m2_prev_hat != m2[t - 1])
            m2_hat = m2_prev_hat
        return block_err[1:], est_err[1:T], counts


def simulate_qcl_scheme(channel: KrausChannel, inst: QuantumInstrument, params, R1: float, R2: float,
                        n: int, T: int, delta: float, trials: int, rng=0, mode: str = "auto",
                        decoder: str = "typicality", threads: int | None = None) -> SimReport:
    """Estimate error rates of the Cover-Leung feedback scheme by Monte Carlo.

    Parameters
    ----------
    params : InputEnsemble or AdderParams
        Input distribution and states (the V layer, if any, is ignored).
    rng : int seed
        Trial k runs on ``SeedSequence([seed, k])`` so results do not depend
        on scheduling or ``threads``.
    mode : "explicit", "ensemble" or "auto"
        "auto" picks explicit when the full codebook fits in memory.
    decoder : "typicality" or "ml"
        "ml" (maximum likelihood) is an extension, explicit mode only.
    """
    for name, r in (("R1", R1), ("R2", R2)):
        if not (isinstance(r, (int, float)) and math.isfinite(r) and r >= 0):
            raise InvalidRates(f"{name} must be a finite nonnegative rate, got {r}")
    if int(T) < 2:
        raise InvalidRates(f"need at least 2 blocks, got T = {T}")
    if decoder not in ("typicality", "ml"):
        raise ValueError(f"decoder must be 'typicality' or 'ml', got {decoder!r}")
    seed = int(rng) if not isinstance(rng, np.random.Generator) else int(rng.integers(2**63))
    if not isinstance(params, InputEnsemble):
        params = adder_ensemble([params.alpha0, params.alpha1], [params.beta0, params.beta1],
                                [1 - params.p_u, params.p_u])
    law = classical_channel_law(params, channel, inst)
    for name, r, k in (("R1", R1, law.p_x1_u.shape[1]), ("R2", R2, law.p_x2_u.shape[1])):
        if r > math.log2(k) + 1e-12:
            raise InvalidRates(f"{name} = {r} exceeds log2 |X| = {math.log2(k):g}")
    M1s, M2s = message_set_size(n, R1), message_set_size(n, R2)
    M1 = [1] + [M1s] * T
    M2 = [1] + [M2s] * (T - 1) + [1]
    full_symbols = T * n * (1 + M1s + M2s) * max(1, M2s)
    if mode == "auto":
        mode = "explicit" if full_symbols <= 2_000_000 else "ensemble"
    if mode not in ("explicit", "ensemble"):
        raise ValueError(f"mode must be 'explicit', 'ensemble' or 'auto', got {mode!r}")
    if mode == "explicit" and full_symbols > MAX_CODEBOOK_SYMBOLS:
        raise InvalidRates(f"explicit codebook needs ~{full_symbols} symbols; use mode='ensemble'")
    if decoder == "ml" and mode != "explicit":
        raise InvalidRates("the maximum-likelihood decoder needs mode='explicit'")
    p_u, p_x1_u, p_x2_u = law.p_u, law.p_x1_u, law.p_x2_u

    def one(k: int):
        trng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        if mode == "explicit":
            net = build_qcl_network(T, R1, R2, n, p_u, p_x1_u, p_x2_u)
            book = _FullBook(generate_codebook(net, n, trng), T)
        else:
            book = _LazyBook(law, n, trng)
        return _Trial(law, (M1, M2), n, T, delta, trng, book, decoder).run()

    workers = worker_count(threads)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, range(trials)))
    else:
        results = [one(k) for k in range(trials)]

    per_block = np.zeros(T, dtype=np.int64)
    first_est = np.zeros(T, dtype=np.int64)
    frame = 0
    est_total = 0
    counts = np.zeros(law.w.shape[2], dtype=np.int64)
    for block_err, est_err, c in results:
        per_block += np.array(block_err, dtype=np.int64)
        frame += any(block_err)
        est_total += sum(est_err)
        wrong = [i for i, e in enumerate(est_err) if e]
        if wrong:
            first_est[wrong[0] + 1] += 1
        counts += c
    trials = max(trials, 0)
    denom = max(trials, 1)
    notes = []
    if mode == "ensemble":
        notes.append("unmaterialized candidates sampled via exact single-candidate typicality probabilities")
    return SimReport(
        scheme="qcl",
        mode=mode,
        decoder=decoder,
        trials=trials,
        n=int(n),
        T=int(T),
        delta=float(delta),
        rates=[float(R1), float(R2)],
        seed=seed,
        log2_message_sizes={"m1": math.log2(M1s), "m2": math.log2(M2s)},
        decoder_block_error_rate=frame / denom,
        decoder_frame_errors=int(frame),
        mean_block_error_rate=float(per_block.sum()) / (denom * T),
        per_block_error_counts=[int(c) for c in per_block],
        encoder_estimate_error_rate=[est_total / (denom * (T - 1)), 0.0],
        encoder_first_error_counts=[int(c) for c in first_est],
        outcome_counts=[int(c) for c in counts],
        extension=decoder == "ml",
        notes=notes,
    )
