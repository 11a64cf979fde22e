"""Acceptance criteria 1-9; each test prints one ``ACCEPTANCE n: PASS/FAIL`` line."""

import math
import os
import time

import numpy as np
import pytest
from scipy.stats import chi2

from conftest import random_admissible_tests, random_density, record_acceptance
from qmacfb.cli import main
from qmacfb.codesim import (
    build_qcl_network,
    build_ratesplit_network,
    example_mac_network,
    generate_codebook,
    packing_rate_check,
    simulate_qcl_scheme,
    validate_network,
)
from qmacfb.ensemble import InputEnsemble, adder_ensemble, build_joint_state
from qmacfb.qcore import adder_channel, adder_instrument, density_from_matrix, identity_instrument
from qmacfb.qinfo import hypothesis_testing_divergence, mutual_information, quantum_relative_entropy, stein_probe
from qmacfb.regions import (
    AdderFamily,
    AdderParams,
    adder_closed_form,
    adder_grid,
    compare_regions,
    no_feedback_adder_region,
    qcl_bounds,
    trace_boundary,
)

THREADS = os.cpu_count() or 1


def test_criterion_1_closed_form_anchor():
    p = AdderParams(0.5, 0.5, 0.5, 0.5)
    b = adder_closed_form(p)
    runtime = min(_timed(lambda: adder_closed_form(p)) for _ in range(50))
    ok = (abs(b.b1 - 1.0) <= 1e-9 and abs(b.b2 - 1.0) <= 1e-9 and abs(b.bsum - 1.5) <= 1e-9
          and abs(p.gamma - 0.5) <= 1e-9 and runtime < 1e-3)
    record_acceptance(1, ok, f"bounds={b.as_tuple()}, gamma={p.gamma}, runtime={runtime * 1e6:.0f} us")
    assert ok


def test_criterion_2_oracle_equivalence():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        q = rng.uniform(0, 0.5, 4)
        cf = adder_closed_form(AdderParams(*q))
        joint = build_joint_state(adder_ensemble(q[:2], q[2:]), adder_channel(), adder_instrument())
        b = qcl_bounds(joint)
        worst = max(worst, abs(b.b1 - cf.b1), abs(b.b2 - cf.b2), abs(b.bsum - cf.bsum))
    runtime = time.perf_counter() - start
    ok = worst <= 1e-9 and runtime < 5
    record_acceptance(2, ok, f"max deviation {worst:.2e} over 100 params, runtime {runtime:.2f} s")
    assert ok


def test_criterion_3_no_feedback_reduction():
    start = time.perf_counter()
    joint = build_joint_state(adder_ensemble([0.5, 0.5], [0.5, 0.5]), adder_channel(), identity_instrument())
    i_sum = mutual_information(joint, ("X1", "X2"), "Bbar")
    b = qcl_bounds(joint)
    runtime = time.perf_counter() - start
    ok = abs(i_sum - 1.5) <= 1e-9 and abs(b.b1) <= 1e-9 and abs(b.b2) <= 1e-9 and runtime < 1
    record_acceptance(3, ok, f"I(X1X2;B)={i_sum:.12f}, b1={b.b1:.1e}, b2={b.b2:.1e}, runtime {runtime:.3f} s")
    assert ok


STEIN_RHO = density_from_matrix(np.diag([0.9, 0.1]))
STEIN_SIGMA = density_from_matrix(np.diag([0.5, 0.5]))


def _stein_closer():
    vals = dict(stein_probe(STEIN_RHO, STEIN_SIGMA, 0.05, 4))
    d = quantum_relative_entropy(STEIN_RHO, STEIN_SIGMA)
    return abs(vals[4] - d) < abs(vals[1] - d), vals, d


def test_criterion_4_divergence_suite():
    start = time.perf_counter()
    eq_err = 0.0
    for eps in (0.1, 0.5, 0.9):
        r = random_density(np.random.default_rng(int(eps * 10)), 3)
        eq_err = max(eq_err, abs(hypothesis_testing_divergence(r, r, eps).value_bits + math.log2(1 - eps)))
    rng = np.random.default_rng(4)
    beat = -math.inf
    for d in (2, 3):
        for _ in range(5):
            r, s = random_density(rng, d).matrix, random_density(rng, d).matrix
            eps = float(rng.uniform(0.05, 0.9))
            val = hypothesis_testing_divergence(r, s, eps).value_bits
            for pi in random_admissible_tests(rng, r, eps, 1000):
                beat = max(beat, -math.log2(np.real(np.trace(pi @ s))) - val)
    closer, vals, dval = _stein_closer()
    runtime = time.perf_counter() - start
    part_a, part_b = eq_err <= 1e-9, beat <= 1e-7
    ok = part_a and part_b and closer and runtime < 30
    record_acceptance(4, ok, f"equal-state error {eq_err:.1e}; brute force beats NP by at most {beat:.1e}; "
                             f"stein n=1 {vals[1]:.5f}, n=4 {vals[4]:.5f}, D={dval:.5f} "
                             f"(n=4 closer: {closer}); runtime {runtime:.1f} s")
    # the stein sub-check is unattainable for this pair and is tracked by the xfail test below
    assert part_a and part_b and runtime < 30


@pytest.mark.xfail(strict=True, reason="for diag(.9,.1) vs I/2 at eps=.05 the exact n=4 value (0.3996) is further "
                                       "from D=0.5310 than n=1 (0.4150): the finite-n value is not monotone here")
def test_criterion_4_stein_subcheck():
    closer, _, _ = _stein_closer()
    assert closer


def _chi_square_ok(book, net, n):
    # marginal of each vertex from its conditional chain (roots and their direct children suffice here)
    marg = {}
    for v in book.order:
        c = net.conditionals[v]
        ps = net.parents[v]
        marg[v] = c if not ps else marg[ps[0]] @ c
    for v, p in marg.items():
        obs = np.bincount(book.tables[v].reshape(-1), minlength=len(p)).astype(float)
        total = obs.sum()
        keep = p > 0
        stat = float(((obs[keep] - total * p[keep]) ** 2 / (total * p[keep])).sum())
        if stat >= chi2.ppf(0.99, keep.sum() - 1) or obs[~keep].sum() > 0:
            return False
    return True


def _invariance_ok(net, book):
    rng = np.random.default_rng(0)
    names = list(net.message_sizes)
    for v in net.vertices:
        for _ in range(20):
            msgs = {m: int(rng.integers(net.message_sizes[m])) for m in names}
            other = {m: (msgs[m] if m in net.ind[v] else int(rng.integers(net.message_sizes[m]))) for m in names}
            if not np.array_equal(book.query(v, msgs), book.query(v, other)):
                return False
    return True


def test_criterion_5_codebook_suite():
    start = time.perf_counter()
    valid = validate_network(example_mac_network(10, 0.3, 0.3)).valid
    nets = [(example_mac_network(8, 0.5, 0.5), 8), (build_qcl_network(4, 0.5, 0.5, 8), 8),
            (build_ratesplit_network(3, 0.25, 0.25, 0.25, 0.25, 8), 8)]
    invariant = all(_invariance_ok(net, generate_codebook(net, n, np.random.default_rng(k)))
                    for k, (net, n) in enumerate(nets))
    n = 10_000
    chi_net = example_mac_network(n, 0.0, 0.0, p_u=[0.3, 0.7], p_x1_u=[[0.9, 0.1], [0.2, 0.8]],
                                  p_x2_u=[[0.6, 0.4], [0.5, 0.5]])
    chi_ok = _chi_square_ok(generate_codebook(chi_net, n, np.random.default_rng(10)), chi_net, n)
    seeded = all(
        generate_codebook(net, n_, np.random.default_rng(77)).to_bytes()
        == generate_codebook(net, n_, np.random.default_rng(77)).to_bytes() for net, n_ in nets
    )
    runtime = time.perf_counter() - start
    ok = valid and invariant and chi_ok and seeded and runtime < 10
    record_acceptance(5, ok, f"valid={valid}, invariance={invariant}, chi-square={chi_ok}, "
                             f"byte-identical={seeded}, runtime {runtime:.2f} s")
    assert ok


def test_criterion_6_monte_carlo():
    start = time.perf_counter()
    params = AdderParams(0.5, 0.5, 0.5, 0.5)
    bounds = adder_closed_form(params)
    R = 0.6
    margin = min(bounds.b1 - R, bounds.b2 - R, bounds.bsum - 2 * R)
    trials = 200

    def err(n, rate, t=trials):
        rep = simulate_qcl_scheme(adder_channel(), adder_instrument(), params, rate, rate, n, 4, 0.1, t,
                                  rng=0, threads=THREADS)
        return rep.decoder_block_error_rate

    ns = (200, 600, 1800)
    errs = [err(n, R) for n in ns]
    sig = [math.sqrt(max(e * (1 - e), 1.0 / trials) / trials) for e in errs]
    monotone = all(errs[k + 1] <= errs[k] + 3 * math.hypot(sig[k], sig[k + 1]) for k in range(2))
    exterior = err(1800, 0.85)
    # informational: the trend continues once the true codewords are reliably typical
    longer = err(6000, R, 40)
    runtime = time.perf_counter() - start
    ok = margin >= 0.1 - 1e-12 and monotone and exterior >= 0.5 and runtime < 600
    record_acceptance(6, ok, f"interior margin {margin:.2f}; errors at n={list(ns)}: {errs}; "
                             f"exterior (0.85, 0.85) at n=1800: {exterior}; "
                             f"n=6000 (40 trials, informational): {longer}; runtime {runtime:.0f} s")
    assert ok


def test_criterion_7_packing_reduction():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    base = adder_ensemble([0.5, 0.5], [0.5, 0.5])
    counterexamples = region_counterexamples = held = 0
    for _ in range(100):
        nu = int(rng.integers(1, 4))
        ens = InputEnsemble(rng.dirichlet(np.ones(nu)), rng.dirichlet(np.ones(4), size=nu).reshape(nu, 2, 2),
                            rng.dirichlet(np.ones(4), size=nu).reshape(nu, 2, 2), base.theta, base.phi)
        rep = packing_rate_check(build_joint_state(ens, adder_channel(), adder_instrument()),
                                 rng.uniform(0, 0.5, 4))
        if rep.packing_holds:
            held += 1
            counterexamples += not rep.reduced_holds
            region_counterexamples += rep.encoder_holds and not rep.region_holds
    runtime = time.perf_counter() - start
    ok = counterexamples == 0 and held > 0 and runtime < 30
    record_acceptance(7, ok, f"{held}/100 draws satisfy all 15 conditions, {counterexamples} reduced-system "
                             f"counterexamples, {region_counterexamples} with encoder conditions against the "
                             f"four-bound region; runtime {runtime:.2f} s")
    assert ok and region_counterexamples == 0


def test_criterion_8_region_comparison():
    start = time.perf_counter()
    region = trace_boundary(AdderFamily(), adder_grid(33))
    rep = compare_regions(region, no_feedback_adder_region())
    corners = region.contains((1.0, 0.5), 1e-6) and region.contains((0.5, 1.0), 1e-6)
    runtime = time.perf_counter() - start
    ext = {}
    for name, fam, grid in [("full_range", AdderFamily(full_range=True), adder_grid(33, True)),
                            ("p_u=0.3", AdderFamily(p_u=0.3), adder_grid(33))]:
        r = compare_regions(trace_boundary(fam, grid), no_feedback_adder_region())
        ext[name] = f"{r.max_gap:+.4f} at mu={r.direction:.3f}"
    ok = corners and math.isfinite(rep.max_gap) and runtime < 300
    record_acceptance(8, ok, f"signed max gap {rep.max_gap:+.4f} at mu={rep.direction:.3f} "
                             f"(contains no-feedback region: {rep.contains}); corners inside: {corners}; "
                             f"extensions: {ext}; runtime {runtime:.1f} s")
    assert ok


def test_criterion_9_determinism(tmp_path, capsys):
    state = tmp_path / "rho.json"
    state.write_text("[[0.9, 0], [0, 0.1]]")
    mm = tmp_path / "mm.json"
    mm.write_text("[[0.5, 0], [0, 0.5]]")
    commands = [
        ["region-adder"],
        ["region-qcl", "--grid", "3"],
        ["region-general", "--packing-rates", "0", "0.4", "0", "0.4"],
        ["simulate-qcl", "--blocklen", "200", "--trials", "40"],
        ["simulate-qcl", "--rates", "0.1", "0.1", "--blocklen", "40", "--trials", "20", "--mode", "explicit"],
        ["dh", "--rho", str(state), "--sigma", str(mm), "--eps", "0.05"],
        ["stein-probe", "--rho", str(state), "--sigma", str(mm)],
        ["codebook-gen", "--network", "qcl", "--rates", "0.3", "0.3", "--include-tables"],
    ]
    start = time.perf_counter()
    mismatched = []
    for k, argv in enumerate(commands):
        outs = []
        for run, threads in enumerate(("1", "4", "1")):
            out = tmp_path / f"c{k}_{run}"
            code = main(argv + ["--threads", threads, "--out", str(out)])
            assert code == 0, argv
            outs.append(out.read_bytes())
        if len(set(outs)) != 1:
            mismatched.append(argv[0])
    # compare consumes the traced boundary
    outs = []
    for threads in ("1", "4"):
        out = tmp_path / f"cmp_{threads}"
        main(["compare", "--a", str(tmp_path / "c0_0"), "--threads", threads, "--out", str(out)])
        outs.append(out.read_bytes())
    if outs[0] != outs[1]:
        mismatched.append("compare")
    runtime = time.perf_counter() - start
    ok = not mismatched
    record_acceptance(9, ok, f"{len(commands) + 1} command runs byte-identical across threads 1/4 and reruns; "
                             f"mismatches: {mismatched or 'none'}; runtime {runtime:.1f} s")
    assert ok


def _timed(fn) -> float:
    t = time.perf_counter()
    fn()
    return time.perf_counter() - t
