import math

import numpy as np
import pytest

from qmacfb.codesim import classical_channel_law, simulate_qcl_scheme, simulate_ratesplit_scheme
from qmacfb.codesim.qcl import worker_count
from qmacfb.ensemble import adder_ensemble
from qmacfb.errors import InvalidRates, NotClassicalComplete
from qmacfb.qcore import adder_channel, adder_instrument, identity_instrument
from qmacfb.regions import AdderParams

HALF = AdderParams(0.5, 0.5, 0.5, 0.5)


def sim(**kw):
    base = dict(channel=adder_channel(), inst=adder_instrument(), params=HALF, R1=0.0, R2=0.0,
                n=20, T=3, delta=0.5, trials=10, rng=3)
    base.update(kw)
    return simulate_qcl_scheme(**base)


class TestChannelLaw:
    def test_adder_table(self):
        law = classical_channel_law(adder_ensemble([0.5, 0.5], [0.5, 0.5]), adder_channel(), adder_instrument())
        want = np.zeros((2, 2, 3))
        want[0, 0, 0] = want[1, 1, 2] = 1.0
        want[0, 1, 1] = want[1, 0, 1] = 1.0
        assert np.allclose(law.w, want)
        assert np.allclose(law.outcome_marginal, [0.25, 0.5, 0.25])

    def test_feedback_joint_sums(self):
        law = classical_channel_law(adder_ensemble([0.1, 0.4], [0.3, 0.2]), adder_channel(), adder_instrument())
        for which in (1, 2):
            fj = law.feedback_joint(which)
            assert fj.sum() == pytest.approx(1.0)
            assert np.allclose(fj.sum(axis=3), law.bob_joint.sum(axis=3))

    def test_non_classical_complete(self):
        ens = adder_ensemble([0.5, 0.5], [0.5, 0.5])
        with pytest.raises(NotClassicalComplete):
            classical_channel_law(ens, adder_channel(), identity_instrument())
        with pytest.raises(NotClassicalComplete):
            simulate_qcl_scheme(adder_channel(), identity_instrument(), ens, 0.0, 0.0, 10, 2, 0.5, 1)


class TestSimulateQcl:
    @pytest.mark.parametrize("mode", ["explicit", "ensemble"])
    def test_zero_rates_zero_error(self, mode):
        rep = sim(mode=mode)
        assert rep.decoder_block_error_rate == 0.0 and rep.per_block_error_counts == [0, 0, 0]
        assert rep.encoder_estimate_error_rate == [0.0, 0.0]

    def test_invalid_rates(self):
        for bad in (-0.1, math.nan, math.inf, 1.5):
            with pytest.raises(InvalidRates):
                sim(R1=bad)
        with pytest.raises(InvalidRates):
            sim(T=1)
        with pytest.raises(InvalidRates):
            sim(R1=0.1, decoder="ml", mode="ensemble")

    def test_outcome_frequencies(self):
        rep = sim(n=200, trials=30, R1=0.02, R2=0.02, mode="ensemble")
        counts = np.array(rep.outcome_counts)
        total = counts.sum()
        assert total == 30 * 3 * 200
        p = np.array([0.25, 0.5, 0.25])
        # transmitted symbols are i.i.d. draws of the input law, so the band is binomial
        assert np.all(np.abs(counts / total - p) <= 3 * np.sqrt(p * (1 - p) / total))

    def test_counts_consistent(self):
        rep = sim(R1=0.1, R2=0.1, trials=25, mode="ensemble")
        assert rep.decoder_frame_errors <= rep.trials
        assert max(rep.per_block_error_counts) <= rep.decoder_frame_errors
        assert sum(rep.encoder_first_error_counts) <= rep.trials
        assert 0 <= rep.decoder_block_error_rate <= 1 and rep.stderr >= 0

    def test_explicit_vs_ensemble(self):
        kw = dict(R1=0.1, R2=0.1, n=40, delta=0.6, T=3, trials=200)
        a, b = sim(mode="explicit", **kw), sim(mode="ensemble", rng=11, **kw)
        for x, y in [(a.decoder_block_error_rate, b.decoder_block_error_rate),
                     (a.encoder_estimate_error_rate[0], b.encoder_estimate_error_rate[0])]:
            s = math.sqrt(max(x * (1 - x), 1e-4) / 200 + max(y * (1 - y), 1e-4) / 200)
            assert abs(x - y) <= 4 * s, (x, y)

    def test_ml_extension(self):
        rep = sim(R1=0.1, R2=0.1, n=40, delta=0.6, trials=20, mode="explicit", decoder="ml")
        assert rep.extension and rep.decoder == "ml"
        assert rep.decoder_block_error_rate <= 0.2

    def test_auto_mode(self):
        assert sim(R1=0.1, R2=0.1).mode == "explicit"
        assert sim(R1=0.6, R2=0.6, n=100, trials=1).mode == "ensemble"

    def test_deterministic_across_threads(self):
        kw = dict(R1=0.3, R2=0.3, n=60, trials=12, mode="ensemble")
        a, b, c = sim(threads=1, **kw), sim(threads=4, **kw), sim(threads=4, **kw)
        assert a.to_dict() == b.to_dict() == c.to_dict()
        assert sim(threads=1, rng=4, **kw).to_dict() != a.to_dict()

    def test_worker_count_env(self, monkeypatch):
        monkeypatch.delenv("QMACFB_THREADS", raising=False)
        assert worker_count(None) == 1 and worker_count(3) == 3
        monkeypatch.setenv("QMACFB_THREADS", "2")
        assert worker_count(None) == 2 and worker_count(8) == 2


class TestRateSplit:
    def test_smoke_trivial_v(self):
        ens = adder_ensemble([0.5, 0.5], [0.5, 0.5])
        rep = simulate_ratesplit_scheme(adder_channel(), adder_instrument(), ens, (0.0, 0.04, 0.0, 0.04),
                                        n=60, T=2, delta=0.6, trials=6, rng=1)
        assert rep.scheme == "ratesplit" and rep.trials == 6
        assert 0 <= rep.decoder_block_error_rate <= 1

    def test_zero_rates(self):
        ens = adder_ensemble([0.5, 0.5], [0.5, 0.5], v1_of_x1=[0, 1], v2_of_x2=[0, 1])
        rep = simulate_ratesplit_scheme(adder_channel(), adder_instrument(), ens, (0, 0, 0, 0),
                                        n=20, T=2, delta=0.5, trials=4, rng=1)
        assert rep.decoder_block_error_rate == 0.0

    def test_deterministic(self):
        ens = adder_ensemble([0.5, 0.5], [0.5, 0.5])
        kw = dict(rates=(0.0, 0.05, 0.0, 0.05), n=40, T=2, delta=0.6, trials=4, rng=2)
        a = simulate_ratesplit_scheme(adder_channel(), adder_instrument(), ens, threads=1, **kw)
        b = simulate_ratesplit_scheme(adder_channel(), adder_instrument(), ens, threads=3, **kw)
        assert a.to_dict() == b.to_dict()

    def test_invalid(self):
        ens = adder_ensemble([0.5, 0.5], [0.5, 0.5])
        with pytest.raises(InvalidRates):
            simulate_ratesplit_scheme(adder_channel(), adder_instrument(), ens, (0.1, 0.1, 0.1), 10, 2, 0.5, 1)
        with pytest.raises(InvalidRates):
            simulate_ratesplit_scheme(adder_channel(), adder_instrument(), ens, (0.5,) * 4, 40, 2, 0.5, 1)
