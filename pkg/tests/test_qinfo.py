import math

import numpy as np
import pytest
from scipy.optimize import linprog

from conftest import random_admissible_tests, random_density
from qmacfb.errors import DimensionCapExceeded, InvalidEpsilon, LabelOverlap, UnknownLabel
from qmacfb.qcore import basis_state, density_from_matrix, maximally_mixed, tensor_product
from qmacfb.qinfo import (
    hypothesis_testing_divergence,
    mutual_information,
    quantum_relative_entropy,
    shannon_entropy,
    stein_probe,
    von_neumann_entropy,
)


def dh(rho, sigma, eps):
    return hypothesis_testing_divergence(rho, sigma, eps).value_bits


def eigenbasis_grid_tests(rho, sigma, eps, ts=np.linspace(0, 20, 201)):
    """Projector of rho - t sigma > 0 scaled up to admissibility, for a grid of t."""
    d = rho.shape[0]
    for t in ts:
        w, v = np.linalg.eigh(rho - t * sigma)
        for cut in range(d + 1):
            idx = np.argsort(-w)[:cut]
            p = v[:, idx] @ v[:, idx].conj().T
            have = np.real(np.trace(p @ rho))
            if have < 1 - eps:
                s = (1 - eps - have) / (1 - have) if have < 1 else 0
                p = (1 - s) * p + s * np.eye(d)
            yield p


def classical_lp_dh(p, q, eps):
    """min q.w s.t. p.w >= 1 - eps, 0 <= w <= 1 by linear programming."""
    res = linprog(q, A_ub=[-p], b_ub=[-(1 - eps)], bounds=[(0, 1)] * len(p), method="highs")
    return math.inf if res.fun <= 1e-15 else -math.log2(res.fun)


class TestEntropies:
    def test_maximally_mixed(self):
        assert von_neumann_entropy(maximally_mixed([("A", 2)])) == pytest.approx(1.0, abs=1e-12)

    def test_pure(self, rng):
        v = rng.normal(size=3) + 1j * rng.normal(size=3)
        v /= np.linalg.norm(v)
        assert von_neumann_entropy(density_from_matrix(np.outer(v, v.conj()))) == pytest.approx(0.0, abs=1e-9)

    def test_diag(self):
        assert von_neumann_entropy(density_from_matrix(np.diag([0.5, 0.25, 0.25]))) == pytest.approx(1.5, abs=1e-12)

    def test_shannon(self):
        assert shannon_entropy([0.5, 0.25, 0.25, 0]) == pytest.approx(1.5)

    def test_additivity(self, rng):
        for _ in range(10):
            a = random_density(rng, 2, [("A", 2)])
            b = random_density(rng, 3, [("B", 3)])
            h = von_neumann_entropy(tensor_product(a, b))
            assert h == pytest.approx(von_neumann_entropy(a) + von_neumann_entropy(b), abs=1e-9)


class TestRelativeEntropy:
    def test_self(self, rng):
        r = random_density(rng, 3)
        assert quantum_relative_entropy(r, r) == pytest.approx(0.0, abs=1e-9)

    def test_pure_vs_mixed(self):
        assert quantum_relative_entropy(basis_state(0, [("A", 2)]), maximally_mixed([("A", 2)])) == pytest.approx(1.0)

    def test_disjoint_support(self):
        assert quantum_relative_entropy(basis_state(0, [("A", 2)]), basis_state(1, [("A", 2)])) == math.inf

    def test_nonnegative(self, rng):
        for _ in range(20):
            assert quantum_relative_entropy(random_density(rng, 3), random_density(rng, 3)) >= 0


class TestMutualInformation:
    def test_correlated_bits(self):
        rho = density_from_matrix(np.diag([0.5, 0, 0, 0.5]), [("A", 2), ("B", 2)])
        assert mutual_information(rho, "A", "B") == pytest.approx(1.0)

    def test_product(self, rng):
        rho = tensor_product(random_density(rng, 2, [("A", 2)]), random_density(rng, 2, [("B", 2)]))
        assert mutual_information(rho, "A", "B") == pytest.approx(0.0, abs=1e-9)

    def test_bell_state(self):
        v = np.array([1, 0, 0, 1]) / np.sqrt(2)
        rho = density_from_matrix(np.outer(v, v), [("A", 2), ("B", 2)])
        assert mutual_information(rho, "A", "B") == pytest.approx(2.0)

    def test_overlap(self, rng):
        rho = random_density(rng, 4, [("A", 2), ("B", 2)])
        with pytest.raises(LabelOverlap):
            mutual_information(rho, "A", ("A", "B"))

    def test_unknown(self, rng):
        rho = random_density(rng, 4, [("A", 2), ("B", 2)])
        with pytest.raises(UnknownLabel):
            mutual_information(rho, "A", "C")


class TestHypothesisTesting:
    @pytest.mark.parametrize("eps", [0.1, 0.5, 0.9])
    def test_equal_states(self, rng, eps):
        r = random_density(rng, 3)
        assert dh(r, r, eps) == pytest.approx(-math.log2(1 - eps), abs=1e-9)

    def test_hand_example(self):
        ht = hypothesis_testing_divergence(basis_state(0, [("A", 2)]), maximally_mixed([("A", 2)]), 0.5)
        assert ht.value_bits == pytest.approx(2.0, abs=1e-12)
        assert np.allclose(ht.test, np.diag([0.5, 0]))

    @pytest.mark.parametrize("eps", [0.0, 0.3, 0.8])
    def test_orthogonal(self, eps):
        assert dh(basis_state(0, [("A", 2)]), basis_state(1, [("A", 2)]), eps) == math.inf

    def test_invalid_epsilon(self):
        r = maximally_mixed([("A", 2)])
        for bad in (-0.1, 1.0, 1.5):
            with pytest.raises(InvalidEpsilon):
                hypothesis_testing_divergence(r, r, bad)

    def test_returned_test_is_admissible(self, rng):
        for d in (2, 3):
            for _ in range(20):
                r, s = random_density(rng, d), random_density(rng, d)
                eps = float(rng.uniform(0, 0.95))
                ht = hypothesis_testing_divergence(r, s, eps)
                w = np.linalg.eigvalsh(ht.test)
                assert w.min() > -1e-9 and w.max() < 1 + 1e-9
                assert np.real(np.trace(ht.test @ r.matrix)) >= 1 - eps - 1e-9
                assert -math.log2(np.real(np.trace(ht.test @ s.matrix))) == pytest.approx(ht.value_bits, abs=1e-7)

    def test_brute_force_never_beats(self, rng):
        worst = -math.inf
        for d in (2, 3):
            for _ in range(4):
                r, s = random_density(rng, d).matrix, random_density(rng, d).matrix
                eps = float(rng.uniform(0.05, 0.9))
                val = dh(r, s, eps)
                for pi in list(random_admissible_tests(rng, r, eps, 1000)) + list(eigenbasis_grid_tests(r, s, eps)):
                    assert np.real(np.trace(pi @ r)) >= 1 - eps - 1e-9
                    worst = max(worst, -math.log2(np.real(np.trace(pi @ s))) - val)
        assert worst <= 1e-7

    def test_commuting_matches_lp(self, rng):
        for d in (2, 3, 5):
            for _ in range(10):
                p, q = rng.dirichlet(np.ones(d)), rng.dirichlet(np.ones(d))
                eps = float(rng.uniform(0, 0.95))
                got = dh(density_from_matrix(np.diag(p)), density_from_matrix(np.diag(q)), eps)
                assert got == pytest.approx(classical_lp_dh(p, q, eps), abs=1e-7)

    def test_commuting_rotated_basis(self, rng):
        u, _ = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
        p, q = np.array([0.5, 0.3, 0.2]), np.array([0.2, 0.2, 0.6])
        r = density_from_matrix(u @ np.diag(p) @ u.conj().T)
        s = density_from_matrix(u @ np.diag(q) @ u.conj().T)
        assert dh(r, s, 0.25) == pytest.approx(classical_lp_dh(p, q, 0.25), abs=1e-9)

    def test_sdp_oracle(self, rng):
        cp = pytest.importorskip("cvxpy")
        for d in (2, 3):
            for _ in range(3):
                r, s = random_density(rng, d).matrix, random_density(rng, d).matrix
                eps = float(rng.uniform(0.05, 0.8))
                pi = cp.Variable((d, d), hermitian=True)
                cons = [pi >> 0, np.eye(d) - pi >> 0, cp.real(cp.trace(pi @ r)) >= 1 - eps]
                prob = cp.Problem(cp.Minimize(cp.real(cp.trace(pi @ s))), cons)
                try:
                    prob.solve()
                except cp.error.SolverError:
                    pytest.skip("no SDP solver available")
                assert dh(r, s, eps) == pytest.approx(-math.log2(prob.value), abs=1e-4)

    def test_monotone_in_epsilon(self, rng):
        for d in (2, 3):
            r, s = random_density(rng, d), random_density(rng, d)
            vals = [dh(r, s, e) for e in np.linspace(0, 0.95, 40)]
            assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))

    def test_nonnegative(self, rng):
        for _ in range(20):
            assert dh(random_density(rng, 3), random_density(rng, 3), float(rng.uniform(0, 0.99))) >= 0


class TestSteinProbe:
    def test_equal_states(self):
        r = density_from_matrix(np.diag([0.7, 0.3]))
        vals = stein_probe(r, r, 0.2, 5)
        for n, v in vals:
            assert v == pytest.approx(-math.log2(0.8) / n, abs=1e-12)
        assert all(b[1] < a[1] for a, b in zip(vals, vals[1:]))

    def test_first_entry_consistent(self, rng):
        r, s = random_density(rng, 2), random_density(rng, 2)
        assert stein_probe(r, s, 0.1, 2)[0][1] == pytest.approx(dh(r, s, 0.1), abs=1e-9)

    def test_noncommuting_path(self, rng):
        r, s = random_density(rng, 2), random_density(rng, 2)
        vals = stein_probe(r, s, 0.1, 3)
        assert len(vals) == 3 and all(v >= 0 for _, v in vals)

    def test_tensor_power_matches_lp(self):
        p1, q1 = np.array([0.9, 0.1]), np.array([0.5, 0.5])
        vals = stein_probe(density_from_matrix(np.diag(p1)), density_from_matrix(np.diag(q1)), 0.05, 4)
        p, q = np.ones(1), np.ones(1)
        for n, v in vals:
            p, q = np.kron(p, p1), np.kron(q, q1)
            assert v == pytest.approx(classical_lp_dh(p, q, 0.05) / n, abs=1e-9)

    def test_dimension_cap(self):
        r = maximally_mixed([("A", 2)])
        with pytest.raises(DimensionCapExceeded):
            stein_probe(r, r, 0.1, 13)
