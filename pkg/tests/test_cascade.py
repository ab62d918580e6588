from __future__ import annotations

import itertools
from dataclasses import replace

import numpy as np
import pytest

from cascade_vm.cascade import (ACHIEVABLE, NOT_FOUND, CascadeDecision, CascadeProblem, SymbolDecoder,
                                assemble_joint, bayes_decoder, constant_decision, decoder_distortion,
                                deterministic_decision, lower_envelope, membership, min_weighted_rate,
                                rate_corner, trace_frontier, u_bound)
from cascade_vm.instances import LOSSLESS_PX, cascade_model, lossless_cascade, loose_budget, random_cascade
from cascade_vm.models import ConstraintBudget, hamming
from cascade_vm.prob import FiniteAlphabet, JointPmf, entropy, is_markov, marginalize, mutual_information
from cascade_vm.search import NoFeasiblePoint, SearchConfig

HX = float(-(np.asarray(LOSSLESS_PX) * np.log2(LOSSLESS_PX)).sum())
FAST = SearchConfig(restarts=4, rounds=2, max_iter=150, warm_restarts=4, u_size=2)


def random_decision(m, u_size, seed):
    rng = np.random.default_rng(seed)
    k = rng.dirichlet(np.ones(m.X1.size * m.A.size * u_size), size=(m.X.size, m.Y.size))
    return CascadeDecision.from_block(m, u_size, k.reshape(m.X.size * m.Y.size, -1))


def copy_decision(m, u_size=2):
    # X1 = U = X, first action
    return deterministic_decision(m, lambda x, y: x, lambda x, y: 0, lambda x, y: x, u_size)


class TestAssembleJoint:
    def test_constant_decision_reduces(self):
        m, _ = random_cascade(3)
        j = assemble_joint(m, constant_decision(m))
        want = m.source[:, :, None] * m.vm_channel[0][None]
        assert np.allclose(j.values[:, :, :, 0, 0, 0], want, atol=1e-15)
        assert j.values[:, :, :, 1:].sum() == 0

    def test_copy_kernel_diagonal(self):
        # the vending channel erases Y entirely: Z is a constant symbol
        source = np.outer([0.4, 0.6], [0.5, 0.5])
        vm = np.zeros((2, 2, 2))
        vm[:, :, 1] = 1.0
        m = cascade_model(source, vm)
        j = assemble_joint(m, copy_decision(m))
        pxx = marginalize(j, ["X", "X1"]).values
        assert np.allclose(pxx, np.diag([0.4, 0.6]))

    @pytest.mark.parametrize("seed", range(5))
    def test_markov_and_source_marginal(self, seed):
        m, _ = random_cascade(seed)
        j = assemble_joint(m, random_decision(m, 2, seed))
        assert mutual_information(j, "X", "Z", ["A", "Y"]) <= 1e-10
        assert is_markov(j, "X", ["A", "Y"], "Z", tol=1e-9)
        assert np.allclose(marginalize(j, ["X", "Y"]).values, m.source, atol=1e-14)

    def test_shape_mismatch(self):
        m, _ = random_cascade(0)
        with pytest.raises(ValueError):
            assemble_joint(m, CascadeDecision(1, np.ones((2, 2, 1, 1, 1))))


def xuz_joint(p):
    return JointPmf([FiniteAlphabet("X", p.shape[0]), FiniteAlphabet("U", p.shape[1]),
                     FiniteAlphabet("Z", p.shape[2])], p)


class TestBayesDecoder:
    X = FiniteAlphabet("X", 2)
    d2 = hamming(X, X.renamed("X2"))

    def test_copy_of_source(self):
        p = np.zeros((2, 2, 2))
        p[0, 0, :] = 0.15
        p[1, 1, :] = 0.35
        j = xuz_joint(p)
        f = bayes_decoder(j, self.d2)
        assert [f(u, z) for u in range(2) for z in range(2)] == [0, 0, 1, 1]
        assert decoder_distortion(j, f, self.d2) == 0.0

    def test_uninformative_ties_to_zero(self):
        j = xuz_joint(np.full((2, 2, 2), 0.125))
        f = bayes_decoder(j, self.d2)
        assert np.array_equal(f.table, np.zeros((2, 2)))
        assert decoder_distortion(j, f, self.d2) == pytest.approx(0.5)

    def test_zero_probability_cell(self):
        p = np.zeros((2, 2, 2))
        p[1, 0, 0] = 1.0
        f = bayes_decoder(xuz_joint(p), self.d2)
        assert f(0, 0) == 1
        assert f(1, 1) == 0

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_exhaustive_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        p = rng.dirichlet(np.ones(8)).reshape(2, 2, 2)
        d2 = hamming(self.X, self.X.renamed("X2")).scaled(1.0)
        j = xuz_joint(p)
        got = decoder_distortion(j, bayes_decoder(j, d2), d2)
        # 2^(2*2) = 16 decoders
        best = min(decoder_distortion(j, SymbolDecoder(np.array(t).reshape(2, 2)), d2)
                   for t in itertools.product(range(2), repeat=4))
        assert got == pytest.approx(best, abs=1e-15)

    def test_missing_axis(self):
        j = JointPmf([self.X, FiniteAlphabet("U", 2)], np.full((2, 2), 0.25))
        with pytest.raises(KeyError):
            bayes_decoder(j, self.d2)


class TestRateCorner:
    def test_constant_decision_is_zero(self):
        m, _ = random_cascade(1)
        pt = rate_corner(m, constant_decision(m))
        assert pt.R1 == pytest.approx(0.0, abs=1e-14)
        assert pt.R2 == pytest.approx(0.0, abs=1e-14)

    def test_lossless_corner(self):
        m, _ = lossless_cascade()
        pt = rate_corner(m, copy_decision(m))
        assert pt.R1 == pytest.approx(HX, abs=1e-12)
        assert pt.R2 == pytest.approx(HX, abs=1e-12)
        assert pt.D1 == 0.0 and pt.D2 == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_r2_identity(self, seed):
        m, _ = random_cascade(seed)
        d = random_decision(m, 2, 100 + seed)
        pt = rate_corner(m, d)
        j = assemble_joint(m, d)
        alt = mutual_information(j, ["X", "Y"], ["U", "A", "Z"]) - mutual_information(j, "Z", ["X", "Y"], "A")
        assert pt.R2 == pytest.approx(alt, abs=1e-10)

    @pytest.mark.parametrize("seed", range(3))
    def test_sanity_cap(self, seed):
        m, _ = random_cascade(seed)
        pt = rate_corner(m, random_decision(m, 3, seed))
        cap = np.log2(m.X.size * m.Y.size * m.X1.size * m.A.size * 3)
        assert 0 <= pt.R1 <= cap and 0 <= pt.R2 <= cap

    def test_u_bound(self):
        m, _ = random_cascade(0)
        assert u_bound(m) == 11


class TestGradient:
    def test_matches_finite_differences(self):
        m, _ = random_cascade(2)
        prob = CascadeProblem(m, 2)
        rng = np.random.default_rng(0)
        x = [rng.dirichlet(np.ones(8) * 3, size=(1, 4))]
        coeffs = {"R1": np.array([0.7]), "R2": np.array([1.3]), "D1": np.array([0.2]),
                  "D2": np.array([0.4]), "cost": np.array([0.5])}

        def f(params):
            q = prob.quantities(params)
            return sum(float(c[0] * q[k][0]) for k, c in coeffs.items())

        g = prob.gradient(x, coeffs)[0]
        h = 1e-6
        for cell, col in [(0, 0), (1, 3), (3, 7), (2, 5)]:
            xp = [x[0].copy()]
            xm = [x[0].copy()]
            xp[0][0, cell, col] += h
            xm[0][0, cell, col] -= h
            assert g[0, cell, col] == pytest.approx((f(xp) - f(xm)) / (2 * h), abs=1e-5)


class TestMinWeightedRate:
    def test_loose_budget_is_zero(self):
        m, _ = random_cascade(0)
        pt = min_weighted_rate(m, loose_budget(m), (1, 1), FAST)
        assert pt.objective == pytest.approx(0.0, abs=1e-12)

    def test_lossless_corner(self):
        m, b = lossless_cascade()
        pt = min_weighted_rate(m, b, (1, 1), FAST)
        assert pt.objective == pytest.approx(2 * HX, abs=1e-6)

    def test_witness_reproduces(self):
        m, b = random_cascade(4)
        pt = min_weighted_rate(m, b, (1, 0.5), FAST)
        again = rate_corner(m, pt.decision)
        assert np.allclose(again.values(), pt.values(), atol=1e-9, rtol=0)
        assert all(v >= -1e-9 for v in pt.slacks(b).values())

    def test_cost_below_cheapest_action(self):
        m = cascade_model(np.full((2, 2), 0.25), np.full((2, 2, 2), 0.5), cost=(0.5, 1.0))
        with pytest.raises(NoFeasiblePoint):
            min_weighted_rate(m, ConstraintBudget(1.0, 1.0, 0.1), (1, 1), FAST)

    def test_bad_weights(self):
        m, b = random_cascade(0)
        with pytest.raises(ValueError):
            min_weighted_rate(m, b, (0, 0), FAST)

    def test_seed_is_recorded(self):
        m, b = random_cascade(1)
        pt = min_weighted_rate(m, b, (1, 1), replace(FAST, seed=17))
        assert pt.seed == 17


class TestFrontier:
    def test_loose_budget_collapses(self):
        m, _ = random_cascade(2)
        fr = trace_frontier(m, loose_budget(m), [(1, 0), (1, 1), (0, 1)], FAST)
        assert all(abs(p.R1) < 1e-9 and abs(p.R2) < 1e-9 for p in fr.points)
        assert len(fr.envelope) == 1

    def test_axis_weights_give_endpoints(self):
        m, b = random_cascade(0)
        fr = trace_frontier(m, b, [(1, 0), (0, 1)], FAST)
        by_w = {p.weights: p for p in fr.points}
        a, c = by_w[(1.0, 0.0)], by_w[(0.0, 1.0)]
        assert a.R1 <= c.R1 + 1e-9 and c.R2 <= a.R2 + 1e-9

    def test_sweep_is_staircase(self):
        m, b = random_cascade(1)
        grid = [(t / 10, 1 - t / 10) for t in range(11)]
        fr = trace_frontier(m, b, grid, FAST)
        assert [p.R1 for p in fr.points] == sorted(p.R1 for p in fr.points)
        env = fr.envelope
        assert all(p.R1 <= q.R1 and p.R2 >= q.R2 for p, q in zip(env, env[1:]))

    def test_empty_grid(self):
        m, b = random_cascade(0)
        with pytest.raises(ValueError):
            trace_frontier(m, b, [], FAST)


class TestLowerEnvelope:
    def test_drops_interior_and_dominated(self):
        pts = [(0, 4), (1, 3), (2, 0.5), (1, 1), (3, 0.5), (4, 0)]
        assert lower_envelope(pts) == [0, 3, 2, 5]

    def test_single_point(self):
        assert lower_envelope([(0.0, 0.0)]) == [0]


class TestMembership:
    def test_lossless_with_slack(self):
        m, b = lossless_cascade()
        v = membership(m, HX + 0.1, HX + 0.1, b, FAST)
        assert v.status == ACHIEVABLE
        assert v.witness.R1 <= HX + 0.1 + 1e-9

    def test_zero_with_loose_budget(self):
        m, _ = random_cascade(0)
        assert membership(m, 0, 0, loose_budget(m), FAST).achievable

    def test_zero_rate_lossless_not_found(self):
        m, b = lossless_cascade()
        v = membership(m, 0, 0, b, FAST)
        assert v.status == NOT_FOUND and v.witness is None

    def test_negative_rate(self):
        m, b = lossless_cascade()
        with pytest.raises(ValueError):
            membership(m, -1, 0, b, FAST)


def test_entropy_of_lossless_source():
    m, _ = lossless_cascade()
    assert entropy(m.source_pmf(), "X") == pytest.approx(HX, abs=1e-14)
