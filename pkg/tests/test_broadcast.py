from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import linprog

from cascade_vm.broadcast import (ACHIEVABLE, NOT_FOUND, BroadcastDecision, BroadcastProblem, assemble_joint,
                                  best_rates, constant_decision, copy_decision, corner, inner_vertex,
                                  membership3, min_weighted_rate3, polyhedron_vertices, satisfies,
                                  trace_surface3)
from cascade_vm.instances import (LOSSLESS_PX, copy_broadcast, loose_budget, random_broadcast,
                                  useless_side_broadcast)
from cascade_vm.models import ConstraintBudget
from cascade_vm.oracle import lp_scalarize
from cascade_vm.prob import marginalize, mutual_information
from cascade_vm.search import SearchConfig

HX = float(-(np.asarray(LOSSLESS_PX) * np.log2(LOSSLESS_PX)).sum())
FAST = SearchConfig(restarts=4, rounds=2, max_iter=150, warm_restarts=4)
G = np.array([[0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]], dtype=float)


def random_decision(m, seed):
    rng = np.random.default_rng(seed)
    act = rng.dirichlet(np.ones(m.A.size), size=m.X.size)
    rec = rng.dirichlet(np.ones(m.X1.size * m.X2.size), size=m.X.size).reshape(m.X.size, m.X1.size, m.X2.size)
    return BroadcastDecision(act, rec)


def random_bounds(rng):
    # a valid ordered bound vector Lb <= L1b, Lb <= L2b <= L12b
    lb, a, b, c = rng.uniform(0, 1, 4)
    return np.array([lb, lb + a, lb + b, lb + b + c])


class TestAssembleJoint:
    def test_singleton_action(self):
        m, _ = copy_broadcast()
        d = random_decision(m, 0)
        j = assemble_joint(m, d)
        want = (np.asarray(LOSSLESS_PX)[:, None, None, None] * np.eye(2)[:, :, None, None]
                * d.recon[:, None, :, :])
        assert np.allclose(j.values[:, :, 0], want, atol=1e-15)

    def test_double_copy_is_diagonal(self):
        m, _ = random_broadcast(0)
        j = assemble_joint(m, copy_decision(m))
        p = marginalize(j, ["X", "X1", "X2"]).values
        off = p.copy()
        for x in range(2):
            off[x, x, x] = 0
        assert off.sum() == 0

    @pytest.mark.parametrize("seed", range(5))
    def test_common_reconstruction_structure(self, seed):
        m, _ = random_broadcast(seed)
        j = assemble_joint(m, random_decision(m, seed))
        assert mutual_information(j, ["X1", "X2"], ["A", "Y"], "X") <= 1e-10
        assert np.allclose(marginalize(j, "X").values, m.source, atol=1e-15)

    def test_alphabet_mismatch(self):
        m, _ = copy_broadcast()
        with pytest.raises(ValueError):
            assemble_joint(m, BroadcastDecision(np.full((2, 2), 0.5), np.full((2, 2, 2), 0.25)))


class TestCorner:
    def test_constant_decision(self):
        m, _ = random_broadcast(1)
        pt = corner(m, constant_decision(m))
        assert np.allclose(pt.bounds, 0.0, atol=1e-14)

    def test_copy_side_information(self):
        m, _ = copy_broadcast()
        pt = corner(m, copy_decision(m))
        assert pt.Lb == pytest.approx(0.0, abs=1e-12)
        assert pt.L1b == pytest.approx(0.0, abs=1e-12)
        assert pt.L2b == pytest.approx(HX, abs=1e-12)
        assert pt.L12b == pytest.approx(HX, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_chain_rule_and_ordering(self, seed):
        m, _ = random_broadcast(seed)
        pt = corner(m, random_decision(m, 10 + seed))
        t = pt.terms
        assert pt.L1b - pt.Lb == pytest.approx(t["I(X;X2|A,Y)"] + t["I(X;X1|A,Y,X2)"], abs=1e-10)
        assert 0 <= pt.Lb <= pt.L1b + 1e-12
        assert pt.Lb <= pt.L2b + 1e-12 <= pt.L12b + 2e-12


class TestGradient:
    def test_matches_finite_differences(self):
        m, _ = random_broadcast(3)
        prob = BroadcastProblem(m)
        rng = np.random.default_rng(1)
        x = [rng.dirichlet(np.ones(2) * 3, size=(1, 2)), rng.dirichlet(np.ones(4) * 3, size=(1, 2))]
        coeffs = {"Lb": np.array([0.3]), "L1b": np.array([0.9]), "L2b": np.array([0.4]),
                  "L12b": np.array([1.1]), "D1": np.array([0.2]), "D2": np.array([0.7]), "cost": np.array([0.5])}

        def f(params):
            q = prob.quantities(params)
            return sum(float(c[0] * q[k][0]) for k, c in coeffs.items())

        g = prob.gradient(x, coeffs)
        h = 1e-6
        for blk, cell, col in [(0, 0, 1), (0, 1, 0), (1, 0, 3), (1, 1, 2)]:
            xp = [v.copy() for v in x]
            xm = [v.copy() for v in x]
            xp[blk][0, cell, col] += h
            xm[blk][0, cell, col] -= h
            assert g[blk][0, cell, col] == pytest.approx((f(xp) - f(xm)) / (2 * h), abs=1e-5)


class TestScalarization:
    @pytest.mark.parametrize("seed", range(20))
    def test_vertex_matches_linprog(self, seed):
        rng = np.random.default_rng(seed)
        L = random_bounds(rng)
        w = rng.uniform(0, 1, 3)
        val, trip = best_rates(L, w)
        lp = linprog(w, A_ub=-G, b_ub=-L, bounds=[(0, None)] * 3, method="highs")
        assert val == pytest.approx(lp.fun, abs=1e-9)
        assert satisfies(trip, L)
        assert float(lp_scalarize(L, w)) == pytest.approx(lp.fun, abs=1e-9)

    @pytest.mark.parametrize("seed", range(10))
    def test_inner_vertex_is_feasible(self, seed):
        L = random_bounds(np.random.default_rng(seed))
        trip = inner_vertex(L)
        assert satisfies(trip, L)
        assert trip[2] == pytest.approx(L[0])

    def test_inner_vertex_not_always_optimal(self):
        # when Rb is cheap, moving rate onto the broadcast link beats the inner vertex
        L = np.array([0.0, 1.0, 1.0, 1.0])
        w = (1.0, 1.0, 0.1)
        assert best_rates(L, w)[0] == pytest.approx(0.1)
        assert float(np.dot(w, inner_vertex(L))) == pytest.approx(2.0)

    def test_vertices_batch(self):
        L = np.stack([random_bounds(np.random.default_rng(s)) for s in range(4)])
        pts, ok = polyhedron_vertices(L)
        assert pts.shape[:2] == ok.shape and ok.any(axis=1).all()


class TestMinWeightedRate3:
    def test_loose_budget(self):
        m, _ = random_broadcast(0)
        pt = min_weighted_rate3(m, loose_budget(m), (1, 1, 1), FAST)
        assert pt.objective == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(pt.rates, 0.0, atol=1e-12)

    def test_broadcast_only_weight_without_cost(self):
        m, b = random_broadcast(2, action_free=True)
        pt = min_weighted_rate3(m, b, (0, 0, 1), FAST)
        assert pt.rates[2] == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("seed", range(3))
    def test_output_satisfies_bounds(self, seed):
        m, b = random_broadcast(seed)
        pt = min_weighted_rate3(m, b, (1, 0.5, 0.25), FAST)
        assert satisfies(pt.rates, pt.bounds)
        assert pt.feasible(b)
        again = corner(m, pt.decision)
        assert np.allclose(again.values(), pt.values(), atol=1e-9, rtol=0)

    def test_bad_weights(self):
        m, b = random_broadcast(0)
        with pytest.raises(ValueError):
            min_weighted_rate3(m, b, (1, 1), FAST)


class TestSurface:
    def test_loose_budget(self):
        m, _ = random_broadcast(1)
        sf = trace_surface3(m, loose_budget(m), [(1, 1, 1), (1, 0.5, 0.2)], FAST)
        assert all(np.allclose(p.rates, 0.0, atol=1e-9) for p in sf.points)

    def test_envelope_points_are_optimal_somewhere(self):
        m, b = random_broadcast(0)
        grid = [(1, 1, 1), (1, 0.2, 0.5), (0.2, 1, 0.5), (0.5, 0.5, 1)]
        sf = trace_surface3(m, b, grid, FAST)
        R = np.array([p.rates for p in sf.points])
        for p in sf.envelope:
            assert any(np.dot(w, p.rates) <= (R @ np.asarray(w)).min() + 1e-12 for w in grid)


class TestMembership3:
    def test_zero_loose(self):
        m, _ = random_broadcast(0)
        assert membership3(m, 0, 0, 0, loose_budget(m), FAST).achievable

    def test_lossless_over_useless_side_information(self):
        m, b = useless_side_broadcast()
        assert membership3(m, 0, HX, HX, b, FAST).status == ACHIEVABLE
        assert membership3(m, 0, HX, 0, b, FAST).status == NOT_FOUND

    def test_dominating_point(self):
        m, b = random_broadcast(4)
        pt = min_weighted_rate3(m, b, (1, 1, 1), FAST)
        r = np.asarray(pt.rates) + 0.05
        v = membership3(m, *r, b, FAST)
        assert v.achievable and satisfies(r, v.witness.bounds)

    def test_budget_respected(self):
        m, b = copy_broadcast()
        v = membership3(m, 1, 1, 1, ConstraintBudget(0.0, 0.0, 0.0), FAST)
        assert v.achievable and v.witness.D1 <= 1e-9
