from __future__ import annotations

import math

import numpy as np
import pytest

from cascade_vm.broadcast import BroadcastDecision, corner
from cascade_vm.cascade import CascadeDecision, min_weighted_rate, rate_corner
from cascade_vm.instances import (LOSSLESS_PX, cascade_model, lossless_cascade, loose_budget, random_broadcast,
                                  random_cascade)
from cascade_vm.models import ConstraintBudget
from cascade_vm.oracle import (CascadeOracle, EmptyFeasibleSet, GridSpec, GuardExceeded, brute_force_broadcast,
                               brute_force_cascade_naive, brute_force_min, budget_ladder, cascade_shape,
                               decision_count, degeneracy_suite, enumerate_decisions, lattice_count,
                               monotone_ladder, simplex_lattice)
from cascade_vm.search import SearchConfig

HX = float(-(np.asarray(LOSSLESS_PX) * np.log2(LOSSLESS_PX)).sum())


class TestEnumeration:
    def test_binary_k2(self):
        assert simplex_lattice(2, 2).tolist() == [[0, 2], [1, 1], [2, 0]]

    def test_two_cells(self):
        kernels = list(enumerate_decisions([(2, 2)], GridSpec(K=2)))
        assert len(kernels) == 9
        assert len({k[0].tobytes() for k in kernels}) == 9
        assert all(np.allclose(k[0].sum(axis=1), 1.0) for k in kernels)

    def test_cascade_count_closed_form(self):
        m, _ = random_cascade(0)
        assert decision_count(cascade_shape(m, 2), 4) == math.comb(11, 7) ** 4 == 330 ** 4

    @pytest.mark.parametrize("m,K", [(1, 5), (3, 4), (4, 3), (5, 2)])
    def test_lattice_rows(self, m, K):
        lat = simplex_lattice(m, K)
        assert len(lat) == lattice_count(m, K)
        assert (lat.sum(axis=1) == K).all() and (lat >= 0).all()
        assert len({tuple(r) for r in lat}) == len(lat)

    def test_guard(self):
        with pytest.raises(GuardExceeded, match="exceed"):
            next(enumerate_decisions([(4, 8)], GridSpec(K=4, guard=10 ** 6)))

    def test_naive_cascade_guard(self):
        m, b = random_cascade(0)
        with pytest.raises(GuardExceeded):
            brute_force_cascade_naive(m, b, (1, 1), GridSpec(K=4, u_size=2))


class TestCascadeOracle:
    @pytest.mark.parametrize("seed", range(3))
    @pytest.mark.parametrize("w", [(1.0, 1.0), (1.0, 0.25)])
    def test_decomposed_matches_naive(self, seed, w):
        m, b = random_cascade(seed)
        grid = GridSpec(K=2, u_size=1)
        orc = CascadeOracle(m, grid)
        for budget in (b, ConstraintBudget(0.3, 0.3, 0.5), ConstraintBudget(0.45, 0.2, 1.0)):
            try:
                fast = orc.query(budget, w).objective
            except EmptyFeasibleSet:
                fast = None
            try:
                slow = brute_force_cascade_naive(m, budget, w, grid).objective
            except EmptyFeasibleSet:
                slow = None
            assert (fast is None) == (slow is None)
            if fast is not None:
                assert fast == pytest.approx(slow, abs=1e-12)

    def test_witness_evaluates_to_objective(self):
        m, b = random_cascade(1)
        res = brute_force_min(m, b, (1.0, 0.5))
        pt = rate_corner(m, CascadeDecision.from_block(m, 2, res.params[0]))
        assert pt.R1 + 0.5 * pt.R2 == pytest.approx(res.objective, abs=1e-10)
        assert pt.feasible(b)

    def test_loose_budget(self):
        m, _ = random_cascade(2)
        assert brute_force_min(m, loose_budget(m), (1, 1)).objective == pytest.approx(0.0, abs=1e-12)

    def test_lossless_corner(self):
        m, b = lossless_cascade()
        assert brute_force_min(m, b, (1, 1)).objective == pytest.approx(2 * HX, abs=1e-9)

    def test_empty_feasible_set(self):
        m = cascade_model(np.full((2, 2), 0.25), np.full((2, 2, 2), 0.5), cost=(0.5, 1.0))
        with pytest.raises(EmptyFeasibleSet):
            brute_force_min(m, ConstraintBudget(1.0, 1.0, 0.1), (1, 1), GridSpec(K=2, u_size=1))

    def test_lattice_witness_is_never_below_oracle(self):
        m, b = random_cascade(3)
        ref = brute_force_min(m, b, (1, 1)).objective
        got = min_weighted_rate(m, b, (1, 1), SearchConfig(restarts=4, u_size=2, lattice=4)).objective
        assert got >= ref - 1e-9


class TestBroadcastOracle:
    @pytest.mark.parametrize("seed", range(3))
    def test_witness_matches_direct_evaluation(self, seed):
        m, b = random_broadcast(seed)
        res = brute_force_broadcast(m, b, (1, 1, 1), GridSpec())
        pt = corner(m, BroadcastDecision.from_blocks(m, res.params))
        for k in ("Lb", "L1b", "L2b", "L12b", "D1", "D2", "cost"):
            assert res.values[k] == pytest.approx(getattr(pt, k), abs=1e-10)
        assert res.evaluations == 35 ** 2 * 5 ** 2

    def test_loose_budget(self):
        m, _ = random_broadcast(0)
        assert brute_force_min(m, loose_budget(m), (1, 1, 1)).objective == pytest.approx(0.0, abs=1e-12)

    def test_unsupported_model(self):
        with pytest.raises(TypeError):
            brute_force_min(object(), ConstraintBudget(0, 0, 0), (1, 1))


class TestSuite:
    def test_ladder_endpoints(self):
        b = ConstraintBudget(0.1, 0.2, 0.3)
        lad = budget_ladder(b, "D2", 1.0, steps=5)
        assert [x.D2 for x in lad] == pytest.approx([0.2, 0.4, 0.6, 0.8, 1.0])
        assert all(x.D1 == 0.1 and x.cost == 0.3 for x in lad)

    def test_monotone_ladder_broadcast(self):
        m, b = random_broadcast(0)
        vals, ok = monotone_ladder(m, b, (1, 1, 1), "D2", GridSpec())
        assert ok and len(vals) == 5 and vals[-1] <= vals[0]

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            degeneracy_suite("triangle")

    def test_broadcast_suite_single_seed(self):
        rep = degeneracy_suite("broadcast", seeds=(0,))
        assert rep.passed, [c for c in rep.checks if not c.passed]
        assert len(rep.checks) == 3 + 1 + 3
