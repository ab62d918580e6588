"""Small named instances used by tests, the CLI suite and the examples."""

from __future__ import annotations

import numpy as np

from .models import BroadcastCRModel, CascadeVendingModel, ConstraintBudget, CostTable, hamming
from .prob import FiniteAlphabet


def cascade_model(source, vm_channel, cost=(0.0, 1.0), d1=None, d2=None) -> CascadeVendingModel:
    source = np.asarray(source, dtype=float)
    vm_channel = np.asarray(vm_channel, dtype=float)
    nx, ny = source.shape
    na, _, nz = vm_channel.shape
    X, Y, Z, A = FiniteAlphabet("X", nx), FiniteAlphabet("Y", ny), FiniteAlphabet("Z", nz), FiniteAlphabet("A", na)
    X1, X2 = X.renamed("X1"), X.renamed("X2")
    return CascadeVendingModel(
        X, Y, Z, A, X1, X2, source, vm_channel,
        d1 if d1 is not None else hamming(X, X1),
        d2 if d2 is not None else hamming(X, X2),
        CostTable(A, np.asarray(cost, dtype=float)),
    )


def broadcast_model(source, vm_channel, cost=(0.0, 1.0), d1=None, d2=None) -> BroadcastCRModel:
    source = np.asarray(source, dtype=float)
    vm_channel = np.asarray(vm_channel, dtype=float)
    na, nx, ny = vm_channel.shape
    X, Y, A = FiniteAlphabet("X", nx), FiniteAlphabet("Y", ny), FiniteAlphabet("A", na)
    X1, X2 = X.renamed("X1"), X.renamed("X2")
    return BroadcastCRModel(
        X, Y, A, X1, X2, source, vm_channel,
        d1 if d1 is not None else hamming(X, X1),
        d2 if d2 is not None else hamming(X, X2),
        CostTable(A, np.asarray(cost, dtype=float)),
    )


def random_cascade(seed: int, action_free: bool = False) -> tuple[CascadeVendingModel, ConstraintBudget]:
    """All-binary cascade with a random source, channel and budget.

    With ``action_free`` the channel ignores the action and the cost is zero.
    """
    rng = np.random.default_rng([seed, 101])
    source = rng.dirichlet(np.ones(4)).reshape(2, 2)
    if action_free:
        ch = rng.dirichlet(np.ones(2), size=2)
        vm = np.stack([ch, ch])
        cost = (0.0, 0.0)
    else:
        vm = rng.dirichlet(np.ones(2), size=(2, 2))
        cost = (0.0, 1.0)
    budget = ConstraintBudget(float(rng.uniform(0.1, 0.3)), float(rng.uniform(0.1, 0.3)),
                              float(rng.uniform(0.2, 0.8)))
    return cascade_model(source, vm, cost), budget


def random_broadcast(seed: int, action_free: bool = False) -> tuple[BroadcastCRModel, ConstraintBudget]:
    """All-binary broadcast instance; distortion budgets sit below min p(x)."""
    rng = np.random.default_rng([seed, 202])
    source = rng.dirichlet(np.ones(2))
    if action_free:
        ch = rng.dirichlet(np.ones(2), size=2)
        vm = np.stack([ch, ch])
        cost = (0.0, 0.0)
    else:
        vm = rng.dirichlet(np.ones(2), size=(2, 2))
        cost = (0.0, 1.0)
    # below min p(x), so a constant reconstruction never meets the budget
    dmax = float(source.min())
    budget = ConstraintBudget(dmax * float(rng.uniform(0.3, 0.7)), dmax * float(rng.uniform(0.3, 0.7)),
                              float(rng.uniform(0.2, 0.8)))
    return broadcast_model(source, vm, cost), budget


LOSSLESS_PX = (0.3, 0.7)


def lossless_cascade() -> tuple[CascadeVendingModel, ConstraintBudget]:
    """Binary Hamming cascade where Y is independent of X and Z carries nothing.

    With zero distortion budgets the frontier corner is (H(X), H(X)).
    """
    px = np.asarray(LOSSLESS_PX)
    source = np.outer(px, [0.5, 0.5])
    vm = np.full((2, 2, 2), 0.5)
    return cascade_model(source, vm, cost=(0.0, 0.0)), ConstraintBudget(0.0, 0.0, 0.0)


def copy_broadcast() -> tuple[BroadcastCRModel, ConstraintBudget]:
    """Broadcast instance with Y an exact copy of X and a single action."""
    px = np.asarray(LOSSLESS_PX)
    vm = np.eye(2)[None]
    return broadcast_model(px, vm, cost=(0.0,)), ConstraintBudget(1.0, 0.0, 0.0)


def useless_side_broadcast() -> tuple[BroadcastCRModel, ConstraintBudget]:
    """Broadcast instance whose side information is independent of X."""
    px = np.asarray(LOSSLESS_PX)
    vm = np.full((1, 2, 2), 0.5)
    return broadcast_model(px, vm, cost=(0.0,)), ConstraintBudget(1.0, 0.0, 0.0)


def loose_budget(m) -> ConstraintBudget:
    return ConstraintBudget(m.d1.d_max, m.d2.d_max, m.cost.cost_max)
