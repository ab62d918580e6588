"""Rate region of the cascade-broadcast model under common reconstruction.

The joint is p(x) p(a | x) p(y | a, x) p(x1, x2 | x): reconstructions depend on
the source alone, which is what common reconstruction amounts to at the
single-letter level.  A decision yields four lower bounds

    Rb           >= Lb   = I(X; A)
    R1 + Rb      >= L1b  = Lb + I(X; X1, X2 | A, Y)
    R2 + Rb      >= L2b  = Lb + I(X; X2 | A)
    R1 + R2 + Rb >= L12b = L2b + I(X; X1 | A, Y, X2)

and the achievable rate triples for that decision form the polyhedron they cut
out of the nonnegative orthant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from . import _info
from .cascade import ACHIEVABLE, NOT_FOUND, WITNESS_TOL, Verdict
from .models import BroadcastCRModel, ConstraintBudget, expected_cost, expected_distortion
from .prob import CondKernel, JointPmf, compose, marginalize, mutual_information
from .search import Excess, NoFeasiblePoint, Objective, SearchConfig, SimplexProblem, minimize, witness_hash

AXES = ("X", "Y", "A", "X1", "X2")
BOUNDS = ("Lb", "L1b", "L2b", "L12b")

# rows of G @ (R1, R2, Rb) >= h: the four bounds then the orthant
_G = np.array([
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
], dtype=float)


def _vertex_maps() -> np.ndarray:
    """S[v] maps the 7 right-hand sides to vertex v, one per nonsingular row triple."""
    out = []
    for rows in combinations(range(len(_G)), 3):
        M = _G[list(rows)]
        if abs(np.linalg.det(M)) > 1e-9:
            S = np.zeros((3, len(_G)))
            S[:, list(rows)] = np.linalg.inv(M)
            out.append(S)
    return np.array(out)


_VERTICES = _vertex_maps()


def _rhs(L: np.ndarray) -> np.ndarray:
    """Right-hand sides for all seven rows; L has shape (..., 4)."""
    return np.concatenate([L, np.zeros(L.shape[:-1] + (3,))], axis=-1)


def polyhedron_vertices(L: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """All candidate vertices (..., V, 3) and a feasibility mask (..., V)."""
    L = np.asarray(L, dtype=float)
    h = _rhs(L)
    pts = np.einsum("...k,vjk->...vj", h, _VERTICES)
    slack = pts @ _G.T - h[..., None, :]
    return pts, np.all(slack >= -tol, axis=-1)


def _best_vertex(L: np.ndarray, weights: Sequence[float]):
    w = np.asarray(weights, dtype=float)
    pts, ok = polyhedron_vertices(L)
    val = np.where(ok, pts @ w, np.inf)
    k = np.argmin(val, axis=-1)
    best = np.take_along_axis(val, k[..., None], axis=-1)[..., 0]
    trip = np.take_along_axis(pts, k[..., None, None], axis=-2)[..., 0, :]
    return best, np.maximum(trip, 0.0), k


def best_rates(L: np.ndarray, weights: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Minimum of w . (R1, R2, Rb) over the polyhedron, and a minimizing triple.

    The orthant makes the polyhedron pointed and w >= 0 keeps the problem
    bounded, so the minimum sits at a vertex.  Ties go to the first vertex in
    row-combination order.
    """
    best, trip, _ = _best_vertex(L, weights)
    return best, trip


def inner_vertex(L: Sequence[float]) -> tuple[float, float, float]:
    """Rb = Lb, R2 = L2b - Lb, R1 = max(L1b - Lb, L12b - L2b)."""
    lb, l1, l2, l12 = (float(v) for v in L)
    return max(l1 - lb, l12 - l2, 0.0), max(l2 - lb, 0.0), lb


def satisfies(rates: Sequence[float], L: Sequence[float], tol: float = WITNESS_TOL) -> bool:
    r = np.asarray(rates, dtype=float)
    return bool(np.all(r >= -tol) and np.all(_G[:4] @ r - np.asarray(L, dtype=float) >= -tol))


@dataclass(frozen=True)
class BroadcastDecision:
    """p(a | x) indexed [x, a] and p(x1, x2 | x) indexed [x, x1, x2]."""

    action: np.ndarray
    recon: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.action, dtype=float)
        r = np.asarray(self.recon, dtype=float)
        if a.ndim != 2 or r.ndim != 3 or a.shape[0] != r.shape[0]:
            raise ValueError(f"bad decision shapes {a.shape}, {r.shape}")
        a.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "action", a)
        object.__setattr__(self, "recon", r)

    def kernels(self, m: BroadcastCRModel) -> tuple[CondKernel, CondKernel]:
        if self.action.shape != (m.X.size, m.A.size) or self.recon.shape != (m.X.size, m.X1.size, m.X2.size):
            raise ValueError("decision alphabets do not match the model")
        return CondKernel([m.X], [m.A], self.action), CondKernel([m.X], [m.X1, m.X2], self.recon)

    def blocks(self) -> list[np.ndarray]:
        return [self.action, self.recon.reshape(self.recon.shape[0], -1)]

    @classmethod
    def from_blocks(cls, m: BroadcastCRModel, blocks) -> "BroadcastDecision":
        return cls(np.asarray(blocks[0]), np.asarray(blocks[1]).reshape(m.X.size, m.X1.size, m.X2.size))


def constant_decision(m: BroadcastCRModel, a: int = 0, x1: int = 0, x2: int = 0) -> BroadcastDecision:
    act = np.zeros((m.X.size, m.A.size))
    act[:, a] = 1.0
    rec = np.zeros((m.X.size, m.X1.size, m.X2.size))
    rec[:, x1, x2] = 1.0
    return BroadcastDecision(act, rec)


def copy_decision(m: BroadcastCRModel, a: int = 0) -> BroadcastDecision:
    """Constant action, both reconstructions the per-symbol best guess of X."""
    act = np.zeros((m.X.size, m.A.size))
    act[:, a] = 1.0
    rec = np.zeros((m.X.size, m.X1.size, m.X2.size))
    b1 = np.argmin(m.d1.values, axis=1)
    b2 = np.argmin(m.d2.values, axis=1)
    for x in range(m.X.size):
        rec[x, b1[x], b2[x]] = 1.0
    return BroadcastDecision(act, rec)


def assemble_joint(m: BroadcastCRModel, d: BroadcastDecision) -> JointPmf:
    """Joint over (X, Y, A, X1, X2)."""
    ka, kr = d.kernels(m)
    j = compose(m.source_pmf(), ka)
    j = compose(j, m.channel_kernel())
    j = compose(j, kr)
    return marginalize(j, AXES)


@dataclass
class RatePoint3:
    Lb: float
    L1b: float
    L2b: float
    L12b: float
    D1: float
    D2: float
    cost: float
    decision: BroadcastDecision
    terms: dict[str, float] = field(default_factory=dict)
    rates: tuple[float, float, float] | None = None
    objective: float | None = None
    weights: tuple[float, float, float] | None = None
    seed: int | None = None
    restart: int | None = None

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.Lb, self.L1b, self.L2b, self.L12b)

    def feasible(self, budget: ConstraintBudget, tol: float = WITNESS_TOL) -> bool:
        return (self.D1 <= budget.D1 + tol and self.D2 <= budget.D2 + tol
                and self.cost <= budget.cost + tol)

    def slacks(self, budget: ConstraintBudget) -> dict[str, float]:
        return {"D1": budget.D1 - self.D1, "D2": budget.D2 - self.D2, "cost": budget.cost - self.cost}

    @property
    def witness_hash(self) -> str:
        return witness_hash(self.decision.blocks())

    def values(self) -> tuple[float, ...]:
        return self.bounds + (self.D1, self.D2, self.cost)


def corner(m: BroadcastCRModel, d: BroadcastDecision) -> RatePoint3:
    """The four lower bounds together with distortions and cost."""
    j = assemble_joint(m, d)
    ia = mutual_information(j, ["X"], ["A"])
    i2 = mutual_information(j, ["X"], ["X2"], ["A"])
    i12 = mutual_information(j, ["X"], ["X1", "X2"], ["A", "Y"])
    i1 = mutual_information(j, ["X"], ["X1"], ["A", "Y", "X2"])
    terms = {
        "I(X;A)": ia,
        "I(X;X2|A)": i2,
        "I(X;X1,X2|A,Y)": i12,
        "I(X;X2|A,Y)": mutual_information(j, ["X"], ["X2"], ["A", "Y"]),
        "I(X;X1|A,Y,X2)": i1,
    }
    return RatePoint3(
        Lb=ia,
        L1b=ia + i12,
        L2b=ia + i2,
        L12b=ia + i2 + i1,
        D1=expected_distortion(j, m.d1, "X", "X1"),
        D2=expected_distortion(j, m.d2, "X", "X2"),
        cost=expected_cost(j, m.cost, "A"),
        decision=d,
        terms=terms,
    )


class BroadcastProblem(SimplexProblem):
    """Batched evaluation; joint arrays are laid out [b, x, a, y, x1, x2]."""

    constraint_names = ("D1", "D2", "cost")

    def __init__(self, m: BroadcastCRModel):
        self.m = m
        nx, na, n1, n2 = m.X.size, m.A.size, m.X1.size, m.X2.size
        self.dims = (nx, na, m.Y.size, n1, n2)
        self.blocks = ((nx, na), (nx, n1 * n2))
        self.px = m.source
        self.pyax = np.transpose(m.vm_channel, (1, 0, 2))  # [x, a, y]
        self.w_d1 = m.source[:, None, None] * m.d1.values[:, :, None]
        self.w_d2 = m.source[:, None, None] * m.d2.values[:, None, :]
        self.w_cost = m.source[:, None] * m.cost.values[None, :]
        ia = _info.mi_terms((0,), (1,))
        self.terms = {
            "Lb": ia,
            "L1b": ia + _info.mi_terms((0,), (3, 4), (1, 2)),
            "L2b": ia + _info.mi_terms((0,), (4,), (1,)),
            "L12b": ia + _info.mi_terms((0,), (4,), (1,)) + _info.mi_terms((0,), (3,), (1, 2, 4)),
        }

    def _split(self, params):
        act, rec = params
        nx, na, ny, n1, n2 = self.dims
        return act, rec.reshape(rec.shape[0], nx, n1, n2)

    def joint(self, params):
        act, rec = self._split(params)
        pxa = self.px[None, :, None] * act  # [b, x, a]
        pxay = pxa[..., None] * self.pyax[None]
        return pxay[..., None, None] * rec[:, :, None, None, :, :]

    def quantities(self, params):
        act, rec = self._split(params)
        P = self.joint(params)
        q = {k: np.maximum(v, 0.0) for k, v in _info.combos(P, 1, self.terms).items()}
        q["D1"] = np.maximum((rec * self.w_d1[None]).sum(axis=(1, 2, 3)), 0.0)
        q["D2"] = np.maximum((rec * self.w_d2[None]).sum(axis=(1, 2, 3)), 0.0)
        q["cost"] = np.maximum((act * self.w_cost[None]).sum(axis=(1, 2)), 0.0)
        return q

    def gradient(self, params, coeffs):
        act, rec = self._split(params)
        B = act.shape[0]
        P = self.joint(params)
        cb = {k: np.broadcast_to(np.asarray(coeffs.get(k, 0.0), dtype=float), (B,)) for k in self.terms}
        _, G = _info.combos(P, 1, self.terms, cb)
        # P = px * act[x,a] * p(y|a,x) * rec[x,x1,x2]
        ga = (G * rec[:, :, None, None, :, :]).sum(axis=(4, 5))
        ga = (ga * self.pyax[None]).sum(axis=3) * self.px[None, :, None]
        pxay = (self.px[None, :, None] * act)[..., None] * self.pyax[None]
        gr = (G * pxay[..., None, None]).sum(axis=(2, 3))
        for name, w in (("D1", self.w_d1), ("D2", self.w_d2)):
            c = np.broadcast_to(np.asarray(coeffs.get(name, 0.0), dtype=float), (B,))
            if np.any(c):
                gr = gr + c[:, None, None, None] * w[None]
        c = np.broadcast_to(np.asarray(coeffs.get("cost", 0.0), dtype=float), (B,))
        if np.any(c):
            ga = ga + c[:, None, None] * self.w_cost[None]
        return [ga, gr.reshape(B, *self.blocks[1])]


class VertexObjective(Objective):
    """Scalarized rate over the polyhedron of achievable triples."""

    names = BOUNDS

    def __init__(self, weights: Sequence[float]):
        self.weights = tuple(float(w) for w in weights)

    def _L(self, q):
        return np.stack([np.asarray(q[k], dtype=float) for k in BOUNDS], axis=-1)

    def __call__(self, q):
        return best_rates(self._L(q), self.weights)[0]

    def partials(self, q):
        # the optimal vertex is linear in the bounds: w . S_v[:, i] for bound i
        _, _, k = _best_vertex(self._L(q), self.weights)
        d = np.asarray(self.weights) @ _VERTICES[k][..., :4]
        return {name: d[..., i] for i, name in enumerate(BOUNDS)}


def _starts(m: BroadcastCRModel) -> list[list[np.ndarray]]:
    a = int(np.argmin(m.cost.values))
    return [constant_decision(m, a=a).blocks(), copy_decision(m, a=a).blocks()]


def _finish(m, out, weights, cfg) -> RatePoint3:
    pt = corner(m, BroadcastDecision.from_blocks(m, out.params))
    if weights is not None:
        val, trip = best_rates(np.array(pt.bounds), weights)
        pt.rates = tuple(float(v) for v in trip)
        pt.objective = float(val)
        pt.weights = tuple(weights)
    pt.seed = cfg.seed
    pt.restart = out.restart
    return pt


def _check_weights(weights):
    w = tuple(float(v) for v in weights)
    if len(w) != 3 or min(w) < 0 or sum(w) <= 0:
        raise ValueError("weights must be three nonnegative numbers with a positive sum")
    return w


def min_weighted_rate3(m: BroadcastCRModel, budget: ConstraintBudget, weights: Sequence[float],
                       cfg: SearchConfig = SearchConfig()) -> RatePoint3:
    """Best found feasible decision and rate triple for w1*R1 + w2*R2 + wb*Rb."""
    w = _check_weights(weights)
    out = minimize(BroadcastProblem(m), VertexObjective(w), budget.as_dict(), cfg, _starts(m))
    pt = _finish(m, out, w, cfg)
    if not pt.feasible(budget):
        raise NoFeasiblePoint(f"witness violates the budget: slacks {pt.slacks(budget)}")
    return pt


@dataclass
class Surface:
    points: list[RatePoint3]
    envelope: list[RatePoint3]
    failures: list[tuple[tuple[float, float, float], str]]


def trace_surface3(m: BroadcastCRModel, budget: ConstraintBudget, weight_grid: Iterable[Sequence[float]],
                   cfg: SearchConfig = SearchConfig()) -> Surface:
    """Per-weight optimal triples; the envelope keeps the triples that are
    optimal among all found ones for at least one grid weight."""
    grid = [_check_weights(w) for w in weight_grid]
    if not grid:
        raise ValueError("empty weight grid")
    points, failures = [], []
    for w in grid:
        try:
            points.append(min_weighted_rate3(m, budget, w, cfg))
        except NoFeasiblePoint as exc:
            failures.append((w, str(exc)))
    points.sort(key=lambda p: (p.rates[0], p.rates[1], p.rates[2]))
    keep = set()
    if points:
        R = np.array([p.rates for p in points])
        for w in grid:
            vals = R @ np.asarray(w)
            keep.add(int(np.argmin(vals)))
    return Surface(points, [points[i] for i in sorted(keep)], failures)


def membership3(m: BroadcastCRModel, R1: float, R2: float, Rb: float, budget: ConstraintBudget,
                cfg: SearchConfig = SearchConfig()) -> Verdict:
    """ACHIEVABLE with a witness, or NOT-FOUND-AT-RESOLUTION."""
    if min(R1, R2, Rb) < 0:
        raise ValueError("rates must be nonnegative")
    targets = {"Lb": Rb, "L1b": R1 + Rb, "L2b": R2 + Rb, "L12b": R1 + R2 + Rb}
    try:
        out = minimize(BroadcastProblem(m), Excess(targets), budget.as_dict(), cfg, _starts(m))
    except NoFeasiblePoint:
        return Verdict(NOT_FOUND)
    pt = _finish(m, out, None, cfg)
    pt.rates = (float(R1), float(R2), float(Rb))
    ok = pt.feasible(budget) and satisfies(pt.rates, pt.bounds)
    return Verdict(ACHIEVABLE, pt) if ok else Verdict(NOT_FOUND)
