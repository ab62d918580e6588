"""Rate region of the cascade with a vending machine at the end node.

For a decision kernel p(x1, a, u | x, y) the joint is

    p(x, y) p(x1, a, u | x, y) p(z | y, a)

and the rate corner is R1 = I(X; X1, A, U | Y), R2 = I(X, Y; A) + I(X, Y; U | A, Z),
with the end-node estimate produced symbol by symbol from (U, Z).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _info
from .models import CascadeVendingModel, ConstraintBudget, DistortionTable, expected_cost, expected_distortion
from .prob import CondKernel, FiniteAlphabet, JointPmf, compose, marginalize, mutual_information
from .search import Excess, Linear, NoFeasiblePoint, SearchConfig, SimplexProblem, minimize, witness_hash

WITNESS_TOL = 1e-9
TIE_TOL = 1e-12
# weight given to a rate whose user weight is zero, so that axis weights land on
# the corner minimizing the other rate rather than anywhere on a flat face
LEX_WEIGHT = 1e-4
AXES = ("X", "Y", "Z", "A", "X1", "U")


def u_bound(m: CascadeVendingModel) -> int:
    """Cardinality sufficient for the auxiliary: |X||Y||A| + 3."""
    return m.X.size * m.Y.size * m.A.size + 3


def default_u_size(m: CascadeVendingModel, cfg: SearchConfig) -> int:
    bound = u_bound(m)
    return bound if cfg.u_size is None else min(bound, cfg.u_size)


@dataclass(frozen=True)
class CascadeDecision:
    """p(x1, a, u | x, y) stored as an array indexed [x, y, x1, a, u]."""

    u_size: int
    kernel: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=float)
        if k.ndim != 5 or k.shape[-1] != self.u_size:
            raise ValueError(f"kernel must be [x, y, x1, a, u] with |U|={self.u_size}, got {k.shape}")
        k.setflags(write=False)
        object.__setattr__(self, "kernel", k)

    def U(self) -> FiniteAlphabet:
        return FiniteAlphabet("U", self.u_size)

    def cond_kernel(self, m: CascadeVendingModel) -> CondKernel:
        expect = (m.X.size, m.Y.size, m.X1.size, m.A.size, self.u_size)
        if self.kernel.shape != expect:
            raise ValueError(f"decision shape {self.kernel.shape} does not match model {expect}")
        return CondKernel([m.X, m.Y], [m.X1, m.A, self.U()], self.kernel)

    @classmethod
    def from_block(cls, m: CascadeVendingModel, u_size: int, block: np.ndarray) -> "CascadeDecision":
        shape = (m.X.size, m.Y.size, m.X1.size, m.A.size, u_size)
        return cls(u_size, np.asarray(block, dtype=float).reshape(shape))

    def block(self) -> np.ndarray:
        x, y = self.kernel.shape[:2]
        return self.kernel.reshape(x * y, -1)


def constant_decision(m: CascadeVendingModel, x1: int = 0, a: int = 0, u: int = 0, u_size: int = 1) -> CascadeDecision:
    k = np.zeros((m.X.size, m.Y.size, m.X1.size, m.A.size, u_size))
    k[:, :, x1, a, u] = 1.0
    return CascadeDecision(u_size, k)


def deterministic_decision(m: CascadeVendingModel, x1_of, a_of, u_of, u_size: int) -> CascadeDecision:
    """Kernel putting all mass on (x1_of(x,y), a_of(x,y), u_of(x,y))."""
    k = np.zeros((m.X.size, m.Y.size, m.X1.size, m.A.size, u_size))
    for x in range(m.X.size):
        for y in range(m.Y.size):
            k[x, y, x1_of(x, y), a_of(x, y), u_of(x, y)] = 1.0
    return CascadeDecision(u_size, k)


@dataclass(frozen=True)
class SymbolDecoder:
    """End-node estimate f(u, z) as an integer table indexed [u, z]."""

    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.int64)
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    def __call__(self, u: int, z: int) -> int:
        return int(self.table[u, z])


def assemble_joint(m: CascadeVendingModel, d: CascadeDecision) -> JointPmf:
    """Joint over (X, Y, Z, A, X1, U)."""
    j = compose(m.source_pmf(), d.cond_kernel(m))
    j = compose(j, m.channel_kernel())
    return marginalize(j, AXES)


def bayes_decoder(j: JointPmf, d2: DistortionTable, source: str = "X", aux: str = "U",
                  side: str = "Z") -> SymbolDecoder:
    """Pointwise minimizer of E[d2(X, f(U, Z))]; ties go to the lowest symbol."""
    for ax in (source, aux, side):
        j.index(ax)
    p = marginalize(j, [source, aux, side]).values
    if p.shape[0] != d2.values.shape[0]:
        raise ValueError("distortion table does not match the source alphabet")
    # cost[u, z, x2] = sum_x p(x, u, z) d2(x, x2)
    cost = np.einsum("xuz,xk->uzk", p, d2.values)
    best = cost.min(axis=2, keepdims=True)
    scale = max(1.0, float(np.abs(cost).max()))
    table = np.argmax(cost <= best + TIE_TOL * scale, axis=2)
    table[p.sum(axis=0) <= 0] = 0
    return SymbolDecoder(table)


def decoder_distortion(j: JointPmf, f: SymbolDecoder, d2: DistortionTable, source: str = "X",
                       aux: str = "U", side: str = "Z") -> float:
    p = marginalize(j, [source, aux, side]).values
    nx, nu, nz = p.shape
    dist = d2.values[:, f.table]  # [x, u, z]
    return float(max(0.0, (p * dist).sum()))


@dataclass
class RatePoint2:
    R1: float
    R2: float
    D1: float
    D2: float
    cost: float
    decision: CascadeDecision
    decoder: SymbolDecoder
    terms: dict[str, float] = field(default_factory=dict)
    objective: float | None = None
    weights: tuple[float, float] | None = None
    seed: int | None = None
    restart: int | None = None

    def feasible(self, budget: ConstraintBudget, tol: float = WITNESS_TOL) -> bool:
        return (self.D1 <= budget.D1 + tol and self.D2 <= budget.D2 + tol
                and self.cost <= budget.cost + tol)

    def slacks(self, budget: ConstraintBudget) -> dict[str, float]:
        return {"D1": budget.D1 - self.D1, "D2": budget.D2 - self.D2, "cost": budget.cost - self.cost}

    @property
    def witness_hash(self) -> str:
        return witness_hash([self.decision.kernel])

    def values(self) -> tuple[float, float, float, float, float]:
        return (self.R1, self.R2, self.D1, self.D2, self.cost)


def rate_corner(m: CascadeVendingModel, d: CascadeDecision) -> RatePoint2:
    """Evaluate both rate bounds, distortions and cost for one decision."""
    j = assemble_joint(m, d)
    ia = mutual_information(j, ["X", "Y"], ["A"])
    iu = mutual_information(j, ["X", "Y"], ["U"], ["A", "Z"])
    r1 = mutual_information(j, ["X"], ["X1", "A", "U"], ["Y"])
    f = bayes_decoder(j, m.d2)
    terms = {
        "I(X;X1,A,U|Y)": r1,
        "I(X,Y;A)": ia,
        "I(X,Y;U|A,Z)": iu,
        "I(X;Z|A,Y)": mutual_information(j, ["X"], ["Z"], ["A", "Y"]),
    }
    return RatePoint2(
        R1=r1,
        R2=ia + iu,
        D1=expected_distortion(j, m.d1, "X", "X1"),
        D2=decoder_distortion(j, f, m.d2),
        cost=expected_cost(j, m.cost, "A"),
        decision=d,
        decoder=f,
        terms=terms,
    )


class CascadeProblem(SimplexProblem):
    """Batched evaluation for the search.

    Batch arrays are laid out [b, x, y, x1, a, u, z].
    """

    constraint_names = ("D1", "D2", "cost")

    def __init__(self, m: CascadeVendingModel, u_size: int):
        self.m = m
        self.u_size = u_size
        nx, ny, n1, na = m.X.size, m.Y.size, m.X1.size, m.A.size
        self.shape = (nx, ny, n1, na, u_size)
        self.blocks = ((nx * ny, n1 * na * u_size),)
        self.pxy = m.source[:, :, None, None, None]
        # p(z | a, y) -> [y, a, z] aligned with [x, y, x1, a, u, z]
        self.pz = np.transpose(m.vm_channel, (1, 0, 2))[None, :, None, :, None, :]
        self.w_d1 = m.source[:, :, None, None, None] * m.d1.values[:, None, :, None, None]
        self.w_cost = m.source[:, :, None, None, None] * m.cost.values[None, None, None, :, None]
        self.d2 = m.d2.values
        # axis indices without batch: x0 y1 x1_2 a3 u4 z5
        self.terms = {
            "R1": _info.mi_terms((0,), (2, 3, 4), (1,)),
            "R2": _info.mi_terms((0, 1), (3,)) + _info.mi_terms((0, 1), (4,), (3, 5)),
        }

    def _kernel(self, params):
        k = params[0]
        return k.reshape((k.shape[0],) + self.shape)

    def joint(self, params) -> np.ndarray:
        k = self._kernel(params)
        return (self.pxy[None] * k)[..., None] * self.pz[None]

    def _d2(self, P):
        pxuz = P.sum(axis=(2, 3, 4))  # [b, x, u, z]
        cost = np.einsum("bxuz,xk->buzk", pxuz, self.d2)
        f = np.argmin(cost, axis=3)
        return np.maximum(cost.min(axis=3).sum(axis=(1, 2)), 0.0), f

    def quantities(self, params):
        k = self._kernel(params)
        P = self.joint(params)
        d2, _ = self._d2(P)
        rates = _info.combos(P, 1, self.terms)
        return {
            "R1": np.maximum(rates["R1"], 0.0),
            "R2": np.maximum(rates["R2"], 0.0),
            "D1": np.maximum((k * self.w_d1[None]).sum(axis=(1, 2, 3, 4, 5)), 0.0),
            "D2": d2,
            "cost": np.maximum((k * self.w_cost[None]).sum(axis=(1, 2, 3, 4, 5)), 0.0),
        }

    def gradient(self, params, coeffs):
        k = self._kernel(params)
        B = k.shape[0]
        P = self.joint(params)
        bshape = (B,) + (1,) * (P.ndim - 1)
        cr = {k: np.broadcast_to(np.asarray(coeffs.get(k, 0.0), dtype=float), (B,)) for k in self.terms}
        _, G = _info.combos(P, 1, self.terms, cr)
        c2 = np.broadcast_to(np.asarray(coeffs.get("D2", 0.0), dtype=float), (B,))
        if np.any(c2):
            _, f = self._d2(P)
            # d2(x, f(u, z)) -> [b, x, u, z], broadcast over y, x1, a
            dsel = self.d2[:, f]  # [x, b, u, z]
            dsel = np.transpose(dsel, (1, 0, 2, 3))[:, :, None, None, None, :, :]
            G += c2.reshape(bshape) * dsel
        gk = (G * self.pz[None]).sum(axis=-1) * self.pxy[None]
        for name, w in (("D1", self.w_d1), ("cost", self.w_cost)):
            c = np.broadcast_to(np.asarray(coeffs.get(name, 0.0), dtype=float), (B,))
            if np.any(c):
                gk = gk + c.reshape((B,) + (1,) * 5) * w[None]
        return [gk.reshape(B, *self.blocks[0])]


def _structured_starts(m: CascadeVendingModel, u_size: int) -> list[list[np.ndarray]]:
    """A few deterministic decisions worth trying alongside random restarts."""
    x1_best = np.argmin(m.d1.values, axis=1)
    a_cheap = int(np.argmin(m.cost.values))
    starts = [
        constant_decision(m, x1=int(x1_best[0]), a=a_cheap, u=0, u_size=u_size),
        deterministic_decision(m, lambda x, y: int(x1_best[x]), lambda x, y: a_cheap,
                               lambda x, y: x % u_size, u_size),
    ]
    return [[s.block()] for s in starts]


def _finish(m, outcome, u_size, weights, cfg) -> RatePoint2:
    d = CascadeDecision.from_block(m, u_size, outcome.params[0])
    pt = rate_corner(m, d)
    pt.weights = weights
    pt.objective = weights[0] * pt.R1 + weights[1] * pt.R2 if weights else outcome.objective
    pt.seed = cfg.seed
    pt.restart = outcome.restart
    return pt


def min_weighted_rate(m: CascadeVendingModel, budget: ConstraintBudget, weights: Sequence[float],
                      cfg: SearchConfig = SearchConfig()) -> RatePoint2:
    """Best found feasible decision for w1*R1 + w2*R2 (an upper bound on the minimum)."""
    w1, w2 = (float(w) for w in weights)
    if w1 < 0 or w2 < 0 or w1 + w2 <= 0:
        raise ValueError("weights must be nonnegative with a positive sum")
    u_size = default_u_size(m, cfg)
    problem = CascadeProblem(m, u_size)
    search_w = {"R1": w1 or LEX_WEIGHT * w2, "R2": w2 or LEX_WEIGHT * w1}
    out = minimize(problem, Linear(search_w), budget.as_dict(), cfg, _structured_starts(m, u_size))
    pt = _finish(m, out, u_size, (w1, w2), cfg)
    if not pt.feasible(budget):
        raise NoFeasiblePoint(f"witness violates the budget: slacks {pt.slacks(budget)}")
    return pt


@dataclass
class Frontier:
    points: list[RatePoint2]
    envelope: list[RatePoint2]
    failures: list[tuple[tuple[float, float], str]]


def lower_envelope(pts: Sequence[tuple[float, float]]) -> list[int]:
    """Indices of the points on the lower-left convex envelope, sorted by the first coordinate."""
    order = sorted(range(len(pts)), key=lambda i: (pts[i][0], pts[i][1], i))
    hull: list[int] = []
    for i in order:
        if hull and pts[hull[-1]][0] == pts[i][0]:
            continue
        while len(hull) >= 2:
            (x1, y1), (x2, y2), (x3, y3) = pts[hull[-2]], pts[hull[-1]], pts[i]
            if (x2 - x1) * (y3 - y1) - (y2 - y1) * (x3 - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    # keep the decreasing part only (the region is closed upward)
    out = []
    for i in hull:
        if out and pts[i][1] >= pts[out[-1]][1]:
            break
        out.append(i)
    return out


def trace_frontier(m: CascadeVendingModel, budget: ConstraintBudget, weight_grid: Iterable[Sequence[float]],
                   cfg: SearchConfig = SearchConfig()) -> Frontier:
    """Per-weight scalarized minima, sorted by R1, plus their convex envelope."""
    weight_grid = [tuple(float(v) for v in w) for w in weight_grid]
    if not weight_grid:
        raise ValueError("empty weight grid")
    points, failures = [], []
    for w in weight_grid:
        try:
            points.append(min_weighted_rate(m, budget, w, cfg))
        except NoFeasiblePoint as exc:
            failures.append((w, str(exc)))
    points.sort(key=lambda p: (p.R1, p.R2))
    env = [points[i] for i in lower_envelope([(p.R1, p.R2) for p in points])]
    return Frontier(points, env, failures)


ACHIEVABLE = "ACHIEVABLE"
NOT_FOUND = "NOT-FOUND-AT-RESOLUTION"


@dataclass
class Verdict:
    status: str
    witness: object | None = None

    @property
    def achievable(self) -> bool:
        return self.status == ACHIEVABLE


def membership(m: CascadeVendingModel, R1: float, R2: float, budget: ConstraintBudget,
               cfg: SearchConfig = SearchConfig()) -> Verdict:
    """ACHIEVABLE with a witness, or NOT-FOUND-AT-RESOLUTION (never a converse claim)."""
    if R1 < 0 or R2 < 0:
        raise ValueError("rates must be nonnegative")
    u_size = default_u_size(m, cfg)
    problem = CascadeProblem(m, u_size)
    try:
        out = minimize(problem, Excess({"R1": R1, "R2": R2}), budget.as_dict(), cfg,
                       _structured_starts(m, u_size))
    except NoFeasiblePoint:
        return Verdict(NOT_FOUND)
    pt = _finish(m, out, u_size, None, cfg)
    ok = pt.feasible(budget) and pt.R1 <= R1 + WITNESS_TOL and pt.R2 <= R2 + WITNESS_TOL
    return Verdict(ACHIEVABLE, pt) if ok else Verdict(NOT_FOUND)
