"""Exhaustive grid search over lattice decision kernels.

Every conditional slice of a decision is restricted to the lattice points of
its simplex with denominator K.  Within that finite set the minima reported
here are exact.  Evaluation is written independently of the search code so
that the two can be compared.

For the cascade model the full product of slices is far too large to stream
(330^4 kernels for an all-binary instance with |U| = 2, K = 4), so the exact
minimum is computed by splitting the kernel into a part that only affects the
terms separable across y and a summary p(a, u | x, y) that couples them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .models import BroadcastCRModel, CascadeVendingModel, ConstraintBudget

DEFAULT_GUARD = 10**8
FEAS_TOL = 1e-12
CHUNK = 8192


class GuardExceeded(ValueError):
    """The requested enumeration is larger than the configured guard."""


class EmptyFeasibleSet(RuntimeError):
    """No lattice decision meets the budget."""


@dataclass(frozen=True)
class GridSpec:
    K: int = 4
    u_size: int = 2
    guard: int = DEFAULT_GUARD

    def __post_init__(self):
        if self.K < 1 or self.u_size < 1 or self.guard < 1:
            raise ValueError("K, u_size and guard must be positive")


def lattice_count(m: int, K: int) -> int:
    """Lattice points of the (m-1)-simplex with denominator K."""
    return math.comb(K + m - 1, m - 1)


def simplex_lattice(m: int, K: int) -> np.ndarray:
    """All count vectors of length m summing to K, lexicographically ascending."""
    out = []
    for bars in itertools.combinations(range(K + m - 1), m - 1):
        prev, row = -1, []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(K + m - 2 - prev)
        out.append(row)
    arr = np.array(out, dtype=np.int64).reshape(-1, m)
    return arr[np.lexsort(arr.T[::-1])]


def decision_count(shape: Sequence[tuple[int, int]], K: int) -> int:
    """Number of lattice kernels for blocks of (cells, outcomes)."""
    n = 1
    for cells, outs in shape:
        n *= lattice_count(outs, K) ** cells
    return n


def _check_guard(count: int, guard: int) -> None:
    if count > guard:
        raise GuardExceeded(f"{count} lattice decisions exceed the guard of {guard}")


def _index_chunks(shape, K, chunk=CHUNK) -> Iterator[list[np.ndarray]]:
    """Batches of lattice kernels in enumeration order, as count arrays."""
    lats = [simplex_lattice(outs, K) for _, outs in shape]
    radix = [len(lats[bi]) for bi, (cells, _) in enumerate(shape) for _ in range(cells)]
    total = int(np.prod(radix, dtype=object))
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk), dtype=np.int64)
        digits = np.unravel_index(flat, radix)
        out, pos = [], 0
        for bi, (cells, _) in enumerate(shape):
            out.append(np.stack([lats[bi][digits[pos + c]] for c in range(cells)], axis=1))
            pos += cells
        yield out


def enumerate_decisions(shape: Sequence[tuple[int, int]], grid: GridSpec) -> Iterator[list[np.ndarray]]:
    """Stream every lattice kernel as a list of row-stochastic blocks.

    ``shape`` lists (cells, outcomes) per block.  The last cell varies fastest.
    """
    _check_guard(decision_count(shape, grid.K), grid.guard)
    for batch in _index_chunks(shape, grid.K, chunk=1024):
        for i in range(batch[0].shape[0]):
            yield [b[i] / grid.K for b in batch]


# --- independent evaluation helpers ------------------------------------------

def _H(P: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Joint entropy (bits) of the variables ``keep`` (axes after the batch axis)."""
    drop = tuple(1 + i for i in range(P.ndim - 1) if i not in keep)
    M = P.sum(axis=drop) if drop else P
    M = M.reshape(M.shape[0], -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(M > 0, M * np.log2(np.where(M > 0, M, 1.0)), 0.0)
    return -t.sum(axis=1)


def _I(P, a, b, g=()):
    a, b, g = list(a), list(b), list(g)
    val = _H(P, a + g) + _H(P, b + g) - _H(P, a + b + g)
    if g:
        val = val - _H(P, g)
    return np.maximum(val, 0.0)


def _bayes_d2(pxuz: np.ndarray, d2: np.ndarray) -> np.ndarray:
    """min over decoders of E d2 for a batch of p(x, u, z)."""
    cost = np.einsum("bxuz,xk->buzk", pxuz, d2)
    return np.maximum(cost.min(axis=3).sum(axis=(1, 2)), 0.0)


def lp_scalarize(L: np.ndarray, w: Sequence[float]) -> np.ndarray:
    """min w.(R1, R2, Rb) subject to the four rate bounds and R >= 0.

    For fixed Rb = t the best (R1, R2) is explicit; the resulting function of
    t is convex piecewise linear, so checking its breakpoints suffices.
    """
    L = np.asarray(L, dtype=float)
    a, b, c, d = (L[..., i] for i in range(4))
    w1, w2, wb = (float(v) for v in w)
    cands = [a, b, c, d, b + c - d]
    best = np.full(a.shape, np.inf)
    for t in cands:
        t = np.maximum(t, np.maximum(a, 0.0))
        l1 = np.maximum(b - t, 0.0)
        l2 = np.maximum(c - t, 0.0)
        s = np.maximum(d - t, 0.0)
        extra = np.maximum(s - l1 - l2, 0.0)
        best = np.minimum(best, wb * t + w1 * l1 + w2 * l2 + min(w1, w2) * extra)
    return best


# --- results -----------------------------------------------------------------

@dataclass
class OracleResult:
    objective: float
    params: list[np.ndarray]
    values: dict[str, float]
    evaluations: int
    index: int | None = None

    def counts(self, K: int) -> list[np.ndarray]:
        return [np.rint(p * K).astype(np.int64) for p in self.params]


# --- broadcast ---------------------------------------------------------------

def _broadcast_eval(m: BroadcastCRModel, act: np.ndarray, rec: np.ndarray) -> dict[str, np.ndarray]:
    nx, n1, n2 = m.X.size, m.X1.size, m.X2.size
    rec = rec.reshape(rec.shape[0], nx, n1, n2)
    pyax = np.transpose(m.vm_channel, (1, 0, 2))  # [x, a, y]
    pxa = m.source[None, :, None] * act
    P = (pxa[..., None] * pyax[None])[..., None, None] * rec[:, :, None, None]  # [b, x, a, y, x1, x2]
    X, A, Y, X1, X2 = 0, 1, 2, 3, 4
    ia = _I(P, [X], [A])
    return {
        "Lb": ia,
        "L1b": ia + _I(P, [X], [X1, X2], [A, Y]),
        "L2b": ia + _I(P, [X], [X2], [A]),
        "L12b": ia + _I(P, [X], [X2], [A]) + _I(P, [X], [X1], [A, Y, X2]),
        "D1": np.einsum("bxij,xi->b", rec, m.source[:, None] * m.d1.values),
        "D2": np.einsum("bxij,xj->b", rec, m.source[:, None] * m.d2.values),
        "cost": np.einsum("bxa,a->b", pxa, m.cost.values),
    }


def broadcast_shape(m: BroadcastCRModel) -> list[tuple[int, int]]:
    return [(m.X.size, m.A.size), (m.X.size, m.X1.size * m.X2.size)]


def _feasible(v, budget: ConstraintBudget) -> np.ndarray:
    return ((v["D1"] <= budget.D1 + FEAS_TOL) & (v["D2"] <= budget.D2 + FEAS_TOL)
            & (v["cost"] <= budget.cost + FEAS_TOL))


def brute_force_broadcast(m: BroadcastCRModel, budget: ConstraintBudget, weights: Sequence[float],
                          grid: GridSpec) -> OracleResult:
    """Exact lattice minimum of the scalarized broadcast rate; first index wins ties."""
    shape = broadcast_shape(m)
    _check_guard(decision_count(shape, grid.K), grid.guard)
    best, best_idx, best_params, best_vals = np.inf, None, None, None
    seen = 0
    for batch in _index_chunks(shape, grid.K):
        act, rec = (b / grid.K for b in batch)
        v = _broadcast_eval(m, act, rec)
        L = np.stack([v[k] for k in ("Lb", "L1b", "L2b", "L12b")], axis=-1)
        obj = np.where(_feasible(v, budget), lp_scalarize(L, weights), np.inf)
        i = int(np.argmin(obj))
        if obj[i] < best:
            best, best_idx = float(obj[i]), seen + i
            best_params = [act[i], rec[i]]
            best_vals = {k: float(x[i]) for k, x in v.items()}
        seen += act.shape[0]
    if best_idx is None:
        raise EmptyFeasibleSet("no lattice decision meets the budget")
    return OracleResult(best, best_params, best_vals, seen, best_idx)


# --- cascade -----------------------------------------------------------------

def cascade_shape(m: CascadeVendingModel, u_size: int) -> list[tuple[int, int]]:
    return [(m.X.size * m.Y.size, m.X1.size * m.A.size * u_size)]


def _cascade_eval(m: CascadeVendingModel, k: np.ndarray, u_size: int) -> dict[str, np.ndarray]:
    """Direct evaluation of a batch of full kernels [b, x, y, x1, a, u]."""
    nx, ny, n1, na = m.X.size, m.Y.size, m.X1.size, m.A.size
    k = k.reshape(k.shape[0], nx, ny, n1, na, u_size)
    pz = np.transpose(m.vm_channel, (1, 0, 2))  # [y, a, z]
    P = (m.source[None, :, :, None, None, None] * k)[..., None] * pz[None, None, :, None, :, None, :]
    X, Y, X1, A, U, Z = range(6)
    return {
        "R1": _I(P, [X], [X1, A, U], [Y]),
        "R2": _I(P, [X, Y], [A]) + _I(P, [X, Y], [U], [A, Z]),
        "D1": np.einsum("bxyiau,xy,xi->b", k, m.source, m.d1.values),
        "D2": _bayes_d2(P.sum(axis=(2, 3, 4)), m.d2.values),
        "cost": np.einsum("bxyiau,xy,a->b", k, m.source, m.cost.values),
    }


def brute_force_cascade_naive(m: CascadeVendingModel, budget: ConstraintBudget, weights: Sequence[float],
                              grid: GridSpec) -> OracleResult:
    """Stream every lattice kernel; only practical for small K or alphabets."""
    shape = cascade_shape(m, grid.u_size)
    _check_guard(decision_count(shape, grid.K), grid.guard)
    w1, w2 = (float(w) for w in weights)
    best, best_idx, best_params, best_vals = np.inf, None, None, None
    seen = 0
    for (batch,) in _index_chunks(shape, grid.K):
        k = batch / grid.K
        v = _cascade_eval(m, k, grid.u_size)
        obj = np.where(_feasible(v, budget), w1 * v["R1"] + w2 * v["R2"], np.inf)
        i = int(np.argmin(obj))
        if obj[i] < best:
            best, best_idx = float(obj[i]), seen + i
            best_params = [k[i]]
            best_vals = {key: float(x[i]) for key, x in v.items()}
        seen += k.shape[0]
    if best_idx is None:
        raise EmptyFeasibleSet("no lattice decision meets the budget")
    return OracleResult(best, best_params, best_vals, seen, best_idx)


class CascadeOracle:
    """Exact lattice minimum for the cascade model via a y-wise split.

    Write each conditional slice as a lattice pmf over (x1, a, u).  Its
    marginal over (a, u) (the summary) is all that R2, D2 and the cost see,
    while R1 = sum_y p(y) I(X; X1, A, U | Y = y) and D1 split over y.  So:

    * per y, enumerate the slices for every x, and keep, for each pair
      (summary tuple, x1-marginal tuple), the smallest R1 term;
    * enumerate summary tuples across all y once, storing R2, D2 and cost;
    * per query, combine both tables under the D1 budget.

    Ties resolve to the earliest summary tuple and then the earliest slice.
    """

    def __init__(self, m: CascadeVendingModel, grid: GridSpec):
        self.m, self.grid = m, grid
        K, nu = grid.K, grid.u_size
        nx, ny, n1, na = m.X.size, m.Y.size, m.X1.size, m.A.size
        self.dims = (nx, ny, n1, na, nu)
        full = simplex_lattice(n1 * na * nu, K)
        summ = simplex_lattice(na * nu, K)
        marg = simplex_lattice(n1, K)
        C, S, O = len(full), len(summ), len(marg)
        self.S, self.O = S, O
        n_local = ny * C**nx
        n_coupled = S ** (nx * ny)
        _check_guard(n_local + n_coupled, grid.guard)
        self.evaluations = n_local + n_coupled
        self.full, self.summ = full, summ
        f3 = full.reshape(C, n1, na * nu)
        s_key = {tuple(r): i for i, r in enumerate(summ)}
        o_key = {tuple(r): i for i, r in enumerate(marg)}
        s_of = np.array([s_key[tuple(r)] for r in f3.sum(axis=1)])
        o_of = np.array([o_key[tuple(r)] for r in f3.sum(axis=2)])
        # per y tables over (summary tuple over x, marginal tuple over x)
        self.ST, self.OT = S**nx, O**nx
        self.T, self.T_arg, self.D1y = [], [], []
        combos = np.indices((C,) * nx).reshape(nx, -1).T  # slice index per x, x last fastest
        s_tuple = np.ravel_multi_index(tuple(s_of[combos[:, x]] for x in range(nx)), (S,) * nx) if nx else 0
        o_tuple = np.ravel_multi_index(tuple(o_of[combos[:, x]] for x in range(nx)), (O,) * nx)
        key = s_tuple * self.OT + o_tuple
        omarg = np.indices((O,) * nx).reshape(nx, -1).T
        for y in range(ny):
            pxy = m.source[:, y]
            py = float(pxy.sum())
            k = full[combos] / K  # [combo, x, w]
            q = (pxy[None, :, None] * k) / py if py > 0 else k * 0
            r1 = py * _I(q, [0], [1]) if py > 0 else np.zeros(len(combos))
            order = np.lexsort((np.arange(len(key)), r1, key))
            ks = key[order]
            first = np.r_[True, ks[1:] != ks[:-1]]
            tab = np.full(self.ST * self.OT, np.inf)
            arg = np.full(self.ST * self.OT, -1, dtype=np.int64)
            tab[ks[first]] = r1[order][first]
            arg[ks[first]] = order[first]
            self.T.append(tab.reshape(self.ST, self.OT))
            self.T_arg.append(arg.reshape(self.ST, self.OT))
            dist = (marg[omarg] / K * m.d1.values[None]).sum(axis=2)  # [ot, x]
            self.D1y.append((dist * pxy[None]).sum(axis=1))
        self.combos = combos
        self._coupled()

    def _coupled(self):
        m, K = self.m, self.grid.K
        nx, ny, n1, na, nu = self.dims
        total = self.ST**ny
        self.R2 = np.empty(total)
        self.D2 = np.empty(total)
        self.cost = np.empty(total)
        pz = np.transpose(m.vm_channel, (1, 0, 2))  # [y, a, z]
        cells = nx * ny
        for start in range(0, total, CHUNK * 8):
            flat = np.arange(start, min(total, start + CHUNK * 8))
            # digits ordered y-major, then x
            dig = np.unravel_index(flat, (self.S,) * cells)
            s = np.stack([self.summ[d] for d in dig], axis=1) / K  # [b, y*x, a*u]
            s = s.reshape(-1, ny, nx, na, nu).transpose(0, 2, 1, 3, 4)  # [b, x, y, a, u]
            P = (m.source[None, :, :, None, None] * s)[..., None] * pz[None, None, :, :, None, :]
            X, Y, A, U, Z = range(5)
            sl = slice(start, start + len(flat))
            self.R2[sl] = _I(P, [X, Y], [A]) + _I(P, [X, Y], [U], [A, Z])
            self.D2[sl] = _bayes_d2(P.sum(axis=(2, 3)), m.d2.values)
            self.cost[sl] = np.einsum("bxyau,xy,a->b", s, m.source, m.cost.values)

    def query(self, budget: ConstraintBudget, weights: Sequence[float]) -> OracleResult:
        w1, w2 = (float(w) for w in weights)
        nx, ny = self.dims[:2]
        OT, ST = self.OT, self.ST
        # option combos for all but the last y
        pre = np.indices((OT,) * (ny - 1)).reshape(ny - 1, -1).T if ny > 1 else np.zeros((1, 0), dtype=int)
        d_pre = sum((self.D1y[y][pre[:, y]] for y in range(ny - 1)), np.zeros(len(pre)))
        room = budget.D1 + FEAS_TOL - d_pre  # [c]
        ok_last = self.D1y[-1][None, :] <= room[:, None]  # [c, o_last]
        masked = np.where(ok_last[None], self.T[-1][:, None, :], np.inf)  # [s_last, c, o_last]
        G = masked.min(axis=2)
        G_arg = masked.argmin(axis=2)
        feas = (self.D2 <= budget.D2 + FEAS_TOL) & (self.cost <= budget.cost + FEAS_TOL)
        best, best_g, best_c = np.inf, -1, -1
        n_prefix = ST ** (ny - 1)
        for p0 in range(0, n_prefix, 64):
            pidx = np.arange(p0, min(n_prefix, p0 + 64))
            pdig = np.unravel_index(pidx, (ST,) * (ny - 1)) if ny > 1 else ()
            tp = np.zeros((len(pidx), len(pre)))
            for y in range(ny - 1):
                tp = tp + self.T[y][pdig[y]][:, pre[:, y]]
            tot = tp[:, None, :] + G[None, :, :]  # [prefix, s_last, c]
            c_best = tot.argmin(axis=2)
            v1 = np.take_along_axis(tot, c_best[..., None], axis=2)[..., 0]
            g = (pidx[:, None] * ST + np.arange(ST)[None]).ravel()
            v1 = v1.ravel()
            obj = np.where(np.isfinite(v1) & feas[g], w1 * np.where(np.isfinite(v1), v1, 0.0) + w2 * self.R2[g],
                           np.inf)
            i = int(np.argmin(obj))
            if obj[i] < best:
                best, best_g, best_c = float(obj[i]), int(g[i]), int(c_best.ravel()[i])
        if best_g < 0:
            raise EmptyFeasibleSet("no lattice decision meets the budget")
        k = self._witness(best_g, pre[best_c], int(G_arg[best_g % ST, best_c]))
        vals = {key: float(v[0]) for key, v in _cascade_eval(self.m, k[None], self.grid.u_size).items()}
        return OracleResult(best, [k], vals, self.evaluations, best_g)

    def _witness(self, g: int, pre_opts, o_last: int) -> np.ndarray:
        nx, ny, n1, na, nu = self.dims
        st = np.unravel_index(g, (self.ST,) * ny)
        opts = list(pre_opts) + [o_last]
        k = np.zeros((nx, ny, n1 * na * nu))
        for y in range(ny):
            combo = self.combos[self.T_arg[y][st[y], opts[y]]]
            for x in range(nx):
                k[x, y] = self.full[combo[x]] / self.grid.K
        return k.reshape(nx * ny, -1)


_CACHE: dict[tuple[int, GridSpec], tuple[CascadeVendingModel, CascadeOracle]] = {}


def cascade_oracle(m: CascadeVendingModel, grid: GridSpec) -> CascadeOracle:
    """Oracle tables for ``m``, reused across budgets and weights."""
    key = (id(m), grid)
    hit = _CACHE.get(key)
    if hit is not None and hit[0] is m:
        return hit[1]
    if len(_CACHE) >= 8:
        _CACHE.pop(next(iter(_CACHE)))
    orc = CascadeOracle(m, grid)
    _CACHE[key] = (m, orc)
    return orc


def brute_force_min(m, budget: ConstraintBudget, weights: Sequence[float], grid: GridSpec = GridSpec()) -> OracleResult:
    """Exact minimum of the scalarized rate over lattice decisions."""
    if isinstance(m, CascadeVendingModel):
        return cascade_oracle(m, grid).query(budget, weights)
    if isinstance(m, BroadcastCRModel):
        return brute_force_broadcast(m, budget, weights, grid)
    raise TypeError(f"unsupported model {type(m).__name__}")


# --- degeneration and monotonicity battery -----------------------------------

DEGEN_TOL = 1e-3
CASCADE_WEIGHTS = ((1.0, 1.0), (1.0, 0.25), (0.25, 1.0))
BROADCAST_WEIGHTS = ((1.0, 1.0, 1.0), (1.0, 0.25, 0.5), (0.25, 1.0, 0.5))


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class SuiteReport:
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, passed: bool, detail: str) -> None:
        self.checks.append(Check(name, bool(passed), detail))


def _min_or_inf(m, budget, w, grid) -> float:
    try:
        return brute_force_min(m, budget, w, grid).objective
    except EmptyFeasibleSet:
        return float("inf")


def budget_ladder(budget: ConstraintBudget, which: str, top: float, steps: int = 5) -> list[ConstraintBudget]:
    """Budgets from the given value of ``which`` up to ``top`` in equal steps."""
    start = getattr(budget, which)
    vals = np.linspace(start, max(top, start), steps)
    return [ConstraintBudget(**{**budget.as_dict(), which: float(v)}) for v in vals]


def monotone_ladder(m, budget: ConstraintBudget, w, which: str, grid: GridSpec, steps: int = 5):
    """Oracle minima along a ladder in one budget coordinate; (values, nonincreasing?)."""
    top = {"D1": m.d1.d_max, "D2": m.d2.d_max, "cost": m.cost.cost_max}[which]
    vals = [_min_or_inf(m, b, w, grid) for b in budget_ladder(budget, which, top, steps)]
    ok = all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    return vals, ok


def degeneracy_suite(family: str, seeds: Sequence[int] = (0, 1, 2), grid: GridSpec = GridSpec(),
                     weights=None) -> SuiteReport:
    """Action-free reductions, loose-budget zeros and budget ladders on random binary instances."""
    from .instances import loose_budget, random_broadcast, random_cascade

    if family not in ("cascade", "broadcast"):
        raise ValueError(f"unknown family {family!r}")
    make = random_cascade if family == "cascade" else random_broadcast
    if weights is None:
        weights = CASCADE_WEIGHTS if family == "cascade" else BROADCAST_WEIGHTS
    rep = SuiteReport()
    for s in seeds:
        m, b = make(s, action_free=True)
        small = m.restrict_actions([0])
        for w in weights:
            full = _min_or_inf(m, b, w, grid)
            one = _min_or_inf(small, b, w, grid)
            gap = one - full if np.isfinite(one) or np.isfinite(full) else 0.0
            rep.add(f"single action suffices (seed {s}, w={w})", abs(gap) <= DEGEN_TOL,
                    f"full {full:.9g}, |A|=1 {one:.9g}, gap {gap:.3g}")
        for w in weights[:1]:
            zero = _min_or_inf(m, loose_budget(m), w, grid)
            rep.add(f"loose budget gives zero (seed {s})", abs(zero) <= 1e-12, f"minimum {zero:.3g}")
        m, b = make(s)
        for which in ("D1", "D2", "cost"):
            vals, ok = monotone_ladder(m, b, weights[0], which, grid)
            rep.add(f"nonincreasing in {which} (seed {s})", ok, " ".join(f"{v:.6g}" for v in vals))
    return rep
