"""Multi-start local search over products of probability simplices.

A decision is a list of row-stochastic blocks ``(cells, outcomes)``.  All
restarts are advanced together as one batch; every batch element evolves
independently, so splitting restarts across workers does not change results.

Two modes share the same problem interface:

* continuous: projected gradient with Armijo backtracking, quadratic penalty
  on budget violations ramped by ``penalty_growth`` per round, a feasibility
  filter that remembers the best feasible iterate, and a segment repair that
  pulls the last iterate back into the feasible set;
* lattice (``SearchConfig.lattice = K``): hill climbing over kernels whose
  entries are multiples of 1/K, moving one unit of mass at a time, with random
  kicks.  This searches exactly the set the grid oracle enumerates.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from ._info import project_rows

FEAS_TOL = 1e-12
WORKERS_ENV = "CASCADE_VM_WORKERS"


class NoFeasiblePoint(RuntimeError):
    """No decision meeting the budget was found at the search resolution."""


@dataclass(frozen=True)
class SearchConfig:
    restarts: int = 32
    rounds: int = 4
    max_iter: int = 300
    patience: int = 50
    tol: float = 1e-9
    seed: int = 0
    u_size: int | None = None
    penalty: float = 10.0
    penalty_growth: float = 10.0
    lattice: int | None = None
    kicks: int = 12
    kick_moves: int = 3
    warm_lattice: int | None = 4
    warm_restarts: int = 8
    workers: int | None = None

    def __post_init__(self):
        if self.restarts < 1 or self.rounds < 1 or self.max_iter < 1:
            raise ValueError("restarts, rounds and max_iter must be positive")
        for name in ("lattice", "warm_lattice"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.u_size is not None and self.u_size < 1:
            raise ValueError("u_size must be positive")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def resolved_workers(self) -> int:
        env = os.environ.get(WORKERS_ENV)
        if env:
            return max(1, int(env))
        return self.workers or 1


class SimplexProblem:
    """Interface the search needs from a model.

    ``quantities`` maps a batch of decisions to named scalars; ``gradient``
    returns d(sum_q coeffs[q] * q)/d(block) for every block.
    """

    blocks: tuple[tuple[int, int], ...] = ()
    constraint_names: tuple[str, ...] = ("D1", "D2", "cost")

    def quantities(self, params: Sequence[np.ndarray]) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def gradient(self, params: Sequence[np.ndarray], coeffs: Mapping[str, np.ndarray]) -> list[np.ndarray]:
        raise NotImplementedError


class Objective:
    """Scalar objective over the quantity dict; subclasses define ``__call__``."""

    names: tuple[str, ...] = ()

    def __call__(self, q: Mapping[str, np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def partials(self, q: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        """d objective / d q[name], by central differences unless overridden."""
        out = {}
        h = 1e-7
        for name in self.names:
            up, dn = dict(q), dict(q)
            up[name] = q[name] + h
            dn[name] = q[name] - h
            out[name] = (self(up) - self(dn)) / (2 * h)
        return out


class Linear(Objective):
    def __init__(self, weights: Mapping[str, float]):
        self.weights = dict(weights)
        self.names = tuple(self.weights)

    def __call__(self, q):
        out = 0.0
        for k, w in self.weights.items():
            out = out + w * q[k]
        return np.asarray(out, dtype=float)

    def partials(self, q):
        n = np.shape(q[self.names[0]])
        return {k: np.full(n, w) for k, w in self.weights.items()}


class Excess(Objective):
    """Total amount by which named quantities exceed their targets."""

    def __init__(self, targets: Mapping[str, float]):
        self.targets = dict(targets)
        self.names = tuple(self.targets)

    def __call__(self, q):
        out = 0.0
        for k, t in self.targets.items():
            out = out + np.maximum(q[k] - t, 0.0)
        return np.asarray(out, dtype=float)


@dataclass
class Outcome:
    params: list[np.ndarray]
    objective: float
    quantities: dict[str, float]
    restart: int
    seed: int
    evaluations: int = 0
    per_restart: list[float] = field(default_factory=list)


def witness_hash(params: Sequence[np.ndarray]) -> str:
    h = hashlib.sha256()
    for p in params:
        h.update(np.ascontiguousarray(np.round(np.asarray(p, dtype=float), 12)).tobytes())
    return h.hexdigest()[:16]


def _slice(params, idx):
    return [p[idx] for p in params]


def _violation(q, bounds, margin=0.0):
    v = 0.0
    for k, b in bounds.items():
        v = v + np.maximum(q[k] - b + margin, 0.0)
    return np.asarray(v, dtype=float)


def _feasible(q, bounds):
    ok = True
    for k, b in bounds.items():
        ok = ok & (q[k] <= b + FEAS_TOL)
    return np.asarray(ok)


class _Continuous:
    def __init__(self, problem: SimplexProblem, objective: Objective, bounds: Mapping[str, float],
                 cfg: SearchConfig):
        self.P = problem
        self.obj = objective
        self.bounds = dict(bounds)
        self.cfg = cfg
        self.evals = 0

    def _q(self, x):
        self.evals += x[0].shape[0]
        return self.P.quantities(x)

    def _F(self, q, mu, w, margin):
        pen = 0.0
        for k, b in self.bounds.items():
            pen = pen + np.maximum(q[k] - b + margin, 0.0) ** 2
        base = self.obj(q) if w else 0.0
        return w * np.asarray(base) + mu * pen

    def _partials(self, q, mu, w, margin):
        coeffs = {}
        if w:
            coeffs = {k: w * v for k, v in self.obj.partials(q).items()}
        for k, b in self.bounds.items():
            coeffs[k] = coeffs.get(k, 0.0) + 2 * mu * np.maximum(q[k] - b + margin, 0.0)
        return coeffs

    def _track(self, x, q, best, idx=None):
        """Record iterates that are feasible and beat the stored best."""
        if idx is None:
            idx = np.arange(x[0].shape[0])
        feas = _feasible(q, self.bounds)
        val = self.obj(q)
        better = feas & (val < best["obj"][idx])
        sel = idx[better]
        best["obj"][sel] = val[better]
        for bi, blk in enumerate(x):
            best["x"][bi][sel] = blk[better]

    def descend(self, x, mu, w, margin, best):
        cfg = self.cfg
        B = x[0].shape[0]
        x = [b.copy() for b in x]
        step = np.ones(B)
        q = self._q(x)
        F = self._F(q, mu, w, margin)
        if best is not None:
            self._track(x, q, best)
        history = [F.copy()]
        active = np.ones(B, dtype=bool)
        for it in range(cfg.max_iter):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            xa = _slice(x, idx)
            qa = {k: v[idx] for k, v in q.items()}
            g = self.P.gradient(xa, self._partials(qa, mu, w, margin))
            t = step[idx].copy()
            Fa = F[idx]
            accepted = np.zeros(idx.size, dtype=bool)
            new_x = [b.copy() for b in xa]
            new_F = Fa.copy()
            new_q = {k: v.copy() for k, v in qa.items()}
            for _ in range(40):
                pend = np.flatnonzero(~accepted)
                if pend.size == 0:
                    break
                cand = [project_rows(b[pend] - t[pend, None, None] * gb[pend]) for b, gb in zip(xa, g)]
                dec = sum((gb[pend] * (b[pend] - c)).sum(axis=(1, 2)) for b, gb, c in zip(xa, g, cand))
                cq = self._q(cand)
                cF = self._F(cq, mu, w, margin)
                ok = (cF <= Fa[pend] - 1e-4 * dec) & (dec > 0)
                for j in np.flatnonzero(ok):
                    r = pend[j]
                    for bi in range(len(x)):
                        new_x[bi][r] = cand[bi][j]
                    new_F[r] = cF[j]
                    for k in new_q:
                        new_q[k][r] = cq[k][j]
                accepted[pend[ok]] = True
                t[pend[~ok]] *= 0.5
                # a vanishing step means a stationary point
                t[pend[~ok & (dec <= 1e-18)]] = 0.0
                if np.all(accepted | (t < 1e-14)):
                    break
            for bi in range(len(x)):
                x[bi][idx] = new_x[bi]
            F[idx] = new_F
            for k in q:
                q[k][idx] = new_q[k]
            step[idx] = np.where(accepted, np.minimum(t * 2.0, 1e4), t)
            stuck = ~accepted
            if best is not None:
                self._track(new_x, new_q, best, idx)
            history.append(F.copy())
            if len(history) > cfg.patience:
                stalled = history[-cfg.patience - 1] - F < cfg.tol
                active &= ~stalled
            active[idx[stuck]] = False
        return x

    def repair(self, x, best):
        """Move each infeasible iterate toward its best feasible point."""
        q = self._q(x)
        feas = _feasible(q, self.bounds)
        todo = np.flatnonzero(~feas & np.isfinite(best["obj"]))
        if todo.size == 0:
            self._track(x, q, best)
            return
        a = _slice(x, todo)
        b = [bx[todo] for bx in best["x"]]
        grid = np.linspace(0.0, 1.0, 33)[1:]
        hi = np.ones(todo.size)
        for tval in grid[::-1]:
            pts = [(1 - tval) * u + tval * v for u, v in zip(a, b)]
            ok = _feasible(self._q(pts), self.bounds)
            hi = np.where(ok, tval, hi)
        lo = np.maximum(hi - 1.0 / 32, 0.0)
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            pts = [(1 - mid[:, None, None]) * u + mid[:, None, None] * v for u, v in zip(a, b)]
            ok = _feasible(self._q(pts), self.bounds)
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        pts = [(1 - hi[:, None, None]) * u + hi[:, None, None] * v for u, v in zip(a, b)]
        self._track(pts, self._q(pts), best, todo)
        self._track(x, q, best)


def random_starts(rng: np.random.Generator, blocks, n: int) -> list[np.ndarray]:
    """Half flat Dirichlet(1) rows, half sparse Dirichlet(0.2) rows."""
    alphas = np.where(np.arange(n) % 2 == 0, 1.0, 0.2)
    out = []
    for cells, outs in blocks:
        g = rng.gamma(np.broadcast_to(alphas[:, None, None], (n, cells, outs)))
        g = np.maximum(g, 1e-300)
        out.append(g / g.sum(axis=2, keepdims=True))
    return out


def _run_continuous(problem, objective, bounds, cfg, starts, first_index):
    eng = _Continuous(problem, objective, bounds, cfg)
    B = starts[0].shape[0]
    best = {"obj": np.full(B, np.inf), "x": [np.array(s, copy=True) for s in starts]}
    # feasibility phase: provides anchors for the repair step
    anchors = eng.descend(starts, 1.0, 0.0, 1e-6, None)
    eng._track(anchors, eng._q(anchors), best)
    x = [s.copy() for s in starts]
    mu = cfg.penalty
    for _ in range(cfg.rounds):
        x = eng.descend(x, mu, 1.0, 0.0, best)
        eng.repair(x, best)
        mu *= cfg.penalty_growth
    return best, eng.evals, first_index


def _chunks(n: int, workers: int) -> list[tuple[int, int]]:
    size = -(-n // workers)
    return [(i, min(n, i + size)) for i in range(0, n, size)]


def minimize(problem: SimplexProblem, objective: Objective, bounds: Mapping[str, float],
             cfg: SearchConfig, extra_starts: Sequence[Sequence[np.ndarray]] = ()) -> Outcome:
    """Best feasible decision over all restarts; raises NoFeasiblePoint."""
    if cfg.lattice:
        return minimize_lattice(problem, objective, bounds, cfg, extra_starts)
    extra_starts = list(extra_starts)
    if cfg.warm_lattice:
        # a short lattice climb finds basins that gradient steps rarely reach
        warm = replace(cfg, lattice=cfg.warm_lattice, restarts=min(cfg.restarts, cfg.warm_restarts))
        try:
            extra_starts.append(minimize_lattice(problem, objective, bounds, warm, extra_starts).params)
        except NoFeasiblePoint:
            pass
    rng = np.random.default_rng(cfg.seed)
    starts = random_starts(rng, problem.blocks, cfg.restarts)
    for k, st in enumerate(extra_starts[: cfg.restarts]):
        for bi, blk in enumerate(st):
            starts[bi][k] = blk
    workers = min(cfg.resolved_workers(), cfg.restarts)
    parts = _chunks(cfg.restarts, workers)
    jobs = [(problem, objective, bounds, cfg, [s[a:b] for s in starts], a) for a, b in parts]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_star_continuous, jobs))
    else:
        results = [_run_continuous(*job) for job in jobs]
    objs = np.concatenate([r[0]["obj"] for r in results])
    xs = [np.concatenate([r[0]["x"][bi] for r in results]) for bi in range(len(problem.blocks))]
    evals = sum(r[1] for r in results)
    return _pick(problem, objective, objs, xs, cfg, evals)


def _star_continuous(job):
    return _run_continuous(*job)


def _pick(problem, objective, objs, xs, cfg, evals) -> Outcome:
    if not np.any(np.isfinite(objs)):
        raise NoFeasiblePoint("no feasible decision found at this search resolution")
    order = np.lexsort((np.arange(objs.size), objs))
    r = int(order[0])
    params = [x[r] for x in xs]
    q = problem.quantities([p[None] for p in params])
    qd = {k: float(v[0]) for k, v in q.items()}
    return Outcome(params, float(objective({k: v for k, v in q.items()})[0]), qd, r, cfg.seed, evals,
                   [float(v) for v in objs])


# --- lattice mode -------------------------------------------------------------

def _moves(blocks):
    """Single-unit moves within a cell, plus whole-column merges and swaps.

    Column moves relabel an outcome in every cell at once, which single-unit
    moves can only do by passing through worse points.
    """
    mv = []
    for bi, (cells, outs) in enumerate(blocks):
        for c in range(cells):
            for i in range(outs):
                for j in range(outs):
                    if i != j:
                        mv.append(("unit", bi, c, i, j))
        for i in range(outs):
            for j in range(outs):
                if i != j:
                    mv.append(("merge", bi, None, i, j))
                    if i < j:
                        mv.append(("swap", bi, None, i, j))
    return mv


def _apply(counts, move):
    """Apply one move to a batch of count blocks; returns (new counts, valid mask)."""
    kind, bi, c, i, j = move
    out = list(counts)
    blk = counts[bi].copy()
    if kind == "unit":
        valid = blk[:, c, i] > 0
        blk[valid, c, i] -= 1
        blk[valid, c, j] += 1
    elif kind == "merge":
        valid = blk[:, :, i].sum(axis=1) > 0
        blk[:, :, j] += blk[:, :, i]
        blk[:, :, i] = 0
    else:
        valid = np.any(blk[:, :, i] != blk[:, :, j], axis=1)
        blk[:, :, [i, j]] = blk[:, :, [j, i]]
    out[bi] = blk
    return out, valid


def random_lattice(rng: np.random.Generator, blocks, n: int, K: int) -> list[np.ndarray]:
    out = []
    for cells, outs in blocks:
        arr = np.empty((n, cells, outs), dtype=np.int64)
        for r in range(n):
            alpha = 1.0 if r % 2 == 0 else 0.3
            for c in range(cells):
                arr[r, c] = rng.multinomial(K, rng.dirichlet(np.full(outs, alpha)))
        out.append(arr)
    return out


class _Lattice:
    BIG = 1e6

    def __init__(self, problem, objective, bounds, cfg):
        self.P = problem
        self.obj = objective
        self.bounds = dict(bounds)
        self.K = cfg.lattice
        self.cfg = cfg
        self.moves = _moves(problem.blocks)
        self.evals = 0

    def score(self, counts):
        x = [c / self.K for c in counts]
        self.evals += x[0].shape[0]
        q = self.P.quantities(x)
        viol = _violation(q, self.bounds)
        feas = _feasible(q, self.bounds)
        return np.where(feas, self.obj(q), self.BIG + viol)

    def neighbours(self, counts):
        """Every move applied to every batch element; invalid moves are flagged."""
        B = counts[0].shape[0]
        M = len(self.moves)
        nb = [np.empty((B, M) + c.shape[1:], dtype=c.dtype) for c in counts]
        valid = np.empty((B, M), dtype=bool)
        for m, mv in enumerate(self.moves):
            new, ok = _apply(counts, mv)
            for bi in range(len(counts)):
                nb[bi][:, m] = new[bi]
            valid[:, m] = ok
        return nb, valid

    def climb(self, counts, cur):
        counts = [c.copy() for c in counts]
        cur = cur.copy()
        active = np.ones(cur.size, dtype=bool)
        while active.any():
            idx = np.flatnonzero(active)
            sub = [c[idx] for c in counts]
            nb, valid = self.neighbours(sub)
            M = valid.shape[1]
            flat = [a.reshape((-1,) + a.shape[2:]) for a in nb]
            s = self.score(flat).reshape(idx.size, M)
            s = np.where(valid, s, np.inf)
            best = np.argmin(s, axis=1)
            bs = s[np.arange(idx.size), best]
            improve = bs < cur[idx] - 1e-12
            for r_local in np.flatnonzero(improve):
                r = idx[r_local]
                for bi in range(len(counts)):
                    counts[bi][r] = nb[bi][r_local, best[r_local]]
                cur[r] = bs[r_local]
            active[idx[~improve]] = False
        return counts, cur

    def kick(self, counts, rngs):
        counts = [c.copy() for c in counts]
        units = [mv for mv in self.moves if mv[0] == "unit"]
        for r, rng in enumerate(rngs):
            for _ in range(self.cfg.kick_moves):
                _, bi, c, i, j = units[rng.integers(len(units))]
                if counts[bi][r, c, i] > 0:
                    counts[bi][r, c, i] -= 1
                    counts[bi][r, c, j] += 1
        return counts


def _run_lattice(problem, objective, bounds, cfg, starts, first_index):
    eng = _Lattice(problem, objective, bounds, cfg)
    B = starts[0].shape[0]
    rngs = [np.random.default_rng([cfg.seed, first_index + r, 1]) for r in range(B)]
    counts, cur = eng.climb(starts, eng.score(starts))
    for _ in range(cfg.kicks):
        trial = eng.kick(counts, rngs)
        trial, ts = eng.climb(trial, eng.score(trial))
        better = ts < cur - 1e-12
        for bi in range(len(counts)):
            counts[bi][better] = trial[bi][better]
        cur = np.where(better, ts, cur)
    objs = np.where(cur < eng.BIG, cur, np.inf)
    return objs, counts, eng.evals


def minimize_lattice(problem: SimplexProblem, objective: Objective, bounds: Mapping[str, float],
                     cfg: SearchConfig, extra_starts: Sequence[Sequence[np.ndarray]] = ()) -> Outcome:
    K = cfg.lattice
    rng = np.random.default_rng(cfg.seed)
    starts = random_lattice(rng, problem.blocks, cfg.restarts, K)
    for k, st in enumerate(extra_starts[: cfg.restarts]):
        for bi, blk in enumerate(st):
            starts[bi][k] = np.rint(np.asarray(blk) * K).astype(np.int64)
    workers = min(cfg.resolved_workers(), cfg.restarts)
    parts = _chunks(cfg.restarts, workers)
    jobs = [(problem, objective, bounds, cfg, [s[a:b] for s in starts], a) for a, b in parts]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_star_lattice, jobs))
    else:
        results = [_run_lattice(*job) for job in jobs]
    objs = np.concatenate([r[0] for r in results])
    xs = [np.concatenate([r[1][bi] for r in results]) / K for bi in range(len(problem.blocks))]
    return _pick(problem, objective, objs, xs, cfg, sum(r[2] for r in results))


def _star_lattice(job):
    return _run_lattice(*job)


def with_seed(cfg: SearchConfig, seed: int) -> SearchConfig:
    return replace(cfg, seed=seed)

