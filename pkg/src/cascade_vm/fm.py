"""Exact Fourier-Motzkin elimination over rate variables and entropy coordinates.

Information quantities are stored as rational vectors in the joint-entropy
basis: one coordinate per nonempty subset of the random variables.  Chain-rule
identities are then plain vector equalities, so combined terms produced by an
elimination step are recognised without any rewriting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

VARIABLES = ("X", "Y", "A", "X1", "X2")
RATES = ("R1", "R2", "Rb")
SPLITS = ("r0b", "r0d", "r1b", "r1d", "r2b", "r2d")


class EntropyBasis:
    """Joint-entropy coordinates over a fixed, ordered variable set.

    Coordinate ``m - 1`` holds H of the subset encoded by bitmask ``m``.
    """

    def __init__(self, variables: Sequence[str] = VARIABLES):
        if len(set(variables)) != len(variables):
            raise ValueError("duplicate variable labels")
        self.variables = tuple(variables)
        self.dim = 2 ** len(self.variables) - 1

    def mask(self, labels: Iterable[str]) -> int:
        m = 0
        for lab in labels:
            try:
                m |= 1 << self.variables.index(lab)
            except ValueError:
                raise KeyError(f"unknown variable {lab!r}") from None
        return m

    def subset(self, mask: int) -> tuple[str, ...]:
        return tuple(v for i, v in enumerate(self.variables) if mask >> i & 1)

    def _unit(self, mask: int) -> list[Fraction]:
        vec = [Fraction(0)] * self.dim
        if mask:
            vec[mask - 1] = Fraction(1)
        return vec

    def H(self, target: Iterable[str], given: Iterable[str] = ()) -> tuple[Fraction, ...]:
        """H(target | given) = H(target, given) - H(given)."""
        t, g = self.mask(target), self.mask(given)
        if not t:
            raise ValueError("empty target")
        vec = self._unit(t | g)
        if g:
            vec[g - 1] -= 1
        return tuple(vec)

    def I(self, a: Iterable[str], b: Iterable[str], given: Iterable[str] = ()) -> tuple[Fraction, ...]:
        """I(a; b | given) = H(a,g) + H(b,g) - H(a,b,g) - H(g)."""
        ma, mb, mg = self.mask(a), self.mask(b), self.mask(given)
        if not ma or not mb:
            raise ValueError("empty argument")
        if ma & mb or ma & mg or mb & mg:
            raise ValueError("arguments must be disjoint")
        vec = [Fraction(0)] * self.dim
        vec[(ma | mg) - 1] += 1
        vec[(mb | mg) - 1] += 1
        vec[(ma | mb | mg) - 1] -= 1
        if mg:
            vec[mg - 1] -= 1
        return tuple(vec)

    def numeric(self, pmf: np.ndarray) -> np.ndarray:
        """All joint entropies (bits) of a pmf whose axes follow ``variables``.

        ``pmf`` may carry leading batch axes; the result has shape
        ``batch + (dim,)``.
        """
        n = len(self.variables)
        batch = pmf.ndim - n
        out = np.empty(pmf.shape[:batch] + (self.dim,))
        for m in range(1, self.dim + 1):
            drop = tuple(batch + i for i in range(n) if not m >> i & 1)
            marg = pmf.sum(axis=drop) if drop else pmf
            flat = marg.reshape(marg.shape[:batch] + (-1,))
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = np.where(flat > 0, -flat * np.log2(np.where(flat > 0, flat, 1.0)), 0.0)
            out[..., m - 1] = terms.sum(axis=-1)
        return out


BASIS = EntropyBasis()


def parse_atom(text: str, basis: EntropyBasis = BASIS) -> tuple[Fraction, ...]:
    """Expand ``H(S|G)`` or ``I(S;T|G)`` written with comma-separated labels."""
    text = text.replace(" ", "")
    if not text.endswith(")") or text[1] != "(" or text[0] not in "HI":
        raise ValueError(f"cannot parse {text!r}")
    body = text[2:-1]
    body, _, given = body.partition("|")
    split = lambda s: [t for t in s.split(",") if t]  # noqa: E731
    if text[0] == "H":
        return basis.H(split(body), split(given))
    a, sep, b = body.partition(";")
    if not sep:
        raise ValueError(f"mutual information needs ';' in {text!r}")
    return basis.I(split(a), split(b), split(given))


def expand_atom(text: str, basis: EntropyBasis = BASIS) -> tuple[Fraction, ...]:
    return parse_atom(text, basis)


@dataclass(frozen=True)
class LinIneq:
    """``sum(rates) + entropy . h >= 0`` with exact rational coefficients.

    ``rates`` is a sorted tuple of ``(variable, coefficient)`` pairs with
    nonzero coefficients only.
    """

    rates: tuple[tuple[str, Fraction], ...]
    entropy: tuple[Fraction, ...]

    @classmethod
    def build(cls, rates: Mapping[str, object], entropy: Sequence[object]) -> "LinIneq":
        r = tuple(sorted((k, Fraction(v)) for k, v in rates.items() if Fraction(v) != 0))
        return cls(r, tuple(Fraction(e) for e in entropy))

    def coef(self, var: str) -> Fraction:
        for k, v in self.rates:
            if k == var:
                return v
        return Fraction(0)

    def scaled(self, s: Fraction) -> "LinIneq":
        return LinIneq(tuple((k, v * s) for k, v in self.rates), tuple(e * s for e in self.entropy))

    def __add__(self, other: "LinIneq") -> "LinIneq":
        acc: dict[str, Fraction] = dict(self.rates)
        for k, v in other.rates:
            acc[k] = acc.get(k, Fraction(0)) + v
        ent = tuple(a + b for a, b in zip(self.entropy, other.entropy))
        return LinIneq.build(acc, ent)

    def canonical(self) -> "LinIneq":
        """Scale by a positive factor so the coefficients are coprime integers."""
        coeffs = [v for _, v in self.rates] + [e for e in self.entropy if e != 0]
        if not coeffs:
            return self
        lcm = 1
        for c in coeffs:
            lcm = lcm * c.denominator // math.gcd(lcm, c.denominator)
        g = 0
        for c in coeffs:
            g = math.gcd(g, abs(c.numerator * (lcm // c.denominator)))
        return self.scaled(Fraction(lcm, g))

    def is_zero(self) -> bool:
        return not self.rates and all(e == 0 for e in self.entropy)


@dataclass(frozen=True)
class IneqSystem:
    inequalities: tuple[LinIneq, ...]
    variables: tuple[str, ...]
    nonneg: frozenset[str] = field(default_factory=frozenset)
    atoms: tuple[tuple[str, tuple[Fraction, ...]], ...] = ()

    def sort_key(self, q: LinIneq):
        return (tuple(-q.coef(v) for v in self.variables), tuple(-e for e in q.entropy))

    def normalized(self) -> "IneqSystem":
        """Canonicalize, drop trivial rows, dedupe and order deterministically."""
        seen = {}
        for q in self.inequalities:
            c = q.canonical()
            if c.is_zero():
                continue
            seen.setdefault(c, None)
        rows = tuple(sorted(seen, key=self.sort_key))
        return IneqSystem(rows, self.variables, self.nonneg, self.atoms)

    def with_rows(self, rows: Iterable[LinIneq]) -> "IneqSystem":
        return IneqSystem(tuple(rows), self.variables, self.nonneg, self.atoms).normalized()

    def __len__(self) -> int:
        return len(self.inequalities)


def eliminate(system: IneqSystem, var: str) -> IneqSystem:
    """One Fourier-Motzkin step removing ``var``."""
    pos, neg, zero = [], [], []
    for q in system.inequalities:
        c = q.coef(var)
        (pos if c > 0 else neg if c < 0 else zero).append(q)
    rows = list(zero)
    for p in pos:
        cp = p.coef(var)
        for n in neg:
            cn = -n.coef(var)
            rows.append(p.scaled(cn) + n.scaled(cp))
    variables = tuple(v for v in system.variables if v != var)
    out = IneqSystem(tuple(rows), variables, system.nonneg - {var}, system.atoms)
    return out.normalized()


def _solve_in_atoms(vec: Sequence[Fraction], atoms: Sequence[Sequence[Fraction]]) -> list[Fraction] | None:
    """Exact coefficients expressing ``vec`` in the span of ``atoms``, or None."""
    m = len(atoms)
    if m == 0:
        return [] if all(v == 0 for v in vec) else None
    rows = [[Fraction(atoms[j][i]) for j in range(m)] + [Fraction(vec[i])] for i in range(len(vec))]
    pivots = []
    r = 0
    for col in range(m):
        piv = next((i for i in range(r, len(rows)) if rows[i][col] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = 1 / rows[r][col]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][col] != 0:
                f = rows[i][col]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        pivots.append(col)
        r += 1
    if any(row[m] != 0 for row in rows[r:]):
        return None
    sol = [Fraction(0)] * m
    for i, col in enumerate(pivots):
        sol[col] = rows[i][m]
    return sol


def _lambda_range(h: LinIneq, g: LinIneq, system: IneqSystem) -> tuple[Fraction, Fraction | None] | None:
    """Interval of multipliers l >= 0 making ``h - l*g`` a nonneg combination
    of nonneg variables and atoms; None when no such l exists."""
    atom_vecs = [v for _, v in system.atoms]
    hs = _solve_in_atoms(h.entropy, atom_vecs)
    gs = _solve_in_atoms(g.entropy, atom_vecs) if g is not None else [Fraction(0)] * len(atom_vecs)
    if hs is None or gs is None:
        return None
    lo, hi = Fraction(0), None
    pairs = [(h.coef(v), g.coef(v) if g is not None else Fraction(0), v in system.nonneg) for v in system.variables]
    pairs += [(a, b, True) for a, b in zip(hs, gs)]
    for hc, gc, nonneg in pairs:
        # need hc - l*gc >= 0 (nonneg coordinate) or == 0 (free coordinate)
        if not nonneg:
            if gc == 0:
                if hc != 0:
                    return None
                continue
            val = hc / gc
            if val < lo or (hi is not None and val > hi):
                return None
            lo = hi = val
            continue
        if gc > 0:
            bound = hc / gc
            hi = bound if hi is None else min(hi, bound)
        elif gc < 0:
            lo = max(lo, hc / gc)
        elif hc < 0:
            return None
    if hi is not None and hi < lo:
        return None
    return lo, hi


def implied_by(h: LinIneq, g: LinIneq | None, system: IneqSystem) -> bool:
    """True when ``g >= 0`` (or nothing, for ``g=None``) implies ``h >= 0``
    through a positive scaling plus nonnegative variables and atoms."""
    if g is None:
        rng = _lambda_range(h, None, system)
        return rng is not None
    rng = _lambda_range(h, g, system)
    if rng is None:
        return False
    lo, hi = rng
    return hi is None or hi > 0 or lo > 0


def _combination_certificate(h: LinIneq, others: Sequence[LinIneq], system: IneqSystem) -> bool:
    """True when ``h`` is a nonnegative combination of ``others`` plus
    nonnegative variables and atoms.

    The LP only proposes multipliers; they are rationalized and the residual
    is re-checked in exact arithmetic, so a float glitch can never prune a
    non-implied row.
    """
    if not others:
        return False
    coords = [("v", v) for v in system.variables] + [("e", i) for i in range(len(h.entropy))]

    def column(q: LinIneq) -> list[float]:
        return [float(q.coef(k)) if kind == "v" else float(q.entropy[k]) for kind, k in coords]

    cols = [column(g) for g in others]
    for v in sorted(system.nonneg):
        cols.append([1.0 if (kind, k) == ("v", v) else 0.0 for kind, k in coords])
    for _, vec in system.atoms:
        cols.append([0.0 if kind == "v" else float(vec[k]) for kind, k in coords])
    A = np.array(cols).T
    b = np.array(column(h))
    res = linprog(np.zeros(A.shape[1]), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res.status != 0:
        return False
    residual = h
    for g, lam in zip(others, res.x[: len(others)]):
        lam = Fraction(float(lam)).limit_denominator(1000)
        if lam:
            residual = residual + g.scaled(-lam)
    return implied_by(residual, None, system)


def prune_redundant(system: IneqSystem) -> IneqSystem:
    """Drop rows implied by the remaining ones.

    Removes duplicates, rows implied by nonnegative variables and atoms alone,
    rows dominated by a positive multiple of a single other row, and finally
    rows that are certified nonnegative combinations of the rest.  Conservative:
    never removes a non-implied row.
    """
    rows = [q for q in system.normalized().inequalities if not implied_by(q, None, system)]
    keep: list[LinIneq] = []
    for i, h in enumerate(rows):
        dominated = False
        for j, g in enumerate(rows):
            if i == j or not implied_by(h, g, system):
                continue
            # mutual implication: keep the earliest representative only
            if implied_by(g, h, system) and i < j:
                continue
            dominated = True
            break
        if not dominated:
            keep.append(h)
    changed = True
    while changed:
        changed = False
        for h in sorted(keep, key=system.sort_key, reverse=True):
            others = [g for g in keep if g is not h]
            if _combination_certificate(h, others, system):
                keep.remove(h)
                changed = True
                break
    return system.with_rows(keep)


def project(system: IneqSystem, order: Sequence[str]) -> tuple[IneqSystem, IneqSystem]:
    """Eliminate ``order`` in sequence; return (raw, pruned) projections."""
    cur = system
    for var in order:
        cur = eliminate(cur, var)
    return cur, prune_redundant(cur)


# --- the cascade-broadcast rate-split instance ------------------------------

ATOM_NAMES = ("I(X;A)", "I(X;X2|A)", "I(X;X2|A,Y)", "I(X;X1|A,Y,X2)")


def broadcast_atoms(basis: EntropyBasis = BASIS) -> tuple[tuple[str, tuple[Fraction, ...]], ...]:
    return tuple((name, parse_atom(name, basis)) for name in ATOM_NAMES)


def _ineq(rates: Mapping[str, int], atom: str | None = None, basis: EntropyBasis = BASIS) -> LinIneq:
    ent = [Fraction(0)] * basis.dim
    if atom is not None:
        ent = [-x for x in parse_atom(atom, basis)]
    return LinIneq.build(rates, ent)


def rate_split_system(nonneg: Iterable[str] = SPLITS, basis: EntropyBasis = BASIS) -> IneqSystem:
    """The six rate-split inequalities plus ``r >= 0`` for each split in ``nonneg``."""
    nonneg = frozenset(nonneg)
    unknown = nonneg - set(SPLITS)
    if unknown:
        raise KeyError(f"unknown split variables {sorted(unknown)}")
    rows = [
        _ineq({"r0b": 1, "r0d": 1, "r2b": 1}, "I(X;X2|A)", basis),
        _ineq({"r2b": 1, "r2d": 1}, "I(X;X2|A,Y)", basis),
        _ineq({"r1b": 1, "r1d": 1}, "I(X;X1|A,Y,X2)", basis),
        _ineq({"R1": 1, "r1d": -1, "r2d": -1}, None, basis),
        _ineq({"R2": 1, "r0d": -1}, None, basis),
        _ineq({"Rb": 1, "r1b": -1, "r2b": -1, "r0b": -1}, "I(X;A)", basis),
    ]
    rows += [_ineq({v: 1}, None, basis) for v in SPLITS if v in nonneg]
    return IneqSystem(
        tuple(rows), RATES + SPLITS, frozenset(RATES) | nonneg, broadcast_atoms(basis)
    ).normalized()


def golden_broadcast(basis: EntropyBasis = BASIS) -> IneqSystem:
    """The four-inequality target region, entered by hand."""
    def row(rates, *atoms):
        ent = [Fraction(0)] * basis.dim
        for a in atoms:
            ent = [e - x for e, x in zip(ent, parse_atom(a, basis))]
        return LinIneq.build(rates, ent)

    rows = [
        row({"Rb": 1}, "I(X;A)"),
        row({"R1": 1, "Rb": 1}, "I(X;A)", "I(X;X1,X2|A,Y)"),
        row({"R2": 1, "Rb": 1}, "I(X;A)", "I(X;X2|A)"),
        row({"R1": 1, "R2": 1, "Rb": 1}, "I(X;A)", "I(X;X2|A)", "I(X;X1|A,Y,X2)"),
    ]
    return IneqSystem(tuple(rows), RATES, frozenset(RATES), broadcast_atoms(basis)).normalized()


def project_broadcast(
    order: Sequence[str] = SPLITS, nonneg: Iterable[str] = SPLITS, basis: EntropyBasis = BASIS
) -> IneqSystem:
    """Project the rate-split system onto (R1, R2, Rb)."""
    if sorted(order) != sorted(SPLITS):
        raise ValueError("order must be a permutation of the split variables")
    _, pruned = project(rate_split_system(nonneg, basis), order)
    return pruned


def same_system(a: IneqSystem, b: IneqSystem) -> bool:
    return set(a.normalized().inequalities) == set(b.normalized().inequalities)


# --- rendering ----------------------------------------------------------------

def _fmt_coef(c: Fraction, name: str, first: bool) -> str:
    sign = "-" if c < 0 else ("" if first else "+")
    mag = abs(c)
    body = name if mag == 1 else f"{mag}*{name}"
    return f"{sign} {body}".strip() if first else f"{sign} {body}"


def render(q: LinIneq, system: IneqSystem) -> str:
    """``lhs >= rhs`` with rate terms on the left and information atoms on the right."""
    lhs = []
    for v in system.variables:
        c = q.coef(v)
        if c:
            lhs.append(_fmt_coef(c, v, not lhs))
    names = [n for n, _ in system.atoms]
    sol = _solve_in_atoms([-e for e in q.entropy], [v for _, v in system.atoms])
    rhs = []
    if sol is not None:
        for n, c in zip(names, sol):
            if c:
                rhs.append(_fmt_coef(c, n, not rhs))
    else:
        basis = EntropyBasis(VARIABLES)
        for i, e in enumerate(q.entropy):
            if e:
                label = "H(" + ",".join(basis.subset(i + 1)) + ")"
                rhs.append(_fmt_coef(-e, label, not rhs))
    return f"{' '.join(lhs) or '0'} >= {' '.join(rhs) or '0'}"


def render_system(system: IneqSystem) -> str:
    return "\n".join(render(q, system) for q in system.inequalities)


# --- numeric checks -------------------------------------------------------------

def _matrices(system: IneqSystem, rate_vars: Sequence[str]):
    R = np.array([[float(q.coef(v)) for v in rate_vars] for q in system.inequalities])
    E = np.array([[float(e) for e in q.entropy] for q in system.inequalities])
    return R, E


def holds(system: IneqSystem, rates: np.ndarray, entropies: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Vectorized membership: ``rates`` (..., 3) over RATES, ``entropies`` (..., 31)."""
    R, E = _matrices(system, RATES)
    lhs = rates @ R.T + entropies @ E.T
    return np.all(lhs >= -tol, axis=-1)


@dataclass
class EquivalenceReport:
    n_pmfs: int
    n_rates: int
    disagreements: int
    witness_pmf: np.ndarray | None = None
    witness_rates: np.ndarray | None = None

    @property
    def equivalent(self) -> bool:
        return self.disagreements == 0


def sample_equivalence(
    sys_a: IneqSystem,
    sys_b: IneqSystem,
    n_samples: int = 10_000,
    seed: int = 0,
    rates_per_pmf: int = 10,
    basis: EntropyBasis = BASIS,
) -> EquivalenceReport:
    """Compare membership of random (pmf, rate triple) pairs in two systems.

    Pmfs are Dirichlet draws over binary (X, Y, A, X1, X2); rate triples are
    uniform on a box reaching just past the largest right-hand side of either
    system at that pmf, so draws land near the faces rather than deep inside.
    """
    if set(sys_a.variables) != set(sys_b.variables):
        raise ValueError("systems must share rate variables")
    rng = np.random.default_rng(seed)
    shape = (2,) * len(basis.variables)
    alpha = rng.choice([0.2, 1.0], size=(n_samples, 1))
    raw = rng.gamma(np.broadcast_to(alpha, (n_samples, 32)))
    raw /= raw.sum(axis=1, keepdims=True)
    pmfs = raw.reshape((n_samples,) + shape)
    ent = basis.numeric(pmfs)
    rhs = [-(ent @ _matrices(sy, RATES)[1].T) for sy in (sys_a, sys_b)]
    scale = np.maximum(np.concatenate(rhs, axis=1).max(axis=1, keepdims=True), 0.0) * 1.2 + 1e-3
    rates = rng.uniform(0.0, 1.0, size=(n_samples, rates_per_pmf, 3)) * scale[:, None, :]
    ent_b = np.broadcast_to(ent[:, None, :], (n_samples, rates_per_pmf, ent.shape[1]))
    in_a = holds(sys_a, rates, ent_b)
    in_b = holds(sys_b, rates, ent_b)
    diff = in_a != in_b
    count = int(diff.sum())
    report = EquivalenceReport(n_samples, rates_per_pmf, count)
    if count:
        i, j = map(int, np.argwhere(diff)[0])
        report.witness_pmf = pmfs[i]
        report.witness_rates = rates[i, j]
    return report


# --- back substitution ------------------------------------------------------------

def feasible_assignment(
    system: IneqSystem, order: Sequence[str], fixed: Mapping[str, Fraction], atoms: Mapping[str, Fraction]
) -> dict[str, Fraction] | None:
    """Exact feasible values for the variables in ``order`` given the rest.

    Runs the elimination forward, then back-substitutes in reverse: each
    variable only meets bounds from rows whose other variables are already
    fixed, so picking any value in [max lower, min upper] works.  Atom values
    are supplied by name; the entropy part of each row must lie in the atom span.
    """
    names = [n for n, _ in system.atoms]
    vecs = [v for _, v in system.atoms]

    def const(q: LinIneq) -> Fraction:
        sol = _solve_in_atoms(q.entropy, vecs)
        if sol is None:
            raise ValueError("row outside the atom span")
        return sum((c * Fraction(atoms[n]) for n, c in zip(names, sol)), Fraction(0))

    stages = [system]
    for var in order:
        stages.append(eliminate(stages[-1], var))
    values = {k: Fraction(v) for k, v in fixed.items()}
    for q in stages[-1].inequalities:
        if sum((c * values[v] for v, c in q.rates), Fraction(0)) + const(q) < 0:
            return None
    for var, stage in zip(reversed(order), reversed(stages[:-1])):
        lo, hi = None, None
        for q in stage.inequalities:
            c = q.coef(var)
            if c == 0:
                continue
            rest = sum((k * values[v] for v, k in q.rates if v != var), Fraction(0)) + const(q)
            bound = -rest / c
            if c > 0:
                lo = bound if lo is None else max(lo, bound)
            else:
                hi = bound if hi is None else min(hi, bound)
        if lo is not None and hi is not None and lo > hi:
            return None
        values[var] = lo if lo is not None else (hi if hi is not None else Fraction(0))
    return values
