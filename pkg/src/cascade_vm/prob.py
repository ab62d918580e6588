"""Named-axis discrete probability tensors and Shannon functionals (bits)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

NORM_TOL = 1e-12
NEG_TOL = 1e-12


def _names(axes: str | Iterable[str]) -> tuple[str, ...]:
    if isinstance(axes, str):
        return (axes,)
    return tuple(axes)


@dataclass(frozen=True)
class FiniteAlphabet:
    name: str
    size: int
    symbol_labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"alphabet {self.name!r}: size must be a positive integer")
        labels = tuple(str(s) for s in self.symbol_labels) or tuple(str(i) for i in range(self.size))
        if len(labels) != self.size:
            raise ValueError(f"alphabet {self.name!r}: {len(labels)} labels for size {self.size}")
        if len(set(labels)) != len(labels):
            raise ValueError(f"alphabet {self.name!r}: symbol labels must be distinct")
        object.__setattr__(self, "symbol_labels", labels)

    def renamed(self, name: str) -> "FiniteAlphabet":
        return FiniteAlphabet(name, self.size, self.symbol_labels)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


class JointPmf:
    """Dense pmf over an ordered product of named alphabets."""

    def __init__(self, axes: Sequence[FiniteAlphabet], values, *, tol: float = NORM_TOL):
        axes = tuple(axes)
        names = [a.name for a in axes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate axis names {names}")
        arr = np.asarray(values, dtype=float)
        if arr.ndim == 0 and not axes:
            arr = arr.reshape(())
        shape = tuple(a.size for a in axes)
        if arr.shape != shape:
            raise ValueError(f"values shape {arr.shape} does not match axes {shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("pmf entries must be finite and nonnegative")
        total = float(arr.sum())
        if abs(total - 1.0) > tol:
            raise ValueError(f"pmf sums to {total!r}, not 1")
        self.axes = axes
        self.values = _frozen(arr)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes)

    def axis(self, name: str) -> FiniteAlphabet:
        return self.axes[self.index(name)]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown axis {name!r}; have {self.names}") from None

    def marginalize(self, keep: str | Iterable[str]) -> "JointPmf":
        return marginalize(self, keep)

    def entropy(self, target, given=()) -> float:
        return entropy(self, target, given)

    def mutual_information(self, a, b, given=()) -> float:
        return mutual_information(self, a, b, given)

    def __repr__(self) -> str:
        return f"JointPmf(axes={self.names}, shape={self.values.shape})"


class CondKernel:
    """Conditional pmf: every slice fixed on ``from_axes`` is a pmf over ``to_axes``.

    ``values`` has shape ``from sizes + to sizes``.
    """

    def __init__(self, from_axes: Sequence[FiniteAlphabet], to_axes: Sequence[FiniteAlphabet], values,
                 *, tol: float = NORM_TOL):
        from_axes, to_axes = tuple(from_axes), tuple(to_axes)
        names = [a.name for a in from_axes + to_axes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate axis names {names}")
        arr = np.asarray(values, dtype=float)
        shape = tuple(a.size for a in from_axes + to_axes)
        if arr.shape != shape:
            raise ValueError(f"kernel shape {arr.shape} does not match axes {shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("kernel entries must be finite and nonnegative")
        sums = arr.reshape(arr.shape[: len(from_axes)] + (-1,)).sum(axis=-1)
        worst = float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0
        if worst > tol:
            raise ValueError(f"kernel slices are not normalized (max deviation {worst:.3g})")
        self.from_axes = from_axes
        self.to_axes = to_axes
        self.values = _frozen(arr)

    @property
    def from_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.from_axes)

    @property
    def to_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.to_axes)

    def __repr__(self) -> str:
        return f"CondKernel({self.to_names} | {self.from_names})"


def marginalize(j: JointPmf, keep: str | Iterable[str]) -> JointPmf:
    """Sum out every axis not in ``keep``; the order of ``keep`` is preserved."""
    keep = _names(keep)
    if not keep:
        raise ValueError("keep must be nonempty")
    idx = [j.index(k) for k in keep]
    if len(set(idx)) != len(idx):
        raise ValueError("repeated axis in keep")
    drop = tuple(i for i in range(len(j.axes)) if i not in idx)
    vals = j.values.sum(axis=drop) if drop else j.values
    # remaining axes are in original order; permute into the requested order
    remaining = sorted(idx)
    vals = np.transpose(vals, [remaining.index(i) for i in idx])
    return JointPmf([j.axes[i] for i in idx], vals)


def compose(base: JointPmf, k: CondKernel) -> JointPmf:
    """Joint ``base(from, ...) * k(to | from)`` over ``base.axes + k.to_axes``."""
    for a in k.from_axes:
        if a.name not in base.names:
            raise ValueError(f"kernel conditions on {a.name!r}, absent from base {base.names}")
        if base.axis(a.name).size != a.size:
            raise ValueError(f"alphabet size mismatch on {a.name!r}")
    clash = set(k.to_names) & set(base.names)
    if clash:
        raise ValueError(f"kernel outputs {sorted(clash)} already present in base")
    # permute kernel conditioning axes into base order, then broadcast
    order = sorted(range(len(k.from_axes)), key=lambda i: base.index(k.from_axes[i].name))
    nf = len(k.from_axes)
    kv = np.transpose(k.values, order + list(range(nf, k.values.ndim)))
    shape = [1] * len(base.axes) + [a.size for a in k.to_axes]
    for i in order:
        shape[base.index(k.from_axes[i].name)] = k.from_axes[i].size
    kv = kv.reshape(shape)
    bv = base.values.reshape(base.values.shape + (1,) * len(k.to_axes))
    return JointPmf(base.axes + k.to_axes, bv * kv)


def _joint_entropy(j: JointPmf, names: tuple[str, ...]) -> float:
    if not names:
        return 0.0
    p = marginalize(j, names).values.ravel()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def _check_sets(j: JointPmf, *sets: tuple[str, ...]) -> None:
    seen: set[str] = set()
    for s in sets:
        for n in s:
            j.index(n)
            if n in seen:
                raise ValueError(f"axis {n!r} appears in more than one argument set")
            seen.add(n)


def entropy(j: JointPmf, target, given=()) -> float:
    """H(target | given) in bits, with 0 log 0 = 0."""
    target, given = _names(target), _names(given)
    if not target:
        raise ValueError("target must be nonempty")
    _check_sets(j, target, given)
    h = _joint_entropy(j, target + given) - _joint_entropy(j, given)
    if -NEG_TOL <= h < 0:
        h = 0.0
    return h


def mutual_information(j: JointPmf, a, b, given=()) -> float:
    """I(a; b | given) = H(a | given) - H(a | b, given), in bits."""
    a, b, given = _names(a), _names(b), _names(given)
    if not a or not b:
        raise ValueError("both argument sets must be nonempty")
    _check_sets(j, a, b, given)
    h = _joint_entropy
    val = h(j, a + given) + h(j, b + given) - h(j, a + b + given) - h(j, given)
    if -NEG_TOL <= val < 0:
        val = 0.0
    return val


def is_markov(j: JointPmf, a, b, c, tol: float = 1e-9) -> bool:
    """True iff a - b - c is a Markov chain, i.e. I(a; c | b) <= tol."""
    a, b, c = _names(a), _names(b), _names(c)
    if not a or not b or not c:
        raise ValueError("all three sets must be nonempty")
    return mutual_information(j, a, c, b) <= tol
