"""Problem instances for the two cascade models and their budget functionals.

Model objects hold plain arrays so that malformed instances can still be built
and then diagnosed by :func:`validate_model`; validated :class:`JointPmf` /
:class:`CondKernel` views are produced on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .prob import NORM_TOL, CondKernel, FiniteAlphabet, JointPmf, marginalize


@dataclass(frozen=True)
class DistortionTable:
    source_alphabet: FiniteAlphabet
    recon_alphabet: FiniteAlphabet
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def d_max(self) -> float:
        return float(self.values.max())

    def scaled(self, kappa: float) -> "DistortionTable":
        return DistortionTable(self.source_alphabet, self.recon_alphabet, self.values * kappa)


@dataclass(frozen=True)
class CostTable:
    action_alphabet: FiniteAlphabet
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def cost_max(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True)
class ConstraintBudget:
    D1: float
    D2: float
    cost: float

    def __post_init__(self):
        for name in ("D1", "D2", "cost"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"budget {name} must be finite and >= 0, got {v!r}")

    def as_dict(self) -> dict[str, float]:
        return {"D1": self.D1, "D2": self.D2, "cost": self.cost}


def hamming(source: FiniteAlphabet, recon: FiniteAlphabet) -> DistortionTable:
    vals = np.ones((source.size, recon.size))
    for i in range(min(source.size, recon.size)):
        vals[i, i] = 0.0
    return DistortionTable(source, recon, vals)


@dataclass(frozen=True)
class CascadeVendingModel:
    """Cascade with the vending machine at the end node.

    ``source[x, y] = p(x, y)``; ``vm_channel[a, y, z] = p(z | a, y)``.
    """

    X: FiniteAlphabet
    Y: FiniteAlphabet
    Z: FiniteAlphabet
    A: FiniteAlphabet
    X1: FiniteAlphabet
    X2: FiniteAlphabet
    source: np.ndarray
    vm_channel: np.ndarray
    d1: DistortionTable
    d2: DistortionTable
    cost: CostTable
    kind: str = field(default="cascade", init=False)

    def __post_init__(self):
        object.__setattr__(self, "source", np.asarray(self.source, dtype=float))
        object.__setattr__(self, "vm_channel", np.asarray(self.vm_channel, dtype=float))

    def source_pmf(self) -> JointPmf:
        return JointPmf([self.X, self.Y], self.source)

    def channel_kernel(self) -> CondKernel:
        return CondKernel([self.A, self.Y], [self.Z], self.vm_channel)

    def restrict_actions(self, keep: list[int]) -> "CascadeVendingModel":
        """Same instance with the action alphabet cut down to ``keep``."""
        A = FiniteAlphabet(self.A.name, len(keep), [self.A.symbol_labels[i] for i in keep])
        return CascadeVendingModel(
            self.X, self.Y, self.Z, A, self.X1, self.X2, self.source,
            self.vm_channel[keep], self.d1, self.d2, CostTable(A, self.cost.values[keep]),
        )


@dataclass(frozen=True)
class BroadcastCRModel:
    """Cascade-broadcast model with the vending machine at the middle node.

    ``source[x] = p(x)``; ``vm_channel[a, x, y] = p(y | a, x)``.
    """

    X: FiniteAlphabet
    Y: FiniteAlphabet
    A: FiniteAlphabet
    X1: FiniteAlphabet
    X2: FiniteAlphabet
    source: np.ndarray
    vm_channel: np.ndarray
    d1: DistortionTable
    d2: DistortionTable
    cost: CostTable
    kind: str = field(default="broadcast", init=False)

    def __post_init__(self):
        object.__setattr__(self, "source", np.asarray(self.source, dtype=float))
        object.__setattr__(self, "vm_channel", np.asarray(self.vm_channel, dtype=float))

    def source_pmf(self) -> JointPmf:
        return JointPmf([self.X], self.source)

    def channel_kernel(self) -> CondKernel:
        return CondKernel([self.A, self.X], [self.Y], self.vm_channel)

    def restrict_actions(self, keep: list[int]) -> "BroadcastCRModel":
        A = FiniteAlphabet(self.A.name, len(keep), [self.A.symbol_labels[i] for i in keep])
        return BroadcastCRModel(
            self.X, self.Y, A, self.X1, self.X2, self.source, self.vm_channel[keep],
            self.d1, self.d2, CostTable(A, self.cost.values[keep]),
        )


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, path: str, message: str) -> None:
        self.violations.append(Violation(path, message))

    def paths(self) -> list[str]:
        return [v.path for v in self.violations]

    def __str__(self) -> str:
        return "\n".join(map(str, self.violations)) or "ok"


def _check_pmf(rep: ValidationReport, path: str, arr: np.ndarray, shape: tuple, cond_ndim: int) -> None:
    if arr.shape != shape:
        rep.add(path, f"shape {arr.shape}, expected {shape}")
        return
    if not np.all(np.isfinite(arr)):
        rep.add(path, "non-finite entries")
        return
    if np.any(arr < 0):
        rep.add(path, f"negative entry {float(arr.min())!r}")
    sums = arr.reshape(arr.shape[:cond_ndim] + (-1,)).sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) > NORM_TOL)
    for idx in bad:
        where = "".join(f"[{i}]" for i in idx)
        rep.add(f"{path}{where}", f"normalization: slice sums to {float(sums[tuple(idx)])!r}")


def _check_table(rep: ValidationReport, path: str, vals: np.ndarray, shape: tuple) -> None:
    if vals.shape != shape:
        rep.add(path, f"shape {vals.shape}, expected {shape}")
        return
    if not np.all(np.isfinite(vals)):
        rep.add(path, "range: non-finite entries (maximum must be finite)")
    elif np.any(vals < 0):
        rep.add(path, f"range: negative entry {float(vals.min())!r}")


def validate_model(m) -> ValidationReport:
    """Check axis wiring, normalization and table shapes; never raises."""
    rep = ValidationReport()
    if isinstance(m, CascadeVendingModel):
        _check_pmf(rep, "source", m.source, (m.X.size, m.Y.size), 0)
        _check_pmf(rep, "vm_channel", m.vm_channel, (m.A.size, m.Y.size, m.Z.size), 2)
    elif isinstance(m, BroadcastCRModel):
        _check_pmf(rep, "source", m.source, (m.X.size,), 0)
        _check_pmf(rep, "vm_channel", m.vm_channel, (m.A.size, m.X.size, m.Y.size), 2)
    else:
        rep.add("model", f"unsupported model type {type(m).__name__}")
        return rep
    for name, table, recon in (("d1", m.d1, m.X1), ("d2", m.d2, m.X2)):
        if table.source_alphabet.size != m.X.size or table.recon_alphabet.size != recon.size:
            rep.add(name, "alphabets do not match the model's source/reconstruction alphabets")
        _check_table(rep, f"{name}.values", table.values, (m.X.size, recon.size))
    if m.cost.action_alphabet.size != m.A.size:
        rep.add("cost", "action alphabet does not match the model")
    _check_table(rep, "cost.values", m.cost.values, (m.A.size,))
    return rep


def expected_distortion(j: JointPmf, table: DistortionTable, source_axis: str, recon_axis: str) -> float:
    """E[d(source, recon)] under ``j``."""
    pair = marginalize(j, [source_axis, recon_axis]).values
    if pair.shape != table.values.shape:
        raise ValueError(f"alphabet mismatch: joint {pair.shape} vs table {table.values.shape}")
    return float(max(0.0, (pair * table.values).sum()))


def expected_cost(j: JointPmf, cost: CostTable, action_axis: str) -> float:
    """E[cost(action)] under ``j``."""
    pa = marginalize(j, [action_axis]).values
    if pa.shape != cost.values.shape:
        raise ValueError(f"alphabet mismatch: joint {pa.shape} vs cost table {cost.values.shape}")
    return float(max(0.0, pa @ cost.values))
