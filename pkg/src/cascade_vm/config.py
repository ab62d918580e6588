"""JSON run configuration: parsing with field paths in every error."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .broadcast import BroadcastDecision
from .cascade import CascadeDecision
from .models import (BroadcastCRModel, CascadeVendingModel, ConstraintBudget, CostTable, DistortionTable,
                     validate_model)
from .oracle import DEFAULT_GUARD, GridSpec
from .prob import NORM_TOL, FiniteAlphabet
from .search import SearchConfig

SCHEMA_VERSION = 1
CASCADE_AXES = ("X", "Y", "Z", "A", "X1", "X2")
BROADCAST_AXES = ("X", "Y", "A", "X1", "X2")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


@dataclass
class RunConfig:
    model: CascadeVendingModel | BroadcastCRModel
    budget: ConstraintBudget | None = None
    search: SearchConfig = field(default_factory=SearchConfig)
    weights: list[tuple[float, ...]] = field(default_factory=list)
    decision: CascadeDecision | BroadcastDecision | None = None
    rates: tuple[float, ...] | None = None
    grid: GridSpec = field(default_factory=GridSpec)
    output: dict[str, str] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.model.kind


def _get(doc: dict, key: str, path: str, required: bool = True):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    if key not in doc:
        if required:
            raise ConfigError(f"{path}.{key}" if path else key, "missing")
        return None
    return doc[key]


def _array(value, path: str, shape: tuple[int, ...]) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a nested array of numbers") from None
    if arr.shape != shape:
        raise ConfigError(path, f"shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(path, "non-finite entries")
    return arr


def _alphabet(name: str, entry, path: str) -> FiniteAlphabet:
    try:
        if isinstance(entry, int) and not isinstance(entry, bool):
            return FiniteAlphabet(name, entry)
        if isinstance(entry, list):
            return FiniteAlphabet(name, len(entry), tuple(str(s) for s in entry))
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(path, "expected a size or a list of symbol labels")


def parse_model(doc: dict, path: str = "model"):
    kind = _get(doc, "kind", path)
    if kind not in ("cascade", "broadcast"):
        raise ConfigError(f"{path}.kind", f"unknown model kind {kind!r}")
    names = CASCADE_AXES if kind == "cascade" else BROADCAST_AXES
    alpha_doc = _get(doc, "alphabets", path)
    al = {}
    for n in names:
        entry = _get(alpha_doc, n, f"{path}.alphabets", required=(n not in ("X1", "X2")))
        if entry is None:
            al[n] = FiniteAlphabet(n, al["X"].size, al["X"].symbol_labels)
        else:
            al[n] = _alphabet(n, entry, f"{path}.alphabets.{n}")
    s = {n: a.size for n, a in al.items()}
    if kind == "cascade":
        source = _array(_get(doc, "source", path), f"{path}.source", (s["X"], s["Y"]))
        channel = _array(_get(doc, "vm_channel", path), f"{path}.vm_channel", (s["A"], s["Y"], s["Z"]))
    else:
        source = _array(_get(doc, "source", path), f"{path}.source", (s["X"],))
        channel = _array(_get(doc, "vm_channel", path), f"{path}.vm_channel", (s["A"], s["X"], s["Y"]))
    d1 = DistortionTable(al["X"], al["X1"], _array(_get(doc, "d1", path), f"{path}.d1", (s["X"], s["X1"])))
    d2 = DistortionTable(al["X"], al["X2"], _array(_get(doc, "d2", path), f"{path}.d2", (s["X"], s["X2"])))
    cost = CostTable(al["A"], _array(_get(doc, "cost", path), f"{path}.cost", (s["A"],)))
    if kind == "cascade":
        m = CascadeVendingModel(al["X"], al["Y"], al["Z"], al["A"], al["X1"], al["X2"], source, channel, d1, d2, cost)
    else:
        m = BroadcastCRModel(al["X"], al["Y"], al["A"], al["X1"], al["X2"], source, channel, d1, d2, cost)
    report = validate_model(m)
    if not report.ok:
        v = report.violations[0]
        raise ConfigError(f"{path}.{v.path}", "; ".join(str(x) for x in report.violations))
    return m


def _check_rows(arr: np.ndarray, path: str, cond_ndim: int) -> None:
    if np.any(arr < 0):
        raise ConfigError(path, "negative entry")
    sums = arr.reshape(arr.shape[:cond_ndim] + (-1,)).sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) > NORM_TOL)
    if bad.size:
        idx = bad[0]
        where = "".join(f"[{i}]" for i in idx)
        raise ConfigError(f"{path}{where}", f"normalization: slice sums to {float(sums[tuple(idx)])!r}")


def parse_decision(doc: dict, m, path: str = "decision"):
    if isinstance(m, CascadeVendingModel):
        u = _get(doc, "u_size", path)
        if not isinstance(u, int) or u < 1:
            raise ConfigError(f"{path}.u_size", "expected a positive integer")
        shape = (m.X.size, m.Y.size, m.X1.size, m.A.size, u)
        k = _array(_get(doc, "kernel", path), f"{path}.kernel", shape)
        _check_rows(k, f"{path}.kernel", 2)
        return CascadeDecision(u, k)
    act = _array(_get(doc, "action", path), f"{path}.action", (m.X.size, m.A.size))
    rec = _array(_get(doc, "recon", path), f"{path}.recon", (m.X.size, m.X1.size, m.X2.size))
    _check_rows(act, f"{path}.action", 1)
    _check_rows(rec, f"{path}.recon", 1)
    return BroadcastDecision(act, rec)


def parse_search(doc: dict | None, path: str = "search") -> SearchConfig:
    if doc is None:
        return SearchConfig()
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    known = {f.name for f in fields(SearchConfig)}
    for k in doc:
        if k not in known:
            raise ConfigError(f"{path}.{k}", "unknown search option")
    try:
        return SearchConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def parse_config(doc: Any, base: Path | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config", "expected a JSON object")
    ver = _get(doc, "schema_version", "")
    if ver != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {ver!r}; expected {SCHEMA_VERSION}")
    if "model_file" in doc:
        p = Path(doc["model_file"])
        if base is not None and not p.is_absolute():
            p = base / p
        try:
            mdoc = json.loads(p.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("model_file", str(exc)) from None
        model = parse_model(mdoc, "model_file")
    else:
        model = parse_model(_get(doc, "model", ""))
    cfg = RunConfig(model=model)
    if "budget" in doc:
        b = doc["budget"]
        try:
            cfg.budget = ConstraintBudget(float(_get(b, "D1", "budget")), float(_get(b, "D2", "budget")),
                                          float(_get(b, "cost", "budget")))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("budget", str(exc)) from None
    cfg.search = parse_search(doc.get("search"))
    nw = 2 if model.kind == "cascade" else 3
    for i, w in enumerate(doc.get("weights", [])):
        if not isinstance(w, list) or len(w) != nw:
            raise ConfigError(f"weights[{i}]", f"expected {nw} numbers")
        try:
            wt = tuple(float(v) for v in w)
        except (TypeError, ValueError):
            raise ConfigError(f"weights[{i}]", "expected numbers") from None
        if min(wt) < 0 or sum(wt) <= 0:
            raise ConfigError(f"weights[{i}]", "weights must be nonnegative with a positive sum")
        cfg.weights.append(wt)
    if "decision" in doc:
        cfg.decision = parse_decision(doc["decision"], model)
    if "rates" in doc:
        r = doc["rates"]
        if not isinstance(r, list) or len(r) != nw:
            raise ConfigError("rates", f"expected {nw} numbers")
        cfg.rates = tuple(float(v) for v in r)
        if min(cfg.rates) < 0:
            raise ConfigError("rates", "rates must be nonnegative")
    if "grid" in doc:
        g = doc["grid"]
        try:
            cfg.grid = GridSpec(int(g.get("K", 4)), int(g.get("u_size", 2)), int(g.get("guard", DEFAULT_GUARD)))
        except (AttributeError, TypeError, ValueError) as exc:
            raise ConfigError("grid", str(exc)) from None
    out = doc.get("output", {})
    if not isinstance(out, dict):
        raise ConfigError("output", "expected an object")
    cfg.output = {k: str(v) for k, v in out.items()}
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("config", str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from None
    return parse_config(doc, path.parent)


def model_to_doc(m) -> dict:
    """Inverse of :func:`parse_model`, for writing example configs."""
    names = CASCADE_AXES if isinstance(m, CascadeVendingModel) else BROADCAST_AXES
    return {
        "kind": m.kind,
        "alphabets": {n: list(getattr(m, n).symbol_labels) for n in names},
        "source": m.source.tolist(),
        "vm_channel": m.vm_channel.tolist(),
        "d1": m.d1.values.tolist(),
        "d2": m.d2.values.tolist(),
        "cost": m.cost.values.tolist(),
    }


ZERO_SNAP = 1e-12


def fmt(x) -> str:
    """Nine significant digits; magnitudes below ZERO_SNAP (rounding noise) print as 0."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    v = float(x)
    if abs(v) < ZERO_SNAP:
        v = 0.0
    return f"{v:.9g}"
