"""Command-line front end.

Exit status: 0 success, 1 configuration error, 2 infeasible or not found,
3 mismatch against a golden result or the oracle.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import io
import sys
from dataclasses import replace
from typing import Sequence

from . import fm
from .broadcast import RatePoint3, corner, membership3, trace_surface3
from .cascade import RatePoint2, membership, rate_corner, trace_frontier
from .config import ConfigError, RunConfig, fmt, load_config
from .models import BroadcastCRModel
from .oracle import EmptyFeasibleSet, GuardExceeded, brute_force_min, degeneracy_suite
from .search import NoFeasiblePoint

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_MISMATCH = 0, 1, 2, 3
LOWER, UPPER = -1e-9, 1e-3


def _need(cfg: RunConfig, *names: str) -> None:
    for n in names:
        if getattr(cfg, n) in (None, []):
            raise ConfigError(n, f"required by this command")


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def corner_lines(pt) -> list[str]:
    if isinstance(pt, RatePoint2):
        head = [("R1", pt.R1), ("R2", pt.R2)]
    else:
        head = [("Lb", pt.Lb), ("L1b", pt.L1b), ("L2b", pt.L2b), ("L12b", pt.L12b)]
    rows = head + [("D1", pt.D1), ("D2", pt.D2), ("cost", pt.cost)]
    lines = [f"{k} = {fmt(v)}" for k, v in rows]
    lines += [f"{k} = {fmt(v)}" for k, v in pt.terms.items()]
    if isinstance(pt, RatePoint2):
        lines.append("decoder f[u][z] = " + " ".join("".join(str(int(v)) for v in row) for row in pt.decoder.table))
    lines.append(f"witness = {pt.witness_hash}")
    return lines


def cmd_eval(cfg: RunConfig) -> int:
    _need(cfg, "decision")
    pt = rate_corner(cfg.model, cfg.decision) if cfg.kind == "cascade" else corner(cfg.model, cfg.decision)
    out = corner_lines(pt)
    status = EXIT_OK
    if cfg.budget is not None:
        ok = pt.feasible(cfg.budget)
        out.append(f"budget = {'met' if ok else 'violated'}")
        status = EXIT_OK if ok else EXIT_INFEASIBLE
    print("\n".join(out))
    return status


CASCADE_COLS = ["w1", "w2", "R1", "R2", "D1", "D2", "cost", "objective", "seed", "restart", "witness", "status"]
BROADCAST_COLS = ["w1", "w2", "wb", "R1", "R2", "Rb", "Lb", "L1b", "L2b", "L12b", "D1", "D2", "cost",
                  "objective", "seed", "restart", "witness", "status"]


def frontier_rows(cfg: RunConfig) -> tuple[list[str], list[list[str]]]:
    rows = []
    if cfg.kind == "cascade":
        fr = trace_frontier(cfg.model, cfg.budget, cfg.weights, cfg.search)
        for p in fr.points:
            rows.append((p.weights, p.R1, [*map(fmt, p.weights), *map(fmt, (p.R1, p.R2, p.D1, p.D2, p.cost,
                        p.objective)), fmt(p.seed), fmt(p.restart), p.witness_hash, "ok"]))
        for w, _ in fr.failures:
            rows.append((w, float("inf"), [*map(fmt, w)] + [""] * 6 + [fmt(cfg.search.seed), "", "", "not-found"]))
        cols = CASCADE_COLS
    else:
        sf = trace_surface3(cfg.model, cfg.budget, cfg.weights, cfg.search)
        for p in sf.points:
            vals = (*p.rates, *p.bounds, p.D1, p.D2, p.cost, p.objective)
            rows.append((p.weights, p.rates[0], [*map(fmt, p.weights), *map(fmt, vals), fmt(p.seed),
                        fmt(p.restart), p.witness_hash, "ok"]))
        for w, _ in sf.failures:
            rows.append((w, float("inf"), [*map(fmt, w)] + [""] * 11 + [fmt(cfg.search.seed), "", "", "not-found"]))
        cols = BROADCAST_COLS
    rows.sort(key=lambda r: (r[0], r[1]))
    return cols, [r[2] for r in rows]


def cmd_frontier(cfg: RunConfig) -> int:
    _need(cfg, "budget", "weights")
    cols, rows = frontier_rows(cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    w.writerows(rows)
    _emit(buf.getvalue(), cfg.output.get("csv"))
    return EXIT_OK if all(r[-1] == "ok" for r in rows) else EXIT_INFEASIBLE


def cmd_membership(cfg: RunConfig) -> int:
    _need(cfg, "budget", "rates")
    if cfg.kind == "cascade":
        v = membership(cfg.model, *cfg.rates, cfg.budget, cfg.search)
    else:
        v = membership3(cfg.model, *cfg.rates, cfg.budget, cfg.search)
    print(v.status)
    if v.witness is not None:
        print("\n".join(corner_lines(v.witness)))
    return EXIT_OK if v.achievable else EXIT_INFEASIBLE


def cmd_fm(order: str = "default", drop_nonneg: Sequence[str] = ()) -> int:
    if order == "default":
        seq = fm.SPLITS
    elif order == "reversed":
        seq = tuple(reversed(fm.SPLITS))
    else:
        seq = tuple(s.strip() for s in order.split(","))
    for v in drop_nonneg:
        if v not in fm.SPLITS:
            print(f"unknown split variable {v!r}; choose from {', '.join(fm.SPLITS)}", file=sys.stderr)
            return EXIT_CONFIG
    nonneg = tuple(v for v in fm.SPLITS if v not in set(drop_nonneg))
    try:
        derived = fm.project_broadcast(order=seq, nonneg=nonneg)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    text = fm.render_system(derived)
    print(text)
    golden = fm.render_system(fm.golden_broadcast())
    if fm.same_system(derived, fm.golden_broadcast()):
        return EXIT_OK
    diff = difflib.unified_diff(golden.splitlines(), text.splitlines(), "golden", "derived", lineterm="")
    print("\n".join(diff), file=sys.stderr)
    return EXIT_MISMATCH


def oracle_rows(cfg: RunConfig, continuous: bool = False):
    """Per weight: oracle value, optimizer value, delta, PASS/FAIL."""
    from .broadcast import min_weighted_rate3
    from .cascade import min_weighted_rate
    search = replace(cfg.search, u_size=cfg.grid.u_size, lattice=None if continuous else cfg.grid.K)
    out = []
    for w in cfg.weights:
        ref = brute_force_min(cfg.model, cfg.budget, w, cfg.grid).objective
        if cfg.kind == "cascade":
            got = min_weighted_rate(cfg.model, cfg.budget, w, search).objective
        else:
            got = min_weighted_rate3(cfg.model, cfg.budget, w, search).objective
        delta = got - ref
        lo = -float("inf") if continuous else LOWER
        out.append((w, ref, got, delta, lo <= delta <= UPPER))
    return out


def cmd_oracle(cfg: RunConfig, continuous: bool = False) -> int:
    _need(cfg, "budget", "weights")
    rows = oracle_rows(cfg, continuous)
    print("weights,oracle,optimizer,delta,status")
    for w, ref, got, d, ok in rows:
        print(f"{' '.join(map(fmt, w))},{fmt(ref)},{fmt(got)},{fmt(d)},{'PASS' if ok else 'FAIL'}")
    passed = all(r[-1] for r in rows)
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_MISMATCH


def cmd_suite(seeds: Sequence[int] = (0, 1, 2)) -> int:
    ok = True
    for family in ("cascade", "broadcast"):
        rep = degeneracy_suite(family, seeds=tuple(seeds))
        for c in rep.checks:
            print(f"{'PASS' if c.passed else 'FAIL'} {family} {c.name}: {c.detail}")
        ok &= rep.passed
    golden = fm.same_system(fm.project_broadcast(), fm.golden_broadcast())
    print(f"{'PASS' if golden else 'FAIL'} fm golden system")
    ok &= golden
    return EXIT_OK if ok else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cascade-vm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("eval", "evaluate the rate corner of an explicit decision"),
                        ("frontier", "trace scalarized minima over a weight grid (CSV)"),
                        ("membership", "search for a witness that a rate tuple is achievable")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config")
    sp = sub.add_parser("oracle", help="compare the optimizer against the lattice oracle")
    sp.add_argument("config")
    sp.add_argument("--continuous", action="store_true",
                    help="use the continuous optimizer (only the upper tolerance applies)")
    sp = sub.add_parser("fm", help="derive the broadcast region by Fourier-Motzkin elimination")
    sp.add_argument("--order", default="default", help="'default', 'reversed' or a comma-separated list")
    sp.add_argument("--drop-nonneg", action="append", default=[], metavar="VAR",
                    help="omit the nonnegativity constraint of a split variable")
    sp = sub.add_parser("suite", help="run the degeneration and monotonicity battery")
    sp.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fm":
            return cmd_fm(args.order, args.drop_nonneg)
        if args.command == "suite":
            return cmd_suite(args.seeds)
        cfg = load_config(args.config)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "frontier":
            return cmd_frontier(cfg)
        if args.command == "membership":
            return cmd_membership(cfg)
        return cmd_oracle(cfg, args.continuous)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardExceeded as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NoFeasiblePoint, EmptyFeasibleSet) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
