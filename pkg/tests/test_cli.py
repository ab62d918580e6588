from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from cascade_vm import cli
from cascade_vm.cascade import constant_decision, deterministic_decision
from cascade_vm.config import ConfigError, load_config, model_to_doc, parse_config
from cascade_vm.instances import LOSSLESS_PX, lossless_cascade, loose_budget, random_broadcast, random_cascade

HX = float(-(np.asarray(LOSSLESS_PX) * np.log2(LOSSLESS_PX)).sum())
SMALL = {"restarts": 4, "rounds": 2, "max_iter": 150, "warm_restarts": 4, "u_size": 2}


def budget_doc(b):
    return {"D1": b.D1, "D2": b.D2, "cost": b.cost}


def write(tmp_path: Path, doc: dict, name: str = "run.json") -> str:
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def lossless_doc(**extra):
    m, b = lossless_cascade()
    return {"schema_version": 1, "model": model_to_doc(m), "budget": budget_doc(b), **extra}


def report(out: str) -> dict[str, str]:
    return dict(line.split(" = ", 1) for line in out.splitlines() if " = " in line)


class TestEval:
    def test_constant_decision_is_all_zero(self, tmp_path, capsys):
        m, _ = random_cascade(0)
        d = constant_decision(m)
        doc = {"schema_version": 1, "model": model_to_doc(m), "decision": {"u_size": 1, "kernel": d.kernel.tolist()}}
        assert cli.main(["eval", write(tmp_path, doc)]) == cli.EXIT_OK
        r = report(capsys.readouterr().out)
        assert float(r["R1"]) == pytest.approx(0, abs=1e-12)
        assert float(r["R2"]) == pytest.approx(0, abs=1e-12)

    def test_lossless_witness(self, tmp_path, capsys):
        m, _ = lossless_cascade()
        d = deterministic_decision(m, lambda x, y: x, lambda x, y: 0, lambda x, y: x, 2)
        doc = lossless_doc(decision={"u_size": 2, "kernel": d.kernel.tolist()})
        assert cli.main(["eval", write(tmp_path, doc)]) == cli.EXIT_OK
        r = report(capsys.readouterr().out)
        assert float(r["R1"]) + float(r["R2"]) == pytest.approx(2 * HX, abs=1e-8)
        assert r["budget"] == "met"
        assert "I(X,Y;U|A,Z)" in r

    def test_malformed_kernel(self, tmp_path, capsys):
        m, _ = lossless_cascade()
        k = deterministic_decision(m, lambda x, y: x, lambda x, y: 0, lambda x, y: x, 2).kernel.copy()
        k[1, 0, 1, 0, 1] = 0.9
        doc = lossless_doc(decision={"u_size": 2, "kernel": k.tolist()})
        assert cli.main(["eval", write(tmp_path, doc)]) == cli.EXIT_CONFIG
        err = capsys.readouterr().err
        assert "decision.kernel[1][0]" in err and "0.9" in err

    def test_budget_violation_exit(self, tmp_path, capsys):
        m, _ = lossless_cascade()
        d = constant_decision(m)
        doc = lossless_doc(decision={"u_size": 1, "kernel": d.kernel.tolist()})
        assert cli.main(["eval", write(tmp_path, doc)]) == cli.EXIT_INFEASIBLE
        assert "violated" in capsys.readouterr().out

    def test_missing_decision(self, tmp_path):
        assert cli.main(["eval", write(tmp_path, lossless_doc())]) == cli.EXIT_CONFIG


class TestFrontier:
    def test_loose_budget_rows(self, tmp_path, capsys):
        m, _ = random_cascade(1)
        doc = {"schema_version": 1, "model": model_to_doc(m), "budget": budget_doc(loose_budget(m)),
               "weights": [[1, 1], [1, 0.5], [0.5, 1]], "search": SMALL}
        assert cli.main(["frontier", write(tmp_path, doc)]) == cli.EXIT_OK
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert len(rows) == 3
        assert all(float(r["R1"]) == 0 and float(r["R2"]) == 0 and r["status"] == "ok" for r in rows)
        assert {r["seed"] for r in rows} == {"0"}

    def test_byte_identical_reruns(self, tmp_path):
        m, b = random_broadcast(1)
        out = tmp_path / "surface.csv"
        doc = {"schema_version": 1, "model": model_to_doc(m), "budget": budget_doc(b),
               "weights": [[1, 1, 1], [0.25, 1, 0.5]], "search": {**SMALL, "seed": 5}, "output": {"csv": str(out)}}
        path = write(tmp_path, doc)
        assert cli.main(["frontier", path]) == cli.EXIT_OK
        first = out.read_bytes()
        assert cli.main(["frontier", path]) == cli.EXIT_OK
        assert out.read_bytes() == first
        header = first.decode().splitlines()[0].split(",")
        assert header == cli.BROADCAST_COLS

    def test_failed_weight_is_flagged(self, tmp_path, capsys):
        from cascade_vm.instances import cascade_model
        m = cascade_model(np.full((2, 2), 0.25), np.full((2, 2, 2), 0.5), cost=(0.5, 1.0))
        doc = {"schema_version": 1, "model": model_to_doc(m), "budget": {"D1": 1, "D2": 1, "cost": 0.1},
               "weights": [[1, 1]], "search": SMALL}
        assert cli.main(["frontier", write(tmp_path, doc)]) == cli.EXIT_INFEASIBLE
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert rows[0]["status"] == "not-found"

    def test_rows_sorted_by_weight(self, tmp_path, capsys):
        m, b = random_cascade(0)
        doc = {"schema_version": 1, "model": model_to_doc(m), "budget": budget_doc(b),
               "weights": [[1, 0.2], [0.2, 1], [0.6, 0.6]], "search": SMALL}
        cli.main(["frontier", write(tmp_path, doc)])
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert [(r["w1"], r["w2"]) for r in rows] == [("0.2", "1"), ("0.6", "0.6"), ("1", "0.2")]


class TestMembership:
    def test_lossless(self, tmp_path, capsys):
        doc = lossless_doc(rates=[HX + 0.1, HX + 0.1], search=SMALL)
        assert cli.main(["membership", write(tmp_path, doc)]) == cli.EXIT_OK
        assert capsys.readouterr().out.splitlines()[0] == "ACHIEVABLE"

    def test_not_found(self, tmp_path, capsys):
        doc = lossless_doc(rates=[0.0, 0.0], search=SMALL)
        assert cli.main(["membership", write(tmp_path, doc)]) == cli.EXIT_INFEASIBLE
        assert capsys.readouterr().out.strip() == "NOT-FOUND-AT-RESOLUTION"


class TestFm:
    def test_default(self, capsys):
        assert cli.main(["fm"]) == cli.EXIT_OK
        out = capsys.readouterr().out.strip().splitlines()
        assert len(out) == 4
        assert "Rb >= I(X;A)" in out

    def test_drop_r2d(self, capsys):
        assert cli.main(["fm", "--drop-nonneg", "r2d"]) == cli.EXIT_MISMATCH
        assert "+++ derived" in capsys.readouterr().err

    def test_reversed(self, capsys):
        assert cli.main(["fm", "--order", "reversed"]) == cli.EXIT_OK
        rev = capsys.readouterr().out
        cli.main(["fm"])
        assert capsys.readouterr().out == rev

    def test_unknown_variable(self):
        assert cli.main(["fm", "--drop-nonneg", "r9"]) == cli.EXIT_CONFIG


class TestOracle:
    def test_loose_budget(self, tmp_path, capsys):
        m, _ = random_broadcast(2)
        doc = {"schema_version": 1, "model": model_to_doc(m), "budget": budget_doc(loose_budget(m)),
               "weights": [[1, 1, 1]], "search": {"restarts": 4}}
        assert cli.main(["oracle", write(tmp_path, doc)]) == cli.EXIT_OK
        assert capsys.readouterr().out.strip().splitlines()[-1] == "PASS"

    def test_lossless_corner(self, tmp_path, capsys):
        doc = lossless_doc(weights=[[1, 1]], search={"restarts": 4})
        assert cli.main(["oracle", write(tmp_path, doc)]) == cli.EXIT_OK
        line = capsys.readouterr().out.splitlines()[1].split(",")
        assert float(line[1]) == pytest.approx(2 * HX, abs=1e-8)

    def test_random_broadcast(self, tmp_path, capsys):
        m, b = random_broadcast(3)
        doc = {"schema_version": 1, "model": model_to_doc(m), "budget": budget_doc(b),
               "weights": [[1, 1, 1], [1, 0.25, 0.5]], "search": {"restarts": 8}}
        assert cli.main(["oracle", write(tmp_path, doc)]) == cli.EXIT_OK
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "weights,oracle,optimizer,delta,status"
        assert all(line.endswith("PASS") for line in out[1:])

    def test_guard(self, tmp_path, capsys):
        m, b = random_broadcast(3)
        doc = {"schema_version": 1, "model": model_to_doc(m), "budget": budget_doc(b),
               "weights": [[1, 1, 1]], "grid": {"K": 4, "guard": 1000}}
        assert cli.main(["oracle", write(tmp_path, doc)]) == cli.EXIT_CONFIG
        assert "guard" in capsys.readouterr().err


class TestConfig:
    def test_schema_version(self):
        with pytest.raises(ConfigError, match="schema_version"):
            parse_config({"schema_version": 2})

    def test_unknown_search_option(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(lossless_doc(search={"restart": 3}))
        assert exc.value.path == "search.restart"

    def test_weight_arity(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(lossless_doc(weights=[[1, 1], [1, 1, 1]]))
        assert exc.value.path == "weights[1]"

    def test_channel_normalization_path(self):
        doc = lossless_doc()
        doc["model"]["vm_channel"][0][1] = [0.5, 0.4]
        with pytest.raises(ConfigError) as exc:
            parse_config(doc)
        assert exc.value.path == "model.vm_channel[0][1]"

    def test_model_file_and_labels(self, tmp_path):
        m, b = random_cascade(0)
        mdoc = model_to_doc(m)
        mdoc["alphabets"]["X"] = ["a", "b"]
        del mdoc["alphabets"]["X1"]
        write(tmp_path, mdoc, "model.json")
        cfg = load_config(write(tmp_path, {"schema_version": 1, "model_file": "model.json"}))
        assert cfg.model.X1.symbol_labels == ("a", "b")

    def test_missing_file(self, tmp_path):
        assert cli.main(["eval", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(p)
