import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from factories import random_index_zero_grouped
from flowindex import serialization
from flowindex.cli import main
from flowindex.walk import BandedUnitary


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--json")
    return code, json.loads(out), err


class TestIndex:
    def test_shift_walk(self, capsys):
        code, rep, _ = run_json(capsys, "index", "builtin:shift-walk-d2")
        assert code == 0
        assert rep["index"] == "2"
        assert rep["passed"]

    def test_identity_qca(self, capsys):
        code, out, _ = run(capsys, "index", "builtin:identity-qca")
        assert code == 0
        assert "1/1" in out

    def test_report_file(self, capsys, tmp_path):
        out = tmp_path / "rep.json"
        code, _, _ = run(capsys, "index", "builtin:classical-shift-q2", "--out", str(out))
        assert code == 0
        rep = json.loads(out.read_text())
        assert rep["passed"] and rep["digest"]

    def test_from_file(self, capsys, tmp_path):
        path = tmp_path / "walk.json"
        serialization.write_json(path, serialization.dump(BandedUnitary.shift(8, 3)))
        code, rep, _ = run_json(capsys, "index", str(path))
        assert code == 0
        assert rep["routes"]["trace_formula"] == "3"

    def test_corrupted_file(self, capsys, tmp_path):
        obj = serialization.dump(BandedUnitary.shift(8, 1))
        obj["blocks"][0]["re"] = [[0.5]]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(obj))
        code, _, err = run(capsys, "index", str(path))
        assert code == 1
        assert "not unitary" in err and "residual" in err

    def test_unknown_inputs(self, capsys, tmp_path):
        assert run(capsys, "index", "builtin:nope")[0] == 1
        assert run(capsys, "index", str(tmp_path / "missing.json"))[0] == 1
        path = tmp_path / "x.json"
        path.write_text('{"type": "mystery"}')
        assert run(capsys, "index", str(path))[0] == 1


class TestConstruct:
    def test_two_layer_cluster(self, capsys, tmp_path):
        prefix = tmp_path / "cluster"
        code, out, _ = run(capsys, "construct", "builtin:cluster-qca", "--kind", "two-layer", "--out", str(prefix))
        assert code == 0
        for i in (1, 2):
            layer = serialization.load(serialization.read_json(f"{prefix}.layer{i}.json"))
            assert len(layer.layers) == 1
        report = json.loads((tmp_path / "cluster.report.json").read_text())
        assert report["residuals"]["reconstruction"] <= 1e-9

    def test_decouple_rejects_shift(self, capsys, tmp_path):
        code, _, err = run(capsys, "construct", "builtin:shift-walk-d1", "--kind", "decouple", "--out", str(tmp_path / "s"))
        assert code == 2
        assert "index 1 ≠ 0" in err

    def test_path_sample(self, capsys, tmp_path):
        src = tmp_path / "u.json"
        serialization.write_json(src, serialization.dump(random_index_zero_grouped(np.random.default_rng(0))))
        prefix = tmp_path / "mid"
        code, _, _ = run(capsys, "construct", str(src), "--kind", "path-sample", "--t", "0.5", "--out", str(prefix))
        assert code == 0
        sample = serialization.load(serialization.read_json(f"{prefix}.json"))
        assert sample.measured_band() <= 2

    def test_crossover_needs_other(self, capsys, tmp_path):
        code, _, err = run(capsys, "construct", "builtin:shift-walk-d1", "--kind", "crossover", "--out", str(tmp_path / "c"))
        assert code == 1 and "--other" in err

    def test_crossover(self, capsys, tmp_path):
        code, _, _ = run(
            capsys, "construct", "builtin:shift-walk-d1", "--kind", "crossover",
            "--other", "builtin:hopping-ring-U1", "--out", str(tmp_path / "c"),
        )
        assert code == 0
        assert (tmp_path / "c.json").exists()

    def test_doubled(self, capsys, tmp_path):
        code, _, _ = run(capsys, "construct", "builtin:shift-walk-d2", "--kind", "doubled", "--out", str(tmp_path / "d"))
        assert code == 0
        payload = json.loads((tmp_path / "d.doubled.json").read_text())
        assert len(payload["unitaries"]) == len(payload["swaps"]) == 8


class TestDispersion:
    def test_w1_coin(self, capsys, tmp_path):
        path = tmp_path / "disp.csv"
        code, rep, _ = run_json(capsys, "dispersion", "builtin:W1-coin", "--grid", "256", "--out", str(path))
        assert code == 0
        assert rep["winding_sum"] == rep["index"] == 1
        with open(path) as fh:
            assert fh.readline().strip() == "p,branch,omega,velocity"

    def test_random_ti(self, capsys):
        code, rep, _ = run_json(capsys, "dispersion", "builtin:random-ti")
        assert code == 0 and rep["winding_sum"] == rep["index"]

    def test_constant_coin(self, capsys, tmp_path):
        from flowindex.walk_ti import LaurentUnitary

        src = tmp_path / "coin.json"
        h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        serialization.write_json(src, serialization.dump(LaurentUnitary.constant(h)))
        out = tmp_path / "flat.csv"
        code, rep, _ = run_json(capsys, "dispersion", str(src), "--grid", "32", "--out", str(out))
        assert code == 0 and rep["winding_sum"] == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert max(abs(float(r["velocity"])) for r in rows) < 1e-12

    def test_wrong_schema(self, capsys):
        assert run(capsys, "dispersion", "builtin:shift-walk-d1")[0] == 1


class TestVerify:
    def test_single(self, capsys):
        code, out, _ = run(capsys, "verify", "builtin:hopping-ring-U1")
        assert code == 0 and "PASS" in out

    def test_cluster(self, capsys):
        code, rep, _ = run_json(capsys, "verify", "builtin:cluster-qca")
        assert code == 0
        assert rep["suites"][0]["index"] == "1/1"

    def test_needs_source(self, capsys):
        assert run(capsys, "verify")[0] == 1

    def test_all_builtin(self, capsys):
        code, rep, _ = run_json(capsys, "verify", "--all-builtin")
        assert code == 0
        assert rep["count"] >= 14 and rep["passed"]


def test_list(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0 and "cluster-qca" in out


def test_console_script():
    proc = subprocess.run(
        [sys.executable, "-m", "flowindex.cli", "index", "builtin:classical-shift-q3", "--json"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["passed"]


@pytest.mark.parametrize("seed", [0, 5])
def test_deterministic(capsys, seed):
    a = run_json(capsys, "index", "builtin:random-ti", "--seed", str(seed))[1]
    b = run_json(capsys, "index", "builtin:random-ti", "--seed", str(seed))[1]
    a.pop("wall_time", None)
    b.pop("wall_time", None)
    assert a == b
