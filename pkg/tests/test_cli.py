import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from dcpp.cli import EXIT_INVALID, EXIT_OK, EXIT_VERDICT, main, run

CONFIGS = {
    "pmf": {"lam": 1.0, "alphas": [1.0], "k_max": 10},
    "sample": {"mode": "pattern", "region": {"dim": 2, "cells": [
        {"lower": [0, 0], "upper": [0.5, 1], "intensity": 4.0},
        {"lower": [0.5, 0], "upper": [1, 1], "intensity": 2.0}]}, "alphas": [0.5, 0.5]},
    "bounds": {"kind": "thm31", "laws": [{"lam": 1.0, "alphas": [1.0]}], "grid": [0.5, 1.0, 2.0]},
    "verify": {"trials": 1000, "fixtures": ["poisson", "nb"], "masses": [1.0], "levels": [1.0]},
    "experiment": {"n": 60, "p": 8, "replicates": 100},
}


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


@pytest.fixture
def regress_data(tmp_path):
    gen = np.random.default_rng(1)
    X = gen.uniform(-1, 1, (120, 3))
    y = gen.poisson(np.exp(X @ [0.9, 0.0, -0.6]))
    path = tmp_path / "data.csv"
    with open(path, "w") as fh:
        fh.write("y,x1,x2,x3\n")
        for yi, row in zip(y, X):
            fh.write(",".join([str(yi)] + [repr(float(v)) for v in row]) + "\n")
    return path


class TestSubcommands:
    def test_pmf_poisson_column(self, tmp_path):
        out = tmp_path / "pmf.csv"
        assert run("pmf", write_json(tmp_path / "c.json", CONFIGS["pmf"]), 0, str(out)) == EXIT_OK
        text = out.read_text()
        assert text.startswith("# schema_version: 1\n")
        rows = read_csv(out)
        assert rows[0] == ["k", "pmf_partition", "pmf_matrix", "abs_diff"]
        col = np.array([float(r[1]) for r in rows[1:]])
        np.testing.assert_allclose(col, stats.poisson.pmf(np.arange(11), 1.0), rtol=0, atol=1e-12)

    def test_bounds_row(self, tmp_path):
        out = tmp_path / "b.csv"
        cfg = {"kind": "thm31", "laws": [{"lam": 1.0, "alphas": [1.0]}], "grid": [1.0]}
        assert run("bounds", write_json(tmp_path / "c.json", cfg), 0, str(out)) == EXIT_OK
        row = read_csv(out)[1]
        assert row[0] == "thm31_upper"
        assert float(row[1]) == pytest.approx(2.41421, abs=1e-5)
        assert float(row[2]) == pytest.approx(0.367879, abs=1e-6)

    def test_bounds_corollary(self, tmp_path):
        proc = {"region": {"dim": 1, "cells": [{"lower": [0], "upper": [1], "intensity": 1.0}]},
                "alphas": [1.0], "f": [1.0]}
        cfg = {"kind": "corollary31", "processes": [proc] * 3, "grid": [1.0]}
        out = tmp_path / "b.csv"
        assert run("bounds", write_json(tmp_path / "c.json", cfg), 0, str(out)) == EXIT_OK
        assert float(read_csv(out)[1][1]) == pytest.approx(3 * (math.sqrt(2) + 1 / 3))

    def test_sample_rv(self, tmp_path):
        out = tmp_path / "s.csv"
        cfg = {"mode": "rv", "lam": 2.0, "alphas": [0.5, 0.5], "n": 50}
        assert run("sample", write_json(tmp_path / "c.json", cfg), 3, str(out)) == EXIT_OK
        rows = read_csv(out)
        assert rows[0] == ["value"]
        assert len(rows) == 51

    def test_sample_embedding(self, tmp_path):
        out = tmp_path / "s.csv"
        cfg = {"mode": "pattern", "embedding": {"h": [1.0, 2.0, 3.0], "theta": 2.0}}
        assert run("sample", write_json(tmp_path / "c.json", cfg), 3, str(out)) == EXIT_OK
        assert read_csv(out)[0] == ["x1", "mark"]

    def test_regress(self, tmp_path, regress_data):
        out = tmp_path / "fit.json"
        cfg = {"data": str(regress_data), "theta": 5.0, "weights": [0.01, 0.01, 0.01]}
        assert run("regress", write_json(tmp_path / "c.json", cfg), 0, str(out)) == EXIT_OK
        res = json.loads(out.read_text())
        assert res["fit"]["converged"]
        assert res["fit"]["kkt"]["all_satisfied"]
        assert res["fit"]["beta_hat"][0] > 0.5

    def test_verify_and_experiment(self, tmp_path):
        for sub in ("verify", "experiment"):
            out = tmp_path / f"{sub}.csv"
            assert run(sub, write_json(tmp_path / f"{sub}.json", CONFIGS[sub]), 1, str(out)) == EXIT_OK

    def test_experiment_verdict_failure(self, tmp_path):
        # a tiny C1 shrinks every weight, so the exceedance event is near certain
        cfg = {"n": 60, "p": 8, "replicates": 100, "C1": 1e-6, "fit": False}
        out = tmp_path / "e.csv"
        assert run("experiment", write_json(tmp_path / "c.json", cfg), 1, str(out)) == EXIT_VERDICT
        assert out.exists()


class TestValidation:
    def test_unknown_key(self, tmp_path, capsys):
        cfg = dict(CONFIGS["pmf"], lamda=2.0)
        assert run("pmf", write_json(tmp_path / "c.json", cfg), 0, str(tmp_path / "o.csv")) == EXIT_INVALID
        assert "lamda" in capsys.readouterr().err

    def test_missing_config(self, tmp_path, capsys):
        missing = tmp_path / "nope.json"
        assert run("pmf", str(missing), 0, str(tmp_path / "o.csv")) == EXIT_INVALID
        assert str(missing) in capsys.readouterr().err

    def test_missing_data(self, tmp_path, capsys):
        cfg = {"data": str(tmp_path / "absent.csv"), "theta": 1.0}
        assert run("regress", write_json(tmp_path / "c.json", cfg), 0, str(tmp_path / "o.json")) == EXIT_INVALID
        assert "absent.csv" in capsys.readouterr().err

    def test_invalid_law(self, tmp_path):
        cfg = {"lam": 1.0, "alphas": [0.5, 0.7]}
        assert run("pmf", write_json(tmp_path / "c.json", cfg), 0, str(tmp_path / "o.csv")) == EXIT_INVALID

    def test_bad_seed(self, tmp_path):
        assert run("pmf", write_json(tmp_path / "c.json", CONFIGS["pmf"]), -1, str(tmp_path / "o.csv")) == EXIT_INVALID

    def test_bad_schema_version(self, tmp_path):
        cfg = dict(CONFIGS["pmf"], schema_version=7)
        assert run("pmf", write_json(tmp_path / "c.json", cfg), 0, str(tmp_path / "o.csv")) == EXIT_INVALID


class TestReproducibility:
    @pytest.mark.parametrize("sub", sorted(CONFIGS))
    def test_byte_identical(self, tmp_path, sub):
        cfg = write_json(tmp_path / "c.json", CONFIGS[sub])
        a, b = tmp_path / "a.out", tmp_path / "b.out"
        assert run(sub, cfg, 42, str(a)) == EXIT_OK
        assert run(sub, cfg, 42, str(b)) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    @pytest.mark.parametrize("sub", sorted(CONFIGS))
    def test_echo_reproduces_run(self, tmp_path, sub):
        a, b = tmp_path / "a.out", tmp_path / "b.out"
        assert run(sub, write_json(tmp_path / "c.json", CONFIGS[sub]), 9, str(a)) == EXIT_OK
        echo = json.loads((tmp_path / "a.out.config.json").read_text())
        assert echo["schema_version"] == 1
        assert echo["subcommand"] == sub
        assert echo["seed"] == 9
        assert run(sub, str(tmp_path / "a.out.config.json"), None, str(b)) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_sample(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", CONFIGS["sample"])
        run("sample", cfg, 1, str(tmp_path / "a"))
        run("sample", cfg, 2, str(tmp_path / "b"))
        assert (tmp_path / "a").read_bytes() != (tmp_path / "b").read_bytes()

    def test_echo_keeps_worker_count(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", CONFIGS["verify"])
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run("verify", cfg, 5, str(a), workers=2) == EXIT_OK
        assert json.loads((tmp_path / "a.csv.config.json").read_text())["workers"] == 2
        assert run("verify", str(tmp_path / "a.csv.config.json"), None, str(b)) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()


class TestEntryPoint:
    def test_main(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", CONFIGS["pmf"])
        assert main(["pmf", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "o.csv")]) == 0

    def test_module_subprocess(self, tmp_path):
        cfg = write_json(tmp_path / "c.json", {"lam": 1.0, "alphas": [1.0], "bogus": 1})
        proc = subprocess.run([sys.executable, "-m", "dcpp.cli", "pmf", "--config", cfg, "--out",
                               str(tmp_path / "o.csv")], capture_output=True, text=True)
        assert proc.returncode == 1
        assert "bogus" in proc.stderr
