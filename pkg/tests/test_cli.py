import json
import os

import pytest

from finitecollapse.cli import main

DESK_CONFIG = {
    "system": {
        "energies": [0.0, 1.0],
        "amplitudes": [[0.5477225575051661, 0.0], [0.8366600265340756, 0.0]],
        "degeneracy_tolerance": 1e-9,
    },
    "schedule": {"T": 1.0, "sigma": 1.0},
    "grid": {"n_steps": 100, "scheme": "uniform-in-t", "epsilon_fraction": 1e-3},
    "ensemble": {"n_paths": 400, "master_seed": 11},
    "route": "exact",
    "verification": {
        "ensemble_paths": 2000,
        "independence_paths": 5000,
        "bayes_samples": 200,
        "convergence_step_counts": [256, 1024, 4096],
        "convergence_paths": 30,
        "equivalence_paths": 20,
        "equivalence_steps": 512,
    },
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(DESK_CONFIG))
    return str(path)


def run(*args):
    return main(list(args))


def test_simulate_row_count(config_path, tmp_path):
    out = str(tmp_path / "out")
    assert run("simulate", "--config", config_path, "--out", out) == 0
    lines = (tmp_path / "out" / "path.csv").read_text().splitlines()
    assert len(lines) == 1 + 100 + 1  # header + n_steps + 1 rows
    header = lines[0].split(",")
    assert header[:2] == ["t", "xi"]
    assert "pi_1" in header and "H" in header and "re_1" in header
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert any(f["name"] == "path.csv" for f in manifest["files"])


def test_simulate_sde_route(config_path, tmp_path):
    out = str(tmp_path / "out")
    assert run("simulate", "--config", config_path, "--out", out, "--route", "sde") == 0
    lines = (tmp_path / "out" / "path.csv").read_text().splitlines()
    assert len(lines) == 102
    assert lines[1].split(",")[1] == "nan"  # no information signal on this route


def test_simulate_idempotent(config_path, tmp_path):
    out = str(tmp_path / "out")
    assert run("simulate", "--config", config_path, "--out", out) == 0
    first = (tmp_path / "out" / "path.csv").read_bytes()
    assert run("simulate", "--config", config_path, "--out", out) == 0
    assert (tmp_path / "out" / "path.csv").read_bytes() == first


def test_invalid_horizon_names_field(tmp_path, capsys):
    bad = dict(DESK_CONFIG, schedule={"T": -1.0, "sigma": 1.0})
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert run("simulate", "--config", str(path), "--out", str(tmp_path / "o")) == 2
    assert "schedule.T" in capsys.readouterr().err


def test_zero_paths_rejected(tmp_path, capsys):
    bad = dict(DESK_CONFIG, ensemble={"n_paths": 0, "master_seed": 1})
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert run("ensemble", "--config", str(path), "--out", str(tmp_path / "o")) == 2
    assert "ensemble.n_paths" in capsys.readouterr().err


def test_missing_config_is_io_error(tmp_path):
    assert run("simulate", "--config", str(tmp_path / "nope.json"), "--out", ".") == 3


def test_malformed_config_is_config_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert run("simulate", "--config", str(path), "--out", str(tmp_path / "o")) == 2


def test_unwritable_output_dir(config_path, tmp_path):
    blocker = tmp_path / "blocked"
    blocker.write_text("a file, not a directory")
    assert run("simulate", "--config", config_path, "--out", str(blocker)) == 3


def test_ensemble_deterministic_across_threads(config_path, tmp_path):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert run("ensemble", "--config", config_path, "--out", out1, "--threads", "1") == 0
    assert run("ensemble", "--config", config_path, "--out", out2, "--threads", "4") == 0
    csv1 = (tmp_path / "a" / "summary.csv").read_bytes()
    csv2 = (tmp_path / "b" / "summary.csv").read_bytes()
    assert csv1 == csv2
    doc = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert doc["n_paths"] == 400
    assert sum(doc["terminal_counts"]) == 400


def test_timechange_report(config_path, tmp_path):
    out = str(tmp_path / "tc")
    assert run("timechange", "--config", config_path, "--out", out, "--paths", "20") == 0
    doc = json.loads((tmp_path / "tc" / "equivalence.json").read_text())
    assert doc["passed"] is True
    assert doc["max_eta_gap"] <= 1e-10
    assert doc["max_prob_gap"] <= 1e-12


def test_timechange_zero_noise_exact(config_path, tmp_path):
    out = str(tmp_path / "tz")
    assert run(
        "timechange", "--config", config_path, "--out", out, "--paths", "5", "--zero-noise"
    ) == 0
    doc = json.loads((tmp_path / "tz" / "equivalence.json").read_text())
    assert doc["max_eta_gap"] == 0.0
    assert doc["max_prob_gap"] == 0.0


def test_timechange_rejects_sde_route(config_path, tmp_path, capsys):
    code = run(
        "timechange", "--config", config_path, "--out", str(tmp_path / "t"), "--route", "sde"
    )
    assert code == 2
    assert "route" in capsys.readouterr().err


def test_verify_reduced_scale(config_path, tmp_path):
    out = str(tmp_path / "v")
    assert run("verify", "--config", config_path, "--out", out, "--threads", "2") == 0
    report = json.loads((tmp_path / "v" / "report.json").read_text())
    assert report["all_passed"] is True
    names = {r["name"] for r in report["results"]}
    assert {
        "born-law",
        "energy-martingale",
        "probability-martingale",
        "variance-decay",
        "independence",
        "bayes-equality",
        "route-convergence",
        "norm-preservation",
        "integral-form",
        "timechange-signal-identity",
        "timechange-probability-identity",
    } <= names
    for result in report["results"]:
        assert result["verdict"] in ("pass", "fail")


def test_config_file_not_mutated(config_path, tmp_path):
    before = open(config_path, "rb").read()
    run("simulate", "--config", config_path, "--out", str(tmp_path / "im"))
    assert open(config_path, "rb").read() == before
