import csv
import json

import pytest

from kml.cli import main
from kml.config import ExperimentConfig, config_hash, active_tolerances
from kml.errors import ConfigError


def run(tmp_path, command, config=None, *extra):
    argv = [command, "--out", str(tmp_path / command)]
    if config is not None:
        path = tmp_path / f"{command}.json"
        path.write_text(json.dumps(config))
        argv += ["--config", str(path)]
    return main(argv + list(extra))


def read_rows(path):
    lines = path.read_bytes().decode("utf-8").split("\r\n")
    assert lines[0].startswith("# config_hash=")
    return list(csv.DictReader(l for l in lines[1:] if l))


@pytest.mark.parametrize("doc", [
    {"experiment": "moment", "colour": "red"},
    {"experiment": "moment", "sweeps": {"x": []}},
    {"experiment": "moment", "sweeps": {"m": [0]}},
    {"experiment": "mingap", "replications": 0},
    {"experiment": "nystrom", "sweeps": {"lambda": [1.0]}},
    {"experiment": "bounds", "kernel": {"sigma": -1}},
    {"experiment": "bounds", "grid": {"q": 4}},
    {"experiment": "tea"},
    {"kernel": {"sigma": 1}},
])
def test_schema_rejects(doc):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)


def test_hash_stable_under_reordering():
    a = {"experiment": "bounds", "kernel": {"sigma": 1.0, "d": 1}, "seeds": [1, 2]}
    b = {"seeds": [1, 2], "kernel": {"d": 1, "sigma": 1.0}, "experiment": "bounds"}
    assert config_hash(a) == config_hash(b)
    assert ExperimentConfig.from_dict(a).hash == ExperimentConfig.from_dict(b).hash
    assert config_hash(dict(a, output_dir="x")) == config_hash(a)
    assert config_hash(dict(a, seeds=[1])) != config_hash(a)


def test_defaults_and_seed_override():
    cfg = ExperimentConfig.default("nystrom")
    assert cfg.seeds == [0, 1, 2, 3, 4]
    assert cfg.with_seed(7).seeds == [7]
    assert all(len(v) > 0 for v in cfg.sweeps.values())


def test_tolerance_scaling(monkeypatch):
    monkeypatch.setenv("KML_TOLERANCE_SCALE", "10")
    assert active_tolerances().quadrature == pytest.approx(1e-7)
    monkeypatch.setenv("KML_TOLERANCE_SCALE", "abc")
    with pytest.raises(ConfigError):
        active_tolerances()


def test_moment_command(tmp_path):
    assert run(tmp_path, "moment") == 0
    rows = read_rows(tmp_path / "moment" / "moment.csv")
    key = {(r["m"], r["x"]): r for r in rows}
    r = key[("3", "1")]
    assert (r["norm_sq"], r["bound"], r["max_moment_residual"]) == ("9", "9", "0")
    assert key[("2", "1/2")]["norm_sq"] == "1"
    log = (tmp_path / "moment" / "identities.log").read_text()
    assert "False" not in log
    manifest = json.loads((tmp_path / "moment" / "manifest.json").read_text())
    assert manifest["checks"] == {"moment_exact": True}
    assert manifest["files"] == ["identities.log", "moment.csv"]


def test_rerun_byte_identical(tmp_path):
    for sub in ("a", "b"):
        assert main(["nystrom", "--out", str(tmp_path / sub), "--seed", "3"]) == 0
        assert main(["mingap", "--out", str(tmp_path / sub), "--seed", "3"]) == 0
    for name in ("nystrom.csv", "nystrom_equivalence.csv", "mingap_hist.csv", "mingap_ks.csv",
                 "mingap_expectation.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bounds_command(tmp_path):
    assert run(tmp_path, "bounds") == 0
    rows = read_rows(tmp_path / "bounds" / "bounds.csv")
    assert all(r["passed"] == "true" for r in rows)
    flagged = [r for r in rows if r["flag"] == "precondition"]
    assert flagged and all(r["theoretical"] == "inf" for r in flagged)


def test_bounds_two_dimensional_budget(tmp_path):
    cfg = {"experiment": "bounds", "kernel": {"sigma": 1.0, "d": 2}, "grid": {"q": 32, "max_nodes": 5000},
           "sweeps": {"m": [3, 6, 9], "x": [0, 0.5, 1], "t": [2.0], "lambda": [1e-2, 1e-4]}}
    assert run(tmp_path, "bounds", cfg) == 0
    rows = read_rows(tmp_path / "bounds" / "bounds.csv")
    assert all(r["passed"] == "true" for r in rows)
    assert any(r["flag"] == "budget" for r in rows)


def test_spectrum_cache(tmp_path):
    cfg = {"experiment": "spectrum", "grid": {"q": 48, "G": 256, "dps": None}}
    assert run(tmp_path, "spectrum", cfg) == 0
    first = json.loads((tmp_path / "spectrum" / "manifest.json").read_text())
    assert run(tmp_path, "spectrum", cfg) == 0
    second = json.loads((tmp_path / "spectrum" / "manifest.json").read_text())
    assert any(n.startswith("built") for n in first["notes"])
    assert any(n.startswith("cached") for n in second["notes"])
    rows = read_rows(tmp_path / "spectrum" / "spectrum.csv")
    mu = [float(r["mu"]) for r in rows]
    assert all(b <= a for a, b in zip(mu, mu[1:]))
    assert all(float(r["sup_phi"]) <= float(r["b_ell_sq"]) * (1 + 1e-12) for r in rows)
    assert all(second["checks"].values())


def test_mingap_command(tmp_path):
    cfg = {"experiment": "mingap", "replications": 200000}
    assert run(tmp_path, "mingap", cfg) == 0
    ks = read_rows(tmp_path / "mingap" / "mingap_ks.csv")
    assert [r["n"] for r in ks] == ["2", "5", "10"]
    exp = read_rows(tmp_path / "mingap" / "mingap_expectation.csv")
    assert len(exp) == 9 and all(r["passed_corrected"] == "true" for r in exp)
    hist = read_rows(tmp_path / "mingap" / "mingap_hist.csv")
    assert hist


def test_nystrom_command(tmp_path):
    assert run(tmp_path, "nystrom") == 0
    rows = read_rows(tmp_path / "nystrom" / "nystrom.csv")
    assert list(rows[0])[:9] == ["n", "d", "sigma", "lambda", "m", "seed", "train_rmse", "test_rmse", "jitter_level"]
    assert "required_support" in rows[0]
    eq = read_rows(tmp_path / "nystrom" / "nystrom_equivalence.csv")
    assert all(r["passed"] == "true" for r in eq)


def test_wrong_experiment_and_bad_jobs(tmp_path, capsys):
    assert run(tmp_path, "bounds", {"experiment": "moment"}) == 2
    assert main(["moment", "--jobs", "0"]) == 2
    assert run(tmp_path, "nystrom", {"experiment": "nystrom", "fixed_lambda": 1.5}) == 2
    assert "error" in capsys.readouterr().err


def test_verify_partial_selection(tmp_path, capsys):
    code = main(["verify", "--only", "A1,A9", "--out", str(tmp_path / "v")])
    out = capsys.readouterr().out
    assert code == 0
    assert "A1 PASS" in out and "A9 PASS" in out and "A2" not in out
    assert json.loads((tmp_path / "v" / "manifest.json").read_text())["checks"] == {"A1": True, "A9": True}


def test_verify_unknown_criterion():
    assert main(["verify", "--only", "A42"]) == 2


def test_verify_corrupted_tolerance(monkeypatch, capsys):
    monkeypatch.setenv("KML_TOLERANCE_SCALE", "abc")
    assert main(["verify", "--only", "A1"]) == 1
    assert "FAIL tolerances" in capsys.readouterr().err


def test_verify_negative_tolerance_names_failure(monkeypatch, capsys):
    monkeypatch.setenv("KML_TOLERANCE_SCALE", "-1")
    assert main(["verify", "--only", "A8"]) == 1
    assert "FAILED: A8" in capsys.readouterr().out
