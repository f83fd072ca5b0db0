import json
import math

import pytest
import yaml

from dualrail.errors import ConfigError, ResourceGuardError, ThresholdError
from dualrail.experiments.cli import main
from dualrail.experiments.config import (
    ExperimentConfig,
    SolverOptions,
    config_from_dict,
    dump_config,
    load_config,
    point_fingerprint,
    spec_from_params,
)
from dualrail.experiments.presets import PRESETS, get_preset
from dualrail.experiments.sweep import JOURNAL, run_sweep
from dualrail.experiments.tasks import guard, run_point

GRID = {
    "name": "grid",
    "task": "steady",
    "spec": {"N": 2, "pattern": "reversed"},
    "sweep": {"r": [0.5, 1.0, 1.5], "Delta": [0.0, 1.0, 2.0]},
    "solver": {"entropies": True},
}


def _files(d):
    return (d / "results.csv").read_bytes(), json.loads((d / "results.json").read_text())["rows"]


def test_config_parsing_and_points():
    cfg = config_from_dict(GRID)
    pts = cfg.points()
    assert len(pts) == 9
    assert pts[0] == {"N": 2, "pattern": "reversed", "r": 0.5, "Delta": 0.0}
    assert pts[1]["Delta"] == 1.0
    rng = config_from_dict({"spec": {}, "sweep": {"r": {"start": 0, "stop": 1, "num": 5}}})
    assert rng.axes[0][1] == (0.0, 0.25, 0.5, 0.75, 1.0)


@pytest.mark.parametrize(
    "raw",
    [
        {"spec": {"bogus": 1}},
        {"spec": {}, "sweep": {"bogus": [1]}},
        {"spec": {}, "sweep": {"r": []}},
        {"spec": {}, "task": "dance"},
        {"spec": {}, "outputs": {"formats": ["xml"]}},
        {"spec": {}, "solver": {"speed": 3}},
        {"spec": {}, "extras": 1},
        {"spec": {}, "workers": 0},
    ],
)
def test_config_errors(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_yaml_roundtrip(tmp_path):
    cfg = config_from_dict(GRID)
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(cfg))
    again = load_config(p)
    assert again.fingerprint() == cfg.fingerprint()
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_fingerprints_are_stable_and_sensitive():
    cfg = config_from_dict(GRID)
    assert cfg.fingerprint() == config_from_dict(yaml.safe_load(yaml.safe_dump(GRID, sort_keys=False))).fingerprint()
    other = cfg.with_(solver=SolverOptions(steady_tol=1e-8))
    assert other.fingerprint() != cfg.fingerprint()
    p = {"N": 1, "r": 1.0}
    assert point_fingerprint(p, "steady", SolverOptions()) != point_fingerprint(p, "evolve", SolverOptions())


def test_spec_from_params():
    s = spec_from_params({"N": 3, "r": 0.5, "Delta": 1.0, "pattern": "reversed"})
    assert s.delta_A == (0.0, 1.0, 2.0) and s.delta_B == (-2.0, -1.0, -0.0)
    s = spec_from_params({"model": "full", "N": 1, "beta": 10, "delta_A_over_kappa": 0.5})
    assert s.kappa_A == 10 and s.delta_A == (5.0,) and s.n_max >= 1
    s = spec_from_params({"model": "bidirectional", "N": 2, "gamma_L_over_gamma_R": 0.3, "gamma_R": 2.0})
    assert s.gamma_L == pytest.approx(0.6)
    s = spec_from_params({"N": 3, "epsilon": 0.1, "model": "lossy_effective"})
    assert s.loss("A")[1, 3] == pytest.approx(0.2)
    with pytest.raises(ConfigError):
        spec_from_params({"N": 2, "delta_A": [1, 2, 3]})
    with pytest.raises(ConfigError):
        spec_from_params({"N": 1, "Delta_over_kappa": 1.0})
    with pytest.raises(ThresholdError):
        spec_from_params({"N": 1, "g": 3.0, "kappa": 1.0})


def test_guard():
    big = spec_from_params({"model": "full", "N": 5, "beta": 10, "n_max": 10})
    with pytest.raises(ResourceGuardError):
        guard(big, SolverOptions())
    guard(spec_from_params({"N": 2}), SolverOptions())


def test_single_point_steady_row():
    row = run_point({"N": 1, "r": 1.0}, "steady", SolverOptions())
    assert row["C_11"] == pytest.approx(math.tanh(2), abs=1e-6)
    assert row["residual"] <= 1e-9


def test_verify_and_gap_rows():
    v = run_point({"N": 1, "r": 1.0}, "verify", SolverOptions())
    assert v["dark"] and v["steady_fidelity"] >= 1 - 1e-8 and v["zero_modes"] == 1
    assert v["gap_rel_err"] <= 1e-6
    v0 = run_point({"N": 2, "r": 0.0}, "verify", SolverOptions())
    assert v0["dark"] and v0["steady_fidelity"] >= 1 - 1e-8
    g = run_point({"N": 1, "r": 0.2}, "gap", SolverOptions())
    assert g["gap"] == pytest.approx(math.cosh(0.4) / 2, rel=1e-9)


def test_analytic_steady_requires_ideal_model():
    from dualrail.errors import ModelError

    with pytest.raises(ModelError):
        run_point({"N": 2, "gamma_phi": 0.1}, "steady", SolverOptions(steady_method="analytic"))


def test_sweep_deterministic_across_workers(tmp_path):
    cfg = config_from_dict(GRID)
    one = run_sweep(cfg, tmp_path / "w1", workers=1)
    two = run_sweep(cfg, tmp_path / "w2", workers=2)
    assert len(one.rows) == 9 and one.ok and two.ok
    csv1, rows1 = _files(tmp_path / "w1")
    csv2, rows2 = _files(tmp_path / "w2")
    assert csv1 == csv2
    assert rows1 == rows2
    assert all(r["config_fingerprint"] == cfg.fingerprint() for r in rows1)


def test_sweep_resume_equivalence(tmp_path):
    cfg = config_from_dict(GRID)
    run_sweep(cfg, tmp_path / "full")
    part = run_sweep(cfg, tmp_path / "resumed", max_points=4)
    assert len(part.rows) == 4
    # simulate a crash mid-write: a torn final journal line
    with open(tmp_path / "resumed" / JOURNAL, "a") as fh:
        fh.write('{"fingerprint": "dead')
    run_sweep(cfg, tmp_path / "resumed")
    assert _files(tmp_path / "full") == _files(tmp_path / "resumed")


def test_sweep_records_failures_and_continues(tmp_path):
    cfg = config_from_dict({"task": "steady", "spec": {"N": 1}, "sweep": {"r": [1.0, 0.5]},
                            "solver": {"steady_method": "longtime", "t_max": 0.5}})
    res = run_sweep(cfg, tmp_path)
    assert res.n_failed == 2 and {r["status"] for r in res.rows} == {"failed"}
    assert "ConvergenceError" in res.rows[0]["error"]


def test_presets_resolve():
    for name in PRESETS:
        cfg = get_preset(name)
        assert cfg.description
        for p in cfg.points():
            guard(spec_from_params(p, cfg.solver), cfg.solver)
    with pytest.raises(ConfigError):
        get_preset("fig9")


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["list-presets"]) == 0
    assert "fig2b" in capsys.readouterr().out
    assert main(["steady", "--set", "N=1", "--set", "r=1", "--out", str(tmp_path / "a")]) == 0
    row = json.loads((tmp_path / "a" / "results.json").read_text())["rows"][0]
    assert row["C_11"] == pytest.approx(math.tanh(2), abs=1e-6)
    assert main(["steady", "--set", "bogus=1"]) == 1
    assert main(["steady", "--set", "N=1", "--set", "g=2", "--set", "kappa=1"]) == 1
    assert main(["preset", "nope"]) == 1
    assert main(["steady", "--set", "model=full", "--set", "N=6", "--set", "beta=5",
                 "--set", "n_max=10", "--out", str(tmp_path / "b")]) == 3
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"spec": {"N": 1}, "solver": {"steady_method": "longtime", "t_max": 0.5}}))
    assert main(["steady", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 2


def test_cli_evolve_writes_trajectory(tmp_path):
    assert main(["evolve", "--set", "N=1", "--out", str(tmp_path), "--format", "csv"]) == 0
    header = (tmp_path / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,purity") and "C_11" in header
    assert not (tmp_path / "results.json").exists()


def test_cli_sweep_with_workers(tmp_path):
    cfg = tmp_path / "s.yaml"
    cfg.write_text(yaml.safe_dump({"task": "gap", "spec": {"N": 1}, "sweep": {"r": [0.1, 0.2]},
                                   "outputs": {"dir": str(tmp_path / "out")}}))
    assert main(["sweep", "--config", str(cfg), "--workers", "2"]) == 0
    rows = json.loads((tmp_path / "out" / "results.json").read_text())["rows"]
    assert [r["r"] for r in rows] == [0.1, 0.2]
