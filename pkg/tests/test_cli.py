import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from forcedwell.cli import RunConfig, dumps, main, render_plots, run_verify
from forcedwell.errors import ConfigError, MissingArtifact


def _write_config(tmp_path, **over):
    cfg = RunConfig(y_points=16, x_points=256, n_max=2, paths=20, out=str(tmp_path / "out"), **over)
    path = tmp_path / "cfg.json"
    cfg.save(path)
    return path, tmp_path / "out"


configs = st.builds(
    RunConfig,
    sigma=st.floats(0.2, 0.8),
    epsilon=st.floats(0.01, 2.0),
    rho=st.floats(0.0, 1.0),
    y_points=st.integers(16, 256),
    paths=st.integers(1, 10**6),
    seed=st.integers(0, 2**63),
    potential=st.fixed_dictionaries({"tilt_amplitude": st.floats(-0.3, 0.3),
                                     "tilt_phase": st.floats(0, 1)}).map(
        lambda d: dict(RunConfig().potential, **d)),
)


@settings(max_examples=40, deadline=None)
@given(configs)
def test_config_round_trip(cfg):
    assert RunConfig.from_dict(json.loads(dumps(cfg.to_dict()))) == cfg


def test_partial_potential_block_is_merged():
    cfg = RunConfig.from_dict({"potential": {"tilt_amplitude": 0.05}})
    assert cfg.potential["base_depth"] == 1.0
    assert cfg.model().tilt_amplitude == 0.05


@pytest.mark.parametrize("bad", [{"sigma": -1}, {"nope": 1}, {"dt": 1.0}, {"y_points": 4},
                                 {"potential": {"family": "sextic"}}])
def test_bad_config_values(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_bad_config_exit_code(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"sigma": 0}')
    assert main(["--config", str(p), "predict"]) == 2
    p.write_text("not json")
    assert main(["--config", str(p), "predict"]) == 2


@pytest.mark.parametrize("v", [0.1, 1 / 3, 1e-300, 123456789.123456789, -2.5e17])
def test_floats_round_trip_exactly(v):
    assert float(json.loads(dumps({"v": v}))["v"]) == v
    assert dumps(v) == "%.17g" % v


def test_non_finite_values_become_null():
    assert json.loads(dumps({"a": math.nan, "b": [math.inf, 1]})) == {"a": None, "b": [None, 1]}


def test_monostable_potential_fails_at_first_stage(tmp_path):
    path, out = _write_config(tmp_path, potential={**RunConfig().potential, "base_depth": -1.0})
    rep = run_verify(RunConfig.load(path))
    assert rep.failed_stage == "potential" and not rep.ok
    assert "bistability" in rep.error
    assert main(["--config", str(path), "verify"]) == 1
    saved = json.loads((out / "verify.json").read_text())
    assert saved["failed_stage"] == "potential"


def test_simulate_writes_full_precision(tmp_path):
    path, out = _write_config(tmp_path)
    code = main(["--config", str(path), "simulate", "--sigma", "0.6", "--paths", "12",
                 "--seed", "5", "--start=-1,0"])
    assert code == 0
    with open(out / "simulate_tau.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12
    for r in rows:
        assert r["tau"] == "%.17g" % float(r["tau"])
    rec = json.loads((out / "simulate.json").read_text())
    assert rec["sigma"] == 0.6 and rec["seed"] == 5 and rec["start"] == [-1.0, 0.0]
    assert main(["--config", str(path), "simulate", "--start", "B:0"]) == 2


def test_predict_and_plot(tmp_path):
    path, out = _write_config(tmp_path)
    for cmd in ("spectral", "jump", "predict"):
        assert main(["--config", str(path), cmd]) == 0
    pred = json.loads((out / "predict.json").read_text())
    assert pred["regime"]["label"] == "fast-forcing-strong"
    first = {p.name: p.read_bytes() for p in render_plots(out)}
    assert {"lambda1.svg", "rates.svg", "delta.svg"} <= set(first)
    second = {p.name: p.read_bytes() for p in render_plots(out)}
    assert first == second


def test_plot_without_artifacts(tmp_path):
    with pytest.raises(MissingArtifact):
        render_plots(tmp_path)
    (tmp_path / "jump.csv").write_text("y,A,delta\n")
    with pytest.raises(MissingArtifact):
        render_plots(tmp_path)
    assert main(["--out", str(tmp_path), "plot"]) == 1


def test_jump_csv_columns(tmp_path):
    path, out = _write_config(tmp_path)
    assert main(["--config", str(path), "jump"]) == 0
    data = np.genfromtxt(out / "jump.csv", delimiter=",", names=True)
    assert len(data) == 16
    assert np.all(np.abs(data["delta"]) < 1)
