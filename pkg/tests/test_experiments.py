import csv
import json

import numpy as np
import pytest

from qhdtori import experiments
from qhdtori.cli import main
from qhdtori.config import SCHEMA_VERSION, ExperimentConfig, load_config

TINY = dict(
    J_max=4,
    grid=16,
    T_max=3.0,
    epsilons=(1e-3, 5e-4),
    drift_T_factor=0.005,
    divisor_J_max=6,
    divisor_shapes=2,
    mc_samples=2000,
)


@pytest.fixture
def tiny():
    return ExperimentConfig(**TINY)


def write_toml(path, **kw):
    lines = []
    for k, v in kw.items():
        if isinstance(v, (tuple, list)):
            v = "[" + ", ".join(repr(x) for x in v) + "]"
        elif isinstance(v, str):
            v = f'"{v}"'
        elif isinstance(v, bool):
            v = str(v).lower()
        lines.append(f"{k} = {v}")
    path.write_text("\n".join(lines) + "\n")
    return path


def test_config_defaults():
    cfg = ExperimentConfig()
    assert cfg.s == 6 and cfg.d == 2
    assert ExperimentConfig(a=(1.5, 2.5, 3.5), J_max=6, grid=32).s == 8
    assert cfg.cutoff(1e-3) == pytest.approx(1e3)


@pytest.mark.parametrize(
    "bad",
    [dict(grid=24), dict(grid=16, J_max=8), dict(integrator="euler"), dict(epsilons=(0.0,)), dict(a=(0.5, 2.0))],
)
def test_config_validation(bad):
    with pytest.raises(ValueError):
        ExperimentConfig(**bad)


def test_config_file(tmp_path):
    path = write_toml(tmp_path / "c.toml", dim=2, a=(1.5, 2.5), epsilons=(1e-3,), J_max=4, grid=16)
    cfg = load_config(path, seeds=(3,))
    assert cfg.a == (1.5, 2.5) and cfg.seeds == (3,) and cfg.grid == 16


def test_config_file_errors(tmp_path):
    with pytest.raises(ValueError):
        load_config(write_toml(tmp_path / "a.toml", colour="red"))
    with pytest.raises(ValueError):
        load_config(write_toml(tmp_path / "b.toml", dim=3, a=(1.5, 2.5)))


def test_lifespan_linear_runs_are_censored(tiny, tmp_path):
    res = experiments.run_lifespan(tiny.replace(nonlinear=False), tmp_path)
    assert all(res.censored)
    assert res.exit_times == [pytest.approx(tiny.T_max)] * 2
    assert np.isnan(res.slope)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["version"] == SCHEMA_VERSION
    assert summary["results"]["all_censored"] is True


@pytest.mark.parametrize("integrator", ["reduced", "strang"])
def test_exit_detection(tiny, integrator):
    cfg = tiny.replace(integrator=integrator, T_max=0.5)
    run = experiments._run_trajectory((cfg, 1e-3, 0, 0.5e-3))
    assert run.exit_time == 0.0
    run = experiments._run_trajectory((cfg, 1e-3, 0, 2e-3))
    assert run.exit_time is None and run.t_end == pytest.approx(0.5, abs=1e-3)


def test_loglog_slope():
    eps = np.array([3e-3, 1e-3, 3e-4])
    assert experiments.loglog_slope(eps, 5 * eps**-2) == pytest.approx(-2.0)
    assert np.isnan(experiments.loglog_slope([1e-3], [1.0]))


def test_drift_outputs(tiny, tmp_path):
    res = experiments.run_drift(tiny, tmp_path)
    assert len(res["runs"]) == 2 and len(res["improvement"]) == 1
    with open(tmp_path / "drift_eps1.000e-03_seed0.csv") as fh:
        header = next(csv.reader(fh))
    assert header == experiments.DRIFT_HEADER == ["t", "E_s", "N_s", "dE_dt", "dN_dt"]


def test_drift_control_arm(tiny):
    res = experiments.run_drift(tiny.replace(modified_energy=False))
    assert all(r["ratio"] == 1.0 for r in res["runs"])


def test_divisor_report(tiny, tmp_path):
    res = experiments.run_divisors(tiny, tmp_path)
    assert res["n_ok"] == 2 and res["total_violations"] == 0
    assert res["isotropic_beta0"]["status"] == "resonant"
    assert res["equal_sign_ok"]
    first = (tmp_path / "summary.json").read_bytes()
    experiments.run_divisors(tiny, tmp_path)
    assert (tmp_path / "summary.json").read_bytes() == first


def test_simulate_is_reproducible(tiny, tmp_path):
    experiments.simulate(tiny, tmp_path / "a")
    experiments.simulate(tiny, tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_simulate_threads_match_serial(tiny, tmp_path):
    a = experiments.simulate(tiny, tmp_path / "a")["results"]
    b = experiments.simulate(tiny.replace(threads=2), tmp_path / "b")["results"]
    assert a == b


def test_energy_check(tiny):
    res = experiments.energy_check(tiny)
    for row in res["checks"]:
        assert row["cancellation_rel"] <= 1e-10


def test_cli_runs(tmp_path, capsys):
    cfg = write_toml(tmp_path / "c.toml", **{k: v for k, v in TINY.items()})
    assert main(["energy-check", "--config", str(cfg), "--out", str(tmp_path / "out"), "--seed", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["checks"]) == 2
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["schema"] == "qhdtori.energy-check"
    assert summary["config"]["seeds"] == [2]


def test_cli_rejects_bad_config(tmp_path, capsys):
    cfg = write_toml(tmp_path / "c.toml", grid=12)
    assert main(["simulate", "--config", str(cfg)]) == 2
    assert "configuration error" in capsys.readouterr().err
