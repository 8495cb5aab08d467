import numpy as np
import pytest
import yaml

from wip_equilibrium.cli import main, read_zeta, write_zeta
from wip_equilibrium.config import ConfigError, RunConfig, component_seed, load_config
from wip_equilibrium.dynamics import equilibrium_pitch
from wip_equilibrium.estimator import Dataset


def test_defaults_load_and_presets():
    cfg = load_config()
    th = [equilibrium_pitch(cfg.params, p) for p in cfg.presets().values()]
    assert np.allclose(th, [-0.03, -0.06, -0.09, -0.12, -0.16], atol=1e-12)
    assert cfg.world.zeta.shape == (12,)
    assert cfg.controller.rail_limit == 1.1


def test_unknown_keys_rejected(tmp_path):
    for bad in ({"controler": {}}, {"controller": {"Q": [1, 1, 1, 1]}},
                {"presets": [{"name": "a", "m_p_kg": 1, "l_p_m": 0.3, "mass": 2}]}):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(bad)


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"physical": {"m_b_kg": -1.0}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"controller": {"ramp_clock": "sometimes"}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"presets": [{"name": "a", "m_p_kg": 1, "l_p_m": 0.3}]})


def test_yaml_file_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"seed": 5, "dataset": {"count": 40}}))
    cfg = load_config(path)
    assert cfg.seed == 5 and cfg.dataset_config.count == 40
    assert cfg.hash() != load_config().hash()
    (tmp_path / "bad.yaml").write_text("seed: [")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")


def test_component_seeds_independent_and_stable():
    a = component_seed(0, "pso")
    assert a == component_seed(0, "pso")
    assert a != component_seed(0, "train") and a != component_seed(1, "pso")
    assert 0 <= a < 2**63


def test_zeta_record_roundtrip(tmp_path):
    z = load_config().world.zeta
    write_zeta(tmp_path / "z.csv", z)
    assert np.array_equal(read_zeta(tmp_path / "z.csv"), z)


def _run(args, tmp):
    return main([*args, "--out", str(tmp)])


def test_simulate_deterministic_and_flags_failure(tmp_path):
    assert _run(["simulate"], tmp_path / "a") == 0
    assert _run(["simulate"], tmp_path / "b") == 0
    for name in ("trajectory.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = (tmp_path / "a" / "summary.csv").read_text().splitlines()
    assert summary[1].split(",")[6] == "false"
    assert _run(["simulate", "--scenario", "theta_0p16"], tmp_path / "c") == 0
    row = dict(zip(*[line.split(",") for line in (tmp_path / "c" / "summary.csv").read_text().splitlines()]))
    assert row["failed"] == "true" and row["config_hash"] == load_config().hash()


def test_gen_data_smoke(tmp_path):
    assert _run(["gen-data", "--count", "10", "--seed", "3"], tmp_path / "a") == 0
    assert _run(["gen-data", "--count", "10", "--seed", "3"], tmp_path / "b") == 0
    a, b = (tmp_path / "a" / "dataset.csv"), (tmp_path / "b" / "dataset.csv")
    assert a.read_bytes() == b.read_bytes()
    ds = Dataset.from_csv(a)
    assert len(ds) == 10
    cfg = load_config()
    assert all(ds.y[i] == equilibrium_pitch(cfg.params, ds.payload(i)) for i in range(10))


def test_train_and_eval_pipeline(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"train": {"hidden": 4}, "dataset": {"count": 20}}))
    c = ["--config", str(cfg)]
    assert _run(["gen-data", *c], tmp_path / "d") == 0
    for run in ("t1", "t2"):
        assert _run(["train", *c, "--dataset", str(tmp_path / "d" / "dataset.csv"), "--epochs", "2"],
                    tmp_path / run) == 0
    assert (tmp_path / "t1" / "model.bin").read_bytes() == (tmp_path / "t2" / "model.bin").read_bytes()
    assert (tmp_path / "t1" / "training_curve.csv").read_bytes() == \
        (tmp_path / "t2" / "training_curve.csv").read_bytes()
    model = str(tmp_path / "t1" / "model.bin")
    for run in ("e1", "e2"):
        assert _run(["eval", *c, "--model", model, "--count", "10", "--skip-cases"], tmp_path / run) == 0
    assert (tmp_path / "e1" / "metrics.csv").read_bytes() == (tmp_path / "e2" / "metrics.csv").read_bytes()
    assert "config_hash" in (tmp_path / "e1" / "metrics.csv").read_text()
    assert _run(["simulate", *c, "--scenario", "theta_0p06", "--reference", "estimator", "--model", model],
                tmp_path / "s") == 0


def test_fit_r2s_small(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"r2s": {"theta_lin_rad": [-0.05, -0.15], "trials": 1},
                                   "pso": {"n_particles": 6, "max_iters": 3}}))
    c = ["--config", str(cfg)]
    assert _run(["fit-r2s", *c], tmp_path / "a") == 0
    assert _run(["fit-r2s", *c, "--targets", str(tmp_path / "a" / "targets.csv")], tmp_path / "b") == 0
    for name in ("zeta.csv", "cost_history.csv", "r2s_summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    hist = [float(line.split(",")[1]) for line in
            (tmp_path / "a" / "cost_history.csv").read_text().splitlines()[1:]]
    assert all(b <= a for a, b in zip(hist, hist[1:]))


def test_exit_codes(tmp_path):
    assert _run(["simulate", "--scenario", "nope"], tmp_path) == 1
    (tmp_path / "bad.yaml").write_text("typo_key: 1\n")
    assert _run(["simulate", "--config", str(tmp_path / "bad.yaml")], tmp_path) == 1
    assert _run(["simulate", "--config", str(tmp_path / "missing.yaml")], tmp_path) == 1
    assert _run(["simulate", "--domain", "hifi-sim"], tmp_path) == 1
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--bogus"])
    assert exc.value.code == 1
    # an unstable physical setup makes the rollout diverge
    (tmp_path / "div.yaml").write_text(yaml.safe_dump({"controller": {"u_max_N": 1e12, "Q_diag": [1e12, 1, 1, 1], "rail_limit_m": None},
                                                      "simulation": {"dt_s": 0.5, "duration_s": 200.0}}))
    assert _run(["simulate", "--config", str(tmp_path / "div.yaml")], tmp_path) == 2
