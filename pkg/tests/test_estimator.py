import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wip_equilibrium.dynamics import PayloadConfig, WipParams, equilibrium_pitch
from wip_equilibrium.estimator import (
    Dataset,
    DatasetConfig,
    EstimatorModel,
    TrainConfig,
    baseline_ridge,
    generate_dataset,
    mse,
    predict,
    predict_batch,
    train,
)
from wip_equilibrium.friction import HiFiConfig
from wip_equilibrium.lstm import Adam, LSTMNet

P = WipParams()
SMALL = DatasetConfig(count=60)
TINY = TrainConfig(epochs=3, batch_size=16, hidden=8, seed=0)


@pytest.fixture(scope="module")
def small_ds():
    return generate_dataset(SMALL, HiFiConfig(), seed=5)


def test_labels_match_equilibrium_exactly(small_ds):
    for i in range(len(small_ds)):
        assert small_ds.y[i] == equilibrium_pitch(P, small_ds.payload(i))
    assert small_ds.domain == "hifi-sim"
    assert small_ds.windows.shape == (60, 80, 2)


def test_splits_disjoint_and_stats_from_train(small_ds):
    idx = [set(small_ds.splits[k]) for k in ("train", "val", "test")]
    assert not (idx[0] & idx[1]) and not (idx[0] & idx[2]) and not (idx[1] & idx[2])
    assert sum(map(len, idx)) == 60 and len(idx[0]) == 48
    Xtr, _ = small_ds.part("train")
    assert np.allclose(small_ds.x_mean, Xtr.reshape(-1, 2).mean(0))
    # corrupting the held-out windows leaves the statistics untouched
    other = Dataset(small_ds.windows.copy(), small_ds.y, small_ds.payloads, small_ds.inertia_scale,
                    small_ds.seeds, small_ds.domain, small_ds.splits)
    other.windows[small_ds.splits["val"]] += 100.0
    assert np.array_equal(Dataset(other.windows, other.y, other.payloads, other.inertia_scale,
                                  other.seeds, other.domain, other.splits).x_mean, small_ds.x_mean)


def test_zero_payload_range_gives_zero_labels():
    ds = generate_dataset(DatasetConfig(count=10, m_p_range=(0.0, 0.0)), HiFiConfig.plain(), 1)
    assert np.all(ds.y == 0.0) and ds.domain == "plain-sim"


def test_generation_validation():
    with pytest.raises(ValueError):
        generate_dataset(DatasetConfig(count=5), HiFiConfig.plain(), 0)
    with pytest.raises(ValueError):
        generate_dataset(DatasetConfig(count=10, m_p_range=(1.0, 0.0)), HiFiConfig.plain(), 0)


def test_generation_reproducible():
    a = generate_dataset(DatasetConfig(count=12), HiFiConfig(), 9)
    b = generate_dataset(DatasetConfig(count=12), HiFiConfig(), 9)
    assert np.array_equal(a.windows, b.windows) and np.array_equal(a.y, b.y)


def test_heavier_payload_falls_faster():
    from wip_equilibrium.control import ControllerConfig, nominal_gain, rollout_batch
    from wip_equilibrium.dynamics import combine_payload, stack_bodies
    ctrl = ControllerConfig(rail_limit=None)
    K = nominal_gain(P, ctrl).K
    masses = np.linspace(0.2, 1.6, 8)
    bodies = stack_bodies([combine_payload(P, PayloadConfig(m, 0.3, 0.06)) for m in masses])
    res = rollout_batch(bodies, P, K, 800, 0.0015, np.arange(8), ctrl=ctrl)
    tilt = np.abs(res.true[:, 800, 1])
    assert np.all(np.diff(tilt) > 0)


def test_dataset_csv_roundtrip(tmp_path, small_ds):
    small_ds.to_csv(tmp_path / "d.csv")
    back = Dataset.from_csv(tmp_path / "d.csv")
    assert np.array_equal(back.windows, small_ds.windows)
    assert np.array_equal(back.y, small_ds.y)
    assert all(np.array_equal(back.splits[k], small_ds.splits[k]) for k in back.splits)
    head = (tmp_path / "d.csv").read_text().splitlines()[0].split(",")
    assert head[:2] == ["id", "y"] and len(head) == 9 + 160


def _grad_check(dtype=np.float64, h=1e-5):
    net = LSTMNet(2, 4, 2, seed=1, dtype=dtype)
    rng = np.random.default_rng(0)
    X = rng.standard_normal((3, 5, 2))
    y = rng.standard_normal(3)

    def loss():
        return 0.5 * np.sum((net.forward(X) - y) ** 2)

    pred = net.forward(X, keep_cache=True)
    grads = net.backward(pred - y)
    worst = 0.0
    for k, v in net.params.items():
        for idx in np.ndindex(v.shape):
            old = v[idx]
            v[idx] = old + h
            lp = loss()
            v[idx] = old - h
            lm = loss()
            v[idx] = old
            fd = (lp - lm) / (2 * h)
            worst = max(worst, abs(fd - grads[k][idx]) / max(abs(fd), abs(grads[k][idx]), 1e-8))
    return worst


def test_gradient_check():
    assert _grad_check() < 1e-4


def test_forward_deterministic_and_shapes():
    net = LSTMNet(2, 6, 2, seed=3)
    X = np.random.default_rng(1).standard_normal((4, 7, 2))
    assert np.array_equal(net.forward(X), net.forward(X))
    assert net.forward(X).shape == (4,)
    flat = net.get_flat()
    net.set_flat(flat)
    assert np.array_equal(net.get_flat(), flat) and flat.size == net.n_params


def test_adam_minimizes_quadratic():
    p = {"w": np.array([3.0, -2.0])}
    opt = Adam(p, lr=0.1)
    for _ in range(500):
        opt.step(p, {"w": 2 * p["w"]})
    assert np.allclose(p["w"], 0.0, atol=1e-3)


def test_constant_labels_learned():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((50, 10, 2))
    y = np.full(50, -0.07)
    splits = {"train": np.arange(40), "val": np.arange(40, 45), "test": np.arange(45, 50)}
    ds = Dataset(W, y, np.zeros((50, 3)), np.ones(50), np.arange(50), "plain-sim", splits)
    model = train(ds, TrainConfig(epochs=60, batch_size=20, hidden=4, lr=1e-2, seed=0))
    Xv, yv = ds.part("val")
    assert mse(predict_batch(model, Xv), yv) < 1e-6
    assert mse(baseline_ridge(ds, 1.0).predict(Xv), yv) < 1e-20


def test_training_deterministic_and_best_epoch(small_ds):
    a, b = train(small_ds, TINY), train(small_ds, TINY)
    for k in a.net.params:
        assert np.array_equal(a.net.params[k], b.net.params[k])
    vals = [h[2] for h in a.history]
    assert a.history[a.best_epoch - 1][2] == min(vals)


def test_empty_train_split_and_nan_abort(small_ds):
    empty = dict(small_ds.splits, train=np.array([], dtype=int))
    with pytest.raises((ValueError, IndexError)):
        train(Dataset(small_ds.windows, small_ds.y, small_ds.payloads, small_ds.inertia_scale,
                      small_ds.seeds, small_ds.domain, empty, np.zeros(2), np.ones(2)), TINY)
    bad = small_ds.windows.copy()
    bad[small_ds.splits["train"][0], 3, 0] = np.nan
    ds = Dataset(bad, small_ds.y, small_ds.payloads, small_ds.inertia_scale, small_ds.seeds,
                 small_ds.domain, small_ds.splits, small_ds.x_mean, small_ds.x_std)
    with pytest.raises(FloatingPointError, match="non-finite"):
        train(ds, TINY)


def test_model_file_roundtrip(tmp_path, small_ds):
    m = train(small_ds, TINY)
    m.save(tmp_path / "a.bin")
    m2 = EstimatorModel.load(tmp_path / "a.bin")
    m2.save(tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
    X = small_ds.windows[:5]
    assert np.array_equal(predict_batch(m, X), predict_batch(m2, X))
    (tmp_path / "c.bin").write_bytes(b'{"format": "other"}\n')
    with pytest.raises(ValueError):
        EstimatorModel.load(tmp_path / "c.bin")


def test_predict_checks_length(small_ds):
    m = train(small_ds, TINY)
    w = small_ds.windows[0]
    assert predict(m, w) == predict(m, w.copy())
    with pytest.raises(ValueError):
        predict(m, w[:20])
    with pytest.raises(ValueError):
        predict_batch(m, w)


def test_ridge_limits(small_ds):
    big = baseline_ridge(small_ds, 1e12)
    _, ytr = small_ds.part("train")
    assert np.allclose(big.predict(small_ds.windows), ytr.mean(), atol=1e-9)
    with pytest.raises(np.linalg.LinAlgError, match="lambda"):
        baseline_ridge(small_ds, 0.0)  # 160 features, 48 samples
    with pytest.raises(ValueError):
        baseline_ridge(small_ds, -1.0)


def test_truncated_windows(small_ds):
    t = small_ds.truncated(20)
    assert t.windows.shape == (60, 20, 2)
    assert np.array_equal(t.windows, small_ds.windows[:, :20])
