"""Equilibrium-pitch estimation from the first second of a fall.

Datasets are rollouts of the baseline LQR (pitch reference 0) under random
payloads; each sample is the observed ``(x_w, theta)`` window from episode start
and its label is the analytic equilibrium pitch of the payload.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .control import ControllerConfig, nominal_gain, rollout_batch
from .dynamics import (
    PayloadConfig,
    WipParams,
    combine_payload,
    equilibrium_pitch,
    stack_bodies,
    with_inertia_scale,
)
from .friction import HiFiConfig
from .lstm import Adam, LSTMNet

log = logging.getLogger(__name__)

__all__ = [
    "DatasetConfig",
    "Dataset",
    "TrainConfig",
    "EstimatorModel",
    "RidgeModel",
    "generate_dataset",
    "train",
    "predict",
    "predict_batch",
    "predict_latency",
    "baseline_ridge",
    "mse",
    "rmse",
]

DOMAINS = ("plain-sim", "hifi-sim")


@dataclass(frozen=True)
class DatasetConfig:
    count: int = 1200
    m_p_range: tuple = (0.0, 1.6)
    l_p_range: tuple = (0.25, 0.35)
    d_p_range: tuple = (0.0, 0.12)
    inertia_jitter: float = 0.1
    window_len: int = 80
    decimation: int = 10
    split: tuple = (0.8, 0.1, 0.1)
    max_retries: int = 5


@dataclass
class Dataset:
    windows: np.ndarray  # (M, T, 2)
    y: np.ndarray  # (M,)
    payloads: np.ndarray  # (M, 3): m_p, l_p, d_p
    inertia_scale: np.ndarray  # (M,)
    seeds: np.ndarray  # (M,)
    domain: str
    splits: dict  # name -> index array
    x_mean: np.ndarray = None
    x_std: np.ndarray = None

    def __post_init__(self):
        if self.x_mean is None:
            self.x_mean, self.x_std = _channel_stats(self.windows[self.splits["train"]])

    def __len__(self):
        return len(self.y)

    @property
    def window_len(self) -> int:
        return self.windows.shape[1]

    def part(self, name: str):
        idx = self.splits[name]
        return self.windows[idx], self.y[idx]

    def payload(self, i: int) -> PayloadConfig:
        return PayloadConfig(*map(float, self.payloads[i]))

    def truncated(self, window_len: int) -> "Dataset":
        """Same samples with only the first ``window_len`` steps of each window."""
        return Dataset(self.windows[:, :window_len].copy(), self.y, self.payloads,
                       self.inertia_scale, self.seeds, self.domain, self.splits)

    def to_csv(self, path) -> None:
        T = self.window_len
        split_of = np.empty(len(self), dtype=object)
        for name, idx in self.splits.items():
            split_of[idx] = name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            feat = [f"{c}_{t}" for t in range(T) for c in ("x", "theta")]
            w.writerow(["id", "y", "m_p_kg", "l_p_m", "d_p_m", "inertia_scale", "seed",
                        "domain", "split", *feat])
            for i in range(len(self)):
                w.writerow([i, repr(float(self.y[i])), *(repr(float(v)) for v in self.payloads[i]),
                            repr(float(self.inertia_scale[i])), int(self.seeds[i]), self.domain,
                            split_of[i], *(repr(float(v)) for v in self.windows[i].reshape(-1))])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        head, body = rows[0], rows[1:]
        n_feat = len(head) - 9
        T = n_feat // 2
        y = np.array([float(r[1]) for r in body])
        pay = np.array([[float(v) for v in r[2:5]] for r in body])
        inertia = np.array([float(r[5]) for r in body])
        seeds = np.array([int(r[6]) for r in body], dtype=np.int64)
        domains = {r[7] for r in body}
        if len(domains) != 1:
            raise ValueError("mixed domains in one dataset file")
        split = np.array([r[8] for r in body])
        windows = np.array([[float(v) for v in r[9:]] for r in body]).reshape(len(body), T, 2)
        splits = {k: np.flatnonzero(split == k) for k in ("train", "val", "test")}
        return cls(windows, y, pay, inertia, seeds, domains.pop(), splits)


def _channel_stats(windows):
    flat = np.asarray(windows).reshape(-1, windows.shape[-1])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    return mean, np.where(std > 0.0, std, 1.0)


def _split_indices(n: int, fractions, rng) -> dict:
    perm = rng.permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return {
        "train": np.sort(perm[:n_train]),
        "val": np.sort(perm[n_train:n_train + n_val]),
        "test": np.sort(perm[n_train + n_val:]),
    }


def generate_dataset(cfg: DatasetConfig, hifi: HiFiConfig, seed: int, *,
                     params: WipParams = WipParams(), ctrl: ControllerConfig = ControllerConfig(),
                     dt: float = 0.0015, domain: Optional[str] = None) -> Dataset:
    """Roll out ``cfg.count`` baseline episodes with random payloads and label them."""
    if cfg.count < 10:
        raise ValueError("need at least 10 samples")
    for lo, hi in (cfg.m_p_range, cfg.l_p_range, cfg.d_p_range):
        if hi < lo:
            raise ValueError("invalid sampling range")
    if domain is None:
        plain = not (hifi.friction_translation or hifi.friction_actuator or hifi.observation_noise)
        domain = "plain-sim" if plain else "hifi-sim"
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    ctrl = replace(ctrl, rail_limit=None)
    K = nominal_gain(params, ctrl).K
    n_steps = (cfg.window_len - 1) * cfg.decimation

    def draw(n):
        pay = np.column_stack([
            rng.uniform(*cfg.m_p_range, n),
            rng.uniform(*cfg.l_p_range, n),
            rng.uniform(*cfg.d_p_range, n),
        ])
        inertia = 1.0 + rng.uniform(-cfg.inertia_jitter, cfg.inertia_jitter, n)
        seeds = rng.integers(0, 2**31 - 1, n)
        return pay, inertia, seeds

    def simulate(pay, inertia, seeds):
        bodies = [with_inertia_scale(combine_payload(params, PayloadConfig(*map(float, p))), s)
                  for p, s in zip(pay, inertia)]
        n = len(seeds)
        res = rollout_batch(
            stack_bodies(bodies), params, K, n_steps, dt, seeds,
            zeta_translation=np.tile(hifi.zeta_translation.as_array(), (n, 1))
            if hifi.friction_translation else None,
            zeta_actuator=np.tile(hifi.zeta_actuator.as_array(), (n, 1))
            if hifi.friction_actuator else None,
            noise=hifi.noise if hifi.observation_noise else None,
            ctrl=ctrl, window_len=cfg.window_len, decimation=cfg.decimation,
        )
        return res.windows(cfg.window_len, cfg.decimation), res.diverged

    pay, inertia, seeds = draw(cfg.count)
    windows, bad = simulate(pay, inertia, seeds)
    for attempt in range(cfg.max_retries):
        if not bad.any():
            break
        idx = np.flatnonzero(bad)
        log.warning("resampling %d diverged episodes (attempt %d)", len(idx), attempt + 1)
        pay[idx], inertia[idx], seeds[idx] = draw(len(idx))
        windows[idx], bad_new = simulate(pay[idx], inertia[idx], seeds[idx])
        bad = np.zeros_like(bad)
        bad[idx] = bad_new
    if bad.any():
        raise RuntimeError(f"{int(bad.sum())} episodes still diverged after {cfg.max_retries} retries")
    y = np.array([equilibrium_pitch(params, PayloadConfig(*map(float, p))) for p in pay])
    splits = _split_indices(cfg.count, cfg.split, rng)
    return Dataset(windows, y, pay, inertia, seeds.astype(np.int64), domain, splits)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 256
    lr: float = 1e-3
    weight_decay: float = 1e-5
    hidden: int = 64
    n_layers: int = 2
    seed: int = 0
    float32: bool = True


@dataclass
class EstimatorModel:
    net: LSTMNet
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    window_len: int
    hyper: TrainConfig
    history: list = field(default_factory=list)  # (epoch, train_mse, val_mse) in label units
    best_epoch: int = 0

    FORMAT = "wip-equilibrium-lstm"
    VERSION = 1

    def standardize(self, windows):
        return (np.asarray(windows, dtype=float) - self.x_mean) / self.x_std

    def save(self, path) -> None:
        """Header line of JSON followed by the raw little-endian float64 weights."""
        keys = sorted(self.net.params)
        header = {
            "format": self.FORMAT,
            "version": self.VERSION,
            "n_in": self.net.n_in,
            "hidden": self.net.hidden,
            "n_layers": self.net.n_layers,
            "window_len": self.window_len,
            "x_mean": [float(v) for v in self.x_mean],
            "x_std": [float(v) for v in self.x_std],
            "y_mean": float(self.y_mean),
            "y_std": float(self.y_std),
            "hyper": asdict(self.hyper),
            "best_epoch": self.best_epoch,
            "tensors": [[k, list(self.net.params[k].shape)] for k in keys],
        }
        blob = b"".join(np.asarray(self.net.params[k], dtype="<f8").tobytes() for k in keys)
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            fh.write(blob)

    @classmethod
    def load(cls, path) -> "EstimatorModel":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline())
            blob = fh.read()
        if header.get("format") != cls.FORMAT or header.get("version") != cls.VERSION:
            raise ValueError("not a model file of a supported version")
        hyper = TrainConfig(**header["hyper"])
        dtype = np.float32 if hyper.float32 else np.float64
        net = LSTMNet(header["n_in"], header["hidden"], header["n_layers"], dtype=dtype)
        flat = np.frombuffer(blob, dtype="<f8")
        i = 0
        for k, shape in header["tensors"]:
            n = int(np.prod(shape))
            net.params[k] = flat[i:i + n].reshape(shape).astype(dtype)
            i += n
        if i != flat.size:
            raise ValueError("weight blob size does not match header")
        return cls(net, np.array(header["x_mean"]), np.array(header["x_std"]), header["y_mean"],
                   header["y_std"], header["window_len"], hyper, [], header["best_epoch"])

    def history_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_mse", "val_mse"])
            for e, tr, va in self.history:
                w.writerow([e, f"{tr:.9g}", f"{va:.9g}"])


def mse(pred, y) -> float:
    return float(np.mean((np.asarray(pred) - np.asarray(y)) ** 2))


def rmse(pred, y) -> float:
    return float(np.sqrt(mse(pred, y)))


def _forward_in_chunks(net: LSTMNet, X, chunk: int = 512):
    return np.concatenate([net.forward(X[i:i + chunk]) for i in range(0, len(X), chunk)]) \
        if len(X) else np.zeros(0)


def train(ds: Dataset, hyper: TrainConfig = TrainConfig()) -> EstimatorModel:
    """Mini-batch Adam on the MSE of standardized labels; keeps the best-validation weights."""
    Xtr, ytr = ds.part("train")
    Xva, yva = ds.part("val")
    if len(ytr) == 0:
        raise ValueError("empty training split")
    dtype = np.float32 if hyper.float32 else np.float64
    x_mean, x_std = ds.x_mean, ds.x_std
    y_mean = float(ytr.mean())
    y_std = float(ytr.std()) or 1.0
    Xtr_s = ((Xtr - x_mean) / x_std).astype(dtype)
    Xva_s = ((Xva - x_mean) / x_std).astype(dtype)
    ttr = ((ytr - y_mean) / y_std).astype(dtype)

    net = LSTMNet(Xtr.shape[2], hyper.hidden, hyper.n_layers, seed=hyper.seed, dtype=dtype)
    opt = Adam(net.params, lr=hyper.lr, weight_decay=hyper.weight_decay)
    rng = np.random.default_rng(hyper.seed + 1)
    best = (np.inf, net.copy_params(), 0)
    history = []
    n = len(ttr)
    for epoch in range(1, hyper.epochs + 1):
        perm = rng.permutation(n)
        sq = 0.0
        for s in range(0, n, hyper.batch_size):
            idx = perm[s:s + hyper.batch_size]
            pred = net.forward(Xtr_s[idx], keep_cache=True)
            err = pred - ttr[idx]
            loss = float(np.mean(err.astype(np.float64) ** 2))
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}, batch {s // hyper.batch_size}")
            sq += loss * len(idx)
            grads = net.backward(2.0 * err / len(idx))
            opt.step(net.params, grads)
        train_mse = sq / n * y_std**2
        if len(yva):
            val_mse = mse(_forward_in_chunks(net, Xva_s) * y_std + y_mean, yva)
        else:
            val_mse = train_mse
        history.append((epoch, train_mse, val_mse))
        if val_mse < best[0]:
            best = (val_mse, net.copy_params(), epoch)
        log.debug("epoch %d train %.3e val %.3e", epoch, train_mse, val_mse)
    net.params = best[1]
    return EstimatorModel(net, x_mean, x_std, y_mean, y_std, ds.window_len, hyper, history, best[2])


def predict_batch(model: EstimatorModel, windows) -> np.ndarray:
    windows = np.asarray(windows, dtype=float)
    if windows.ndim != 3 or windows.shape[1] != model.window_len or windows.shape[2] != 2:
        raise ValueError(f"expected windows of shape (n, {model.window_len}, 2), got {windows.shape}")
    X = model.standardize(windows).astype(model.net.dtype)
    return _forward_in_chunks(model.net, X).astype(float) * model.y_std + model.y_mean


def predict(model: EstimatorModel, window) -> float:
    """Equilibrium pitch estimate for one ``(T, 2)`` window."""
    window = np.asarray(window, dtype=float)
    if window.ndim != 2:
        raise ValueError("expected a single (T, 2) window")
    return float(predict_batch(model, window[None])[0])


def predict_latency(model: EstimatorModel, window, repeats: int = 20) -> float:
    """Median wall-clock seconds of one :func:`predict` call."""
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        predict(model, window)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


@dataclass
class RidgeModel:
    coef: np.ndarray
    intercept: float
    x_mean: np.ndarray
    x_std: np.ndarray
    lam: float

    def predict(self, windows) -> np.ndarray:
        Z = ((np.asarray(windows, float) - self.x_mean) / self.x_std).reshape(len(windows), -1)
        return Z @ self.coef + self.intercept


def baseline_ridge(ds: Dataset, lam: float) -> RidgeModel:
    """Closed-form ridge regression on flattened standardized windows (intercept unpenalized)."""
    if lam < 0.0:
        raise ValueError("lambda must be non-negative")
    Xtr, ytr = ds.part("train")
    Z = ((Xtr - ds.x_mean) / ds.x_std).reshape(len(Xtr), -1)
    zm, ym = Z.mean(axis=0), ytr.mean()
    Zc = Z - zm
    G = Zc.T @ Zc + lam * np.eye(Z.shape[1])
    if lam == 0.0 and np.linalg.matrix_rank(G) < G.shape[0]:
        raise np.linalg.LinAlgError("normal matrix is singular; use lambda > 0")
    coef = np.linalg.solve(G, Zc.T @ (ytr - ym))
    return RidgeModel(coef, float(ym - zm @ coef), ds.x_mean, ds.x_std, lam)
