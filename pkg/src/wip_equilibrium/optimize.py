"""Derivative-free optimizers and real-to-sim adaptation of the friction parameters.

Objectives may be scalar (``f(x) -> float``) or vectorized over a population
(``f(X) -> array`` with ``X`` of shape ``(n, d)``); pass ``vectorized=True`` for
the latter. Non-finite objective values are treated as ``+inf``.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .control import ControllerConfig, nominal_gain, rollout_batch
from .dynamics import PayloadConfig, WipParams, combine_payload, stack_bodies
from .friction import NoiseParams

log = logging.getLogger(__name__)

__all__ = [
    "PsoConfig",
    "GaConfig",
    "OptResult",
    "TargetSet",
    "SimTemplate",
    "pso_minimize",
    "ga_minimize",
    "make_targets",
    "r2s_cost",
    "r2s_costs",
    "real_to_sim_adapt",
    "default_zeta_bounds",
]


def default_zeta_bounds():
    """Box for the 12-vector: levels, vs and sigma in [0, 1], eps in [0, 0.05], alpha in [0.1, 1].

    vs starts at 1e-3 so the Stribeck exponent stays defined.
    """
    lo = np.array([0.0, 0.0, 1e-3, 0.0, 0.0, 0.1] * 2)
    hi = np.array([1.0, 1.0, 1.0, 1.0, 0.05, 1.0] * 2)
    return lo, hi


@dataclass(frozen=True)
class PsoConfig:
    lower: tuple
    upper: tuple
    n_particles: int = 30
    w: float = 0.9
    c1: float = 0.5
    c2: float = 0.2
    max_iters: int = 200
    time_budget: float = 1800.0
    seed: int = 0
    # stop when the best cost improves by less than ``tol`` (relative) over ``patience`` iterations
    tol: Optional[float] = None
    patience: int = 20
    v_init: float = 0.1

    def __post_init__(self):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise ValueError("bounds must be 1-d and of equal length")
        if np.any(hi < lo):
            raise ValueError("lower bound above upper bound")
        if self.n_particles < 1:
            raise ValueError("need at least one particle")


@dataclass(frozen=True)
class GaConfig:
    lower: tuple
    upper: tuple
    pop_size: int = 30
    max_iters: int = 200
    tournament: int = 3
    blend_alpha: float = 0.5
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    mutation_scale: float = 0.1
    elitism: int = 1
    time_budget: float = 1800.0
    seed: int = 0
    tol: Optional[float] = None
    patience: int = 20


@dataclass
class OptResult:
    x: np.ndarray
    cost: float
    history: list  # best-so-far cost per iteration (index 0 = initial population)
    n_evals: int
    wall_time: float
    stop_reason: str = "max_iters"
    timing: list = field(default_factory=list)  # wall-clock seconds at each history entry

    @property
    def zeta_star(self) -> np.ndarray:
        return self.x

    def to_csv(self, path) -> None:
        """Cost history; wall-clock times are kept out so reruns are byte-identical."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "best_cost"])
            for i, c in enumerate(self.history):
                w.writerow([i, f"{c:.12g}"])

    def timing_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "best_cost", "wall_s"])
            for i, (c, s) in enumerate(zip(self.history, self.timing)):
                w.writerow([i, f"{c:.12g}", f"{s:.3f}"])


def _evaluator(objective, vectorized):
    def evaluate(X):
        if vectorized:
            f = np.asarray(objective(X), dtype=float).reshape(-1)
        else:
            f = np.array([objective(x) for x in X], dtype=float)
        return np.where(np.isfinite(f), f, np.inf)
    return evaluate


def _converged(history, tol, patience) -> bool:
    if tol is None or len(history) <= patience:
        return False
    old, new = history[-1 - patience], history[-1]
    if not np.isfinite(old):
        return False
    return (old - new) <= tol * max(abs(old), 1e-300)


def pso_minimize(objective: Callable, cfg: PsoConfig, vectorized: bool = False) -> OptResult:
    """Global-best particle swarm with per-dimension random coefficients.

    Velocities follow ``v <- w v + c1 r1 (p_best - x) + c2 r2 (g_best - x)``;
    positions are clamped to the bounds and the clamped velocity component is zeroed.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    lo, hi = np.asarray(cfg.lower, float), np.asarray(cfg.upper, float)
    span = hi - lo
    n, d = cfg.n_particles, lo.size
    evaluate = _evaluator(objective, vectorized)

    X = lo + rng.random((n, d)) * span
    V = (rng.random((n, d)) * 2.0 - 1.0) * span * cfg.v_init
    f = evaluate(X)
    n_evals = n
    P, Pf = X.copy(), f.copy()
    g = int(np.argmin(Pf))
    G, Gf = P[g].copy(), float(Pf[g])
    history, timing = [Gf], [time.perf_counter() - t0]
    reason = "max_iters"
    for it in range(cfg.max_iters):
        if time.perf_counter() - t0 > cfg.time_budget:
            reason = "time_budget"
            break
        if _converged(history, cfg.tol, cfg.patience):
            reason = "converged"
            break
        r1 = rng.random((n, d))
        r2 = rng.random((n, d))
        V = cfg.w * V + cfg.c1 * r1 * (P - X) + cfg.c2 * r2 * (G - X)
        X = X + V
        clipped = (X < lo) | (X > hi)
        X = np.clip(X, lo, hi)
        V[clipped] = 0.0
        f = evaluate(X)
        n_evals += n
        better = f < Pf
        P[better], Pf[better] = X[better], f[better]
        g = int(np.argmin(Pf))
        if Pf[g] < Gf:
            G, Gf = P[g].copy(), float(Pf[g])
        history.append(Gf)
        timing.append(time.perf_counter() - t0)
        log.debug("pso iter %d best %.6g", it + 1, Gf)
    return OptResult(G, Gf, history, n_evals, time.perf_counter() - t0, reason, timing)


def ga_minimize(objective: Callable, cfg: GaConfig, vectorized: bool = False) -> OptResult:
    """Real-coded GA: tournament selection, BLX-alpha crossover, gaussian mutation, elitism."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    lo, hi = np.asarray(cfg.lower, float), np.asarray(cfg.upper, float)
    span = hi - lo
    n, d = cfg.pop_size, lo.size
    evaluate = _evaluator(objective, vectorized)

    pop = lo + rng.random((n, d)) * span
    fit = evaluate(pop)
    n_evals = n
    b = int(np.argmin(fit))
    best, best_f = pop[b].copy(), float(fit[b])
    history, timing = [best_f], [time.perf_counter() - t0]
    reason = "max_iters"
    for _ in range(cfg.max_iters):
        if time.perf_counter() - t0 > cfg.time_budget:
            reason = "time_budget"
            break
        if _converged(history, cfg.tol, cfg.patience):
            reason = "converged"
            break
        order = np.argsort(fit, kind="stable")
        n_elite = min(cfg.elitism, n)
        children = [pop[i].copy() for i in order[:n_elite]]
        while len(children) < n:
            cand = rng.integers(0, n, size=(2, cfg.tournament))
            pa = pop[cand[0][np.argmin(fit[cand[0]])]]
            pb = pop[cand[1][np.argmin(fit[cand[1]])]]
            if rng.random() < cfg.crossover_rate:
                cmin, cmax = np.minimum(pa, pb), np.maximum(pa, pb)
                ext = cfg.blend_alpha * (cmax - cmin)
                child = cmin - ext + rng.random(d) * (cmax - cmin + 2.0 * ext)
            else:
                child = pa.copy()
            mutate = rng.random(d) < cfg.mutation_rate
            child = child + mutate * rng.standard_normal(d) * cfg.mutation_scale * span
            children.append(np.clip(child, lo, hi))
        pop = np.array(children)
        fit = evaluate(pop)
        n_evals += n
        b = int(np.argmin(fit))
        if fit[b] < best_f:
            best, best_f = pop[b].copy(), float(fit[b])
        history.append(best_f)
        timing.append(time.perf_counter() - t0)
    return OptResult(best, best_f, history, n_evals, time.perf_counter() - t0, reason, timing)


@dataclass(frozen=True)
class SimTemplate:
    """Everything about the simulator except the friction parameters."""

    params: WipParams = field(default_factory=WipParams)
    controller: ControllerConfig = field(default_factory=lambda: ControllerConfig(rail_limit=None))
    noise: Optional[NoiseParams] = field(default_factory=NoiseParams)
    dt: float = 0.0015
    window_len: int = 80
    decimation: int = 10

    @property
    def n_steps(self) -> int:
        return (self.window_len - 1) * self.decimation


@dataclass
class TargetSet:
    """Per-class mean observed windows, ``X`` of shape ``(m, 2, L)``."""

    X: np.ndarray
    payloads: list
    trial_seeds: np.ndarray  # (m, trials)
    channel_std: np.ndarray  # (2,)

    @property
    def m(self) -> int:
        return len(self.payloads)

    @classmethod
    def from_windows(cls, windows, payloads, trial_seeds) -> "TargetSet":
        """``windows`` has shape ``(m, trials, L, 2)``."""
        windows = np.asarray(windows, dtype=float)
        X = windows.mean(axis=1).transpose(0, 2, 1)
        std = X.transpose(1, 0, 2).reshape(2, -1).std(axis=1)
        std = np.where(std > 0.0, std, 1.0)
        return cls(X, list(payloads), np.asarray(trial_seeds), std)

    def to_csv(self, path) -> None:
        """One row per class: payload, trial seeds, then the mean x and theta channels."""
        L = self.X.shape[2]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["class", "m_p_kg", "l_p_m", "d_p_m", "trial_seeds",
                        *(f"x_{t}" for t in range(L)), *(f"theta_{t}" for t in range(L))])
            for c, pl in enumerate(self.payloads):
                w.writerow([c, repr(pl.m_p), repr(pl.l_p), repr(pl.d_p),
                            " ".join(str(int(s)) for s in self.trial_seeds[c]),
                            *(repr(float(v)) for v in self.X[c].reshape(-1))])

    @classmethod
    def from_csv(cls, path) -> "TargetSet":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:5] != ["class", "m_p_kg", "l_p_m", "d_p_m", "trial_seeds"]:
            raise ValueError(f"{path}: not a target-set file")
        body = rows[1:]
        if not body:
            raise ValueError(f"{path}: no target classes")
        L = (len(rows[0]) - 5) // 2
        payloads = [PayloadConfig(float(r[1]), float(r[2]), float(r[3])) for r in body]
        seeds = np.array([[int(s) for s in r[4].split()] for r in body], dtype=np.int64)
        X = np.array([[float(v) for v in r[5:]] for r in body]).reshape(len(body), 2, L)
        std = X.transpose(1, 0, 2).reshape(2, -1).std(axis=1)
        return cls(X, payloads, seeds, np.where(std > 0.0, std, 1.0))


def _class_windows(zetas, payloads, trial_seeds, tpl: SimTemplate, noise_draws=None):
    """Simulate every (zeta, class, trial) combination; returns windows ``(n_z, m, trials, L, 2)``."""
    zetas = np.atleast_2d(np.asarray(zetas, float))
    nz = len(zetas)
    m, trials = trial_seeds.shape
    bodies = [combine_payload(tpl.params, pl) for pl in payloads]
    body = stack_bodies([bodies[c] for _ in range(nz) for c in range(m) for _ in range(trials)])
    seeds = np.tile(trial_seeds.reshape(-1), nz)
    zrep = np.repeat(zetas, m * trials, axis=0)
    if tpl.noise is not None and noise_draws is not None:
        noise_draws = np.tile(noise_draws, (nz, 1, 1))
    K = nominal_gain(tpl.params, tpl.controller).K
    res = rollout_batch(
        body, tpl.params, K, tpl.n_steps, tpl.dt, seeds,
        zeta_translation=zrep[:, :6], zeta_actuator=zrep[:, 6:], noise=tpl.noise,
        ctrl=tpl.controller, window_len=tpl.window_len, decimation=tpl.decimation,
        noise_draws=noise_draws,
    )
    win = res.windows(tpl.window_len, tpl.decimation)
    bad = (res.diverged | (res.length < tpl.n_steps + 1)).reshape(nz, m * trials).any(axis=1)
    return win.reshape(nz, m, trials, tpl.window_len, 2), bad


def make_targets(zeta, payloads: Sequence[PayloadConfig], trials: int, seed: int,
                 tpl: SimTemplate = SimTemplate()) -> TargetSet:
    """Record class-mean windows from the simulator itself (surrogate real data)."""
    ss = np.random.SeedSequence(seed)
    trial_seeds = ss.generate_state(len(payloads) * trials, dtype=np.uint32).reshape(len(payloads), trials)
    win, bad = _class_windows(zeta, payloads, trial_seeds, tpl)
    if bad[0]:
        raise RuntimeError("target episode failed")
    return TargetSet.from_windows(win[0], payloads, trial_seeds)


def r2s_costs(zetas, targets: TargetSet, tpl: SimTemplate = SimTemplate(), noise_draws=None) -> np.ndarray:
    """Vectorized trajectory-matching cost for a population of 12-vectors."""
    if tpl.noise is not None and noise_draws is None:
        noise_draws = np.stack([
            np.random.default_rng(int(s)).standard_normal((tpl.n_steps + 1, 4))
            for s in targets.trial_seeds.reshape(-1)
        ])
    win, bad = _class_windows(zetas, targets.payloads, targets.trial_seeds, tpl, noise_draws)
    XS = win.mean(axis=2).transpose(0, 1, 3, 2)  # (nz, m, 2, L)
    diff = (XS - targets.X[None]) / targets.channel_std[None, None, :, None]
    cost = (diff**2).sum(axis=(2, 3)).mean(axis=1)
    cost[bad] = np.inf
    return cost


def r2s_cost(zeta, targets: TargetSet, tpl: SimTemplate = SimTemplate()) -> float:
    """Mean over classes of the summed per-timestep squared distance (standardized channels)."""
    return float(r2s_costs(np.asarray(zeta, float)[None], targets, tpl)[0])


def real_to_sim_adapt(targets: TargetSet, cfg: PsoConfig, tpl: SimTemplate = SimTemplate()) -> OptResult:
    """Fit the 12 friction parameters to the target windows with PSO."""
    if targets.m == 0:
        raise ValueError("empty target set")
    if len(cfg.lower) != 12:
        raise ValueError("friction search space must be 12-dimensional")
    draws = None
    if tpl.noise is not None:
        draws = np.stack([
            np.random.default_rng(int(s)).standard_normal((tpl.n_steps + 1, 4))
            for s in targets.trial_seeds.reshape(-1)
        ])

    def objective(Z):
        return r2s_costs(Z, targets, tpl, draws)

    return pso_minimize(objective, cfg, vectorized=True)
