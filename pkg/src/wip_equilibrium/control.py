"""LQR balancing, the soft pitch-reference update and closed-loop episodes.

``rollout_batch`` integrates many independent episodes in lockstep (numpy
broadcasting over a leading episode axis); ``run_episode`` is the single-episode
view of it. Each episode owns its noise stream (seeded per episode) and its
friction filter state, so a batch gives the same numbers as running its members
one at a time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .dynamics import (
    EffectiveBody,
    LinearModel,
    PayloadConfig,
    SimState,
    SimulationDiverged,
    WipParams,
    combine_payload,
    equilibrium_pitch,
    linearize,
    rk4_step,
    stack_bodies,
    with_inertia_scale,
)
from .friction import HiFiConfig, NoiseParams, g_zeta, noise_envelope, stribeck_force

__all__ = [
    "LqrGain",
    "SoftRefState",
    "ControllerConfig",
    "Scenario",
    "Trajectory",
    "BatchResult",
    "solve_lqr",
    "care_residual",
    "nominal_gain",
    "soft_reference",
    "control_law",
    "tracking_reference",
    "rollout_batch",
    "run_batch",
    "run_episode",
    "TRAJECTORY_HEADER",
]

TRAJECTORY_HEADER = (
    "t", "x_w", "theta", "dx_w", "dtheta",
    "x_obs", "theta_obs", "dx_obs", "dtheta_obs", "u", "theta_ref",
)


@dataclass(frozen=True)
class LqrGain:
    K: np.ndarray
    Q: np.ndarray
    R: float
    P: np.ndarray


@dataclass(frozen=True)
class SoftRefState:
    theta_sm: float = 0.0
    alpha_s: float = 0.05
    beta_s: float = 0.1


@dataclass(frozen=True)
class ControllerConfig:
    Q_diag: tuple = (10.0, 100.0, 1.0, 1.0)
    R: float = 1.0
    u_max: float = 20.0
    alpha_s: float = 0.05
    beta_s: float = 0.1
    rail_limit: Optional[float] = 1.0
    # "episode": ramp clock starts at t = 0; "accept": starts when the estimate arrives
    ramp_clock: str = "episode"


@dataclass(frozen=True)
class Scenario:
    payload: PayloadConfig = field(default_factory=PayloadConfig)
    hifi: HiFiConfig = field(default_factory=HiFiConfig.plain)
    params: WipParams = field(default_factory=WipParams)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    duration: float = 20.0
    dt: float = 0.0015
    seed: int = 0
    task: str = "balance"  # or "track"
    reference: str = "baseline"  # "baseline" | "oracle" | "estimator"
    inertia_scale: float = 1.0
    track_amp: float = 0.3
    track_freq: float = 0.4
    track_start: float = 0.0
    window_len: int = 80
    decimation: int = 10

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def accept_step(self) -> int:
        return (self.window_len - 1) * self.decimation

    def body(self) -> EffectiveBody:
        return with_inertia_scale(combine_payload(self.params, self.payload), self.inertia_scale)


def care_residual(A, B, Q, R, P) -> float:
    Rinv = np.linalg.inv(np.atleast_2d(R))
    res = A.T @ P + P @ A - P @ B @ Rinv @ B.T @ P + Q
    return float(np.linalg.norm(res))


def solve_lqr(model: LinearModel, Q, R) -> LqrGain:
    """Continuous-time LQR gain ``K = R^-1 B^T P`` for ``u = -K dq``."""
    A, B = np.asarray(model.A, float), np.asarray(model.B, float)
    Q = np.asarray(Q, float)
    R2 = np.atleast_2d(np.asarray(R, float))
    if R2.shape != (1, 1) or R2[0, 0] <= 0.0:
        raise ValueError("R must be a positive scalar")
    if not np.allclose(Q, Q.T) or np.linalg.eigvalsh(Q).min() < -1e-12:
        raise ValueError("Q must be symmetric positive semi-definite")
    try:
        P = scipy.linalg.solve_continuous_are(A, B, Q, R2)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ValueError(f"Riccati equation has no stabilizing solution: {exc}") from exc
    P = 0.5 * (P + P.T)
    K = np.linalg.solve(R2, B.T @ P)
    if np.linalg.eigvals(A - B @ K).real.max() >= 0.0:
        raise ValueError("(A, B) is not stabilizable")
    res = care_residual(A, B, Q, R2, P)
    scale = max(1.0, float(np.linalg.norm(Q)), float(np.linalg.norm(P)))
    if res > 1e-8 * scale:
        raise ValueError(f"Riccati residual too large: {res:.3e}")
    return LqrGain(K=K, Q=Q, R=float(R2[0, 0]), P=P)


def nominal_gain(params: WipParams, ctrl: ControllerConfig) -> LqrGain:
    """Gain designed once on the payload-free model."""
    model = linearize(combine_payload(params, PayloadConfig()), params)
    return solve_lqr(model, np.diag(ctrl.Q_diag), ctrl.R)


def _ramp_target(theta_lin, t, beta):
    theta_lin = np.asarray(theta_lin, dtype=float)
    return np.where(theta_lin <= 0.0, np.maximum(theta_lin, -beta * t), np.minimum(theta_lin, beta * t))


def soft_reference(theta_lin: float, t: float, st: SoftRefState):
    """Ramp toward ``theta_lin`` at ``beta_s`` and low-pass with ``alpha_s``.

    Returns ``(theta_ref, st')``. Positive targets use the mirrored ramp.
    """
    des = float(_ramp_target(theta_lin, t, st.beta_s))
    sm = st.alpha_s * des + (1.0 - st.alpha_s) * st.theta_sm
    return sm, SoftRefState(sm, st.alpha_s, st.beta_s)


def control_law(obs: SimState, theta_ref: float, gain: LqrGain, x_ref: float = 0.0,
                dx_ref: float = 0.0, u_max: Optional[float] = 20.0, u0: float = 0.0) -> float:
    q_ref = np.array([x_ref, theta_ref, dx_ref, 0.0])
    u = u0 - float(gain.K.reshape(-1) @ (obs.q - q_ref))
    if u_max is not None:
        u = float(np.clip(u, -u_max, u_max))
    return u


def tracking_reference(t, amp: float, freq: float, start: float = 0.0):
    """Position/velocity reference for ``dx_des = amp sin(2 pi freq (t - start))``."""
    t = np.asarray(t, dtype=float)
    tau = np.maximum(t - start, 0.0)
    w = 2.0 * np.pi * freq
    active = t >= start
    x = np.where(active, amp / w * (1.0 - np.cos(w * tau)), 0.0)
    dx = np.where(active, amp * np.sin(w * tau), 0.0)
    return x, dx


@dataclass
class BatchResult:
    t: np.ndarray  # (N,)
    true: np.ndarray  # (n, N, 4)
    obs: np.ndarray  # (n, N, 4)
    u: np.ndarray  # (n, N)
    theta_ref: np.ndarray  # (n, N)
    x_ref: np.ndarray  # (N,)
    dx_ref: np.ndarray  # (N,)
    length: np.ndarray  # (n,) number of valid samples per episode
    failed: np.ndarray  # (n,) rail limit reached
    diverged: np.ndarray  # (n,)
    theta_estimate: np.ndarray  # (n,) nan where no estimate was used

    def windows(self, window_len: int = 80, decimation: int = 10) -> np.ndarray:
        """Observed ``(x_w, theta)`` windows from episode start, shape ``(n, T, 2)``."""
        stop = (window_len - 1) * decimation + 1
        return self.obs[:, :stop:decimation, :2].copy()


def _noise_draws(seeds, n_samples: int) -> np.ndarray:
    return np.stack([np.random.default_rng(int(s)).standard_normal((n_samples, 4)) for s in seeds])


def _zeta_ns(z):
    z = np.asarray(z, dtype=float)
    hi, lo = np.maximum(z[:, 0], z[:, 1]), np.minimum(z[:, 0], z[:, 1])
    return SimpleNamespace(F_s=hi, F_c=lo, vs=z[:, 2], sigma=z[:, 3], eps=z[:, 4], alpha=z[:, 5])


def rollout_batch(
    bodies: EffectiveBody,
    params: WipParams,
    K,
    n_steps: int,
    dt: float,
    seeds,
    *,
    zeta_translation=None,
    zeta_actuator=None,
    noise: Optional[NoiseParams] = None,
    ctrl: ControllerConfig = ControllerConfig(),
    theta_target=None,
    accept_step: int = 790,
    estimator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    window_len: int = 80,
    decimation: int = 10,
    track: Optional[tuple] = None,
    noise_draws: Optional[np.ndarray] = None,
) -> BatchResult:
    """Closed-loop rollouts of ``n`` episodes from rest.

    zeta_translation, zeta_actuator : ``(n, 6)`` arrays, or None to disable that joint
    theta_target : ``(n,)`` target equilibrium pitch; NaN means baseline (reference 0)
    estimator : if given, called once at ``accept_step`` with the observed windows
        of the episodes whose target is NaN-free and replaces those targets
    track : ``(amp, freq, start)`` for the sinusoidal velocity task
    """
    seeds = np.atleast_1d(np.asarray(seeds))
    n = len(seeds)
    N = n_steps + 1
    K = np.asarray(K, dtype=float).reshape(-1)
    t = np.arange(N) * dt
    if track is not None:
        x_ref, dx_ref = tracking_reference(t, *track)
    else:
        x_ref, dx_ref = np.zeros(N), np.zeros(N)

    zt = _zeta_ns(zeta_translation) if zeta_translation is not None else None
    za = _zeta_ns(zeta_actuator) if zeta_actuator is not None else None
    if noise is not None:
        draws = noise_draws if noise_draws is not None else _noise_draws(seeds, N)
        env = noise_envelope(t, noise)
    target = np.full(n, np.nan) if theta_target is None else np.array(theta_target, dtype=float)
    corrected = ~np.isnan(target)
    estimate = np.full(n, np.nan)

    true = np.zeros((n, N, 4))
    obs = np.zeros((n, N, 4))
    u_log = np.zeros((n, N))
    ref_log = np.zeros((n, N))
    length = np.full(n, N)
    failed = np.zeros(n, dtype=bool)
    diverged = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)

    q = np.zeros((n, 4))
    prev_t = np.zeros(n)
    prev_a = np.zeros(n)
    sm = np.zeros(n)
    alpha_s, beta_s = ctrl.alpha_s, ctrl.beta_s
    for k in range(N):
        o = q + env[k] * draws[:, k] if noise is not None else q
        true[:, k] = q
        obs[:, k] = o
        if k == accept_step and corrected.any():
            if estimator is not None:
                win = obs[corrected, : accept_step + 1 : decimation, :2]
                target[corrected] = np.asarray(estimator(win), dtype=float).reshape(-1)
            estimate[corrected] = target[corrected]
        if k >= accept_step:
            tau = (k if ctrl.ramp_clock == "episode" else k - accept_step) * dt
            des = _ramp_target(np.where(corrected, target, 0.0), tau, beta_s)
            sm = np.where(corrected, alpha_s * des + (1.0 - alpha_s) * sm, 0.0)
        ref_log[:, k] = sm
        err = o - np.stack([np.full(n, x_ref[k]), sm, np.full(n, dx_ref[k]), np.zeros(n)], axis=-1)
        u = -(err @ K)
        if ctrl.u_max is not None:
            u = np.clip(u, -ctrl.u_max, ctrl.u_max)
        u_log[:, k] = u
        if k == N - 1:
            break
        force = u
        if zt is not None:
            f_now = stribeck_force(q[:, 2], zt)
            force = force + g_zeta(f_now, prev_t, zt.alpha)
            prev_t = f_now
        if za is not None:
            f_now = stribeck_force(q[:, 2] / params.r, za)
            force = force + g_zeta(f_now, prev_a, za.alpha) / params.r
            prev_a = f_now
        with np.errstate(all="ignore"):
            q_new = rk4_step(q, force, dt, bodies, params)
        bad = ~np.all(np.isfinite(q_new), axis=1) & active
        if bad.any():
            diverged |= bad
            length[bad] = k + 1
            active &= ~bad
        if ctrl.rail_limit is not None:
            hit = active & (np.abs(q_new[:, 0]) > ctrl.rail_limit)
            if hit.any():
                failed |= hit
                length[hit] = k + 2
                active &= ~hit
                # the crash sample is still recorded
                q = np.where(hit[:, None], q_new, q)
        q = np.where(active[:, None], q_new, q)
        if not active.any():
            # keep shapes; the remaining rows are outside every episode's length
            true[:, k + 1:] = q[:, None, :]
            obs[:, k + 1:] = q[:, None, :]
            ref_log[:, k + 1:] = sm[:, None]
            break
    return BatchResult(t, true, obs, u_log, ref_log, x_ref, dx_ref, length, failed, diverged, estimate)


@dataclass
class Trajectory:
    t: np.ndarray
    true: np.ndarray
    obs: np.ndarray
    u: np.ndarray
    theta_ref: np.ndarray
    x_ref: np.ndarray
    dx_ref: np.ndarray
    failed: bool
    theta_lin: float
    theta_estimate: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def window(self, window_len: int = 80, decimation: int = 10) -> np.ndarray:
        stop = (window_len - 1) * decimation + 1
        if stop > len(self.t):
            raise ValueError("trajectory shorter than the requested window")
        return self.obs[:stop:decimation, :2].copy()

    def position_rmse(self, start: float = 0.0, duration: Optional[float] = None) -> float:
        """RMS of ``x_w - x_ref`` from ``start``.

        With ``duration`` given, an episode halted early holds its final error
        until ``duration``, so a crash at the rail cannot lower the score.
        """
        m = self.t >= start
        err = self.true[m, 0] - self.x_ref[m]
        if duration is not None and len(self.t) > 1:
            dt = self.t[1] - self.t[0]
            missing = int(round((duration - self.t[-1]) / dt))
            if missing > 0:
                err = np.concatenate([err, np.full(missing, err[-1])])
        return float(np.sqrt(np.mean(err**2)))

    def pitch_rmse(self, start: float = 0.0, target: Optional[float] = None) -> float:
        m = self.t >= start
        ref = self.theta_lin if target is None else target
        return float(np.sqrt(np.mean((self.true[m, 1] - ref) ** 2)))

    def rows(self):
        for k in range(len(self.t)):
            yield (self.t[k], *self.true[k], *self.obs[k], self.u[k], self.theta_ref[k])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAJECTORY_HEADER)
            for row in self.rows():
                w.writerow([f"{v:.9g}" for v in row])


def _batch_inputs(scenarios):
    first = scenarios[0]
    for s in scenarios[1:]:
        if (s.params, s.controller, s.dt, s.n_steps, s.task, s.hifi.noise, s.window_len,
                s.decimation, s.track_amp, s.track_freq, s.track_start) != (
                first.params, first.controller, first.dt, first.n_steps, first.task,
                first.hifi.noise, first.window_len, first.decimation, first.track_amp,
                first.track_freq, first.track_start):
            raise ValueError("scenarios in one batch must share timing, controller and task")
    flags = {(s.hifi.friction_translation, s.hifi.friction_actuator, s.hifi.observation_noise)
             for s in scenarios}
    if len(flags) != 1:
        raise ValueError("scenarios in one batch must share augmentation flags")
    return first


def run_batch(scenarios, gain: Optional[LqrGain] = None, estimator=None) -> list:
    """Run compatible scenarios together; returns one :class:`Trajectory` each."""
    scenarios = list(scenarios)
    first = _batch_inputs(scenarios)
    if gain is None:
        gain = nominal_gain(first.params, first.controller)
    hf = first.hifi
    targets = []
    for s in scenarios:
        if s.reference == "baseline":
            targets.append(np.nan)
        elif s.reference == "oracle":
            targets.append(equilibrium_pitch(s.params, s.payload))
        elif s.reference == "estimator":
            if estimator is None:
                raise ValueError("reference='estimator' needs an estimator")
            targets.append(0.0)
        else:
            raise ValueError(f"unknown reference mode {s.reference!r}")
    use_est = any(s.reference == "estimator" for s in scenarios)
    if use_est and any(s.reference == "oracle" for s in scenarios):
        raise ValueError("cannot mix oracle and estimator references in one batch")
    track = (first.track_amp, first.track_freq, first.track_start) if first.task == "track" else None
    if first.task not in ("balance", "track"):
        raise ValueError(f"unknown task {first.task!r}")
    res = rollout_batch(
        stack_bodies([s.body() for s in scenarios]),
        first.params,
        gain.K,
        first.n_steps,
        first.dt,
        [s.seed for s in scenarios],
        zeta_translation=np.stack([s.hifi.zeta_translation.as_array() for s in scenarios])
        if hf.friction_translation else None,
        zeta_actuator=np.stack([s.hifi.zeta_actuator.as_array() for s in scenarios])
        if hf.friction_actuator else None,
        noise=hf.noise if hf.observation_noise else None,
        ctrl=first.controller,
        theta_target=targets,
        accept_step=first.accept_step,
        estimator=estimator if use_est else None,
        window_len=first.window_len,
        decimation=first.decimation,
        track=track,
    )
    out = []
    for i, s in enumerate(scenarios):
        if res.diverged[i]:
            raise SimulationDiverged(f"episode {i} (seed {s.seed}) diverged")
        n = res.length[i]
        est = res.theta_estimate[i]
        out.append(Trajectory(
            t=res.t[:n], true=res.true[i, :n], obs=res.obs[i, :n], u=res.u[i, :n],
            theta_ref=res.theta_ref[i, :n], x_ref=res.x_ref[:n], dx_ref=res.dx_ref[:n],
            failed=bool(res.failed[i]), theta_lin=equilibrium_pitch(s.params, s.payload),
            theta_estimate=None if np.isnan(est) else float(est),
            meta={"payload": s.payload, "zeta": s.hifi.zeta, "seed": s.seed},
        ))
    return out


def run_episode(scenario: Scenario, gain: Optional[LqrGain] = None, estimator=None) -> Trajectory:
    """Closed-loop episode from rest; halts (flagged) at the rail limit."""
    return run_batch([scenario], gain, estimator)[0]
