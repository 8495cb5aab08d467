"""Joint friction/latency model, observation noise and the high-fidelity step.

The friction model is a Stribeck curve with a velocity deadzone, passed through
a two-tap blend of the current and previous steady friction values. It is
applied separately to the translation joint (driven by ``dx_w``) and to the
actuator joint (driven by the wheel rate ``dx_w / r``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import EffectiveBody, SimState, WipParams, step_rk4

__all__ = [
    "FrictionParams",
    "FrictionState",
    "NoiseParams",
    "HiFiConfig",
    "stribeck_force",
    "g_zeta_step",
    "g_zeta",
    "observation_noise",
    "noise_envelope",
    "hifi_step",
    "ZETA_FIELDS",
]

ZETA_FIELDS = ("F_s", "F_c", "vs", "sigma", "eps", "alpha")


@dataclass(frozen=True)
class FrictionParams:
    """Six friction parameters of one joint.

    F_s, F_c : static and Coulomb levels
    vs : Stribeck velocity
    sigma : viscous coefficient
    eps : deadzone half-width in joint velocity
    alpha : weight of the current sample in the two-tap blend
    """

    F_s: float = 0.0
    F_c: float = 0.0
    vs: float = 0.1
    sigma: float = 0.0
    eps: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        if not (self.F_s >= self.F_c >= 0.0):
            raise ValueError(f"need F_s >= F_c >= 0, got F_s={self.F_s}, F_c={self.F_c}")
        if not self.vs > 0.0:
            raise ValueError("Stribeck velocity must be positive")
        if self.sigma < 0.0 or self.eps < 0.0:
            raise ValueError("sigma and eps must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in ZETA_FIELDS], dtype=float)

    @classmethod
    def from_array(cls, values) -> "FrictionParams":
        """Build from a 6-vector; the two friction levels are ordered so F_s >= F_c."""
        v = [float(x) for x in values]
        if len(v) != 6:
            raise ValueError("expected 6 friction parameters")
        hi, lo = max(v[0], v[1]), min(v[0], v[1])
        return cls(hi, lo, *v[2:])


@dataclass(frozen=True)
class FrictionState:
    prev_F_ss: float = 0.0


@dataclass(frozen=True)
class NoiseParams:
    A: float = 0.01
    B: float = 0.5
    f: float = 0.0002
    seed: int = 0


@dataclass(frozen=True)
class HiFiConfig:
    zeta_translation: FrictionParams = field(default_factory=FrictionParams)
    zeta_actuator: FrictionParams = field(default_factory=FrictionParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    friction_translation: bool = True
    friction_actuator: bool = True
    observation_noise: bool = True

    @property
    def zeta(self) -> np.ndarray:
        """The 12-vector (translation joint first)."""
        return np.concatenate([self.zeta_translation.as_array(), self.zeta_actuator.as_array()])

    def with_zeta(self, zeta) -> "HiFiConfig":
        zeta = np.asarray(zeta, dtype=float)
        if zeta.shape != (12,):
            raise ValueError("zeta must have 12 entries")
        return HiFiConfig(
            FrictionParams.from_array(zeta[:6]),
            FrictionParams.from_array(zeta[6:]),
            self.noise,
            self.friction_translation,
            self.friction_actuator,
            self.observation_noise,
        )

    @classmethod
    def plain(cls) -> "HiFiConfig":
        """All augmentations off: the plain rigid-body simulator."""
        return cls(friction_translation=False, friction_actuator=False, observation_noise=False)


def stribeck_force(v, zp: FrictionParams):
    """Steady friction ``F_ss(v)``; zero inside the deadzone ``|v| < eps``.

    Accepts arrays for ``v`` and for the fields of ``zp``.
    """
    v = np.asarray(v, dtype=float)
    sgn = np.sign(v)
    stribeck = np.exp(-((v / zp.vs) ** 2))
    f = zp.F_c * sgn + (zp.F_s - zp.F_c) * stribeck * sgn + zp.sigma * v
    out = np.where(np.abs(v) < zp.eps, 0.0, f)
    return out if out.ndim else float(out)


def g_zeta(f_now, f_prev, alpha):
    return -alpha * f_now + (alpha - 1.0) * f_prev


def g_zeta_step(v, zp: FrictionParams, fs: FrictionState):
    """One sample of the joint force ``-a F_ss(t) + (a - 1) F_ss(t - 1)``."""
    f_now = stribeck_force(v, zp)
    return g_zeta(f_now, fs.prev_F_ss, zp.alpha), FrictionState(f_now)


def noise_envelope(t, npar: NoiseParams):
    return npar.A * np.cos(2.0 * np.pi * npar.f * np.asarray(t, dtype=float)) * npar.B


def observation_noise(t: float, npar: NoiseParams, rng: np.random.Generator, size=None):
    """``A cos(2 pi f t) * B * n`` with ``n ~ N(0, 1)`` drawn from ``rng``."""
    return noise_envelope(t, npar) * rng.standard_normal(size)


def hifi_step(s: SimState, u: float, cfg: HiFiConfig, eb: EffectiveBody, p: WipParams,
              fs, rng: np.random.Generator, dt: float):
    """Advance the high-fidelity simulator by one step.

    ``fs`` is a ``(translation, actuator)`` pair of :class:`FrictionState`.
    Returns ``(true_state, observed_state, fs')``.
    """
    fs_tr, fs_act = fs
    f_tr = tau_act = 0.0
    if cfg.friction_translation:
        f_tr, fs_tr = g_zeta_step(s.dx_w, cfg.zeta_translation, fs_tr)
    if cfg.friction_actuator:
        tau_act, fs_act = g_zeta_step(s.dx_w / p.r, cfg.zeta_actuator, fs_act)
    nxt = step_rk4(s, u, dt, eb, p, f_ext=(f_tr, tau_act))
    if cfg.observation_noise:
        obs = SimState.from_q(nxt.q + observation_noise(nxt.t, cfg.noise, rng, 4), nxt.t)
    else:
        obs = nxt
    return nxt, obs, (fs_tr, fs_act)
