"""Planar wheeled inverted pendulum: payload composition, equations of motion,
equilibrium pitch, linearization and a fixed-step RK4 integrator.

State ordering is ``q = [x_w, theta, dx_w, dtheta]`` everywhere. The equations
follow the textbook WIP form

    (m + m_w + I_w/r^2) xdd + m l sin(th) thd^2 - m l cos(th) thdd = u
    (m l^2 + I) thdd - m l cos(th) xdd - m g l sin(th) = 0

with the body replaced by the combined body+payload (``m -> m_tot``,
``l -> L_eff``, ``I -> I_eff``) and ``th -> theta + phi0`` so that an off-axis
payload tilts the gravity line. These signs place the centre of mass at
``x_w - L sin(theta)``; the Lagrangian below is the one they derive from.

The array helpers (``accelerations``, ``derivative``, ``rk4_step``) broadcast
over a leading batch axis so many episodes can be integrated in lockstep.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "SimulationDiverged",
    "WipParams",
    "PayloadConfig",
    "EffectiveBody",
    "SimState",
    "LinearModel",
    "combine_payload",
    "equilibrium_pitch",
    "eom_accelerations",
    "step_rk4",
    "linearize",
    "accelerations",
    "derivative",
    "rk4_step",
    "total_energy",
    "stack_bodies",
    "payload_for_pitch",
]

_DET_TOL = 1e-12


class SimulationDiverged(FloatingPointError):
    """Raised when integration produces non-finite values."""


@dataclass(frozen=True)
class WipParams:
    """Physical constants of the pendulum (SI units).

    The defaults are desk-scale placeholders; ``I_b = m_b L^2`` and
    ``I_w = m_w r^2 / 2``.
    """

    m_b: float = 1.0
    m_w: float = 0.3
    L: float = 0.3
    I_b: float = 0.09
    I_w: float = 0.000375
    r: float = 0.05
    g: float = 9.81

    def __post_init__(self):
        if min(self.m_b, self.m_w, self.L, self.r) <= 0.0:
            raise ValueError("masses, L and r must be strictly positive")
        if min(self.I_b, self.I_w) < 0.0:
            raise ValueError("inertias must be non-negative")

    @property
    def wheel_mass_equiv(self) -> float:
        """Translating mass contributed by the wheel, ``m_w + I_w / r^2``."""
        return self.m_w + self.I_w / self.r**2


@dataclass(frozen=True)
class PayloadConfig:
    """Point mass attached to the pole.

    ``l_p`` is measured along the pole axis from the axle, ``d_p`` is the
    signed perpendicular offset (positive in the +theta direction).
    """

    m_p: float = 0.0
    l_p: float = 0.0
    d_p: float = 0.0

    def __post_init__(self):
        if self.m_p < 0.0:
            raise ValueError("payload mass must be non-negative")


@dataclass(frozen=True)
class EffectiveBody:
    """Combined body + payload seen by the dynamics.

    Fields may hold numpy arrays (see :func:`stack_bodies`) for batched rollouts.
    """

    m_tot: float
    L_eff: float
    phi0: float
    I_eff: float


@dataclass(frozen=True)
class SimState:
    t: float = 0.0
    x_w: float = 0.0
    theta: float = 0.0
    dx_w: float = 0.0
    dtheta: float = 0.0

    @property
    def q(self) -> np.ndarray:
        return np.array([self.x_w, self.theta, self.dx_w, self.dtheta])

    @classmethod
    def from_q(cls, q, t: float = 0.0) -> "SimState":
        q = np.asarray(q, dtype=float)
        return cls(float(t), float(q[0]), float(q[1]), float(q[2]), float(q[3]))


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    q0: np.ndarray
    u0: float = 0.0


def combine_payload(p: WipParams, payload: PayloadConfig) -> EffectiveBody:
    """Merge the lumped body (``m_b`` at ``L`` on the pole axis) with the payload."""
    m_tot = p.m_b + payload.m_p
    # body frame: first coordinate perpendicular to the pole, second along it
    x_c = payload.m_p * payload.d_p / m_tot
    z_c = (p.m_b * p.L + payload.m_p * payload.l_p) / m_tot
    L_eff = float(np.hypot(x_c, z_c))
    if L_eff <= 0.0:
        raise ValueError("combined centre of mass coincides with the axle")
    phi0 = float(np.arctan2(x_c, z_c))
    I_eff = (
        p.I_b
        + p.m_b * (x_c**2 + (p.L - z_c) ** 2)
        + payload.m_p * ((payload.d_p - x_c) ** 2 + (payload.l_p - z_c) ** 2)
    )
    return EffectiveBody(m_tot=m_tot, L_eff=L_eff, phi0=phi0, I_eff=float(I_eff))


def equilibrium_pitch(p: WipParams, payload: PayloadConfig) -> float:
    """Pitch at which the combined centre of mass sits above the axle."""
    return -combine_payload(p, payload).phi0


def payload_for_pitch(p: WipParams, theta_lin: float, m_p: float, l_p: float) -> PayloadConfig:
    """Payload of mass ``m_p`` at height ``l_p`` whose offset yields ``theta_lin``."""
    if m_p <= 0.0:
        raise ValueError("need a positive payload mass to shift the equilibrium")
    d_p = np.tan(-theta_lin) * (p.m_b * p.L + m_p * l_p) / m_p
    return PayloadConfig(m_p=m_p, l_p=l_p, d_p=float(d_p))


def stack_bodies(bodies) -> EffectiveBody:
    """Stack a sequence of bodies into one with array-valued fields."""
    bodies = list(bodies)
    return EffectiveBody(
        m_tot=np.array([b.m_tot for b in bodies], dtype=float),
        L_eff=np.array([b.L_eff for b in bodies], dtype=float),
        phi0=np.array([b.phi0 for b in bodies], dtype=float),
        I_eff=np.array([b.I_eff for b in bodies], dtype=float),
    )


def accelerations(q, force, eb: EffectiveBody, p: WipParams):
    """Return ``(xdd, thdd)`` for state array(s) ``q`` under generalized force ``force``.

    ``force`` is everything acting on the translational equation (control plus
    friction). Broadcasts over the leading axes of ``q``.
    """
    q = np.asarray(q, dtype=float)
    th = q[..., 1] + eb.phi0
    dth = q[..., 3]
    s, c = np.sin(th), np.cos(th)
    ml = eb.m_tot * eb.L_eff
    m11 = eb.m_tot + p.wheel_mass_equiv
    m12 = -ml * c
    m22 = eb.m_tot * eb.L_eff**2 + eb.I_eff
    rhs1 = force - ml * s * dth**2
    rhs2 = ml * p.g * s
    det = m11 * m22 - m12 * m12
    if np.any(np.abs(det) < _DET_TOL):
        raise ValueError("singular mass matrix")
    xdd = (m22 * rhs1 - m12 * rhs2) / det
    thdd = (m11 * rhs2 - m12 * rhs1) / det
    return xdd, thdd


def derivative(q, force, eb: EffectiveBody, p: WipParams) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    xdd, thdd = accelerations(q, force, eb, p)
    return np.stack([q[..., 2], q[..., 3], xdd, thdd], axis=-1)


def rk4_step(q, force, dt: float, eb: EffectiveBody, p: WipParams) -> np.ndarray:
    """Classical RK4 with ``force`` held constant over the step (zero-order hold)."""
    if force is not None:
        force = np.asarray(force, dtype=float)
    k1 = derivative(q, force, eb, p)
    k2 = derivative(q + 0.5 * dt * k1, force, eb, p)
    k3 = derivative(q + 0.5 * dt * k2, force, eb, p)
    k4 = derivative(q + dt * k3, force, eb, p)
    return q + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _joint_force(u, f_ext, p: WipParams):
    f_trans, tau_act = f_ext
    return u + f_trans + tau_act / p.r


def eom_accelerations(s: SimState, u: float, eb: EffectiveBody, p: WipParams, f_ext=(0.0, 0.0)):
    """Accelerations for a single state.

    ``f_ext = (translation_force, actuator_torque)`` are the friction outputs of
    the two augmented joints; the torque enters as an equivalent force ``tau / r``.
    """
    xdd, thdd = accelerations(s.q, _joint_force(u, f_ext, p), eb, p)
    return float(xdd), float(thdd)


def step_rk4(s: SimState, u: float, dt: float, eb: EffectiveBody, p: WipParams,
             f_ext=(0.0, 0.0)) -> SimState:
    """Advance one step of length ``dt``; joint friction is held over the step."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    q = rk4_step(s.q, _joint_force(u, f_ext, p), dt, eb, p)
    if not np.all(np.isfinite(q)):
        raise SimulationDiverged(f"non-finite state at t={s.t + dt:.6f}")
    return SimState.from_q(q, s.t + dt)


def total_energy(q, eb: EffectiveBody, p: WipParams):
    """Mechanical energy of the frictionless system (conserved when u = 0)."""
    q = np.asarray(q, dtype=float)
    th = q[..., 1] + eb.phi0
    dx, dth = q[..., 2], q[..., 3]
    ml = eb.m_tot * eb.L_eff
    m11 = eb.m_tot + p.wheel_mass_equiv
    m22 = eb.m_tot * eb.L_eff**2 + eb.I_eff
    kinetic = 0.5 * m11 * dx**2 - ml * np.cos(th) * dx * dth + 0.5 * m22 * dth**2
    return kinetic + ml * p.g * np.cos(th)


def linearize(eb: EffectiveBody, p: WipParams) -> LinearModel:
    """Analytic Jacobians of the frictionless dynamics at ``[0, -phi0, 0, 0]``."""
    ml = eb.m_tot * eb.L_eff
    m11 = eb.m_tot + p.wheel_mass_equiv
    m22 = eb.m_tot * eb.L_eff**2 + eb.I_eff
    # at equilibrium cos = 1, accelerations vanish, so only the gravity and
    # input columns survive
    mass = np.array([[m11, -ml], [-ml, m22]])
    minv = np.linalg.inv(mass)
    d_theta = minv @ np.array([0.0, ml * p.g])
    d_u = minv @ np.array([1.0, 0.0])
    A = np.zeros((4, 4))
    A[0, 2] = 1.0
    A[1, 3] = 1.0
    A[2:, 1] = d_theta
    B = np.zeros((4, 1))
    B[2:, 0] = d_u
    q0 = np.array([0.0, -float(eb.phi0), 0.0, 0.0])
    return LinearModel(A=A, B=B, q0=q0, u0=0.0)


def with_inertia_scale(eb: EffectiveBody, scale) -> EffectiveBody:
    """Body with ``I_eff`` multiplied by ``scale`` (dataset inertia jitter)."""
    return replace(eb, I_eff=eb.I_eff * scale)
