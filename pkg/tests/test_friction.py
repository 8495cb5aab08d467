import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wip_equilibrium.dynamics import PayloadConfig, SimState, WipParams, combine_payload
from wip_equilibrium.friction import (
    FrictionParams,
    FrictionState,
    HiFiConfig,
    NoiseParams,
    g_zeta,
    g_zeta_step,
    hifi_step,
    noise_envelope,
    observation_noise,
    stribeck_force,
)

FIG3 = FrictionParams(F_s=0.15, F_c=0.12, vs=0.2, sigma=0.02, eps=0.01, alpha=0.7)


@st.composite
def friction_params(draw):
    a = draw(st.floats(0.0, 1.0))
    b = draw(st.floats(0.0, 1.0))
    return FrictionParams(
        F_s=max(a, b), F_c=min(a, b), vs=draw(st.floats(1e-3, 1.0)),
        sigma=draw(st.floats(0.0, 1.0)), eps=draw(st.floats(0.0, 0.05)),
        alpha=draw(st.floats(0.0, 1.0)),
    )


def test_printed_example_value():
    # oracle 0.12 + 0.03 exp(-1) + 0.02 * 0.2 = 0.135036..., quoted as 0.13504
    oracle = 0.12 + 0.03 * np.exp(-1.0) + 0.004
    assert abs(stribeck_force(0.2, FIG3) - oracle) < 1e-6
    assert round(stribeck_force(0.2, FIG3), 5) == 0.13504
    assert stribeck_force(-0.2, FIG3) == -stribeck_force(0.2, FIG3)
    assert stribeck_force(0.005, FIG3) == 0.0


def test_steady_state_filter_fixed_point():
    fs = FrictionState()
    for _ in range(5):
        g, fs = g_zeta_step(0.2, FIG3, fs)
    assert g == pytest.approx(-stribeck_force(0.2, FIG3), abs=1e-15)


@given(friction_params(), st.floats(-5, 5))
def test_deadzone_is_zero(zp, v):
    if abs(v) < zp.eps:
        assert stribeck_force(v, zp) == 0.0


@given(friction_params(), st.floats(-5, 5))
def test_odd_symmetry(zp, v):
    assert stribeck_force(-v, zp) == -stribeck_force(v, zp)


@given(friction_params(), st.floats(-5, 5))
def test_dissipative(zp, v):
    # steady friction never pushes in the direction of motion
    assert v * stribeck_force(v, zp) >= 0.0


@given(friction_params(), st.floats(-5, 5), st.floats(-1, 1))
def test_alpha_one_has_no_memory(zp, v, prev):
    zp1 = FrictionParams(zp.F_s, zp.F_c, zp.vs, zp.sigma, zp.eps, 1.0)
    g, fs = g_zeta_step(v, zp1, FrictionState(prev))
    assert g == -stribeck_force(v, zp1)
    assert fs.prev_F_ss == stribeck_force(v, zp1)


def test_blend_formula():
    assert g_zeta(2.0, 1.0, 0.7) == pytest.approx(-0.7 * 2.0 - 0.3 * 1.0)


def test_vectorized_matches_scalar(rng):
    v = rng.uniform(-1, 1, 50)
    vec = stribeck_force(v, FIG3)
    assert np.array_equal(vec, [stribeck_force(x, FIG3) for x in v])


@pytest.mark.parametrize("kw", [dict(F_s=0.1, F_c=0.2), dict(vs=0.0), dict(sigma=-1.0),
                                dict(eps=-0.1), dict(alpha=1.5)])
def test_invalid_parameters(kw):
    with pytest.raises(ValueError):
        FrictionParams(**{**dict(F_s=0.2, F_c=0.1), **kw})


def test_from_array_orders_levels():
    zp = FrictionParams.from_array([0.1, 0.3, 0.2, 0.0, 0.0, 1.0])
    assert (zp.F_s, zp.F_c) == (0.3, 0.1)
    with pytest.raises(ValueError):
        FrictionParams.from_array([0.1] * 5)


def test_hifi_config_zeta_roundtrip():
    z = np.array([0.15, 0.12, 0.2, 0.02, 0.01, 0.7, 0.03, 0.02, 1.0, 0.001, 0.05, 0.5])
    assert np.array_equal(HiFiConfig().with_zeta(z).zeta, z)
    with pytest.raises(ValueError):
        HiFiConfig().with_zeta(z[:6])


def test_noise_envelope_and_draws():
    npar = NoiseParams(A=0.01, B=0.5, f=0.0002)
    assert noise_envelope(0.0, npar) == pytest.approx(0.005)
    a = observation_noise(1.0, npar, np.random.default_rng(3), 4)
    b = observation_noise(1.0, npar, np.random.default_rng(3), 4)
    assert np.array_equal(a, b) and a.shape == (4,)


def test_plain_config_reproduces_rigid_body():
    p = WipParams()
    eb = combine_payload(p, PayloadConfig(0.8, 0.3, 0.05))
    s = SimState(0, 0, 0.05, 0.1, 0.0)
    fs = (FrictionState(), FrictionState())
    true, obs, _ = hifi_step(s, 1.0, HiFiConfig.plain(), eb, p, fs, np.random.default_rng(0), 0.0015)
    assert true == obs


def test_friction_opposes_wheel_motion():
    p = WipParams()
    eb = combine_payload(p, PayloadConfig())
    cfg = HiFiConfig(FIG3, FrictionParams(), observation_noise=False, friction_actuator=False)
    s = SimState(0, 0, 0.0, 0.5, 0.0)
    fs = (FrictionState(), FrictionState())
    with_f, _, _ = hifi_step(s, 0.0, cfg, eb, p, fs, np.random.default_rng(0), 0.0015)
    free, _, _ = hifi_step(s, 0.0, HiFiConfig.plain(), eb, p, fs, np.random.default_rng(0), 0.0015)
    assert with_f.dx_w < free.dx_w
