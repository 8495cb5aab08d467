import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wip_equilibrium.dynamics import WipParams, payload_for_pitch
from wip_equilibrium.optimize import (
    GaConfig,
    PsoConfig,
    TargetSet,
    default_zeta_bounds,
    ga_minimize,
    make_targets,
    pso_minimize,
    r2s_cost,
    r2s_costs,
)

P = WipParams()
ZETA = np.array([0.15, 0.12, 0.2, 0.02, 0.01, 0.7, 0.03, 0.02, 1.0, 0.001, 0.05, 0.5])
FREE = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 1.0] * 2)


def sphere(X):
    return (np.asarray(X) ** 2).sum(axis=-1)


def rosenbrock(x):
    return float(np.sum(100 * (x[1:] - x[:-1] ** 2) ** 2 + (1 - x[:-1]) ** 2))


@pytest.fixture(scope="module")
def targets():
    pls = [payload_for_pitch(P, t, 0.8, 0.3) for t in (-0.04, -0.1, -0.16)]
    return make_targets(ZETA, pls, trials=2, seed=3)


def test_pso_sphere():
    r = pso_minimize(sphere, PsoConfig(lower=(-5,) * 4, upper=(5,) * 4, seed=0), vectorized=True)
    assert r.cost < 1e-4 and len(r.history) <= 201


def test_pso_scalar_and_vectorized_agree():
    cfg = PsoConfig(lower=(-2,) * 3, upper=(2,) * 3, seed=4, max_iters=30)
    a = pso_minimize(lambda x: float(sphere(x)), cfg)
    b = pso_minimize(sphere, cfg, vectorized=True)
    assert np.array_equal(a.x, b.x) and a.history == b.history


@given(st.integers(0, 2**32 - 1))
def test_pso_history_monotone_and_in_bounds(seed):
    cfg = PsoConfig(lower=(-1, 0, 2), upper=(1, 3, 4), seed=seed, max_iters=15, n_particles=8)
    r = pso_minimize(lambda x: rosenbrock(np.asarray(x)), cfg)
    assert all(b <= a for a, b in zip(r.history, r.history[1:]))
    assert np.all(r.x >= cfg.lower) and np.all(r.x <= cfg.upper)
    assert r.n_evals == 8 * (len(r.history))


def test_pso_same_seed_same_result():
    cfg = PsoConfig(lower=(-3,) * 2, upper=(3,) * 2, seed=11, max_iters=40)
    assert pso_minimize(sphere, cfg, True).history == pso_minimize(sphere, cfg, True).history


def test_pso_convergence_stop_and_time_budget():
    r = pso_minimize(sphere, PsoConfig(lower=(-1,), upper=(1,), tol=1e-3, patience=5), True)
    assert r.stop_reason == "converged"
    r = pso_minimize(sphere, PsoConfig(lower=(-1,), upper=(1,), time_budget=0.0), True)
    assert r.stop_reason == "time_budget" and len(r.history) == 1


def test_pso_nonfinite_objective_is_worst():
    def f(X):
        out = sphere(X)
        out[X[:, 0] > 0] = np.nan
        return out
    r = pso_minimize(f, PsoConfig(lower=(-1, -1), upper=(1, 1), max_iters=30), True)
    assert np.isfinite(r.cost) and r.x[0] <= 0


@pytest.mark.parametrize("kw", [dict(lower=(0, 0), upper=(1,)), dict(lower=(1,), upper=(0,)),
                                dict(lower=(0,), upper=(1,), n_particles=0)])
def test_pso_config_validation(kw):
    with pytest.raises(ValueError):
        PsoConfig(**kw)


def test_ga_sphere():
    r = ga_minimize(sphere, GaConfig(lower=(-5,) * 4, upper=(5,) * 4), vectorized=True)
    assert r.cost < 1e-3
    assert all(b <= a for a, b in zip(r.history, r.history[1:]))


def test_cost_history_csv_has_no_timing(tmp_path):
    r = pso_minimize(sphere, PsoConfig(lower=(-1,), upper=(1,), max_iters=3), True)
    r.to_csv(tmp_path / "h.csv")
    r.timing_csv(tmp_path / "t.csv")
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "iteration,best_cost"
    assert "wall_s" in (tmp_path / "t.csv").read_text()


def test_zeta_bounds_shape():
    lo, hi = default_zeta_bounds()
    assert lo.shape == hi.shape == (12,) and np.all(lo < hi) and lo[2] > 0


def test_self_match_is_zero(targets):
    assert r2s_cost(ZETA, targets) < 1e-10


def test_frictionless_costs_more(targets):
    assert r2s_cost(FREE, targets) > 1e-3


def test_vectorized_cost_matches_single(targets):
    Z = np.stack([ZETA, FREE, 0.5 * (ZETA + FREE)])
    many = r2s_costs(Z, targets)
    single = [r2s_cost(z, targets) for z in Z]
    assert np.allclose(many, single, rtol=1e-12, atol=1e-14)


def test_targets_csv_roundtrip(tmp_path, targets):
    targets.to_csv(tmp_path / "t.csv")
    back = TargetSet.from_csv(tmp_path / "t.csv")
    assert np.array_equal(back.X, targets.X)
    assert np.array_equal(back.trial_seeds, targets.trial_seeds)
    assert r2s_cost(ZETA, back) < 1e-10
