"""End-to-end experiment pipelines shared by the command line and the test suite.

The high-fidelity simulator with the configured hidden friction (``cfg.world``)
plays the part of the physical robot throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .config import RunConfig
from .control import Scenario, run_batch
from .estimator import Dataset, EstimatorModel, generate_dataset, predict_batch, rmse
from .friction import HiFiConfig
from .optimize import OptResult, TargetSet, make_targets, r2s_cost, real_to_sim_adapt

__all__ = [
    "FRICTIONLESS_ZETA",
    "AdaptationResult",
    "record_targets",
    "adapt_friction",
    "domain_world",
    "make_dataset",
    "cross_domain",
    "control_cases",
    "summarize_cases",
]

# Both joints off: zero friction levels, unit Stribeck velocity, alpha = 1.
FRICTIONLESS_ZETA = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 1.0] * 2)


@dataclass
class AdaptationResult:
    opt: OptResult
    default_cost: float
    adapted_cost: float

    @property
    def zeta(self) -> np.ndarray:
        return self.opt.x

    @property
    def cost_ratio(self) -> float:
        return self.adapted_cost / self.default_cost


def record_targets(cfg: RunConfig) -> TargetSet:
    """Class-mean windows recorded in the surrogate real world."""
    return make_targets(cfg.world.zeta, cfg.r2s_payloads(), cfg.r2s_trials,
                        cfg.seed_for("targets"), cfg.template)


def adapt_friction(cfg: RunConfig, targets: TargetSet) -> AdaptationResult:
    tpl = cfg.template
    opt = real_to_sim_adapt(targets, cfg.pso_config, tpl)
    return AdaptationResult(opt, r2s_cost(FRICTIONLESS_ZETA, targets, tpl), float(opt.cost))


def domain_world(cfg: RunConfig, domain: str, zeta=None) -> HiFiConfig:
    """``plain-sim``; ``hifi-sim`` with an identified ``zeta``; or the real surrogate when ``zeta`` is None."""
    if domain == "plain-sim":
        return HiFiConfig.plain()
    if domain == "hifi-sim":
        return cfg.world if zeta is None else cfg.adapted_world(zeta)
    raise ValueError(f"unknown domain {domain!r}")


def make_dataset(cfg: RunConfig, domain: str, zeta=None, count: Optional[int] = None,
                 stream: str = "dataset") -> Dataset:
    dcfg = cfg.dataset_config
    if count is not None:
        dcfg = replace(dcfg, count=int(count))
    return generate_dataset(dcfg, domain_world(cfg, domain, zeta), cfg.seed_for(stream) % (2**31),
                            params=cfg.params, ctrl=cfg.controller, dt=cfg.sim["dt_s"], domain=domain)


def cross_domain(model: EstimatorModel, sim_ds: Dataset, real_ds: Dataset) -> dict:
    """Held-out error in the training simulator against error on surrogate real data."""
    Xs, ys = sim_ds.part("test")
    sim = rmse(predict_batch(model, Xs), ys)
    real = rmse(predict_batch(model, real_ds.windows), real_ds.y)
    return {"sim_rmse": sim, "real_rmse": real, "gap": real - sim}


def _estimator_fn(model) -> Callable:
    return lambda windows: predict_batch(model, windows)


def control_cases(cfg: RunConfig, task: str = "balance", model: Optional[EstimatorModel] = None,
                  world: Optional[HiFiConfig] = None) -> list:
    """Baseline against corrected control on every preset.

    The corrected controller uses ``model`` at deployment, or the analytic
    equilibrium pitch when ``model`` is None. Tracking runs without the rail
    limit so that both controllers are scored over the whole reference.
    """
    world = cfg.world if world is None else world
    kw = cfg.scenario_kwargs()
    if task == "track":
        kw["controller"] = replace(kw["controller"], rail_limit=None)
    presets = cfg.presets()
    seeds = {n: cfg.seed_for(f"episode/{n}") % (2**31) for n in presets}
    corrected_ref = "oracle" if model is None else "estimator"
    est = None if model is None else _estimator_fn(model)

    def batch(ref):
        sc = [Scenario(payload=pl, hifi=world, seed=seeds[n], task=task, reference=ref, **kw)
              for n, pl in presets.items()]
        return run_batch(sc, estimator=est if ref == "estimator" else None)

    base, corr = batch("baseline"), batch(corrected_ref)
    duration = kw["duration"]
    rows = []
    for name, b, c in zip(presets, base, corr):
        rb, rc = b.position_rmse(duration=duration), c.position_rmse(duration=duration)
        late = c.t >= 10.0
        settled = float(np.max(np.abs(c.true[late, 0] - c.x_ref[late]))) if late.any() and not c.failed \
            else float("inf")
        rows.append({
            "case": name,
            "theta_lin": b.theta_lin,
            "theta_estimate": c.theta_estimate if c.theta_estimate is not None else b.theta_lin,
            "baseline_failed": b.failed,
            "corrected_failed": c.failed,
            "baseline_rmse": rb,
            "corrected_rmse": rc,
            "improvement": 1.0 - rc / rb,
            "corrected_max_abs_x_after_10s": settled,
            "_trajectories": (b, c),
        })
    return rows


def summarize_cases(rows) -> dict:
    return {
        "mean_improvement": float(np.mean([r["improvement"] for r in rows])),
        "baseline_failures": [r["case"] for r in rows if r["baseline_failed"]],
        "corrected_failures": [r["case"] for r in rows if r["corrected_failed"]],
        "worst_settled": float(max(r["corrected_max_abs_x_after_10s"] for r in rows)),
    }
