"""Run configuration: YAML with unit-suffixed keys, strict key checking, seed fan-out.

Every key carries its unit in the name (``m_p_kg``, ``dt_s``). Unknown keys are
rejected so a typo never silently falls back to a default.
"""

from __future__ import annotations

import copy
import hashlib
import json
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .control import ControllerConfig
from .dynamics import PayloadConfig, WipParams, payload_for_pitch
from .estimator import DatasetConfig, TrainConfig
from .friction import FrictionParams, HiFiConfig, NoiseParams
from .optimize import PsoConfig, SimTemplate, default_zeta_bounds

__all__ = ["ConfigError", "RunConfig", "DEFAULTS", "component_seed", "load_config"]


class ConfigError(ValueError):
    pass


# Hidden surrogate-real friction. Translation joint forces in N at m/s, actuator
# torques in N m at rad/s.
_ZETA_TRANSLATION = {"F_s_N": 0.15, "F_c_N": 0.12, "vs_mps": 0.2, "sigma_Nspm": 0.02,
                     "eps_mps": 0.01, "alpha": 0.7}
_ZETA_ACTUATOR = {"F_s_Nm": 0.03, "F_c_Nm": 0.02, "vs_radps": 1.0, "sigma_Nmsprad": 0.001,
                  "eps_radps": 0.05, "alpha": 0.5}

DEFAULTS = {
    "seed": 0,
    "out_dir": "runs",
    "physical": {"m_b_kg": 1.0, "m_w_kg": 0.3, "L_m": 0.3, "I_b_kgm2": 0.09,
                 "I_w_kgm2": 0.000375, "r_m": 0.05, "g_mps2": 9.81},
    "presets": [
        {"name": f"theta_{abs(t):.2f}".replace(".", "p"), "m_p_kg": 0.8, "l_p_m": 0.3,
         "theta_lin_rad": t}
        for t in (-0.03, -0.06, -0.09, -0.12, -0.16)
    ],
    "world": {
        "zeta_translation": dict(_ZETA_TRANSLATION),
        "zeta_actuator": dict(_ZETA_ACTUATOR),
        "noise": {"A": 0.01, "B": 0.5, "f_hz": 0.0002},
        "friction_translation": True,
        "friction_actuator": True,
        "observation_noise": True,
    },
    "controller": {"Q_diag": [600.0, 15.0, 3000.0, 0.03], "R": 1.0, "u_max_N": 20.0,
                   "alpha_s": 0.05, "beta_s_radps": 0.1, "rail_limit_m": 1.1,
                   "ramp_clock": "episode"},
    "simulation": {"dt_s": 0.0015, "duration_s": 20.0, "window_len": 80, "decimation": 10,
                   "track_amp_mps": 0.3, "track_freq_hz": 0.4, "track_start_s": 1.2},
    "r2s": {"theta_lin_rad": [-0.02, -0.04, -0.06, -0.08, -0.10, -0.12, -0.14, -0.16],
            "m_p_kg": 0.8, "l_p_m": 0.3, "trials": 5},
    "pso": {"n_particles": 30, "w": 0.9, "c1": 0.5, "c2": 0.2, "max_iters": 200,
            "time_budget_s": 1800.0, "tol": 1e-6, "patience": 20, "v_init": 0.1},
    "dataset": {"count": 1200, "m_p_kg": [0.0, 1.6], "l_p_m": [0.25, 0.35],
                "d_p_m": [0.0, 0.12], "inertia_jitter": 0.1, "split": [0.8, 0.1, 0.1],
                "max_retries": 5},
    "train": {"epochs": 500, "batch_size": 256, "lr": 1e-3, "weight_decay": 1e-5,
              "hidden": 64, "n_layers": 2, "float32": True},
    "ridge_lambda": 1.0,
}


def _merge(base, override, path=""):
    if not isinstance(override, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if key == "presets":
            out[key] = _check_presets(val)
        elif isinstance(base[key], dict):
            out[key] = _merge(base[key], val, where)
        else:
            out[key] = val
    return out


_PRESET_KEYS = {"name", "m_p_kg", "l_p_m", "d_p_m", "theta_lin_rad"}


def _check_presets(presets):
    if not isinstance(presets, list) or not presets:
        raise ConfigError("presets must be a non-empty list")
    names = set()
    for pr in presets:
        extra = set(pr) - _PRESET_KEYS
        if extra:
            raise ConfigError(f"unknown preset keys {sorted(extra)}")
        if "name" not in pr or pr["name"] in names:
            raise ConfigError("every preset needs a unique name")
        names.add(pr["name"])
        if ("d_p_m" in pr) == ("theta_lin_rad" in pr):
            raise ConfigError(f"preset {pr['name']!r}: give exactly one of d_p_m, theta_lin_rad")
    return copy.deepcopy(presets)


def component_seed(master: int, component: str) -> int:
    """Independent 63-bit seed for a named component.

    ``SeedSequence(master, spawn_key=(crc32(component),))``: streams depend only on
    the master seed and the component name, so new components never shift old ones.
    """
    ss = np.random.SeedSequence(int(master), spawn_key=(zlib.crc32(component.encode()),))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class RunConfig:
    raw: dict

    @classmethod
    def from_dict(cls, data: dict | None = None) -> "RunConfig":
        cfg = _merge(DEFAULTS, data or {})
        rc = cls(cfg)
        rc.validate()
        return rc

    def validate(self) -> None:
        try:
            self.params
            self.controller
            self.world
            self.presets()
            self.dataset_config
            self.train_config
            self.pso_config
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.controller.ramp_clock not in ("episode", "accept"):
            raise ConfigError("controller.ramp_clock must be 'episode' or 'accept'")

    def with_seed(self, seed: int) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        raw["seed"] = int(seed)
        return RunConfig(raw)

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def seed_for(self, component: str) -> int:
        return component_seed(self.seed, component)

    @property
    def params(self) -> WipParams:
        ph = self.raw["physical"]
        return WipParams(m_b=ph["m_b_kg"], m_w=ph["m_w_kg"], L=ph["L_m"], I_b=ph["I_b_kgm2"],
                         I_w=ph["I_w_kgm2"], r=ph["r_m"], g=ph["g_mps2"])

    @property
    def controller(self) -> ControllerConfig:
        c = self.raw["controller"]
        return ControllerConfig(Q_diag=tuple(float(v) for v in c["Q_diag"]), R=float(c["R"]),
                                u_max=c["u_max_N"], alpha_s=c["alpha_s"],
                                beta_s=c["beta_s_radps"], rail_limit=c["rail_limit_m"],
                                ramp_clock=c["ramp_clock"])

    @property
    def noise(self) -> NoiseParams:
        n = self.raw["world"]["noise"]
        return NoiseParams(A=n["A"], B=n["B"], f=n["f_hz"])

    @property
    def world(self) -> HiFiConfig:
        """Surrogate real world: high-fidelity simulator with the hidden friction."""
        w = self.raw["world"]
        zt, za = w["zeta_translation"], w["zeta_actuator"]
        return HiFiConfig(
            FrictionParams(zt["F_s_N"], zt["F_c_N"], zt["vs_mps"], zt["sigma_Nspm"],
                           zt["eps_mps"], zt["alpha"]),
            FrictionParams(za["F_s_Nm"], za["F_c_Nm"], za["vs_radps"], za["sigma_Nmsprad"],
                           za["eps_radps"], za["alpha"]),
            self.noise,
            bool(w["friction_translation"]),
            bool(w["friction_actuator"]),
            bool(w["observation_noise"]),
        )

    def adapted_world(self, zeta) -> HiFiConfig:
        """High-fidelity simulator carrying an identified friction vector."""
        return HiFiConfig(noise=self.noise).with_zeta(zeta)

    def presets(self) -> dict:
        out = {}
        for pr in self.raw["presets"]:
            if "theta_lin_rad" in pr:
                pay = payload_for_pitch(self.params, pr["theta_lin_rad"], pr["m_p_kg"], pr["l_p_m"])
            else:
                pay = PayloadConfig(pr["m_p_kg"], pr["l_p_m"], pr["d_p_m"])
            out[pr["name"]] = pay
        return out

    @property
    def sim(self) -> dict:
        return self.raw["simulation"]

    def scenario_kwargs(self) -> dict:
        s = self.sim
        return dict(params=self.params, controller=self.controller, duration=s["duration_s"],
                    dt=s["dt_s"], track_amp=s["track_amp_mps"], track_freq=s["track_freq_hz"],
                    track_start=s["track_start_s"], window_len=s["window_len"],
                    decimation=s["decimation"])

    @property
    def template(self) -> SimTemplate:
        s = self.sim
        ctrl = replace(self.controller, rail_limit=None)
        return SimTemplate(params=self.params, controller=ctrl, noise=self.noise, dt=s["dt_s"],
                           window_len=s["window_len"], decimation=s["decimation"])

    def r2s_payloads(self) -> list:
        r = self.raw["r2s"]
        return [payload_for_pitch(self.params, t, r["m_p_kg"], r["l_p_m"]) for t in r["theta_lin_rad"]]

    @property
    def r2s_trials(self) -> int:
        return int(self.raw["r2s"]["trials"])

    @property
    def pso_config(self) -> PsoConfig:
        p = self.raw["pso"]
        lo, hi = default_zeta_bounds()
        return PsoConfig(lower=tuple(lo), upper=tuple(hi), n_particles=p["n_particles"], w=p["w"],
                         c1=p["c1"], c2=p["c2"], max_iters=p["max_iters"],
                         time_budget=p["time_budget_s"], seed=self.seed_for("pso"),
                         tol=p["tol"], patience=p["patience"], v_init=p["v_init"])

    @property
    def dataset_config(self) -> DatasetConfig:
        d = self.raw["dataset"]
        return DatasetConfig(count=d["count"], m_p_range=tuple(d["m_p_kg"]),
                             l_p_range=tuple(d["l_p_m"]), d_p_range=tuple(d["d_p_m"]),
                             inertia_jitter=d["inertia_jitter"], window_len=self.sim["window_len"],
                             decimation=self.sim["decimation"], split=tuple(d["split"]),
                             max_retries=d["max_retries"])

    @property
    def train_config(self) -> TrainConfig:
        t = self.raw["train"]
        return TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"], lr=t["lr"],
                           weight_decay=t["weight_decay"], hidden=t["hidden"],
                           n_layers=t["n_layers"], seed=self.seed_for("train") % (2**31),
                           float32=t["float32"])

    @property
    def ridge_lambda(self) -> float:
        return float(self.raw["ridge_lambda"])

    @property
    def out_dir(self) -> Path:
        return Path(self.raw["out_dir"])

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=False)


def load_config(path=None) -> RunConfig:
    """Load a YAML file over the defaults; ``None`` gives the defaults."""
    if path is None:
        return RunConfig.from_dict({})
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return RunConfig.from_dict(data or {})
