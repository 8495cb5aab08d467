"""Command-line front end: ``simulate``, ``gen-data``, ``fit-r2s``, ``train``, ``eval``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
Every artifact is a pure function of the config, the flags and the seed;
wall-clock measurements go to separate ``*_timing.csv`` files.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .control import Scenario, run_episode
from .dynamics import PayloadConfig, SimulationDiverged
from .estimator import (
    Dataset,
    EstimatorModel,
    predict_batch,
    predict_latency,
    train,
)
from .experiments import (
    FRICTIONLESS_ZETA,
    control_cases,
    domain_world,
    make_dataset,
)
from .friction import ZETA_FIELDS
from .optimize import TargetSet, r2s_cost, real_to_sim_adapt
from .experiments import record_targets

log = logging.getLogger("wip_equilibrium")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v) + 0.0:.9g}"
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_zeta(path: Path, zeta) -> None:
    rows = [(i, "translation" if i < 6 else "actuator", ZETA_FIELDS[i % 6], repr(float(z)))
            for i, z in enumerate(zeta)]
    _write_csv(path, ["index", "joint", "parameter", "value"], rows)


def read_zeta(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != 12 or "value" not in rows[0]:
        raise UsageError(f"{path}: expected a 12-row friction record")
    return np.array([float(r["value"]) for r in rows])


def _out(args, cfg: RunConfig) -> Path:
    out = Path(args.out) if args.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _world_for(cfg, domain, zeta_path):
    if domain == "world":
        return cfg.world, "world"
    zeta = read_zeta(zeta_path) if zeta_path else None
    if domain == "hifi-sim" and zeta is None:
        raise UsageError("--domain hifi-sim needs --zeta (use --domain world for the surrogate real robot)")
    return domain_world(cfg, domain, zeta), domain


def cmd_simulate(args, cfg: RunConfig) -> int:
    presets = cfg.presets()
    if args.scenario == "nominal":
        payload = PayloadConfig()
    elif args.scenario in presets:
        payload = presets[args.scenario]
    else:
        raise UsageError(f"unknown scenario {args.scenario!r}; choose nominal or one of {sorted(presets)}")
    world, domain = _world_for(cfg, args.domain, args.zeta)
    model = None
    if args.reference == "estimator":
        if not args.model:
            raise UsageError("--reference estimator needs --model")
        model = EstimatorModel.load(args.model)
    kw = cfg.scenario_kwargs()
    if args.task == "track":
        kw["controller"] = replace(kw["controller"], rail_limit=None)
    sc = Scenario(payload=payload, hifi=world, seed=cfg.seed_for(f"episode/{args.scenario}") % (2**31),
                  task=args.task, reference=args.reference, **kw)
    est = (lambda w: predict_batch(model, w)) if model is not None else None
    tr = run_episode(sc, estimator=est)
    out = _out(args, cfg)
    tr.to_csv(out / "trajectory.csv")
    late = tr.t >= 10.0
    settled = float(np.max(np.abs(tr.true[late, 0] - tr.x_ref[late]))) if late.any() else float("nan")
    _write_csv(out / "summary.csv",
               ["scenario", "task", "reference", "domain", "theta_lin", "theta_estimate", "failed",
                "end_time_s", "position_rmse", "max_abs_x_after_10s", "config_hash"],
               [(args.scenario, args.task, args.reference, domain, tr.theta_lin,
                 tr.theta_estimate if tr.theta_estimate is not None else "", tr.failed, tr.t[-1],
                 tr.position_rmse(duration=sc.duration), settled, cfg.hash())])
    print(f"{args.scenario}: failed={tr.failed} position_rmse={tr.position_rmse(duration=sc.duration):.4f} m")
    return EXIT_OK


def cmd_gen_data(args, cfg: RunConfig) -> int:
    zeta = read_zeta(args.zeta) if args.zeta else None
    t0 = time.perf_counter()
    ds = make_dataset(cfg, args.domain, zeta, count=args.count)
    out = _out(args, cfg)
    ds.to_csv(out / "dataset.csv")
    _write_csv(out / "gen_data_timing.csv", ["count", "wall_s"], [(len(ds), time.perf_counter() - t0)])
    print(f"wrote {len(ds)} samples ({ds.domain}) to {out / 'dataset.csv'}")
    return EXIT_OK


def cmd_fit_r2s(args, cfg: RunConfig) -> int:
    out = _out(args, cfg)
    if args.targets:
        targets = TargetSet.from_csv(args.targets)
    else:
        targets = record_targets(cfg)
        targets.to_csv(out / "targets.csv")
    pso = cfg.pso_config
    if args.time_budget is not None:
        pso = replace(pso, time_budget=args.time_budget)
    tpl = cfg.template
    res = real_to_sim_adapt(targets, pso, tpl)
    default = r2s_cost(FRICTIONLESS_ZETA, targets, tpl)
    write_zeta(out / "zeta.csv", res.x)
    res.to_csv(out / "cost_history.csv")
    res.timing_csv(out / "r2s_timing.csv")
    _write_csv(out / "r2s_summary.csv",
               ["default_cost", "adapted_cost", "cost_ratio", "iterations", "evaluations",
                "stop_reason", "config_hash"],
               [(default, res.cost, res.cost / default, len(res.history) - 1, res.n_evals,
                 res.stop_reason, cfg.hash())])
    print(f"adapted cost {res.cost:.4g} ({100 * res.cost / default:.2f}% of default), stop: {res.stop_reason}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    ds = Dataset.from_csv(args.dataset)
    hyper = cfg.train_config
    if args.epochs is not None:
        hyper = replace(hyper, epochs=args.epochs)
    t0 = time.perf_counter()
    model = train(ds, hyper)
    out = _out(args, cfg)
    model.save(out / "model.bin")
    model.history_csv(out / "training_curve.csv")
    _write_csv(out / "train_timing.csv", ["epochs", "wall_s"], [(hyper.epochs, time.perf_counter() - t0)])
    best = model.history[model.best_epoch - 1]
    print(f"best epoch {model.best_epoch}: val mse {best[2]:.4g} rad^2, {model.net.n_params} parameters")
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    model = EstimatorModel.load(args.model)
    world, domain = _world_for(cfg, args.domain, args.zeta)
    if args.dataset:
        ds = Dataset.from_csv(args.dataset)
        X, y, ids = ds.windows, ds.y, np.arange(len(ds))
    else:
        zeta = read_zeta(args.zeta) if args.zeta else None
        ds = make_dataset(cfg, "plain-sim" if domain == "plain-sim" else "hifi-sim", zeta,
                          count=args.count, stream="eval")
        X, y, ids = ds.windows, ds.y, np.arange(len(ds))
    pred = predict_batch(model, X)
    err = pred - y
    out = _out(args, cfg)
    _write_csv(out / "predictions.csv", ["id", "y", "prediction", "error"], zip(ids, y, pred, err))
    mse_v = float(np.mean(err**2))
    _write_csv(out / "metrics.csv", ["domain", "n", "mse_rad2", "rmse_rad", "mae_rad", "config_hash"],
               [(domain, len(y), mse_v, np.sqrt(mse_v), np.mean(np.abs(err)), cfg.hash())])
    rows = []
    if not args.skip_cases:
        for task in ("balance", "track"):
            for r in control_cases(cfg, task, model, world):
                rows.append((task, r["case"], r["theta_lin"], r["theta_estimate"], r["baseline_failed"],
                             r["corrected_failed"], r["baseline_rmse"], r["corrected_rmse"],
                             r["improvement"], r["corrected_max_abs_x_after_10s"], cfg.hash()))
        _write_csv(out / "cases.csv",
                   ["task", "case", "theta_lin", "theta_estimate", "baseline_failed",
                    "corrected_failed", "baseline_rmse", "corrected_rmse", "improvement",
                    "corrected_max_abs_x_after_10s", "config_hash"], rows)
    _write_csv(out / "eval_timing.csv", ["predict_latency_s"], [(predict_latency(model, X[0]),)])
    print(f"{domain}: rmse {np.sqrt(mse_v):.4g} rad over {len(y)} samples")
    for r in rows:
        print(f"  {r[0]:7s} {r[1]}: baseline {r[6]:.3f} m -> corrected {r[7]:.3f} m")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (defaults when omitted)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides out_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="wip-eq", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="run one closed-loop episode")
    s.add_argument("--scenario", default="nominal", help="nominal or a preset name")
    s.add_argument("--task", choices=("balance", "track"), default="balance")
    s.add_argument("--reference", choices=("baseline", "oracle", "estimator"), default="baseline")
    s.add_argument("--domain", choices=("world", "plain-sim", "hifi-sim"), default="world")
    s.add_argument("--zeta", help="friction record from fit-r2s (for --domain hifi-sim)")
    s.add_argument("--model", help="estimator model file (for --reference estimator)")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("gen-data", parents=[common], help="generate a labelled window dataset")
    g.add_argument("--domain", choices=("plain-sim", "hifi-sim"), default="plain-sim")
    g.add_argument("--zeta", help="friction record for hifi-sim (surrogate real friction when omitted)")
    g.add_argument("--count", type=int, help="number of samples (config default otherwise)")
    g.set_defaults(func=cmd_gen_data)

    f = sub.add_parser("fit-r2s", parents=[common], help="real-to-sim friction adaptation")
    f.add_argument("--targets", help="target-set CSV (recorded from the surrogate real robot when omitted)")
    f.add_argument("--time-budget", type=float, help="PSO wall-clock cap in seconds")
    f.set_defaults(func=cmd_fit_r2s)

    t = sub.add_parser("train", parents=[common], help="train the equilibrium estimator")
    t.add_argument("--dataset", required=True)
    t.add_argument("--epochs", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="evaluate a trained estimator")
    e.add_argument("--model", required=True)
    e.add_argument("--domain", choices=("world", "plain-sim", "hifi-sim"), default="world")
    e.add_argument("--zeta", help="friction record (for --domain hifi-sim)")
    e.add_argument("--dataset", help="evaluate on this dataset instead of a generated one")
    e.add_argument("--count", type=int, default=300)
    e.add_argument("--skip-cases", action="store_true", help="skip the balancing/tracking cases")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise UsageError("--seed must be an unsigned 64-bit integer")
            cfg = cfg.with_seed(args.seed)
        return args.func(args, cfg)
    except (UsageError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationDiverged, FloatingPointError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
