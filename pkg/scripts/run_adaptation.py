"""Cross-domain estimation with and without real-to-sim adaptation.

Records targets in the surrogate real world, fits the friction vector with PSO,
trains one estimator on plain-sim data and one on adapted-sim data, and compares
their error in their own simulator against the surrogate real robot.
Writes adaptation.csv, estimation.csv, zeta.csv and the two model files.
"""

from dataclasses import replace

import numpy as np

from _common import parse, write_rows
from wip_equilibrium.cli import write_zeta
from wip_equilibrium.estimator import train
from wip_equilibrium.experiments import adapt_friction, cross_domain, make_dataset, record_targets


def main():
    args, cfg, out = parse(__doc__.splitlines()[0],
                           lambda p: p.add_argument("--epochs", type=int, help="override training epochs"))
    targets = record_targets(cfg)
    ad = adapt_friction(cfg, targets)
    write_zeta(out / "zeta.csv", ad.zeta)
    ad.opt.to_csv(out / "cost_history.csv")
    write_rows(out / "adaptation.csv", ["default_cost", "adapted_cost", "ratio", "stop_reason"],
               [(ad.default_cost, ad.adapted_cost, ad.cost_ratio, ad.opt.stop_reason)])
    print(f"friction fit: cost {ad.adapted_cost:.3g} vs default {ad.default_cost:.3g}")

    hyper = cfg.train_config if args.epochs is None else replace(cfg.train_config, epochs=args.epochs)
    real = make_dataset(cfg, "hifi-sim", None, count=300, stream="real-eval")
    rows = []
    for name, domain, zeta in (("pure-sim", "plain-sim", None), ("adapted", "hifi-sim", ad.zeta)):
        ds = make_dataset(cfg, domain, zeta)
        model = train(ds, hyper)
        model.save(out / f"model_{name}.bin")
        r = cross_domain(model, ds, real)
        rows.append((name, r["sim_rmse"], r["real_rmse"], r["gap"]))
        print(f"{name:9s} sim {r['sim_rmse']:.5f} real {r['real_rmse']:.5f} gap {r['gap']:.5f} rad")
    write_rows(out / "estimation.csv", ["pipeline", "sim_rmse_rad", "real_rmse_rad", "gap_rad"], rows)
    print(f"gap ratio (adapted / pure-sim): {rows[1][3] / rows[0][3]:.3f}")


if __name__ == "__main__":
    main()
