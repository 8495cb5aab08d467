"""Estimator accuracy against window length (T = 20, 40, 80) over several seeds, plus the ridge floor.

Writes window_length.csv.
"""

from dataclasses import replace

from wip_equilibrium.estimator import baseline_ridge, mse, predict_batch, train
from wip_equilibrium.experiments import make_dataset
from wip_equilibrium.config import component_seed

from _common import parse, write_rows


def main():
    def extra(p):
        p.add_argument("--seeds", type=int, default=3)
        p.add_argument("--epochs", type=int, default=80)
        p.add_argument("--zeta", help="friction record; the surrogate real friction when omitted")
    args, cfg, out = parse(__doc__.splitlines()[0], extra)
    from wip_equilibrium.cli import read_zeta
    ds = make_dataset(cfg, "hifi-sim", read_zeta(args.zeta) if args.zeta else None)
    rows = []
    for T in (20, 40, 80):
        d = ds.truncated(T)
        Xt, yt = d.part("test")
        ridge = mse(baseline_ridge(d, cfg.ridge_lambda).predict(Xt), yt)
        for s in range(args.seeds):
            hyper = replace(cfg.train_config, epochs=args.epochs, seed=component_seed(s, "train") % 2**31)
            m = train(d, hyper)
            rows.append((T, s, mse(predict_batch(m, Xt), yt), ridge))
            print(f"T={T:2d} seed {s}: test mse {rows[-1][2]:.3e} (ridge {ridge:.3e})")
    write_rows(out / "window_length.csv", ["T", "seed", "test_mse_rad2", "ridge_test_mse_rad2"], rows)


if __name__ == "__main__":
    main()
