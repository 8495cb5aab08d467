"""Balancing and tracking on the five payload presets, baseline against corrected LQR.

With --model the corrected controller uses the trained estimator; otherwise it
uses the analytic equilibrium pitch. Writes cases.csv and one trajectory CSV per run.
"""

from wip_equilibrium.estimator import EstimatorModel
from wip_equilibrium.experiments import control_cases, summarize_cases

from _common import parse, write_rows


def main():
    args, cfg, out = parse(__doc__.splitlines()[0],
                           lambda p: p.add_argument("--model", help="estimator model file"))
    model = EstimatorModel.load(args.model) if args.model else None
    rows = []
    for task in ("balance", "track"):
        cases = control_cases(cfg, task, model)
        for r in cases:
            b, c = r["_trajectories"]
            b.to_csv(out / f"{task}_{r['case']}_baseline.csv")
            c.to_csv(out / f"{task}_{r['case']}_corrected.csv")
            rows.append((task, r["case"], r["theta_lin"], r["theta_estimate"], r["baseline_failed"],
                         r["corrected_failed"], r["baseline_rmse"], r["corrected_rmse"], r["improvement"],
                         r["corrected_max_abs_x_after_10s"]))
        s = summarize_cases(cases)
        print(f"{task}: mean improvement {100 * s['mean_improvement']:.1f}%, "
              f"baseline failures {s['baseline_failures']}, corrected failures {s['corrected_failures']}")
    write_rows(out / "cases.csv",
               ["task", "case", "theta_lin", "theta_estimate", "baseline_failed", "corrected_failed",
                "baseline_rmse_m", "corrected_rmse_m", "improvement", "corrected_max_abs_x_after_10s_m"],
               rows)


if __name__ == "__main__":
    main()
