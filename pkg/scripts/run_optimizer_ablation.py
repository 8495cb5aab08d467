"""PSO against a real-coded GA on the friction-fitting cost, equal population and iterations.

Writes optimizer_ablation.csv with the best-cost curve of each method per seed.
"""

from dataclasses import replace

from wip_equilibrium.experiments import record_targets
from wip_equilibrium.optimize import GaConfig, ga_minimize, pso_minimize, r2s_costs

from _common import parse, write_rows


def main():
    args, cfg, out = parse(__doc__.splitlines()[0],
                           lambda p: p.add_argument("--seeds", type=int, default=3))
    targets = record_targets(cfg)
    tpl = cfg.template
    pso = replace(cfg.pso_config, tol=None, max_iters=60)
    rows = []
    for s in range(args.seeds):
        objective = lambda Z: r2s_costs(Z, targets, tpl)
        p = pso_minimize(objective, replace(pso, seed=s), vectorized=True)
        g = ga_minimize(objective, GaConfig(lower=pso.lower, upper=pso.upper, pop_size=pso.n_particles,
                                            max_iters=pso.max_iters, seed=s), vectorized=True)
        for it, (cp, cg) in enumerate(zip(p.history, g.history)):
            rows.append((s, it, cp, cg))
        print(f"seed {s}: pso {p.cost:.4g}  ga {g.cost:.4g}")
    write_rows(out / "optimizer_ablation.csv", ["seed", "iteration", "pso_best", "ga_best"], rows)


if __name__ == "__main__":
    main()
