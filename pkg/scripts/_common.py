"""Helpers shared by the experiment scripts."""

import argparse
import csv
from pathlib import Path

from wip_equilibrium.config import load_config


def parse(description, extra=None):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=None, help="output directory")
    if extra:
        extra(p)
    args = p.parse_args()
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return args, cfg, out


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.9g}" if isinstance(v, float) else v for v in r])
