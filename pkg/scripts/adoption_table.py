"""Competition between recommenders: coops, rewire requests and final shares.

Runs the monopoly and 90/10 scenarios and prints one table row each.

    python scripts/adoption_table.py --runs 30 --W 1 --W2 0.1
"""

import argparse
import json
import os
from dataclasses import replace

from coopnet.competition import SCENARIOS, CompetitionConfig, run_adoption_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=30)
    ap.add_argument("--N", type=int, default=1000)
    ap.add_argument("--k", type=int, default=30)
    ap.add_argument("--beta", type=float, default=0.005)
    ap.add_argument("--time_limit", type=int, default=100_000)
    ap.add_argument("--W", type=float, default=1.0)
    ap.add_argument("--W2", type=float, default=0.1)
    ap.add_argument("--beta_med", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--scenarios", nargs="+", default=list(SCENARIOS))
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/adoption.json")
    args = ap.parse_args()

    base = replace(CompetitionConfig().base, N=args.N, k=args.k, beta=args.beta, W=args.W,
                   time_limit=args.time_limit, seed=args.seed)
    table = {}
    print(f"{'scenario':24s} {'coops':>7s} {'rewire':>10s} {'start majority share':>21s}")
    for name in args.scenarios:
        cfg = CompetitionConfig(base=base, W2=args.W2, beta_med=args.beta_med, mix=tuple(SCENARIOS[name]))
        summary = run_adoption_experiment(cfg, args.runs, jobs=args.jobs)
        table[name] = summary.to_json()
        maj = summary.final_prop_start_majority
        print(f"{name:24s} {summary.mean_coop:7.3f} {summary.mean_requests:10.1f} "
              f"{'-' if maj is None else f'{maj:.3f}':>21s}")
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w") as fh:
        json.dump({"config": vars(args), "scenarios": table}, fh, indent=2)


if __name__ == "__main__":
    main()
