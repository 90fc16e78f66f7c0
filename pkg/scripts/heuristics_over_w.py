"""Compare recommender heuristics across structural timescales W.

Reports mean cooperator fraction, rewires per opportunity, heterogeneity
and max degree for each (policy, W) cell.

    python scripts/heuristics_over_w.py --N 500 --W 0.5 1 2 --replicates 30
"""

import argparse

from coopnet.experiments import columns, emit, parse_config, simulate

POLICIES = ["GOOD", "RANDOM", "FAIR", "BAD", "NO_MED"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=500)
    ap.add_argument("--W", type=float, nargs="+", default=[1.0])
    ap.add_argument("--policies", nargs="+", default=POLICIES)
    ap.add_argument("--replicates", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/heuristics")
    args = ap.parse_args()

    spec = parse_config({"kind": "SweepW", "N": args.N, "W_list": args.W, "policies": args.policies,
                         "replicates": args.replicates, "seed": args.seed})
    rows, summary = simulate(spec, args.jobs)
    emit(spec, columns(spec), rows, summary, args.out)

    metrics = ("coop_fraction", "rewires_per_opportunity", "heterogeneity", "max_degree")
    print(f"{'policy':8s} {'W':>5s} " + " ".join(f"{m:>24s}" for m in metrics))
    for cell in summary["cells"]:
        p, agg = cell["params"], cell["aggregate"]
        vals = " ".join(f"{agg[m]['mean']:14.3f} +- {agg[m]['sd']:6.3f}" for m in metrics)
        print(f"{p['policy']:8s} {p['W']:5.2f} {vals}")


if __name__ == "__main__":
    main()
