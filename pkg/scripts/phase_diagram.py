"""(T, S) phase diagram without rewiring: mean final cooperator fraction per cell.

    python scripts/phase_diagram.py --N 100 --grid 21 --replicates 10 --out runs/phase
"""

import argparse
import json
import os

from coopnet.experiments import columns, emit, parse_config, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=100)
    ap.add_argument("--grid", type=int, default=21)
    ap.add_argument("--replicates", type=int, default=10)
    ap.add_argument("--W", type=float, default=0.0)
    ap.add_argument("--policy", default="NULL")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs/phase")
    args = ap.parse_args()

    spec = parse_config({"kind": "SweepTS", "N": args.N, "grid": args.grid, "W": args.W,
                         "policy": args.policy, "replicates": args.replicates, "seed": args.seed})
    rows, summary = simulate(spec, args.jobs)
    emit(spec, columns(spec), rows, summary, args.out)

    # rows: T from 0 (top) to 2; columns: S from -1 to 1
    print("T \\ S " + " ".join(f"{s:5.2f}" for s in summary["S"]))
    for t, row in zip(summary["T"], summary["coop_fraction"]):
        print(f"{t:5.2f} " + " ".join(f"{v:5.2f}" for v in row))
    print(json.dumps({"out": os.path.abspath(args.out)}))


if __name__ == "__main__":
    main()
