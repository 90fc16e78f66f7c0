"""Train a ranking policy at N=10 and compare it with the heuristic baselines.

    python scripts/train_n10.py --reward cooperation --out runs/learned_coop
    python scripts/train_n10.py --reward engagement --out runs/learned_eng
"""

import argparse
import csv
import os

from coopnet.dynamics import PRISONERS_DILEMMA, env_config
from coopnet.learning import TRAIN_LOG_COLUMNS, TrainConfig, evaluate_heuristic, evaluate_policy, train
from coopnet.metrics import RewardKind


def main():
    defaults = TrainConfig()
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reward", choices=[k.value for k in RewardKind], default="cooperation")
    ap.add_argument("--N", type=int, default=10)
    ap.add_argument("--updates", type=int, default=defaults.updates)
    ap.add_argument("--batch_size", type=int, default=defaults.batch_size)
    ap.add_argument("--lr", type=float, default=defaults.lr)
    ap.add_argument("--optimizer", choices=["sgd", "adam"], default=defaults.optimizer)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eval_seed", type=int, default=10_000)
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--out", default="runs/learned")
    args = ap.parse_args()

    kind = RewardKind(args.reward)
    tc = TrainConfig(updates=args.updates, batch_size=args.batch_size, lr=args.lr,
                     optimizer=args.optimizer, seed=args.seed)
    env = env_config(args.N, W=1.0, seed=0)

    def log(row):
        if row["update"] % 20 == 0:
            print(f"update {row['update']:4d} reward {row['mean_reward']:+.4f} "
                  f"raw {row['mean_raw_reward']:8.2f} action strategy {row['mean_action_strategy']:.2f}")

    policy, rows = train(env, PRISONERS_DILEMMA, kind, tc, log=log)
    os.makedirs(args.out, exist_ok=True)
    policy.save(os.path.join(args.out, "checkpoint.json"))
    with open(os.path.join(args.out, "training_log.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(TRAIN_LOG_COLUMNS), extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)

    ev = env_config(args.N, W=1.0, seed=args.eval_seed)
    learned, _, _ = evaluate_policy(policy, ev, PRISONERS_DILEMMA, kind, args.episodes)
    print(f"LEARNED  {learned:10.3f}")
    for name in ("GOOD", "RANDOM", "FAIR", "BAD", "NO_MED"):
        m, _, _ = evaluate_heuristic(name, ev, PRISONERS_DILEMMA, kind, args.episodes)
        print(f"{name:8s} {m:10.3f}")


if __name__ == "__main__":
    main()
