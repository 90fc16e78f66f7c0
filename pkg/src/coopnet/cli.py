"""Command line front end.

    coopnet run --N 10 --policy GOOD --replicates 30 --out runs/good
    coopnet sweep-ts --N 100 --W 0 --policy NULL --grid 21 --replicates 10 --out runs/phase
    coopnet compete --mix NO_MED:0.9,GOOD:0.1 --W2 0.1 --N 1000 --k 30 --beta 0.005 \\
        --time_limit 100000 --out runs/adopt
    coopnet run --config runs/good/manifest.json --out runs/good-again

Exit status: 0 on success, 2 on a config/validation error, 1 on a runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from coopnet.experiments import (
    SUBCOMMANDS,
    ParseError,
    ValidationError,
    columns,
    emit,
    eval_spec,
    load_config,
    parse_config,
    simulate,
    train_spec,
)

log = logging.getLogger("coopnet")

# flag name -> spec key; values stay strings and are coerced by the spec
_OVERRIDES = ("N", "k", "beta", "W", "W2", "T", "S", "time_limit", "coop_init", "beta_med",
              "policy", "policies", "mix", "W_list", "W2_list", "grid", "reward", "checkpoint",
              "updates", "batch_size", "lr", "optimizer", "normalize_advantage", "baseline_decay",
              "hidden", "score_hidden")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coopnet", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config or a previous manifest.json")
        p.add_argument("--seed", help="base seed; replicate r uses seed + r")
        p.add_argument("--replicates", help="episodes per cell (eval: evaluation episodes)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        for key in _OVERRIDES:
            p.add_argument(f"--{key}", dest=key)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    kind = SUBCOMMANDS[args.command]
    try:
        config = load_config(args.config) if args.config else {}
        if config.get("kind", kind) != kind:
            log.info("config kind %s replaced by subcommand %s", config["kind"], kind)
        overrides = {key: getattr(args, key) for key in _OVERRIDES}
        overrides.update(kind=kind, seed=args.seed, replicates=args.replicates)
        spec = parse_config(config, overrides)
    except (ParseError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    try:
        if kind == "Train":
            policy, _ = train_spec(spec, args.out)
            rows, summary = eval_spec(spec, policy)
        elif kind == "Eval":
            rows, summary = eval_spec(spec)
        else:
            rows, summary = simulate(spec, args.jobs)
        paths = emit(spec, columns(spec), rows, summary, args.out)
    except Exception as e:  # noqa: BLE001 - report and map to exit status 1
        log.debug("run failed", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    for p in paths.values():
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
