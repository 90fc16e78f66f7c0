"""Experiment specs, sweeps and result files.

A spec is a flat JSON object.  Replicate ``r`` of any cell runs with seed
``seed + r``, so every run is reproducible from the manifest alone.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import platform
from dataclasses import dataclass, field, fields, replace
from typing import Any, Optional

import numpy as np

from coopnet import __version__
from coopnet.competition import (
    CompetitionConfig,
    InvalidMix,
    format_mix,
    parse_mix,
    run_competition_episode,
    start_majority,
)
from coopnet.dynamics import ENV_CONFIGS, GameMatrix, InvalidConfig, SimConfig, run_episode
from coopnet.metrics import EpisodeResult, RewardKind, aggregate
from coopnet.parallel import map_ordered
from coopnet.policies import SinglePolicy, UnknownPolicyName, policy_from_name

log = logging.getLogger(__name__)

KINDS = ("Run", "SweepTS", "SweepW", "SweepW1W2", "Compete", "Train", "Eval")
SUBCOMMANDS = {
    "run": "Run",
    "sweep-ts": "SweepTS",
    "sweep-w": "SweepW",
    "sweep-w1w2": "SweepW1W2",
    "compete": "Compete",
    "train": "Train",
    "eval": "Eval",
}

RESULT_COLUMNS = (
    "seed", "policy", "N", "k", "beta", "W", "W2", "T", "S",
    "coop_fraction", "rewire_requests", "rewires_executed", "rewire_opportunities",
    "heterogeneity", "max_degree", "stop_time",
)
PREFIX_COLUMNS = ("kind", "cell", "replicate")


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def parse_float(value) -> float:
    """Floats, with ``"inf"``/``"infinity"`` accepted for the infinite timescales."""
    if isinstance(value, str):
        v = value.strip().lower()
        if v in ("inf", "infinity", "+inf"):
            return math.inf
        return float(v)
    if isinstance(value, bool):
        raise ValueError("boolean is not a number")
    return float(value)


def _json_float(x: float):
    return "inf" if math.isinf(x) else x


@dataclass
class ExperimentSpec:
    kind: str = "Run"
    # environment
    N: int = 10
    k: Optional[int] = None
    beta: Optional[float] = None
    time_limit: Optional[int] = None
    W: float = 1.0
    T: float = 2.0
    S: float = -1.0
    coop_init: float = 0.5
    # recommenders
    policy: str = "GOOD"
    policies: list = field(default_factory=list)
    # competition
    mix: str = ""
    W2: float = 0.0
    beta_med: float = 0.05
    # sweeps
    W_list: list = field(default_factory=list)
    W2_list: list = field(default_factory=list)
    grid: int = 21
    # replication
    replicates: int = 30
    seed: int = 0
    # learning
    reward: str = "cooperation"
    checkpoint: str = ""
    updates: int = 300
    batch_size: int = 32
    lr: float = 3e-3
    optimizer: str = "adam"
    normalize_advantage: bool = True
    baseline_decay: float = 0.9
    hidden: int = 32
    score_hidden: int = 32

    # -- (de)serialisation ---------------------------------------------
    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float):
                v = _json_float(v)
            elif isinstance(v, list):
                v = [_json_float(x) if isinstance(x, float) else x for x in v]
            out[f.name] = v
        return out

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentSpec":
        if not isinstance(data, dict):
            raise ParseError("config must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ValidationError(unknown[0], "unknown key")
        spec = cls()
        for key, value in data.items():
            setattr(spec, key, _coerce(key, known[key], value))
        return spec.validated()

    # -- validation -----------------------------------------------------
    def validated(self) -> "ExperimentSpec":
        if self.kind not in KINDS:
            raise ValidationError("kind", f"must be one of {KINDS}, got {self.kind!r}")
        row = ENV_CONFIGS.get(self.N, {})
        for name in ("k", "beta", "time_limit"):
            if getattr(self, name) is None:
                if name not in row:
                    raise ValidationError(name, f"required for N={self.N}")
                setattr(self, name, row[name])
        if self.replicates < 1:
            raise ValidationError("replicates", "must be >= 1")
        try:
            self.sim_config(0)
            self.game()
        except InvalidConfig as e:
            raise ValidationError(e.field or "config", str(e)) from None
        if self.kind in ("Run", "Train", "Eval", "SweepTS"):
            self._check_policy("policy", self.policy)
        if self.kind == "SweepW":
            if not self.W_list:
                raise ValidationError("W_list", "required for SweepW")
            for i, name in enumerate(self.policies or [self.policy]):
                self._check_policy(f"policies[{i}]", name)
        if self.kind in ("Compete", "SweepW1W2"):
            if not self.mix:
                raise ValidationError("mix", f"required for {self.kind}")
            try:
                self.mix = format_mix(parse_mix(self.mix))
                self.competition_config(0)
            except (InvalidMix, UnknownPolicyName) as e:
                raise ValidationError("mix", str(e)) from None
            except InvalidConfig as e:
                raise ValidationError(e.field or "config", str(e)) from None
        if self.kind == "SweepW1W2" and (not self.W_list or not self.W2_list):
            raise ValidationError("W_list" if not self.W_list else "W2_list", "required for SweepW1W2")
        if self.kind == "SweepTS" and self.grid < 1:
            raise ValidationError("grid", "must be >= 1")
        if self.kind in ("Train", "Eval"):
            try:
                RewardKind(self.reward)
            except ValueError:
                raise ValidationError("reward", "must be 'cooperation' or 'engagement'") from None
        if self.kind == "Eval" and not self.checkpoint:
            raise ValidationError("checkpoint", "required for Eval")
        if self.kind == "Train" and self.optimizer not in ("sgd", "adam"):
            raise ValidationError("optimizer", "must be 'sgd' or 'adam'")
        return self

    def _check_policy(self, path: str, name: str) -> None:
        if name == "LEARNED" and self.kind in ("Train", "Eval"):
            return
        try:
            policy_from_name(name)
        except UnknownPolicyName as e:
            raise ValidationError(path, str(e.args[0])) from None

    # -- derived configs ------------------------------------------------
    def sim_config(self, seed: int, **overrides) -> SimConfig:
        kw = dict(N=self.N, k=self.k, beta=self.beta, W=self.W, time_limit=self.time_limit,
                  seed=seed, coop_init=self.coop_init)
        kw.update(overrides)
        return SimConfig(**kw)

    def game(self, **overrides) -> GameMatrix:
        return GameMatrix(overrides.get("T", self.T), overrides.get("S", self.S))

    def competition_config(self, seed: int, **overrides) -> CompetitionConfig:
        W2 = overrides.pop("W2", self.W2)
        return CompetitionConfig(base=self.sim_config(seed, **overrides), W2=W2,
                                 beta_med=self.beta_med, mix=tuple(parse_mix(self.mix)))

    def seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.replicates)]

    def mediators(self) -> list[str]:
        return [n for n, _ in parse_mix(self.mix)] if self.mix else []


_LIST_FLOATS = ("W_list", "W2_list")
_FLOATS = ("beta", "W", "T", "S", "coop_init", "W2", "beta_med", "lr", "baseline_decay")
_INTS = ("N", "k", "time_limit", "grid", "replicates", "seed", "updates", "batch_size",
         "hidden", "score_hidden")


def _coerce(key: str, f: dataclasses.Field, value):
    try:
        if value is None:
            if key in ("k", "beta", "time_limit"):
                return None
            raise ValueError("null not allowed")
        if key in _FLOATS:
            return parse_float(value)
        if key in _INTS:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(f"expected an integer, got {value!r}")
            return int(value)
        if key in _LIST_FLOATS:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return [parse_float(v) for v in value]
        if key == "policies":
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
            return [str(v) for v in value]
        if key == "normalize_advantage":
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes")
            return bool(value)
        if key == "mix" and isinstance(value, list):
            return format_mix([(str(n), float(fr)) for n, fr in value])
        return str(value)
    except (TypeError, ValueError) as e:
        raise ValidationError(key, str(e)) from None


def load_config(path: str) -> dict:
    """Read a config file; a manifest yields the spec it recorded."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from None
    except OSError as e:
        raise ParseError(f"{path}: {e}") from None
    if isinstance(data, dict) and "spec" in data and "version" in data:
        data = data["spec"]
    return data


def parse_config(config: Optional[dict] = None, overrides: Optional[dict] = None) -> ExperimentSpec:
    """Merge file values with flag overrides (flags win) into a validated spec."""
    merged = dict(config or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentSpec.from_json(merged)


# -- running ---------------------------------------------------------------

@dataclass(frozen=True)
class Job:
    cell: int
    replicate: int
    seed: int
    params: tuple  # sorted (name, value) pairs overriding the spec for this cell


def _episode_worker(args) -> EpisodeResult:
    spec_json, job = args
    spec = ExperimentSpec.from_json(spec_json)
    params = dict(job.params)
    policy = params.pop("policy", spec.policy)
    game = spec.game(T=params.pop("T", spec.T), S=params.pop("S", spec.S))
    if spec.kind in ("Compete", "SweepW1W2"):
        return run_competition_episode(spec.competition_config(job.seed, **params), game)
    return run_episode(spec.sim_config(job.seed, **params), game, SinglePolicy(policy_from_name(policy)))


def cell_grid(spec: ExperimentSpec) -> list[dict]:
    """Parameter overrides of every cell, in output order."""
    if spec.kind == "SweepTS":
        if spec.grid == 1:
            return [{"T": spec.T, "S": spec.S}]
        Ts = np.linspace(0.0, 2.0, spec.grid)
        Ss = np.linspace(-1.0, 1.0, spec.grid)
        return [{"T": float(t), "S": float(s)} for t in Ts for s in Ss]
    if spec.kind == "SweepW":
        return [{"policy": p, "W": w} for p in (spec.policies or [spec.policy]) for w in spec.W_list]
    if spec.kind == "SweepW1W2":
        return [{"W": w, "W2": w2} for w in spec.W_list for w2 in spec.W2_list]
    return [{}]


def run_spec(spec: ExperimentSpec, jobs: int = 1) -> list[tuple[dict, list[EpisodeResult]]]:
    """All cells of a simulation spec with their replicate results."""
    cells = cell_grid(spec)
    work = [Job(c, r, s, tuple(sorted(cells[c].items())))
            for c in range(len(cells)) for r, s in enumerate(spec.seeds())]
    spec_json = spec.to_json()
    results = map_ordered(_episode_worker, [(spec_json, j) for j in work], jobs)
    out = []
    for c, cell in enumerate(cells):
        out.append((cell, results[c * spec.replicates:(c + 1) * spec.replicates]))
    return out


def result_row(spec: ExperimentSpec, cell_index: int, cell: dict, replicate: int, seed: int,
               result: EpisodeResult, policy_label: Optional[str] = None) -> dict:
    row = {"kind": spec.kind, "cell": cell_index, "replicate": replicate, "seed": seed}
    if policy_label is None:
        policy_label = spec.mix if spec.kind in ("Compete", "SweepW1W2") else cell.get("policy", spec.policy)
    row["policy"] = policy_label
    row["N"] = spec.N
    row["k"] = spec.k
    row["beta"] = spec.beta
    row["W"] = cell.get("W", spec.W)
    row["W2"] = cell.get("W2", spec.W2) if spec.kind in ("Compete", "SweepW1W2") else 0.0
    row["T"] = cell.get("T", spec.T)
    row["S"] = cell.get("S", spec.S)
    row["coop_fraction"] = result.coop_fraction
    row["rewire_requests"] = result.rewire_requests
    row["rewires_executed"] = result.rewires_executed
    row["rewire_opportunities"] = result.rewire_opportunities
    row["heterogeneity"] = result.heterogeneity
    row["max_degree"] = result.max_degree
    row["stop_time"] = result.stop_time
    for m in spec.mediators():
        share, req = result.per_mediator[m] if result.per_mediator else (float("nan"), 0)
        row[f"share_{m}"] = share
        row[f"requests_{m}"] = req
    return row


def columns(spec: ExperimentSpec) -> list[str]:
    cols = list(PREFIX_COLUMNS) + list(RESULT_COLUMNS)
    for m in spec.mediators():
        cols += [f"share_{m}", f"requests_{m}"]
    return cols


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str, cols: list[str], rows: list[dict]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def summarize(spec: ExperimentSpec, cells: list[tuple[dict, list[EpisodeResult]]]) -> dict:
    summary: dict[str, Any] = {"kind": spec.kind, "cells": []}
    for cell, results in cells:
        entry = {"params": {k: _json_float(v) if isinstance(v, float) else v for k, v in cell.items()},
                 "aggregate": aggregate(results)}
        meds = spec.mediators()
        if meds:
            shares = {m: [r.per_mediator[m][0] for r in results] for m in meds}
            entry["mean_shares"] = {m: float(np.mean(v)) for m, v in shares.items()}
            entry["shares"] = shares
            maj = start_majority(parse_mix(spec.mix))
            entry["table"] = {
                "coops": float(np.mean([r.coop_fraction for r in results])),
                "rewire": float(np.mean([r.rewire_requests for r in results])),
                "final_prop_start_majority": float(np.mean(shares[maj])) if maj else None,
            }
        summary["cells"].append(entry)
    if spec.kind == "SweepTS" and spec.grid > 1:
        g = spec.grid
        means = [e["aggregate"]["coop_fraction"]["mean"] for e in summary["cells"]]
        stops = [e["aggregate"]["stop_time"]["mean"] for e in summary["cells"]]
        summary["T"] = [float(t) for t in np.linspace(0, 2, g)]
        summary["S"] = [float(s) for s in np.linspace(-1, 1, g)]
        summary["coop_fraction"] = [means[i * g:(i + 1) * g] for i in range(g)]
        summary["stop_time"] = [stops[i * g:(i + 1) * g] for i in range(g)]
    if spec.kind == "SweepW1W2":
        summary["W_list"] = [_json_float(w) for w in spec.W_list]
        summary["W2_list"] = [_json_float(w) for w in spec.W2_list]
        n2 = len(spec.W2_list)
        summary["mean_shares"] = {
            m: [[summary["cells"][i * n2 + j]["mean_shares"][m] for j in range(n2)]
                for i in range(len(spec.W_list))]
            for m in spec.mediators()
        }
    return summary


def manifest(spec: ExperimentSpec, warnings: Optional[list[str]] = None) -> dict:
    return {
        "spec": spec.to_json(),
        "version": __version__,
        "seeds": spec.seeds(),
        "seed_rule": "replicate r of every cell runs with seed = spec.seed + r",
        "python": platform.python_version(),
        "warnings": list(warnings or []),
    }


def emit(spec: ExperimentSpec, cols: list[str], rows: list[dict], summary: dict, out_dir: str,
         warnings: Optional[list[str]] = None) -> dict[str, str]:
    """Write results.csv, summary.json and manifest.json under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    warnings = list(warnings or [])
    if not rows:
        warnings.append("empty result set: results.csv holds only the header")
        log.warning("empty result set")
    paths = {name: os.path.join(out_dir, name) for name in ("results.csv", "summary.json", "manifest.json")}
    write_csv(paths["results.csv"], cols, rows)
    with open(paths["summary.json"], "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
    with open(paths["manifest.json"], "w") as fh:
        json.dump(manifest(spec, warnings), fh, indent=2, sort_keys=True)
    return paths


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return None
        return obj
    if isinstance(obj, (np.floating, np.integer)):
        return _jsonable(obj.item())
    return obj


# -- high level entry points ---------------------------------------------------

def simulate(spec: ExperimentSpec, jobs: int = 1):
    """Rows and summary for the simulation kinds (everything but Train/Eval)."""
    cells = run_spec(spec, jobs)
    rows = []
    for c, (cell, results) in enumerate(cells):
        for r, (seed, res) in enumerate(zip(spec.seeds(), results)):
            rows.append(result_row(spec, c, cell, r, seed, res))
    return rows, summarize(spec, cells)


def sweep_ts(spec: ExperimentSpec, jobs: int = 1) -> dict:
    """Mean final cooperator fraction and stop time over the (T, S) grid."""
    if spec.kind != "SweepTS":
        spec = replace(spec, kind="SweepTS")
    _, summary = simulate(spec, jobs)
    return summary


def sweep_w1w2(spec: ExperimentSpec, jobs: int = 1) -> dict:
    """Mean final share of every mediator for each (W, W2) cell."""
    if spec.kind != "SweepW1W2":
        spec = replace(spec, kind="SweepW1W2")
    _, summary = simulate(spec, jobs)
    return summary


def train_spec(spec: ExperimentSpec, out_dir: Optional[str] = None):
    """Train a ranking policy, then evaluate it on the replicate seeds."""
    from coopnet.learning import TRAIN_LOG_COLUMNS, TrainConfig, train

    kind = RewardKind(spec.reward)
    tc = TrainConfig(updates=spec.updates, batch_size=spec.batch_size, lr=spec.lr,
                     optimizer=spec.optimizer, normalize_advantage=spec.normalize_advantage,
                     baseline_decay=spec.baseline_decay, hidden=spec.hidden,
                     score_hidden=spec.score_hidden, seed=spec.seed)
    # training episodes draw seeds above the evaluation range
    env = spec.sim_config(spec.seed + spec.replicates)
    policy, log_rows = train(env, spec.game(), kind, tc)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        policy.save(os.path.join(out_dir, "checkpoint.json"))
        write_csv(os.path.join(out_dir, "training_log.csv"), list(TRAIN_LOG_COLUMNS), log_rows)
    return policy, log_rows


def eval_spec(spec: ExperimentSpec, policy=None):
    from coopnet.learning import RankingPolicy, evaluate_policy

    if policy is None:
        policy = RankingPolicy.load(spec.checkpoint)
    kind = RewardKind(spec.reward)
    mean_reward, agg, results = evaluate_policy(policy, spec.sim_config(spec.seed), spec.game(), kind,
                                                spec.replicates)
    rows = [result_row(spec, 0, {}, r, s, res, policy_label="LEARNED")
            for r, (s, res) in enumerate(zip(spec.seeds(), results))]
    summary = {"kind": spec.kind, "reward": spec.reward, "mean_reward": mean_reward,
               "cells": [{"params": {}, "aggregate": agg}]}
    return rows, summary
