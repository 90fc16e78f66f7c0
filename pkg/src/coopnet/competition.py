"""Competing recommenders.

Every node subscribes to one mediator (a recommender).  Mediators are
exclusive: they only recommend their own subscribers.  Besides strategy and
structural updates, an event may be a mediator update in which a node
imitates a neighbour's choice of mediator through the Fermi rule at its own
temperature ``beta_med``.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from coopnet.dynamics import (
    GameMatrix,
    InvalidConfig,
    NetworkState,
    PolicyResolver,
    SimConfig,
    StepCounters,
    StepOutcome,
    _require_edge,
    cumulative_payoff,
    fermi,
    init_random_graph,
    run_dynamics,
    sample_pair,
    simulation_step,
)
from coopnet.metrics import EpisodeResult, episode_result
from coopnet.policies import RewirePolicy, policy_from_name, recommend


class InvalidMix(ValueError):
    pass


Mix = Sequence[tuple[str, float]]

# Heuristic stand-ins for optimised recommenders: random cooperators for the
# aligned one, uniformly random nodes for the engagement maximiser.
ALIGNED = "GOOD"
ENGAGEMENT = "RANDOM"
LOCAL = "NO_MED"

SCENARIOS: dict[str, list[tuple[str, float]]] = {
    "engagement": [(ENGAGEMENT, 1.0)],
    "engagement_vs_local": [(LOCAL, 0.9), (ENGAGEMENT, 0.1)],
    "local": [(LOCAL, 1.0)],
    "local_vs_many": [(LOCAL, 0.9), ("GOOD", 0.025), ("BAD", 0.025),
                      ("RANDOM", 0.025), ("FAIR", 0.025)],
    "aligned_vs_local": [(LOCAL, 0.9), (ALIGNED, 0.1)],
    "aligned_vs_engagement": [(ENGAGEMENT, 0.9), (ALIGNED, 0.1)],
    "aligned": [(ALIGNED, 1.0)],
}


def validate_mix(mix: Mix) -> list[tuple[str, float]]:
    mix = [(str(n), float(f)) for n, f in mix]
    if not mix:
        raise InvalidMix("empty mix")
    names = [n for n, _ in mix]
    if len(set(names)) != len(names):
        raise InvalidMix(f"duplicate mediators in mix: {names}")
    if any(f < 0 for _, f in mix):
        raise InvalidMix("negative fraction in mix")
    total = math.fsum(f for _, f in mix)
    if abs(total - 1.0) > 1e-9:
        raise InvalidMix(f"mix fractions sum to {total}, expected 1")
    for n in names:
        policy_from_name(n)
    return mix


def parse_mix(text: str) -> list[tuple[str, float]]:
    """``"NO_MED:0.9,GOOD:0.1"`` -> [("NO_MED", 0.9), ("GOOD", 0.1)]."""
    out = []
    for part in text.split(","):
        name, sep, frac = part.strip().partition(":")
        if not sep:
            raise InvalidMix(f"expected NAME:FRACTION, got {part!r}")
        out.append((name.strip(), float(frac)))
    return validate_mix(out)


def format_mix(mix: Mix) -> str:
    return ",".join(f"{n}:{f!r}" for n, f in mix)


@dataclass(frozen=True)
class CompetitionConfig:
    base: SimConfig = field(default_factory=lambda: SimConfig(
        N=1000, k=30, beta=0.005, W=1.0, time_limit=100_000))
    W2: float = 0.1
    beta_med: float = 0.05
    mix: tuple = (("NO_MED", 0.9), ("GOOD", 0.1))

    def __post_init__(self):
        object.__setattr__(self, "mix", tuple(validate_mix(self.mix)))
        if not self.W2 >= 0:
            raise InvalidConfig(f"W2 must be non-negative, got {self.W2}", "W2")
        if not self.beta_med > 0:
            raise InvalidConfig(f"beta_med must be positive, got {self.beta_med}", "beta_med")

    def with_seed(self, seed: int) -> "CompetitionConfig":
        return replace(self, base=replace(self.base, seed=seed))


def allocate_counts(fractions: Sequence[float], n: int) -> list[int]:
    """Largest-remainder rounding of ``fractions * n``; ties go to the earlier entry."""
    quotas = [f * n for f in fractions]
    counts = [int(math.floor(q + 1e-9)) for q in quotas]
    left = n - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:max(left, 0)]:
        counts[i] += 1
    return counts


class MediatorAssignment(PolicyResolver):
    """Per-node mediator ids plus the id -> policy registry."""

    def __init__(self, of: Sequence[str], registry: dict[str, RewirePolicy]):
        missing = set(of) - set(registry)
        if missing:
            raise InvalidMix(f"nodes assigned to unregistered mediators {sorted(missing)}")
        self.of = list(of)
        self.registry = dict(registry)

    def mediator_of(self, x: int) -> str:
        return self.of[x]

    def recommend(self, state: NetworkState, x: int, y: int) -> Optional[int]:
        med = self.of[x]
        return recommend(self.registry[med], state, x, y, exclusivity=(med, self.of))

    def shares(self) -> dict[str, float]:
        n = len(self.of)
        counts = {m: 0 for m in self.registry}
        for m in self.of:
            counts[m] += 1
        return {m: c / n for m, c in counts.items()}

    def present(self) -> set[str]:
        return set(self.of)


def assign_initial_mediators(state: NetworkState, mix: Mix,
                             rng: Optional[random.Random] = None) -> MediatorAssignment:
    mix = validate_mix(mix)
    rng = rng if rng is not None else state.rng
    counts = allocate_counts([f for _, f in mix], state.N)
    of = [name for (name, _), c in zip(mix, counts) for _ in range(c)]
    rng.shuffle(of)
    return MediatorAssignment(of, {name: policy_from_name(name) for name, _ in mix})


def mediator_update(state: NetworkState, game: GameMatrix, assignment: MediatorAssignment,
                    x: int, y: int, beta_med: float) -> bool:
    """x adopts y's mediator with probability fermi(Pi(y) - Pi(x), beta_med)."""
    _require_edge(state, x, y)
    p = fermi(cumulative_payoff(state, game, y) - cumulative_payoff(state, game, x), beta_med)
    if state.rng.random() < p and assignment.of[x] != assignment.of[y]:
        assignment.of[x] = assignment.of[y]
        return True
    return False


def mediator_probability(W2: float) -> float:
    """Chance that an event is a mediator update, W2 / (1 + W2)."""
    return 1.0 if math.isinf(W2) else W2 / (1.0 + W2)


def competition_step(state: NetworkState, game: GameMatrix, assignment: MediatorAssignment,
                     config: CompetitionConfig, counters: StepCounters) -> StepOutcome:
    W2 = config.W2
    # no draw at W2 == 0 keeps the stream identical to the plain process
    if W2 > 0 and (math.isinf(W2) or state.rng.random() < mediator_probability(W2)):
        x, y = sample_pair(state)
        counters.mediator_updates += 1
        changed = mediator_update(state, game, assignment, x, y, config.beta_med)
        return StepOutcome("mediator", x, y, changed)
    return simulation_step(state, game, config.base, assignment, counters)


def run_competition_episode(config: CompetitionConfig, game: GameMatrix,
                            state: Optional[NetworkState] = None,
                            assignment: Optional[MediatorAssignment] = None,
                            on_step=None) -> EpisodeResult:
    if state is None:
        state = init_random_graph(config.base)
    if assignment is None:
        assignment = assign_initial_mediators(state, config.mix)
    counters = StepCounters()
    # mediator updates are not environment steps; with W2 = inf nothing else
    # happens, so bound the event count instead
    limit = config.base.time_limit
    run_dynamics(state, lambda: competition_step(state, game, assignment, config, counters),
                 counters, limit, on_step, event_limit=limit if math.isinf(config.W2) else None)
    shares = assignment.shares()
    per_med = {m: (shares[m], counters.requests_by_mediator.get(m, 0)) for m in assignment.registry}
    return episode_result(state, counters, per_med)


@dataclass
class AdoptionSummary:
    mix: list
    runs: int
    shares: dict  # mediator -> list of final shares, one per run
    coop_fraction: list
    rewire_requests: list
    start_majority: Optional[str]

    @property
    def mean_coop(self) -> float:
        return float(np.mean(self.coop_fraction))

    @property
    def mean_requests(self) -> float:
        return float(np.mean(self.rewire_requests))

    @property
    def final_prop_start_majority(self) -> Optional[float]:
        if self.start_majority is None:
            return None
        return float(np.mean(self.shares[self.start_majority]))

    def to_json(self) -> dict:
        return {
            "mix": [[n, f] for n, f in self.mix],
            "runs": self.runs,
            "shares": {m: list(v) for m, v in self.shares.items()},
            "mean_shares": {m: float(np.mean(v)) for m, v in self.shares.items()},
            "coop_fraction": list(self.coop_fraction),
            "rewire_requests": list(self.rewire_requests),
            "table": {
                "coops": self.mean_coop,
                "rewire": self.mean_requests,
                "final_prop_start_majority": self.final_prop_start_majority,
            },
        }


def start_majority(mix: Mix) -> Optional[str]:
    """Mediator with the largest initial share; None for a monopoly."""
    if len(mix) < 2:
        return None
    return max(mix, key=lambda nf: nf[1])[0]


def summarize_adoption(config: CompetitionConfig, results: Sequence[EpisodeResult]) -> AdoptionSummary:
    mix = list(config.mix)
    return AdoptionSummary(
        mix=mix,
        runs=len(results),
        shares={m: [r.per_mediator[m][0] for r in results] for m, _ in mix},
        coop_fraction=[r.coop_fraction for r in results],
        rewire_requests=[r.rewire_requests for r in results],
        start_majority=start_majority(mix),
    )


def run_adoption_experiment(config: CompetitionConfig, runs: int, game: GameMatrix = GameMatrix(),
                            jobs: int = 1) -> AdoptionSummary:
    """``runs`` episodes with seeds ``base.seed + i``."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    from coopnet.parallel import map_ordered

    configs = [config.with_seed(config.base.seed + i) for i in range(runs)]
    results = map_ordered(_competition_worker, [(c, game) for c in configs], jobs)
    return summarize_adoption(config, results)


def _competition_worker(args) -> EpisodeResult:
    config, game = args
    return run_competition_episode(config, game)
