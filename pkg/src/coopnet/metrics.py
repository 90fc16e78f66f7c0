"""Episode metrics, rewards and replicate aggregation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from coopnet.dynamics import NetworkState, StepCounters


class EmptyInput(ValueError):
    pass


class RewardKind(enum.Enum):
    COOPERATION = "cooperation"
    ENGAGEMENT = "engagement"


@dataclass
class EpisodeResult:
    N: int
    coop_fraction: float
    counters: StepCounters
    heterogeneity: float
    max_degree: int
    stop_time: int
    # mediator -> (final population share, rewire requests charged to it)
    per_mediator: Optional[dict[Any, tuple[float, int]]] = None
    extra: dict = field(default_factory=dict)

    @property
    def rewire_requests(self) -> int:
        return self.counters.rewire_requests

    @property
    def rewires_executed(self) -> int:
        return self.counters.rewires_executed

    @property
    def rewire_opportunities(self) -> int:
        return self.counters.rewire_opportunities

    @property
    def rewires_per_opportunity(self) -> float:
        return rewires_per_opportunity(self.counters)


def coop_fraction(state: NetworkState) -> float:
    return sum(state.strategies) / state.N


def heterogeneity(state: NetworkState) -> float:
    """Population variance of the degree sequence."""
    degs = state.degrees()
    n = len(degs)
    # integer arithmetic up to the final division, so regular graphs give exactly 0
    return (n * sum(d * d for d in degs) - sum(degs) ** 2) / (n * n)


def rewires_per_opportunity(counters: StepCounters) -> float:
    return counters.rewires_executed / max(1, counters.rewire_opportunities)


def episode_result(state: NetworkState, counters: StepCounters,
                   per_mediator: Optional[dict] = None) -> EpisodeResult:
    return EpisodeResult(
        N=state.N,
        coop_fraction=coop_fraction(state),
        counters=counters,
        heterogeneity=heterogeneity(state),
        max_degree=max(state.degrees()),
        stop_time=counters.stop_time,
        per_mediator=per_mediator,
    )


def reward(kind: RewardKind, result: EpisodeResult, mediator: Any = None) -> float:
    """Episode-level reward.

    Cooperation maps the final cooperator fraction onto [-1, 1]; Engagement
    is the number of rewire requests, charged to ``mediator`` when given.
    """
    if kind is RewardKind.COOPERATION:
        return 2.0 * (result.coop_fraction - 0.5)
    if mediator is not None:
        return float(result.counters.requests_by_mediator.get(mediator, 0))
    return float(result.counters.rewire_requests)


METRICS = (
    "coop_fraction",
    "rewire_requests",
    "rewires_executed",
    "rewire_opportunities",
    "rewires_per_opportunity",
    "heterogeneity",
    "max_degree",
    "stop_time",
)


def metric_row(result: EpisodeResult) -> dict[str, float]:
    return {m: float(getattr(result, m)) for m in METRICS}


def aggregate(results: Sequence[EpisodeResult]) -> dict:
    """Mean, sd (population), min and max of every metric over replicates."""
    if len(results) == 0:
        raise EmptyInput("cannot aggregate an empty result list")
    table = np.array([[metric_row(r)[m] for m in METRICS] for r in results], dtype=float)
    # sort rows so the float reductions do not depend on input order
    table = table[np.lexsort(table.T[::-1])]
    summary: dict[str, Any] = {"replicates": len(results)}
    for j, m in enumerate(METRICS):
        col = table[:, j]
        mean = math.fsum(col) / len(col)
        lo, hi = float(col.min()), float(col.max())
        sd = 0.0 if lo == hi else math.sqrt(math.fsum((col - mean) ** 2) / len(col))
        summary[m] = {
            "mean": float(mean),
            "sd": sd,
            "min": lo,
            "max": hi,
        }
    return summary


def mean_ci95(values: Sequence[float]) -> tuple[float, float, float]:
    """Mean and a normal-approximation 95% interval."""
    arr = np.asarray(values, dtype=float)
    m = float(arr.mean())
    half = 1.96 * float(arr.std(ddof=1)) / math.sqrt(len(arr)) if len(arr) > 1 else 0.0
    return m, m - half, m + half
