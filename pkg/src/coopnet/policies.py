"""Recommenders: who a dissatisfied node should rewire to.

A recommender sees the focused node ``x``, the neighbour ``y`` it wants to
drop, and the candidate pool (every node except ``x``, ``y`` and the current
neighbours of ``x``; in competition mode only nodes of the recommender's own
mediator).  The heuristic family is a 3x3 grid of strategy filter x degree
selector, plus the local rule of rewiring to a neighbour of ``y``, FAIR and
the null policy that never recommends.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Optional, Sequence

from coopnet.dynamics import C, D, NetworkState, PolicyResolver

# rejection draws before falling back to enumerating the pool
_REJECTION_TRIES = 64


class UnknownPolicyName(KeyError):
    pass


class StrategyFilter(enum.Enum):
    DEFECTORS = "def"
    ANY = "any"
    COOPERATORS = "coop"


class DegreeSelector(enum.Enum):
    LOWEST = "min"
    RANDOM = "rand"
    HIGHEST = "max"


@dataclass(frozen=True)
class RewirePolicy:
    kind: str  # "null" | "local" | "grid" | "fair" | "learned"
    strategy_filter: Optional[StrategyFilter] = None
    degree_selector: Optional[DegreeSelector] = None
    learner: Any = None
    name: str = ""

    def __str__(self):
        return self.name or self.kind


def grid(f: StrategyFilter, d: DegreeSelector, name: str = "") -> RewirePolicy:
    return RewirePolicy("grid", f, d, name=name or f"{f.value}_{d.value}")


NULL = RewirePolicy("null", name="NULL")
LOCAL = RewirePolicy("local", name="NO_MED")
FAIR = RewirePolicy("fair", name="FAIR")
GOOD = grid(StrategyFilter.COOPERATORS, DegreeSelector.RANDOM, "GOOD")
BAD = grid(StrategyFilter.DEFECTORS, DegreeSelector.RANDOM, "BAD")
RANDOM = grid(StrategyFilter.ANY, DegreeSelector.RANDOM, "RANDOM")


def learned(learner, name: str = "LEARNED") -> RewirePolicy:
    """Wrap an object with ``recommend(state, x, y, pool) -> Optional[int]``."""
    return RewirePolicy("learned", learner=learner, name=name)


REGISTRY: dict[str, RewirePolicy] = {
    "NULL": NULL,
    "NO_MED": LOCAL,
    "FAIR": FAIR,
    "GOOD": GOOD,
    "BAD": BAD,
    "RANDOM": RANDOM,
}
for _f in StrategyFilter:
    for _d in DegreeSelector:
        _p = grid(_f, _d)
        REGISTRY[_p.name] = _p


def policy_from_name(name: str) -> RewirePolicy:
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownPolicyName(
            f"unknown policy {name!r}; known: {', '.join(sorted(REGISTRY))}") from None


# -- candidate pool ------------------------------------------------------

def candidate_pool(state: NetworkState, x: int, y: int,
                   exclusivity: Optional[tuple[Any, Sequence[Any]]] = None) -> set[int]:
    """Valid rewire targets for ``x`` dropping ``y``.

    ``exclusivity`` is ``(mediator, assignment)``: only nodes whose
    ``assignment[z] == mediator`` are kept.
    """
    banned = set(state.adj[x])
    banned.add(x)
    banned.add(y)
    if exclusivity is None:
        return {z for z in range(state.N) if z not in banned}
    med, assignment = exclusivity
    return {z for z in range(state.N) if z not in banned and assignment[z] == med}


def _keep_strategy(f: StrategyFilter) -> Optional[int]:
    if f is StrategyFilter.COOPERATORS:
        return C
    if f is StrategyFilter.DEFECTORS:
        return D
    return None


def _select_by_degree(state: NetworkState, nodes: list[int], d: DegreeSelector) -> Optional[int]:
    if not nodes:
        return None
    rng = state.rng
    if d is DegreeSelector.RANDOM:
        return nodes[rng.randrange(len(nodes))]
    adj = state.adj
    degs = [len(adj[z]) for z in nodes]
    target = min(degs) if d is DegreeSelector.LOWEST else max(degs)
    ties = [z for z, k in zip(nodes, degs) if k == target]
    return ties[rng.randrange(len(ties))]


def _grid_from_pool(state: NetworkState, pool, f: StrategyFilter, d: DegreeSelector):
    keep = _keep_strategy(f)
    strat = state.strategies
    nodes = sorted(pool) if keep is None else sorted(z for z in pool if strat[z] == keep)
    return _select_by_degree(state, nodes, d)


def _grid_fast(state: NetworkState, x: int, y: int, f: StrategyFilter, d: DegreeSelector,
               exclusivity) -> Optional[int]:
    # Uniform selection by rejection from V; exact, and O(1) when the pool is
    # a sizeable share of the graph.  Falls back to enumeration otherwise.
    if d is DegreeSelector.RANDOM:
        rng = state.rng
        n = state.N
        strat = state.strategies
        keep = _keep_strategy(f)
        nbrs = set(state.adj[x])
        if exclusivity is None:
            med, assignment = None, None
        else:
            med, assignment = exclusivity
        for _ in range(_REJECTION_TRIES):
            z = rng.randrange(n)
            if z == x or z == y or z in nbrs:
                continue
            if keep is not None and strat[z] != keep:
                continue
            if assignment is not None and assignment[z] != med:
                continue
            return z
    return _grid_from_pool(state, candidate_pool(state, x, y, exclusivity), f, d)


def _local(state: NetworkState, x: int, y: int, pool=None, exclusivity=None) -> Optional[int]:
    if pool is not None:
        cands = [z for z in state.adj[y] if z in pool]
    else:
        banned = set(state.adj[x])
        banned.add(x)
        if exclusivity is None:
            cands = [z for z in state.adj[y] if z not in banned]
        else:
            med, assignment = exclusivity
            cands = [z for z in state.adj[y] if z not in banned and assignment[z] == med]
    if not cands:
        return None
    return cands[state.rng.randrange(len(cands))]


def recommend(policy: RewirePolicy, state: NetworkState, x: int, y: int,
              pool: Optional[set[int]] = None, exclusivity=None) -> Optional[int]:
    """Recommended new neighbour for ``x`` in place of ``y``, or None.

    With ``pool`` given, selection is made from that explicit pool.  Without
    it the pool is implied by ``(state, x, y, exclusivity)`` and never
    materialised when a cheaper exact sampler exists.
    """
    kind = policy.kind
    if kind == "null":
        return None
    if kind == "local":
        return _local(state, x, y, pool, exclusivity)
    if kind == "grid":
        f, d = policy.strategy_filter, policy.degree_selector
    elif kind == "fair":
        same = state.strategies[x] == C
        f, d = (StrategyFilter.COOPERATORS if same else StrategyFilter.DEFECTORS), DegreeSelector.RANDOM
    elif kind == "learned":
        if pool is None:
            pool = candidate_pool(state, x, y, exclusivity)
        return policy.learner.recommend(state, x, y, pool)
    else:
        raise ValueError(f"unknown policy kind {kind!r}")
    if pool is not None:
        return _grid_from_pool(state, pool, f, d)
    return _grid_fast(state, x, y, f, d, exclusivity)


class SinglePolicy(PolicyResolver):
    """Every node uses the same recommender."""

    def __init__(self, policy: RewirePolicy):
        self.policy = policy

    def recommend(self, state, x, y):
        return recommend(self.policy, state, x, y)
