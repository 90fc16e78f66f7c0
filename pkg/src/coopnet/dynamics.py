"""Networked 2x2 social dilemma with adaptive rewiring.

One event of the process picks a random node ``x`` and a random neighbour
``y`` and then performs either a strategy update (imitation through the
Fermi rule) or a structural update (``x`` is unhappy with a defecting ``y``
and the pair competes over who gets to move the edge).  Where the moved edge
lands is decided by a pluggable recommender, see :mod:`coopnet.policies`.

Strategies are stored as ints, ``C = 1`` and ``D = 0``.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

C = 1
D = 0

_EXP_CLAMP = 700.0
_CONNECT_ATTEMPTS = 100


class InvalidConfig(ValueError):
    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class ConnectivityFailure(RuntimeError):
    pass


class UnknownNode(KeyError):
    pass


class NotNeighbors(ValueError):
    pass


class IsolatedFocusNode(RuntimeError):
    pass


@dataclass(frozen=True)
class GameMatrix:
    """Symmetric 2x2 dilemma with R=1, P=0."""

    T: float = 2.0
    S: float = -1.0

    def __post_init__(self):
        if not 0.0 <= self.T <= 2.0:
            raise InvalidConfig(f"T must lie in [0, 2], got {self.T}", "T")
        if not -1.0 <= self.S <= 1.0:
            raise InvalidConfig(f"S must lie in [-1, 1], got {self.S}", "S")

    R = 1.0
    P = 0.0

    def payoff(self, mine: int, theirs: int) -> float:
        if mine == C:
            return self.R if theirs == C else self.S
        return self.T if theirs == C else self.P


PRISONERS_DILEMMA = GameMatrix(2.0, -1.0)


@dataclass(frozen=True)
class SimConfig:
    N: int = 10
    k: int = 4
    beta: float = 0.1
    W: float = 1.0
    time_limit: int = 1000
    seed: int = 0
    # probability that a node starts as a cooperator
    coop_init: float = 0.5

    def __post_init__(self):
        if self.N < 2:
            raise InvalidConfig(f"N must be >= 2, got {self.N}", "N")
        if not 2 <= self.k < self.N:
            raise InvalidConfig(f"need 2 <= k < N, got k={self.k}, N={self.N}", "k")
        if (self.N * self.k) % 2:
            raise InvalidConfig(f"N*k must be even, got N={self.N}, k={self.k}", "k")
        if not self.beta > 0:
            raise InvalidConfig(f"beta must be positive, got {self.beta}", "beta")
        if not self.W >= 0:
            raise InvalidConfig(f"W must be non-negative, got {self.W}", "W")
        if self.time_limit <= 0:
            raise InvalidConfig(f"time_limit must be positive, got {self.time_limit}", "time_limit")
        if not 0.0 <= self.coop_init <= 1.0:
            raise InvalidConfig(f"coop_init must lie in [0, 1], got {self.coop_init}", "coop_init")

    @property
    def n_edges(self) -> int:
        return self.N * self.k // 2


# Environment configurations used throughout the experiments, keyed by N.
ENV_CONFIGS = {
    10: dict(N=10, beta=0.1, k=4, time_limit=1000),
    30: dict(N=30, beta=0.05, k=8, time_limit=3000),
    100: dict(N=100, beta=0.005, k=28, time_limit=10000),
    500: dict(N=500, beta=0.005, k=30, time_limit=30000),
}


def env_config(N: int, **overrides) -> SimConfig:
    return SimConfig(**{**ENV_CONFIGS[N], **overrides})


@dataclass
class StepCounters:
    steps: int = 0
    strategy_updates: int = 0
    structural_updates: int = 0
    rewire_opportunities: int = 0
    rewire_requests: int = 0
    rewires_executed: int = 0
    stop_time: int = 0
    # competition mode only: mediator imitation events, not counted in ``steps``
    mediator_updates: int = 0
    requests_by_mediator: dict = field(default_factory=dict)

    @property
    def events(self) -> int:
        return self.steps + self.mediator_updates

    def check(self) -> None:
        assert self.rewires_executed <= self.rewire_requests <= self.rewire_opportunities
        assert self.rewire_opportunities <= self.structural_updates <= self.steps
        assert self.steps == self.strategy_updates + self.structural_updates

    def as_dict(self) -> dict:
        return {
            "steps": self.steps,
            "strategy_updates": self.strategy_updates,
            "structural_updates": self.structural_updates,
            "rewire_opportunities": self.rewire_opportunities,
            "rewire_requests": self.rewire_requests,
            "rewires_executed": self.rewires_executed,
            "stop_time": self.stop_time,
            "mediator_updates": self.mediator_updates,
        }


class NetworkState:
    """Undirected simple graph plus one strategy per node.

    ``adj[i]`` is a list of the neighbours of ``i``; lists keep random
    neighbour draws O(1).  ``rng`` is the run's private stream, any object
    with the :class:`random.Random` interface.
    """

    def __init__(self, n: int, edges: Sequence[tuple[int, int]], strategies: Sequence[int],
                 rng: Optional[random.Random] = None):
        if len(strategies) != n:
            raise ValueError(f"expected {n} strategies, got {len(strategies)}")
        self.N = n
        self.adj: list[list[int]] = [[] for _ in range(n)]
        for a, b in edges:
            self.add_edge(a, b)
        self.strategies = [int(s) for s in strategies]
        if any(s not in (C, D) for s in self.strategies):
            raise ValueError("strategies must be C (1) or D (0)")
        self.n_coop = sum(self.strategies)
        self.rng = rng if rng is not None else random.Random(0)

    # -- topology -------------------------------------------------------
    def add_edge(self, a: int, b: int) -> None:
        if a == b:
            raise ValueError(f"self-loop at {a}")
        if b in self.adj[a]:
            raise ValueError(f"parallel edge {a}-{b}")
        self.adj[a].append(b)
        self.adj[b].append(a)

    def remove_edge(self, a: int, b: int) -> None:
        try:
            self.adj[a].remove(b)
            self.adj[b].remove(a)
        except ValueError:
            raise NotNeighbors(f"{a} and {b} are not adjacent") from None

    def has_edge(self, a: int, b: int) -> bool:
        return b in self.adj[a]

    def degree(self, x: int) -> int:
        return len(self.adj[x])

    def degrees(self) -> list[int]:
        return [len(a) for a in self.adj]

    def edges(self) -> list[tuple[int, int]]:
        return sorted((a, b) for a in range(self.N) for b in self.adj[a] if a < b)

    @property
    def n_edges(self) -> int:
        return sum(len(a) for a in self.adj) // 2

    def check_node(self, x: int) -> None:
        if not (isinstance(x, int) and 0 <= x < self.N):
            raise UnknownNode(x)

    def is_homogeneous(self) -> bool:
        return self.n_coop == 0 or self.n_coop == self.N

    def set_strategy(self, x: int, s: int) -> None:
        self.n_coop += s - self.strategies[x]
        self.strategies[x] = s

    def rewire(self, a: int, old: int, new: int) -> None:
        """Move edge (a, old) to (a, new)."""
        if new == a or new in self.adj[a]:
            raise ValueError(f"cannot rewire {a} to {new}")
        self.remove_edge(a, old)
        self.add_edge(a, new)

    def copy(self) -> "NetworkState":
        other = NetworkState.__new__(NetworkState)
        other.N = self.N
        other.adj = [list(a) for a in self.adj]
        other.strategies = list(self.strategies)
        other.n_coop = self.n_coop
        other.rng = random.Random()
        other.rng.setstate(self.rng.getstate())
        return other

    # -- serialisation ---------------------------------------------------
    def to_json(self) -> dict:
        return {
            "nodes": [{"id": i, "strategy": "C" if s == C else "D"}
                      for i, s in enumerate(self.strategies)],
            "edges": [list(e) for e in self.edges()],
        }

    @classmethod
    def from_json(cls, data: dict, rng: Optional[random.Random] = None) -> "NetworkState":
        nodes = sorted(data["nodes"], key=lambda n: n["id"])
        strategies = [C if n["strategy"] == "C" else D for n in nodes]
        return cls(len(nodes), [tuple(e) for e in data["edges"]], strategies, rng)


def is_connected(adj: Sequence[Sequence[int]]) -> bool:
    n = len(adj)
    seen = [False] * n
    seen[0] = True
    stack = [0]
    count = 1
    while stack:
        for j in adj[stack.pop()]:
            if not seen[j]:
                seen[j] = True
                count += 1
                stack.append(j)
    return count == n


def _pair_from_index(idx: int, n: int) -> tuple[int, int]:
    # row-major enumeration of pairs a < b
    a = 0
    row = n - 1
    while idx >= row:
        idx -= row
        a += 1
        row -= 1
    return a, a + 1 + idx


def init_random_graph(config: SimConfig, rng: Optional[random.Random] = None) -> NetworkState:
    """Connected G(N, M) sample with M = N*k/2 and fair-coin strategies."""
    rng = rng if rng is not None else random.Random(config.seed)
    n, m = config.N, config.n_edges
    total = n * (n - 1) // 2
    for _ in range(_CONNECT_ATTEMPTS):
        picks = rng.sample(range(total), m)
        edges = [_pair_from_index(i, n) for i in picks]
        adj: list[list[int]] = [[] for _ in range(n)]
        for a, b in edges:
            adj[a].append(b)
            adj[b].append(a)
        if is_connected(adj):
            break
    else:
        raise ConnectivityFailure(
            f"no connected graph with N={n}, k={config.k} in {_CONNECT_ATTEMPTS} attempts")
    strategies = [C if rng.random() < config.coop_init else D for _ in range(n)]
    return NetworkState(n, edges, strategies, rng)


def fermi(delta: float, beta: float) -> float:
    """Probability of adopting the other side's choice given payoff gain ``delta``."""
    z = -beta * delta
    if z > _EXP_CLAMP:
        return 0.0
    if z < -_EXP_CLAMP:
        return 1.0
    return 1.0 / (1.0 + math.exp(z))


def cumulative_payoff(state: NetworkState, game: GameMatrix, x: int) -> float:
    state.check_node(x)
    nbrs = state.adj[x]
    strat = state.strategies
    n_c = 0
    for j in nbrs:
        n_c += strat[j]
    n_d = len(nbrs) - n_c
    if strat[x] == C:
        return n_c * game.R + n_d * game.S
    return n_c * game.T + n_d * game.P


def _require_edge(state: NetworkState, x: int, y: int) -> None:
    state.check_node(x)
    state.check_node(y)
    if y not in state.adj[x]:
        raise NotNeighbors(f"{x} and {y} are not adjacent")


def strategy_update(state: NetworkState, game: GameMatrix, x: int, y: int, beta: float) -> bool:
    """x imitates y with probability fermi(Pi(y) - Pi(x)). Returns True if x changed."""
    _require_edge(state, x, y)
    p = fermi(cumulative_payoff(state, game, y) - cumulative_payoff(state, game, x), beta)
    if state.rng.random() < p and state.strategies[x] != state.strategies[y]:
        state.set_strategy(x, state.strategies[y])
        return True
    return False


# -- structural update ---------------------------------------------------

@dataclass(frozen=True)
class RewireOutcome:
    kind: str  # "none", "declined", "empty", "rewired"
    actor: Optional[int] = None
    dropped: Optional[int] = None
    target: Optional[int] = None


NO_ACTION = RewireOutcome("none")
DECLINED = RewireOutcome("declined")

class PolicyResolver:
    """Maps each node to the recommender it uses.

    Subclasses override :meth:`recommend`; ``mediator_of`` returns the id
    charged with a request (``None`` outside competition mode).
    """

    def recommend(self, state: NetworkState, x: int, y: int) -> Optional[int]:
        raise NotImplementedError

    def mediator_of(self, x: int):
        return None


def _request(state: NetworkState, resolver: PolicyResolver, actor: int, dropped: int,
             counters: StepCounters) -> RewireOutcome:
    counters.rewire_requests += 1
    med = resolver.mediator_of(actor)
    if med is not None:
        counters.requests_by_mediator[med] = counters.requests_by_mediator.get(med, 0) + 1
    z = resolver.recommend(state, actor, dropped)
    if z is None:
        return RewireOutcome("empty", actor, dropped)
    state.rewire(actor, dropped, z)
    counters.rewires_executed += 1
    return RewireOutcome("rewired", actor, dropped, z)


def structural_update(state: NetworkState, game: GameMatrix, resolver: PolicyResolver,
                      x: int, y: int, beta: float, counters: StepCounters) -> RewireOutcome:
    _require_edge(state, x, y)
    counters.structural_updates += 1
    strat = state.strategies
    if strat[y] == C:
        return NO_ACTION
    counters.rewire_opportunities += 1
    p = fermi(cumulative_payoff(state, game, x) - cumulative_payoff(state, game, y), beta)
    if state.rng.random() < p:
        return _request(state, resolver, x, y, counters)
    if strat[x] == C:
        return DECLINED
    return _request(state, resolver, y, x, counters)


# -- event loop ----------------------------------------------------------

@dataclass(frozen=True)
class StepOutcome:
    kind: str  # "strategy", "structural", "mediator"
    x: int
    y: int
    changed: bool = False
    rewire: Optional[RewireOutcome] = None


def strategy_probability(W: float) -> float:
    """Chance that an event is a strategy update, (1 + W)^-1."""
    return 0.0 if math.isinf(W) else 1.0 / (1.0 + W)


def sample_pair(state: NetworkState, max_tries: Optional[int] = None) -> tuple[int, int]:
    """Uniform node, then a uniform neighbour; isolated nodes are redrawn."""
    rng = state.rng
    tries = max_tries if max_tries is not None else 100 * state.N
    for _ in range(tries):
        x = rng.randrange(state.N)
        nbrs = state.adj[x]
        if nbrs:
            return x, nbrs[rng.randrange(len(nbrs))]
    raise IsolatedFocusNode(f"no node with neighbours found in {tries} draws")


def simulation_step(state: NetworkState, game: GameMatrix, config: SimConfig,
                    resolver: PolicyResolver, counters: StepCounters) -> StepOutcome:
    x, y = sample_pair(state)
    counters.steps += 1
    if state.rng.random() < strategy_probability(config.W):
        counters.strategy_updates += 1
        changed = strategy_update(state, game, x, y, config.beta)
        return StepOutcome("strategy", x, y, changed)
    out = structural_update(state, game, resolver, x, y, config.beta, counters)
    return StepOutcome("structural", x, y, out.kind == "rewired", out)


def run_dynamics(state: NetworkState, step: Callable[[], object], counters: StepCounters,
                 time_limit: int, on_step: Optional[Callable[[object], None]] = None,
                 event_limit: Optional[int] = None) -> None:
    """Drive ``step`` until ``time_limit`` steps or strategy homogeneity.

    Steps are strategy plus structural updates.  ``event_limit`` also bounds
    all events, mediator updates included.
    """
    event_limit = event_limit if event_limit is not None else math.inf
    while (counters.steps < time_limit and counters.events < event_limit
           and not state.is_homogeneous()):
        out = step()
        if on_step is not None:
            on_step(out)
    counters.stop_time = counters.steps


def run_episode(config: SimConfig, game: GameMatrix, resolver: PolicyResolver,
                state: Optional[NetworkState] = None,
                on_step: Optional[Callable[[StepOutcome], None]] = None):
    """Run one episode and return its :class:`~coopnet.metrics.EpisodeResult`."""
    from coopnet.metrics import episode_result

    if state is None:
        state = init_random_graph(config)
    counters = StepCounters()
    run_dynamics(state, lambda: simulation_step(state, game, config, resolver, counters),
                 counters, config.time_limit, on_step)
    return episode_result(state, counters)
