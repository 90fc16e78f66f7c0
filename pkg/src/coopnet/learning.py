"""Learned recommender: a ranking policy over nodes trained by policy gradient.

The ranking module embeds every node with a hidden module ``H`` (an MLP on
per-node features), pools the embeddings into a graph vector ``h_g`` by
summation, and scores node ``i`` with ``S(h_g, h_f, h_i)`` where ``h_f`` is
the focused node's embedding.  Masked nodes get probability exactly zero.

Training uses the score-function estimator with the episode's terminal
reward and an exponential moving-average baseline; gradients are
back-propagated by hand through the softmax, score and hidden modules.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from coopnet.dynamics import C, D, GameMatrix, NetworkState, SimConfig, run_episode
from coopnet.metrics import EpisodeResult, RewardKind, aggregate, reward
from coopnet.policies import SinglePolicy, candidate_pool, learned

TRAIN = "train"
EVAL = "eval"

N_FEATURES = 2  # (strategy, normalised degree)


class NoValidAction(ValueError):
    pass


class DegenerateBatch(ValueError):
    pass


@dataclass
class Observation:
    focus: int
    features: np.ndarray  # (N, 2): strategy (C=1, D=0), degree / (N - 1)
    mask: np.ndarray  # (N,) bool, True where the node is a valid target
    adjacency: Optional[list] = None
    dropped: Optional[int] = None

    @property
    def N(self) -> int:
        return len(self.mask)


def featurize(state: NetworkState, x: int, y: Optional[int] = None, pool=None,
              keep_adjacency: bool = False) -> Observation:
    state.check_node(x)
    n = state.N
    feats = np.empty((n, N_FEATURES))
    feats[:, 0] = state.strategies
    feats[:, 1] = np.array(state.degrees(), dtype=float) / (n - 1)
    mask = np.zeros(n, dtype=bool)
    if pool is None:
        if y is None:
            pool = set(range(n)) - set(state.adj[x]) - {x}
        else:
            pool = candidate_pool(state, x, y)
    if pool:
        mask[list(pool)] = True
    adj = [list(a) for a in state.adj] if keep_adjacency else None
    return Observation(x, feats, mask, adj, y)


# -- ranking module ------------------------------------------------------

@dataclass
class RankingPolicy:
    """Hidden MLP (features -> tanh, width ``hidden``) plus score MLP.

    The score module maps ``[h_g, h_f, h_i]`` through one tanh layer of width
    ``score_hidden`` to a scalar.  Parameters live in one flat vector
    ``theta``; ``params()`` returns named views into it.
    """

    hidden: int = 32
    score_hidden: int = 32
    theta: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.theta is None:
            self.theta = np.zeros(self.n_params)
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.n_params,):
            raise ValueError(f"theta has shape {self.theta.shape}, expected ({self.n_params},)")

    @property
    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        H, K = self.hidden, self.score_hidden
        return [
            ("W1", (H, N_FEATURES)),
            ("b1", (H,)),
            ("W2", (K, 3 * H)),
            ("b2", (K,)),
            ("w3", (K,)),
        ]

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.shapes)

    def params(self, theta: Optional[np.ndarray] = None) -> dict[str, np.ndarray]:
        theta = self.theta if theta is None else theta
        out, i = {}, 0
        for name, shape in self.shapes:
            size = int(np.prod(shape))
            out[name] = theta[i:i + size].reshape(shape)
            i += size
        return out

    @classmethod
    def init(cls, seed: int, hidden: int = 32, score_hidden: int = 32,
             scale: float = 0.1) -> "RankingPolicy":
        p = cls(hidden, score_hidden)
        p.theta = np.random.default_rng(seed).uniform(-scale, scale, p.n_params)
        return p

    def copy(self) -> "RankingPolicy":
        return RankingPolicy(self.hidden, self.score_hidden, self.theta.copy())

    # -- checkpoint ----------------------------------------------------
    def to_json(self) -> dict:
        return {
            "architecture": {
                "hidden_module": "mlp",
                "hidden": self.hidden,
                "hidden_activation": "tanh",
                "score_hidden": self.score_hidden,
                "score_activation": "tanh",
                "aggregation": "sum",
                "features": ["strategy(C=1,D=0)", "degree/(N-1)"],
            },
            "params": {name: arr.ravel().tolist() for name, arr in self.params().items()},
        }

    @classmethod
    def from_json(cls, data: dict) -> "RankingPolicy":
        arch = data["architecture"]
        p = cls(int(arch["hidden"]), int(arch["score_hidden"]))
        p.theta = np.concatenate([np.asarray(data["params"][name], dtype=float)
                                  for name, _ in p.shapes])
        return p

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "RankingPolicy":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def hidden_module(P: dict, X: np.ndarray, adjacency=None) -> np.ndarray:
    # adjacency is unused by the MLP; a message-passing module would take it here
    return np.tanh(X @ P["W1"].T + P["b1"])


def _forward(policy: RankingPolicy, obs: Observation, theta=None):
    P = policy.params(theta)
    Hn = hidden_module(P, obs.features, obs.adjacency)
    hg = Hn.sum(axis=0)
    hf = Hn[obs.focus]
    n = len(Hn)
    Z = np.concatenate([np.broadcast_to(hg, (n, len(hg))), np.broadcast_to(hf, (n, len(hf))), Hn],
                       axis=1)
    G = np.tanh(Z @ P["W2"].T + P["b2"])
    scores = G @ P["w3"]
    return scores, (P, Hn, Z, G)


def masked_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    if not mask.any():
        raise NoValidAction("every node is masked")
    s = np.where(mask, scores, -np.inf)
    s = s - s[mask].max()
    e = np.where(mask, np.exp(s), 0.0)
    return e / e.sum()


def score_nodes(policy: RankingPolicy, obs: Observation, theta=None):
    """Per-node scores and the masked action distribution."""
    scores, _ = _forward(policy, obs, theta)
    return scores, masked_softmax(scores, obs.mask)


def select_action(scores: np.ndarray, probs: np.ndarray, mode: str,
                  rng: Optional[random.Random] = None) -> int:
    """Train: sample by CDF inversion with one uniform draw. Eval: argmax, lowest id on ties."""
    if mode == EVAL:
        valid = probs > 0
        best = scores[valid].max()
        return int(np.flatnonzero(valid & (scores == best))[0])
    u = rng.random()
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    valid = np.flatnonzero(probs > 0)
    # guard against float round-off at the top of the cdf
    return idx if idx < len(probs) and probs[idx] > 0 else int(valid[-1])


def log_prob(policy: RankingPolicy, obs: Observation, action: int, theta=None) -> float:
    scores, _ = _forward(policy, obs, theta)
    s = scores[obs.mask]
    m = s.max()
    return float(scores[action] - m - math.log(np.exp(s - m).sum()))


def grad_log_prob(policy: RankingPolicy, obs: Observation, action: int,
                  weight: float = 1.0) -> np.ndarray:
    """``weight * d log pi(action | obs) / d theta`` as a flat vector."""
    scores, (P, Hn, Z, G) = _forward(policy, obs)
    probs = masked_softmax(scores, obs.mask)
    d_scores = -probs * weight
    d_scores[action] += weight

    H = policy.hidden
    g_w3 = G.T @ d_scores
    d_a2 = np.outer(d_scores, P["w3"]) * (1.0 - G * G)
    g_W2 = d_a2.T @ Z
    g_b2 = d_a2.sum(axis=0)
    d_Z = d_a2 @ P["W2"]
    d_H = d_Z[:, 2 * H:] + d_Z[:, :H].sum(axis=0)
    d_H[obs.focus] += d_Z[:, H:2 * H].sum(axis=0)
    d_a1 = d_H * (1.0 - Hn * Hn)
    g_W1 = d_a1.T @ obs.features
    g_b1 = d_a1.sum(axis=0)
    return np.concatenate([g_W1.ravel(), g_b1, g_W2.ravel(), g_b2, g_w3])


# -- acting in the environment --------------------------------------------

@dataclass
class Decision:
    obs: Observation
    action: int
    logp: float


@dataclass
class Trajectory:
    decisions: list[Decision]
    reward: float
    raw_reward: float
    result: Optional[EpisodeResult] = None


class LearnedRecommender:
    """Recommender backed by a :class:`RankingPolicy`; logs every decision."""

    def __init__(self, policy: RankingPolicy, mode: str = EVAL, record: bool = True):
        self.policy = policy
        self.mode = mode
        self.record = record
        self.decisions: list[Decision] = []

    def recommend(self, state: NetworkState, x: int, y: int, pool) -> Optional[int]:
        if not pool:
            return None
        obs = featurize(state, x, y, pool)
        scores, probs = score_nodes(self.policy, obs)
        a = select_action(scores, probs, self.mode, state.rng)
        if self.record:
            self.decisions.append(Decision(obs, a, float(math.log(probs[a]))))
        return a


def normalized_reward(kind: RewardKind, result: EpisodeResult, time_limit: int) -> float:
    r = reward(kind, result)
    return r / time_limit if kind is RewardKind.ENGAGEMENT else r


def rollout(config: SimConfig, game: GameMatrix, policy: RankingPolicy, reward_kind: RewardKind,
            mode: str = TRAIN, record: bool = True) -> Trajectory:
    rec = LearnedRecommender(policy, mode, record)
    result = run_episode(config, game, SinglePolicy(learned(rec)))
    raw = reward(reward_kind, result)
    return Trajectory(rec.decisions, normalized_reward(reward_kind, result, config.time_limit),
                      raw, result)


# -- training -------------------------------------------------------------

@dataclass
class OptimizerState:
    lr: float = 1e-2
    baseline_decay: float = 0.99
    baseline: Optional[float] = None
    method: str = "sgd"  # "sgd" or "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # divide advantages by the batch reward standard deviation
    normalize_advantage: bool = False
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    t: int = 0


def batch_gradient(policy: RankingPolicy, batch: Sequence[Trajectory], baseline: float,
                   scale: float = 1.0) -> np.ndarray:
    """Gradient of ``mean_traj (R - b) / scale * sum_t log pi(a_t | o_t)``."""
    g = np.zeros(policy.n_params)
    for traj in batch:
        adv = (traj.reward - baseline) / scale
        if adv == 0.0:
            continue
        for d in traj.decisions:
            g += grad_log_prob(policy, d.obs, d.action, adv)
    return g / len(batch)


def batch_objective(policy: RankingPolicy, batch: Sequence[Trajectory], baseline: float,
                    theta=None) -> float:
    total = 0.0
    for traj in batch:
        adv = traj.reward - baseline
        total += adv * sum(log_prob(policy, d.obs, d.action, theta) for d in traj.decisions)
    return total / len(batch)


def _mean_or_nan(values: list) -> float:
    return float(np.mean(values)) if values else float("nan")


def policy_gradient_update(policy: RankingPolicy, batch: Sequence[Trajectory],
                           opt: OptimizerState) -> tuple[np.ndarray, dict]:
    """One ascent step; updates ``policy.theta`` and ``opt`` in place."""
    if not batch:
        raise DegenerateBatch("empty batch")
    if all(not t.decisions for t in batch):
        raise DegenerateBatch("no trajectory in the batch made a decision")
    rewards = [t.reward for t in batch]
    if opt.baseline is None:
        opt.baseline = float(np.mean(rewards))
    scale = 1.0
    if opt.normalize_advantage:
        scale = float(np.std(rewards)) + 1e-8
    grad = batch_gradient(policy, batch, opt.baseline, scale)
    if opt.method == "adam":
        opt.t += 1
        if opt.m is None:
            opt.m = np.zeros_like(grad)
            opt.v = np.zeros_like(grad)
        opt.m = opt.beta1 * opt.m + (1 - opt.beta1) * grad
        opt.v = opt.beta2 * opt.v + (1 - opt.beta2) * grad * grad
        m_hat = opt.m / (1 - opt.beta1 ** opt.t)
        v_hat = opt.v / (1 - opt.beta2 ** opt.t)
        step = opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    else:
        step = opt.lr * grad
    policy.theta = policy.theta + step
    opt.baseline = opt.baseline_decay * opt.baseline + (1 - opt.baseline_decay) * float(np.mean(rewards))

    actions = [(d.obs.features[d.action, 0], d.obs.features[d.action, 1] * (d.obs.N - 1))
               for t in batch for d in t.decisions]
    diag = {
        "mean_reward": float(np.mean(rewards)),
        "mean_raw_reward": float(np.mean([t.raw_reward for t in batch])),
        "mean_action_strategy": _mean_or_nan([a[0] for a in actions]),
        "mean_action_degree": _mean_or_nan([a[1] for a in actions]),
        "decisions": len(actions),
        "grad_norm": float(np.linalg.norm(grad)),
        "baseline": opt.baseline,
    }
    return policy.theta, diag


@dataclass
class TrainConfig:
    updates: int = 300
    batch_size: int = 32
    lr: float = 3e-3
    baseline_decay: float = 0.9
    optimizer: str = "adam"
    normalize_advantage: bool = True
    hidden: int = 32
    score_hidden: int = 32
    seed: int = 0


TRAIN_LOG_COLUMNS = ("update", "mean_reward", "mean_action_strategy", "mean_action_degree",
                     "mean_raw_reward", "decisions")


def train(env: SimConfig, game: GameMatrix, reward_kind: RewardKind, tc: TrainConfig,
          policy: Optional[RankingPolicy] = None, log=None) -> tuple[RankingPolicy, list[dict]]:
    """Train for ``tc.updates`` batches of whole episodes.

    Episode ``j`` of update ``u`` uses seed ``tc.seed + u * batch_size + j``
    (offset by ``env.seed``), so a training run is reproducible from its
    config alone.
    """
    from dataclasses import replace

    if policy is None:
        policy = RankingPolicy.init(tc.seed, tc.hidden, tc.score_hidden)
    opt = OptimizerState(lr=tc.lr, baseline_decay=tc.baseline_decay, method=tc.optimizer,
                         normalize_advantage=tc.normalize_advantage)
    rows = []
    for u in range(tc.updates):
        seeds = [env.seed + tc.seed + u * tc.batch_size + j for j in range(tc.batch_size)]
        batch = [rollout(replace(env, seed=s), game, policy, reward_kind, TRAIN) for s in seeds]
        if all(not t.decisions for t in batch):
            continue
        _, diag = policy_gradient_update(policy, batch, opt)
        row = {"update": u, **{k: diag[k] for k in TRAIN_LOG_COLUMNS if k != "update"}}
        rows.append(row)
        if log is not None:
            log(row)
    return policy, rows


def evaluate_policy(policy: RankingPolicy, config: SimConfig, game: GameMatrix,
                    reward_kind: RewardKind, episodes: int, seed: Optional[int] = None,
                    mode: str = EVAL):
    """Rollouts on seeds ``seed, seed+1, ...``, argmax actions by default.

    Returns ``(mean_reward, aggregate_summary, results)``; the reward is the
    raw one (cooperation in [-1, 1], engagement as a request count).
    ``mode=TRAIN`` samples actions instead, e.g. to evaluate a uniform policy.
    """
    from dataclasses import replace

    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    seed = config.seed if seed is None else seed
    trajs = [rollout(replace(config, seed=seed + i), game, policy, reward_kind, mode, record=False)
             for i in range(episodes)]
    results = [t.result for t in trajs]
    return float(np.mean([t.raw_reward for t in trajs])), aggregate(results), results


def evaluate_heuristic(policy_name: str, config: SimConfig, game: GameMatrix,
                       reward_kind: RewardKind, episodes: int, seed: Optional[int] = None):
    """Same protocol as :func:`evaluate_policy` for a named heuristic."""
    from dataclasses import replace

    from coopnet.policies import policy_from_name

    seed = config.seed if seed is None else seed
    resolver = SinglePolicy(policy_from_name(policy_name))
    results = [run_episode(replace(config, seed=seed + i), game, resolver) for i in range(episodes)]
    return float(np.mean([reward(reward_kind, r) for r in results])), aggregate(results), results


def hand_policy(prefer_cooperators: float = 5.0, hidden: int = 32, score_hidden: int = 32) -> RankingPolicy:
    """Policy whose score grows with the candidate's strategy feature.

    With ``prefer_cooperators > 0`` it mimics GOOD; negative values mimic
    BAD.  Useful as a known-good reference point.
    """
    p = RankingPolicy(hidden, score_hidden)
    P = p.params()
    P["W1"][0, 0] = 1.0  # h_i[0] = tanh(strategy)
    P["W2"][0, 2 * hidden] = 1.0  # score hidden unit 0 reads h_i[0]
    P["w3"][0] = prefer_cooperators / math.tanh(math.tanh(1.0))
    return p


def bandit_smoke(seed: int = 0, updates: int = 500, batch_size: int = 16,
                 threshold: float = 0.95, opt: Optional[OptimizerState] = None):
    """One-step bandit: reward 1 for recommending a cooperator, 0 otherwise.

    Candidates alternate C/D on an 8-cycle.  Returns ``(update, p_coop)``
    where ``update`` is the first update after which the policy puts at
    least ``threshold`` of its mass on cooperators (None if never), and
    ``p_coop`` the final mass.
    """
    rng = random.Random(seed)
    n = 8
    strat = [C if i % 2 == 0 else D for i in range(n)]
    state = NetworkState(n, [(i, (i + 1) % n) for i in range(n)], strat, rng)
    obs = featurize(state, 0, pool=set(range(2, 7)))
    coop = np.array(strat, dtype=bool)
    policy = RankingPolicy.init(seed)
    opt = opt if opt is not None else OptimizerState(lr=3e-3, baseline_decay=0.9, method="adam",
                                                     normalize_advantage=True)
    p_coop = float(score_nodes(policy, obs)[1][coop].sum())
    for u in range(updates):
        batch = []
        for _ in range(batch_size):
            scores, probs = score_nodes(policy, obs)
            a = select_action(scores, probs, TRAIN, rng)
            r = float(strat[a])
            batch.append(Trajectory([Decision(obs, a, float(math.log(probs[a])))], r, r))
        policy_gradient_update(policy, batch, opt)
        p_coop = float(score_nodes(policy, obs)[1][coop].sum())
        if p_coop >= threshold:
            return u, p_coop
    return None, p_coop
