import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import ScriptedRng, complete_edges, make_state
from coopnet.dynamics import PRISONERS_DILEMMA, SimConfig, env_config, init_random_graph
from coopnet.learning import (
    EVAL,
    TRAIN,
    DegenerateBatch,
    Decision,
    NoValidAction,
    OptimizerState,
    RankingPolicy,
    TrainConfig,
    Trajectory,
    bandit_smoke,
    batch_gradient,
    batch_objective,
    evaluate_policy,
    featurize,
    hand_policy,
    masked_softmax,
    policy_gradient_update,
    rollout,
    score_nodes,
    select_action,
    train,
)
from coopnet.metrics import RewardKind, aggregate


def random_obs(seed, n=None):
    rng = random.Random(seed)
    n = n or rng.randint(4, 8)
    s = init_random_graph(SimConfig(N=n, k=2, beta=0.1, seed=seed))
    while True:
        x = rng.randrange(n)
        obs = featurize(s, x, s.adj[x][0])
        if obs.mask.any():
            return obs


def test_features():
    # cooperator 0 with degree 4 in N = 10
    s = make_state(10, [(0, i) for i in range(1, 5)], "C" + "D" * 9)
    obs = featurize(s, 0, 1)
    assert tuple(obs.features[0]) == (1.0, pytest.approx(4 / 9))
    assert tuple(obs.features[7]) == (0.0, 0.0)
    assert not obs.mask[0] and not obs.mask[1] and obs.mask[7]
    full = featurize(make_state(5, complete_edges(5), "CCCDD"), 0, 1)
    assert not full.mask.any()


def test_zero_theta_is_uniform():
    s = make_state(10, [(0, 1), (1, 2), (2, 3)], "CDCDCDCDCD")
    obs = featurize(s, 0, 1)
    _, probs = score_nodes(RankingPolicy(), obs)
    valid = obs.mask.sum()
    assert np.allclose(probs[obs.mask], 1 / valid)
    assert (probs[~obs.mask] == 0).all()


def test_single_valid_node():
    s = make_state(4, [(0, 1), (0, 2)], "CDCD")
    obs = featurize(s, 0, 1)
    assert list(np.flatnonzero(obs.mask)) == [3]
    scores, probs = score_nodes(RankingPolicy.init(3), obs)
    assert probs[3] == 1.0
    assert select_action(scores, probs, EVAL) == 3
    assert select_action(scores, probs, TRAIN, random.Random(0)) == 3


@given(st.lists(st.floats(-20, 20), min_size=2, max_size=10), st.floats(-50, 50))
def test_softmax_shift_invariance(scores, c):
    scores = np.array(scores)
    mask = np.ones(len(scores), dtype=bool)
    mask[0] = False
    assert np.allclose(masked_softmax(scores, mask), masked_softmax(scores + c, mask), atol=1e-12)
    assert masked_softmax(scores, mask)[0] == 0.0


def test_softmax_all_masked():
    with pytest.raises(NoValidAction):
        masked_softmax(np.zeros(3), np.zeros(3, dtype=bool))


def test_select_action_examples():
    scores = np.array([0.1, 0.9, 0.9])
    probs = masked_softmax(scores, np.ones(3, dtype=bool))
    assert select_action(scores, probs, EVAL) == 1
    probs = np.array([0, 0, 0.5, 0, 0, 0.5])
    assert select_action(np.zeros(6), probs, TRAIN, ScriptedRng([0.7])) == 5
    assert select_action(np.zeros(6), probs, TRAIN, ScriptedRng([0.3])) == 2


@pytest.mark.parametrize("seed", range(6))
def test_gradient_matches_finite_differences(seed):
    policy = RankingPolicy.init(seed, hidden=6, score_hidden=5, scale=0.8)
    rng = np.random.default_rng(seed)
    batch = []
    for j in range(3):
        decisions = []
        for t in range(2):
            obs = random_obs(100 * seed + 10 * j + t)
            valid = np.flatnonzero(obs.mask)
            decisions.append(Decision(obs, int(rng.choice(valid)), 0.0))
        batch.append(Trajectory(decisions, float(rng.normal()), 0.0))
    b = 0.1
    g = batch_gradient(policy, batch, b)
    eps = 1e-5
    for i in range(policy.n_params):
        tp, tm = policy.theta.copy(), policy.theta.copy()
        tp[i] += eps
        tm[i] -= eps
        fd = (batch_objective(policy, batch, b, tp) - batch_objective(policy, batch, b, tm)) / (2 * eps)
        rel = abs(g[i] - fd) / max(abs(g[i]), abs(fd), 1e-6)
        assert rel < 1e-4, (i, g[i], fd)


def test_zero_advantage_is_zero_step():
    obs = random_obs(1, 6)
    a = int(np.flatnonzero(obs.mask)[0])
    batch = [Trajectory([Decision(obs, a, 0.0)], 0.5, 0.5) for _ in range(4)]
    policy = RankingPolicy.init(0)
    before = policy.theta.copy()
    opt = OptimizerState(lr=0.1, baseline=0.5)
    policy_gradient_update(policy, batch, opt)
    assert np.array_equal(policy.theta, before)


def test_degenerate_batch():
    policy = RankingPolicy.init(0)
    with pytest.raises(DegenerateBatch):
        policy_gradient_update(policy, [Trajectory([], 1.0, 1.0)], OptimizerState())
    with pytest.raises(DegenerateBatch):
        policy_gradient_update(policy, [], OptimizerState())


def test_mean_action_strategy_all_cooperators():
    s = make_state(6, [(0, 1)], "CDCCCC")
    obs = featurize(s, 0, 1)
    batch = [Trajectory([Decision(obs, a, 0.0)], 1.0, 1.0) for a in (2, 3, 5)]
    _, diag = policy_gradient_update(RankingPolicy.init(0), batch, OptimizerState())
    assert diag["mean_action_strategy"] == 1.0


def test_bandit_smoke():
    u, p = bandit_smoke(seed=0, updates=500)
    assert u is not None and p >= 0.95


def test_rollout_properties():
    cfg = env_config(10, W=1.0, seed=3)
    policy = RankingPolicy.init(1)
    t = rollout(cfg, PRISONERS_DILEMMA, policy, RewardKind.COOPERATION, EVAL)
    assert len(t.decisions) <= 1000
    assert len(t.decisions) <= t.result.rewire_requests
    again = rollout(cfg, PRISONERS_DILEMMA, policy, RewardKind.COOPERATION, EVAL)
    assert [d.action for d in t.decisions] == [d.action for d in again.decisions]
    assert t.result == again.result
    # no rewiring at W = 0 -> no decisions, reward still defined
    t0 = rollout(env_config(10, W=0.0, seed=3), PRISONERS_DILEMMA, policy, RewardKind.COOPERATION)
    assert t0.decisions == [] and -1.0 <= t0.reward <= 1.0


def test_engagement_reward_scaled():
    cfg = env_config(10, W=1.0, seed=5)
    t = rollout(cfg, PRISONERS_DILEMMA, RankingPolicy(), RewardKind.ENGAGEMENT)
    assert t.raw_reward == t.result.rewire_requests
    assert t.reward == pytest.approx(t.raw_reward / cfg.time_limit)


def test_checkpoint_round_trip(tmp_path):
    p = RankingPolicy.init(4, hidden=8, score_hidden=6)
    path = tmp_path / "ckpt.json"
    p.save(path)
    q = RankingPolicy.load(path)
    assert (q.hidden, q.score_hidden) == (8, 6)
    assert np.array_equal(p.theta, q.theta)
    obs = random_obs(2, 8)
    assert np.array_equal(score_nodes(p, obs)[0], score_nodes(q, obs)[0])


def test_evaluate_policy_single_episode_and_determinism():
    cfg = env_config(10, W=1.0, seed=0)
    pol = hand_policy()
    r1, agg1, res1 = evaluate_policy(pol, cfg, PRISONERS_DILEMMA, RewardKind.COOPERATION, 1, seed=50)
    r2, agg2, _ = evaluate_policy(pol, cfg, PRISONERS_DILEMMA, RewardKind.COOPERATION, 1, seed=50)
    assert (r1, agg1) == (r2, agg2)
    assert agg1 == aggregate(res1)
    assert agg1["coop_fraction"]["mean"] == res1[0].coop_fraction
    assert r1 == 2 * (res1[0].coop_fraction - 0.5)
    with pytest.raises(ValueError):
        evaluate_policy(pol, cfg, PRISONERS_DILEMMA, RewardKind.COOPERATION, 0)


def test_hand_policy_prefers_cooperators():
    s = make_state(8, [(0, 1), (2, 3)], "CDCDCDCD")
    obs = featurize(s, 0, 1)
    scores, probs = score_nodes(hand_policy(), obs)
    assert probs[[2, 4, 6]].sum() > 0.95
    scores, probs = score_nodes(hand_policy(-5.0), obs)
    assert probs[[3, 5, 7]].sum() > 0.95


def test_train_is_reproducible_and_logs():
    env = env_config(10, W=1.0, seed=0)
    tc = TrainConfig(updates=3, batch_size=4, hidden=8, score_hidden=8, seed=2)
    p1, log1 = train(env, PRISONERS_DILEMMA, RewardKind.COOPERATION, tc)
    p2, log2 = train(env, PRISONERS_DILEMMA, RewardKind.COOPERATION, tc)
    assert np.array_equal(p1.theta, p2.theta) and log1 == log2
    assert len(log1) == 3 and {"update", "mean_reward", "mean_action_strategy"} <= set(log1[0])
    assert all(math.isfinite(r["mean_reward"]) for r in log1)
