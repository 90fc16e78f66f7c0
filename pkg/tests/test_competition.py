import math
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_state, path_edges
from coopnet.competition import (
    SCENARIOS,
    CompetitionConfig,
    InvalidMix,
    MediatorAssignment,
    allocate_counts,
    assign_initial_mediators,
    competition_step,
    format_mix,
    mediator_probability,
    mediator_update,
    parse_mix,
    run_adoption_experiment,
    run_competition_episode,
    start_majority,
    validate_mix,
)
from coopnet.dynamics import PRISONERS_DILEMMA, GameMatrix, SimConfig, StepCounters, fermi, init_random_graph, run_episode
from coopnet.policies import SinglePolicy, candidate_pool, policy_from_name

SMALL = SimConfig(N=40, k=6, beta=0.05, W=1.0, time_limit=3000, seed=0)


def _assignment(of):
    return MediatorAssignment(of, {m: policy_from_name(m) for m in set(of)})


def test_allocation_exact_counts():
    s = init_random_graph(SimConfig(N=1000, k=30, beta=0.005, seed=0))
    a = assign_initial_mediators(s, [("NO_MED", 0.9), ("GOOD", 0.1)])
    assert a.of.count("NO_MED") == 900 and a.of.count("GOOD") == 100
    a = assign_initial_mediators(s, [("BAD", 1.0)])
    assert set(a.of) == {"BAD"}


def test_allocate_counts_sums_to_n():
    assert allocate_counts([0.9, 0.025, 0.025, 0.025, 0.025], 1000) == [900, 25, 25, 25, 25]
    assert sum(allocate_counts([1 / 3] * 3, 10)) == 10


@pytest.mark.parametrize("mix", [
    [("NO_MED", 0.5), ("GOOD", 0.3)],
    [("GOOD", 0.5), ("GOOD", 0.5)],
    [("GOOD", 1.2), ("BAD", -0.2)],
    [("gud", 1.0)],
    [],
])
def test_invalid_mix(mix):
    with pytest.raises((InvalidMix, KeyError)):
        validate_mix(mix)


def test_parse_and_format_mix():
    mix = parse_mix("NO_MED:0.9, GOOD:0.1")
    assert mix == [("NO_MED", 0.9), ("GOOD", 0.1)]
    assert parse_mix(format_mix(mix)) == mix
    with pytest.raises(InvalidMix):
        parse_mix("NO_MED")


def test_start_majority():
    assert start_majority(SCENARIOS["aligned_vs_engagement"]) == "RANDOM"
    assert start_majority(SCENARIOS["aligned"]) is None


def test_mediator_update_same_mediator_never_changes():
    s = make_state(2, [(0, 1)], "CD", draws=[0.0])
    a = _assignment(["GOOD", "GOOD"])
    assert mediator_update(s, PRISONERS_DILEMMA, a, 0, 1, 0.05) is False


def test_mediator_update_equal_payoffs():
    s = make_state(2, [(0, 1)], "CC", draws=[0.3])
    a = _assignment(["GOOD", "NO_MED"])
    assert mediator_update(s, PRISONERS_DILEMMA, a, 0, 1, 0.05) is True
    assert a.of == ["NO_MED", "NO_MED"]


def test_mediator_adoption_probability():
    assert fermi(10, 0.05) == pytest.approx(0.6225, abs=1e-4)
    # y = 0 defector with five cooperator neighbours (payoff 10), x = 1 cooperator
    # whose only neighbour is y (payoff -1) would give 11; use a game with S = 0
    g = GameMatrix(T=2, S=0)
    s = make_state(7, [(0, i) for i in range(1, 6)], "DCCCCCC", draws=[0.62])
    a = _assignment(["BAD"] + ["GOOD"] * 6)
    # Pi(y) - Pi(x) = 10 - 0 -> p = 0.6225 > 0.62
    assert mediator_update(s, g, a, 1, 0, 0.05) is True
    s = make_state(7, [(0, i) for i in range(1, 6)], "DCCCCCC", draws=[0.623])
    a = _assignment(["BAD"] + ["GOOD"] * 6)
    assert mediator_update(s, g, a, 1, 0, 0.05) is False


def test_mediator_probability():
    assert mediator_probability(0) == 0.0
    assert mediator_probability(1) == 0.5
    assert mediator_probability(0.1) == pytest.approx(0.0909, abs=1e-4)
    assert mediator_probability(math.inf) == 1.0


def test_w2_zero_keeps_mix_and_matches_plain_process():
    cfg = CompetitionConfig(base=SMALL, W2=0.0, mix=(("GOOD", 1.0),))
    comp = run_competition_episode(cfg, PRISONERS_DILEMMA)
    assert comp.per_mediator["GOOD"][0] == 1.0
    plain = run_episode(SMALL, PRISONERS_DILEMMA, SinglePolicy(policy_from_name("GOOD")),
                        state=_state_after_assignment(cfg))
    assert plain.coop_fraction == comp.coop_fraction
    assert plain.counters.as_dict() == comp.counters.as_dict()


def _state_after_assignment(cfg):
    # the competition run shuffles the assignment with the run's stream first
    s = init_random_graph(cfg.base)
    assign_initial_mediators(s, cfg.mix)
    return s


def test_w2_zero_shares_unchanged_with_mixture():
    cfg = CompetitionConfig(base=SMALL, W2=0.0, mix=(("NO_MED", 0.5), ("BAD", 0.5)))
    r = run_competition_episode(cfg, PRISONERS_DILEMMA)
    assert r.per_mediator["NO_MED"][0] == 0.5 and r.per_mediator["BAD"][0] == 0.5


def test_w2_inf_is_bounded_and_keeps_strategies():
    base = replace(SMALL, time_limit=500)
    cfg = CompetitionConfig(base=base, W2=math.inf, mix=(("NO_MED", 0.5), ("GOOD", 0.5)))
    init = init_random_graph(base)
    r = run_competition_episode(cfg, PRISONERS_DILEMMA)
    assert r.counters.steps == 0 and r.counters.mediator_updates == 500
    assert r.coop_fraction == sum(init.strategies) / base.N


@given(st.integers(0, 5000), st.sampled_from(list(SCENARIOS)))
@settings(max_examples=25, deadline=None)
def test_exclusivity_and_mediator_closure(seed, scenario):
    base = replace(SMALL, seed=seed, time_limit=400)
    cfg = CompetitionConfig(base=base, W2=0.5, mix=tuple(SCENARIOS[scenario]))
    s = init_random_graph(base)
    a = assign_initial_mediators(s, cfg.mix)
    initial = a.present()
    counters = StepCounters()
    for _ in range(400):
        if s.is_homogeneous():
            break
        out = competition_step(s, PRISONERS_DILEMMA, a, cfg, counters)
        assert a.present() <= initial
        if out.kind == "structural" and out.changed:
            r = out.rewire
            assert a.of[r.target] == a.of[r.actor]
    assert sum(counters.requests_by_mediator.values()) == counters.rewire_requests
    assert abs(sum(a.shares().values()) - 1.0) < 1e-12


def test_pool_restricted_to_own_mediator():
    s = make_state(5, path_edges(5), "CDCDC")
    a = _assignment(["GOOD", "BAD", "GOOD", "BAD", "BAD"])
    assert candidate_pool(s, 0, 1, ("GOOD", a.of)) == {2}
    assert {a.recommend(s, 0, 1) for _ in range(30)} == {2}


def test_adoption_experiment_is_deterministic():
    cfg = CompetitionConfig(base=replace(SMALL, time_limit=600), W2=0.1,
                            mix=(("NO_MED", 0.9), ("GOOD", 0.1)))
    a = run_adoption_experiment(cfg, 3)
    b = run_adoption_experiment(cfg, 3, jobs=2)
    assert a.to_json() == b.to_json()
    assert a.runs == 3 and len(a.shares["GOOD"]) == 3
    assert set(a.to_json()["table"]) == {"coops", "rewire", "final_prop_start_majority"}
