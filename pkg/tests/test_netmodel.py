import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccrm.netmodel import (ROLE_CAPITAL_RANGES, RoleGroup, Agent, BusinessRole, Capitals,
                           CapitalRanges, NetworkError, SocialTag, build_network, distance,
                           hop_distances, sample_capitals, total_attribute_score)
from ccrm.scenarios import AgentSpec, Intervention, Scenario

from conftest import make_scenario, make_state
from oracles import bfs_distances

LINE = [("A", "kingpin", (0.8, 0.5, 0.6)), ("B", "organizer", (0.5, 0.5, 0.5)),
        ("C", "driver", (0.1, 0.4, 0.1))]


def test_twenty_roles_in_three_groups():
    assert len(BusinessRole) == 20
    assert {r.group for r in BusinessRole} == set(RoleGroup)
    assert BusinessRole.KINGPIN.group is RoleGroup.ORGANIZER
    assert BusinessRole.parse("Broker of retrievers") is BusinessRole.BROKER_OF_RETRIEVERS
    with pytest.raises(ValueError):
        BusinessRole.parse("accountant")


def test_financer_capital_sampled_in_role_range():
    sc = make_scenario([("M", "kingpin", "sample"), ("F", "financer", "sample")], [("M", "F", "friend")])
    for seed in range(50):
        state = build_network(sc, np.random.default_rng(seed))
        assert 0.8 <= state.capitals[state.idx("F"), 2] <= 1.0


def test_empty_network_rejected():
    sc = Scenario("E", (), (), Intervention("X"))
    with pytest.raises(NetworkError, match="empty network"):
        build_network(sc, np.random.default_rng(0))


def test_family_trust_sampled_and_reproducible():
    sc = make_scenario(LINE[:2], [("A", "B", "family")])
    t1 = build_network(sc, np.random.default_rng(42)).trust[0]
    t2 = build_network(sc, np.random.default_rng(42)).trust[0]
    assert 0.5 < t1 < 1.0
    assert t1 == t2


def test_trust_range_sampled_inside_range():
    sc = make_scenario(LINE[:2], [("A", "B", "neutral", (0.3, 0.35))])
    vals = [build_network(sc, np.random.default_rng(s)).trust[0] for s in range(30)]
    assert min(vals) >= 0.3 and max(vals) <= 0.35


def test_capital_ranges_sampled():
    r = CapitalRanges((0.1, 0.2), (0.5, 0.5), (0.0, 1.0))
    c = r.sample(np.random.default_rng(1))
    assert 0.1 <= c.criminal <= 0.2 and c.violence == 0.5


@pytest.mark.parametrize("bad", [
    [("A", "B", "family"), ("B", "A", "friend")],
    [("A", "A", "family")],
    [("A", "Z", "family")],
])
def test_malformed_edges_rejected(bad):
    with pytest.raises(NetworkError):
        make_state(LINE, bad)


def test_kingpin_and_assassin_ranges():
    rng = np.random.default_rng(0)
    for _ in range(200):
        k = sample_capitals(BusinessRole.KINGPIN, rng)
        assert 0.75 <= k.criminal <= 0.85 and 0.4 <= k.violence <= 0.6 and 0.5 <= k.financial <= 0.7
        assert 0.8 <= sample_capitals(BusinessRole.ASSASSIN, rng).violence <= 1.0


def test_every_role_range_inside_unit_interval():
    for role in BusinessRole:
        for lo, hi in ROLE_CAPITAL_RANGES[role]:
            assert 0.0 <= lo <= hi <= 1.0


def test_degenerate_range_gives_exact_value():
    assert CapitalRanges((0.3, 0.3), (0.0, 0.0), (1.0, 1.0)).sample(np.random.default_rng(5)) == Capitals(0.3, 0.0, 1.0)


def test_capitals_outside_unit_interval_rejected():
    with pytest.raises(NetworkError):
        Capitals(1.2, 0.0, 0.0)


def test_distance_basics():
    state = make_state(LINE, [("A", "B", "family"), ("B", "C", "friend")])
    assert distance(state, "A", "A") == 0
    assert distance(state, "A", "B") == 1
    assert distance(state, "A", "C") == 2
    state.alive[1] = False
    assert math.isinf(distance(state, "A", "C"))


def test_distance_to_removed_agent_is_an_error():
    state = make_state(LINE, [("A", "B", "family")])
    state.remove_agent(state.idx("C"))
    with pytest.raises(NetworkError):
        distance(state, "A", "C")


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.just(n), st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=3 * n))))
def test_hop_distances_match_bfs(graph):
    n, pairs = graph
    edges = sorted({tuple(sorted(p)) for p in pairs if p[0] != p[1]})
    agents = [(f"a{k}", "driver", (0.1, 0.1, 0.1)) for k in range(n)]
    state = make_state(agents, [(f"a{i}", f"a{j}", "neutral", 0.5) for i, j in edges])
    for src in range(n):
        assert hop_distances(state, src).tolist() == bfs_distances(n, edges, src)


def test_total_attribute_score():
    a = Agent("X", BusinessRole.ORGANIZER, SocialTag.NEUTRAL, Capitals(0.5, 0.5, 0.4))
    assert total_attribute_score(a, 0.6) == pytest.approx(2.0)
    assert total_attribute_score(Capitals(0, 0, 0), 0.0) == 0
    gap = total_attribute_score(Capitals(0.6, 0.2, 0.2), 0.5) - total_attribute_score(Capitals(0.5, 0.2, 0.2), 0.5)
    assert gap == pytest.approx(0.1)


def test_state_views_and_mutation():
    state = make_state(LINE, [("A", "B", "family", 0.9), ("B", "C", "friend", 0.7)])
    assert state.n_agents == 3 and state.n_edges == 2
    assert state.degree().tolist() == [1, 2, 1]
    assert state.mean_incident_trust(state.idx("B")) == pytest.approx(0.8)
    assert state.agent("B").business_role is BusinessRole.ORGANIZER
    assert [e.social_tag for e in state.edges] == [SocialTag.FAMILY, SocialTag.FRIEND]
    new = state.add_edges([(0, 2)], SocialTag.NEUTRAL, [0.3])
    assert new.tolist() == [2] and state.edge_index("A", "C") == 2
    dropped = state.remove_agent(state.idx("B"))
    assert sorted(dropped.tolist()) == [0, 1]
    assert [a.id for a in state.agents] == ["A", "C"]
    assert state.mean_incident_trust(state.idx("B")) == 0.0
    with pytest.raises(NetworkError):
        state.idx("nobody")
