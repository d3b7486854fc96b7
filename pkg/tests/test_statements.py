from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ccrm.netmodel import ROLE_CODE, TAG_CODE, BusinessRole, SocialTag, Stage
from ccrm.replacement import ModelParams, simulate
from ccrm.scenarios import builtin_case
from ccrm.statements import (ScoringError, Statement, StatementError, evaluate_statement,
                             failed_count, score_case, squash_partial)
from ccrm.trace import STAGE_CODE, Event, SimulationTrace


def toy_trace(agents, roles, edges, trust, horizon, removal=0, absent=(), events=(), orphans=(),
              capitals=None):
    """Hand-built trace; ``absent`` maps agent -> first step it is gone."""
    n = len(agents)
    role_row = [ROLE_CODE[BusinessRole.parse(r)] for r in roles]
    role_arr = np.tile(np.array(role_row, dtype=np.int16), (horizon, 1))
    present = np.ones((horizon, n), dtype=bool)
    for a, t in dict(absent).items():
        present[t:, agents.index(a)] = False
    trust = np.asarray(trust, dtype=float)
    if trust.ndim == 1:
        trust = np.tile(trust, (horizon, 1))
    caps = np.full((horizon, n, 3), 0.5) if capitals is None else capitals
    return SimulationTrace(
        scenario_id="T", agent_ids=list(agents),
        edge_i=np.array([agents.index(e[0]) for e in edges], dtype=np.int32),
        edge_j=np.array([agents.index(e[1]) for e in edges], dtype=np.int32),
        edge_tag=np.array([TAG_CODE[SocialTag(e[2])] for e in edges], dtype=np.int8),
        roles=role_arr, present=present, capitals=caps, trust=trust,
        stage=np.full(horizon, STAGE_CODE[Stage.STABLE], dtype=np.int8),
        orphan=np.array([a in orphans for a in agents]), aware=np.array([a in orphans for a in agents]),
        events=list(events), intervention_step=removal, target=agents[0],
        vacated_role=BusinessRole.KINGPIN)


def stmt(pred, max_score=1, sid="T.I", kind="training"):
    return Statement(sid, kind, max_score, pred)


def test_holds_role_at_end():
    tr = toy_trace(["K", "A"], ["kingpin", "organizer"], [], np.empty((0,)), 10, absent={"K": 0})
    tr.roles[5:, 1] = ROLE_CODE[BusinessRole.KINGPIN]
    assert evaluate_statement(stmt(["holds_role", "A", "kingpin", "end"]), tr) == 1
    assert evaluate_statement(stmt(["holds_role", "A", "kingpin", 4]), tr) == 0


def test_unimplemented_scores_zero_on_real_trace():
    b1 = next(s for s in builtin_case("B").statements if s.id == "B.I")
    tr = simulate(builtin_case("B"), seed=0)
    assert evaluate_statement(b1, tr) == 0
    assert b1.max_score == 1


def _three_high_edges(decrease):
    agents = ["K", "A", "B", "C"]
    edges = [("A", "B", "friend"), ("A", "C", "friend"), ("B", "C", "friend")]
    trust = np.tile([0.9, 0.85, 0.95], (5, 1))
    trust[2:, 1] = 0.85 - decrease
    return toy_trace(agents, ["kingpin", "organizer", "organizer", "organizer"], edges, trust, 5, removal=1)


def test_monotone_all_quantified_and_proportional():
    tr = _three_high_edges(0.01)
    assert evaluate_statement(stmt(["monotone_high_trust", 0.8, "removal", ["removal", 1]]), tr) == 0
    prop = stmt(["monotone_high_trust", 0.8, "removal", ["removal", 1], "proportional"])
    assert evaluate_statement(prop, tr) == Fraction(2, 3)
    assert evaluate_statement(prop, _three_high_edges(0.0)) == 1


def test_monotone_counts_removed_edge_as_decrease():
    tr = _three_high_edges(0.0)
    tr.trust[2:, 0] = np.nan
    assert evaluate_statement(stmt(["monotone_high_trust", 0.8, "removal", ["removal", 1]]), tr) == 0


def test_trust_top():
    agents = ["K", "Y", "B", "C", "Z"]
    edges = [("Y", "B", "friend"), ("Y", "C", "friend"), ("Y", "Z", "friend")]
    tr = toy_trace(agents, ["kingpin", "assassin", "broker", "broker", "assassin"], edges,
                   [0.8, 0.7, 0.6], 3)
    assert evaluate_statement(stmt(["trust_top", "Y", ["B", "C"], "end"]), tr) == 1
    assert evaluate_statement(stmt(["trust_top", "Y", ["B", "Z"], "end"]), tr) == 0
    assert evaluate_statement(stmt(["trust_top", "Z", ["Y"], "end"]), tr) == 1


def test_aggregate_delta_on_orphans():
    agents = ["K", "A", "B"]
    caps = np.full((10, 3, 3), 0.5)
    caps[7:, 1, 1] = 0.6
    tr = toy_trace(agents, ["kingpin", "organizer", "organizer"], [("A", "B", "family")],
                   [0.7], 10, removal=0, orphans=("A", "B"), capitals=caps)
    up = stmt(["aggregate_delta", "orphans", "violence", "removal", ["removal", 7], ">", 0])
    assert evaluate_statement(up, tr) == 1
    flat = stmt(["aggregate_delta", "orphans", "pairwise_trust", "removal", "end", ">", 0])
    assert evaluate_statement(flat, tr) == 0


def test_ratio_relation():
    trust = np.full((10, 1), 0.5)
    trust[6:] = 0.6
    tr = toy_trace(["K", "A", "B"], ["kingpin", "organizer", "organizer"], [("A", "B", "family")],
                   trust, 10, orphans=("A", "B"),
                   events=[Event(6, "instatement", {"agent": "A"})])
    s = stmt(["aggregate_delta", "orphans", "pairwise_trust", "removal", "instatement", "ratio>=", 1.15])
    assert evaluate_statement(s, tr) == 1
    s2 = stmt(["aggregate_delta", "orphans", "pairwise_trust", "removal", "instatement", "ratio>=", 1.25])
    assert evaluate_statement(s2, tr) == 0


def test_aggregate_family_mean():
    tr = toy_trace(["K", "A", "B", "C"], ["kingpin", "organizer", "organizer", "driver"],
                   [("A", "B", "family"), ("B", "C", "family"), ("A", "C", "neutral")],
                   [0.8, 0.7, 0.1], 4)
    assert evaluate_statement(stmt(["aggregate", "family_edges", "mean_trust", "end", ">=", 0.75]), tr) == 1
    assert evaluate_statement(stmt(["aggregate", "all_edges", "mean_trust", "end", ">=", 0.75]), tr) == 0


def test_boolean_combinators_and_parts():
    tr = toy_trace(["K", "A"], ["kingpin", "organizer"], [], np.empty((0,)), 3, absent={"K": 1})
    yes, no = ["absent", "K", "end"], ["absent", "A", "end"]
    assert evaluate_statement(stmt(["and", yes, no]), tr) == 0
    assert evaluate_statement(stmt(["or", yes, no]), tr) == 1
    assert evaluate_statement(stmt(["not", no]), tr) == 1
    assert evaluate_statement(stmt(["parts", yes, no, yes], max_score=3), tr) == 2


def test_first_selected():
    ev = [Event(12, "selection", {"agent": "Y"}), Event(30, "selection", {"agent": "A"})]
    tr = toy_trace(["K", "Y", "A"], ["kingpin", "coordinator", "organizer"], [], np.empty((0,)), 40,
                   events=ev)
    assert evaluate_statement(stmt(["first_selected", "Y"]), tr) == 1
    assert evaluate_statement(stmt(["first_selected", "A"]), tr) == 0


def test_changed_measures():
    agents = ["K", "A", "B", "C"]
    edges = [("A", "B", "friend"), ("B", "C", "friend"), ("K", "A", "family")]
    trust = np.tile([0.5, 0.5, 0.9], (5, 1))
    trust[4, 0] = 0.8
    tr = toy_trace(agents, ["kingpin", "organizer", "organizer", "driver"], edges, trust, 5)
    assert evaluate_statement(stmt(["changed", "mean_abs_trust_change", "init", "end", 0.1]), tr) == 1
    assert evaluate_statement(stmt(["changed", "degree_l1", "init", "end", 0.1]), tr) == 0
    tr.trust[4, 1] = np.nan
    # degrees (A, B, C): (1, 2, 1) -> (1, 1, 0); L1 change 2 over 4
    assert evaluate_statement(stmt(["changed", "degree_l1", "init", "end", 0.5]), tr) == 1


def test_near_value_partial_credit():
    tr = toy_trace(["K", "A", "B"], ["kingpin", "organizer", "organizer"], [("A", "B", "family")],
                   [0.7], 3)
    s = stmt(["near_value", ["all_edges", "mean_trust", "end"], 0.5, 0.2])
    assert evaluate_statement(s, tr) == pytest.approx(0.5)


def test_time_outside_trace_is_an_error():
    tr = toy_trace(["K", "A"], ["kingpin", "organizer"], [], np.empty((0,)), 10)
    with pytest.raises(ScoringError):
        evaluate_statement(stmt(["absent", "K", ["removal", 20]]), tr)
    with pytest.raises(ScoringError):
        evaluate_statement(stmt(["absent", "Q", "end"]), tr)


def test_missing_instatement_falls_back_to_window_end():
    tr = toy_trace(["K", "A"], ["kingpin", "organizer"], [], np.empty((0,)), 60, removal=2)
    tr.roles[47:, 1] = ROLE_CODE[BusinessRole.KINGPIN]
    assert evaluate_statement(stmt(["holds_role", "A", "kingpin", "instatement"]), tr) == 1
    assert evaluate_statement(stmt(["holds_role", "A", "kingpin", ["instatement", -1]]), tr) == 0


@pytest.mark.parametrize("pred", [
    ["bogus"], ["holds_role", "A"], ["absent", "A", "yesterday"],
    ["aggregate", "orphans", "violence", "end", "==", 0],
])
def test_malformed_predicates_rejected(pred):
    with pytest.raises(StatementError):
        stmt(pred)


def test_statement_max_parsing():
    assert stmt(["absent", "A", "end"], max_score="1/3").max_score == Fraction(1, 3)
    with pytest.raises(StatementError):
        stmt(["absent", "A", "end"], max_score=0)
    with pytest.raises(StatementError):
        Statement("X.I", "testing", 1, ["absent", "A", "end"])


@pytest.mark.parametrize("case, total, n", [("A", 8, 8), ("B", 6, 8), ("C", 6, 6), ("D", 5, 6)])
def test_case_maxima(case, total, n):
    sc = builtin_case(case)
    assert sc.max_total() == total
    assert len(sc.statements) == n


def test_case_d_fixture_scores_three():
    sc = builtin_case("D")
    ids = [a.id for a in sc.agents][:7]
    roles = [a.business_role.value for a in sc.agents][:7]
    edges = [("X", "Y", "friend"), ("Y", "B", "friend"), ("Y", "C", "friend"), ("Y", "Z", "friend"),
             ("Z", "B", "neutral")]
    trust = np.tile([0.9, 0.3, 0.3, 0.9, 0.95], (60, 1))
    trust[1:, 0] = np.nan
    trust[2:, 3] = 0.7
    trust[2:, 4] = 0.9
    tr = toy_trace(ids, roles, edges, trust, 60, removal=1, absent={"X": 1, "A": 40},
                   events=[Event(20, "instatement", {"agent": "Y"})])
    tr.roles[20:, ids.index("Y")] = ROLE_CODE[BusinessRole.MURDERBROKER]
    score = score_case(sc.validation, tr)
    per = {sid: a for sid, a, _ in score.per_statement}
    assert per == {"D.I": 1, "D.II": 1, "D.III": 0, "D.IV": 0, "D.V": 0, "D.VI": 1}
    assert score.achieved == 3 and score.max == 5


def test_score_case_rejects_mixed_cases():
    a, b = builtin_case("A").statements[0], builtin_case("C").statements[0]
    tr = simulate(builtin_case("A"), seed=0, horizon=80)
    with pytest.raises(StatementError):
        score_case([a, b], tr)


def test_failed_count_matches_case_score():
    sc = builtin_case("A")
    tr = simulate(sc, ModelParams().with_values(kappa=0.0), seed=2)
    cs = score_case(sc.training, tr)
    assert failed_count(sc.training, tr) == cs.failed_count
    assert 0 <= cs.achieved <= cs.max == 8


def test_squash_partial():
    assert squash_partial(0.4, 0.4) == 1
    assert squash_partial(1.4, 0.4, scale=1.0) == 0.5
    assert squash_partial(-0.6, 0.4) == 0.5
    assert squash_partial(float("inf"), 0.4) == 0
    assert squash_partial(float("-inf"), 0.4) == 0


@given(st.floats(-1e6, 1e6), st.floats(-10, 10), st.floats(0.01, 10))
def test_squash_partial_in_unit_interval(value, target, scale):
    v = squash_partial(value, target, scale)
    assert 0.0 <= v <= 1.0
