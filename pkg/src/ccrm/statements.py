"""Scoreable statements over simulation traces.

A statement is a predicate written as nested JSON arrays whose first
element names the operator, e.g.::

    ["holds_role", "A", "kingpin", "end"]
    ["aggregate_delta", "orphans", "violence", "removal", ["removal", 7], ">", 0]
    ["parts", ["trust_top", "A", ["B", "C"], "end"], ["trust_top", "B", ["A", "C"], "end"]]

Operators
---------
``holds_role(agent, role, time)``
    Agent is present and holds ``role``.
``present(agent, time)`` / ``absent(agent, time)``
``first_selected(agent)``
    The first designate drawn by the conclave is ``agent``.
``trust_top(observer, targets, time)``
    ``targets`` are exactly the observer's ``len(targets)`` most trusted
    neighbours (ties broken by id).
``monotone_high_trust(threshold, t0, t1[, mode])``
    Every edge with trust above ``threshold`` at ``t0`` has at least the
    same trust at ``t1`` (a removed edge counts as a decrease). ``mode``
    ``"proportional"`` gives the fraction of such edges instead. True when
    no edge qualifies.
``aggregate(selector, metric, time, relation, value)``
    Compares a metric at one time against ``value`` (``>``, ``>=``, ``<``
    or ``<=``).
``aggregate_delta(selector, metric, t0, t1, relation, amount)``
    Compares a metric at two times: ``>`` / ``>=`` on the difference
    ``m(t1) - m(t0)``, ``ratio>=`` on ``m(t1) / m(t0)``.
``changed(measure, t0, t1, amount)``
    ``mean_abs_trust_change`` over edges between non-kingpin agents live at
    both times, or ``degree_l1``, the L1 change of their degrees divided by
    the total degree at ``t0``; true when the measure reaches ``amount``.
``near_value([selector, metric, time], target[, scale])``
    Partial credit ``1 / (1 + |value - target| / scale)``.
``and`` / ``or`` / ``not`` / ``parts`` / ``unimplemented(reason)``
    ``parts`` averages the credit of its components; ``unimplemented``
    always scores 0.

Selectors are ``"orphans"``, ``"aware"``, ``"family_edges"``,
``"all_edges"`` or ``["agents", [ids...]]``. Agent metrics are the mean
``criminal`` / ``violence`` / ``financial`` capital of the present
selected agents and ``pairwise_trust``, the mean trust of live edges among
them; edge selectors support ``mean_trust``.

Times are ``"init"``, ``"removal"``, ``"conclave"`` (conclave formation),
``"selection"`` (first designate), ``"instatement"`` (first instatement),
``"end"`` or ``[base, offset]``. Missing conclave, selection or
instatement events fall back to the end of the promotion window
(removal + 45).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

import numpy as np

from .netmodel import FAMILY_CODE, ROLE_CODE, BusinessRole
from .trace import SimulationTrace

PROMOTION_FALLBACK = 45


class StatementError(ValueError):
    """Malformed statement or predicate."""


class ScoringError(ValueError):
    """Statement cannot be scored against the given trace."""


def _max_from(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value).limit_denominator(1000)
    raise StatementError(f"bad max score {value!r}")


def _max_to_json(value: Fraction):
    return int(value) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


_ARITY = {
    "holds_role": (3, 3), "present": (2, 2), "absent": (2, 2), "first_selected": (1, 1),
    "trust_top": (3, 3), "monotone_high_trust": (3, 4), "aggregate": (5, 5),
    "aggregate_delta": (6, 6), "changed": (4, 4), "near_value": (2, 3),
    "and": (1, None), "or": (1, None), "not": (1, 1), "parts": (1, None),
    "unimplemented": (0, 1),
}
_RELATIONS = {">", ">=", "<", "<=", "ratio>="}
_TIME_BASES = {"init", "removal", "conclave", "selection", "instatement", "end"}


def _check_time(ref, where: str) -> None:
    if isinstance(ref, str) and ref in _TIME_BASES:
        return
    if (isinstance(ref, list) and len(ref) == 2 and ref[0] in _TIME_BASES
            and isinstance(ref[1], int) and not isinstance(ref[1], bool)):
        return
    if isinstance(ref, int) and not isinstance(ref, bool) and ref >= 0:
        return
    raise StatementError(f"{where}: bad time reference {ref!r}")


def check_predicate(expr, where: str = "predicate") -> None:
    """Raise :class:`StatementError` unless ``expr`` is a well-formed predicate."""
    if not isinstance(expr, list) or not expr or not isinstance(expr[0], str):
        raise StatementError(f"{where}: expected [operator, args...], got {expr!r}")
    op, args = expr[0], expr[1:]
    if op not in _ARITY:
        raise StatementError(f"{where}: unknown operator {op!r}")
    lo, hi = _ARITY[op]
    if len(args) < lo or (hi is not None and len(args) > hi):
        raise StatementError(f"{where}: {op} takes {lo}..{hi or 'n'} arguments, got {len(args)}")
    if op in ("and", "or", "not", "parts"):
        for k, a in enumerate(args):
            check_predicate(a, f"{where}[{k + 1}]")
        return
    if op == "holds_role":
        BusinessRole.parse(args[1])
        _check_time(args[2], where)
    elif op in ("present", "absent"):
        _check_time(args[1], where)
    elif op == "trust_top":
        if not isinstance(args[1], list) or not args[1]:
            raise StatementError(f"{where}: trust_top targets must be a non-empty list")
        _check_time(args[2], where)
    elif op == "monotone_high_trust":
        _check_time(args[1], where)
        _check_time(args[2], where)
        if len(args) == 4 and args[3] not in ("all", "proportional"):
            raise StatementError(f"{where}: mode must be 'all' or 'proportional'")
    elif op == "aggregate":
        _check_time(args[2], where)
        if args[3] not in _RELATIONS - {"ratio>="}:
            raise StatementError(f"{where}: unknown relation {args[3]!r}")
    elif op == "aggregate_delta":
        _check_time(args[2], where)
        _check_time(args[3], where)
        if args[4] not in _RELATIONS:
            raise StatementError(f"{where}: unknown relation {args[4]!r}")
    elif op == "changed":
        if args[0] not in ("mean_abs_trust_change", "degree_l1"):
            raise StatementError(f"{where}: unknown change measure {args[0]!r}")
        _check_time(args[1], where)
        _check_time(args[2], where)
    elif op == "near_value":
        if not (isinstance(args[0], list) and len(args[0]) == 3):
            raise StatementError(f"{where}: near_value needs [selector, metric, time]")
        _check_time(args[0][2], where)


@dataclass(frozen=True)
class Statement:
    """One scoreable statement with its maximum score."""

    id: str
    kind: str
    max_score: Fraction
    predicate: Any
    description: str = ""

    def __post_init__(self):
        if self.kind not in ("training", "validation"):
            raise StatementError(f"{self.id}: kind must be training or validation")
        object.__setattr__(self, "max_score", _max_from(self.max_score))
        if self.max_score <= 0:
            raise StatementError(f"{self.id}: max score must be positive")
        check_predicate(self.predicate, self.id)

    @property
    def case_id(self) -> str:
        return self.id.split(".", 1)[0]

    @classmethod
    def from_dict(cls, d: dict, kind: str | None = None) -> "Statement":
        return cls(id=d["id"], kind=d.get("kind", kind), max_score=d["max"],
                   predicate=d["predicate"], description=d.get("description", ""))

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "max": _max_to_json(self.max_score),
                "predicate": self.predicate, "description": self.description}


@dataclass(frozen=True)
class CaseScore:
    case_id: str
    achieved: float
    max: Fraction
    per_statement: tuple[tuple[str, float, Fraction], ...] = field(default_factory=tuple)

    @property
    def failed_count(self) -> int:
        """Statements that did not reach full credit."""
        return sum(1 for _, a, m in self.per_statement if a < m)


def squash_partial(value: float, target: float, scale: float = 1.0) -> float:
    """``1 / (1 + |value - target| / scale)``: 1 at the target, 0 at infinity."""
    if not math.isfinite(target):
        raise ValueError("target must be finite")
    if scale <= 0:
        raise ValueError("scale must be positive")
    if math.isnan(value):
        return 0.0
    if math.isinf(value):
        return 0.0
    return 1.0 / (1.0 + abs(value - target) / scale)


# -- evaluation --------------------------------------------------------------
class _Context:
    def __init__(self, trace: SimulationTrace):
        self.trace = trace

    def time(self, ref) -> int:
        tr = self.trace
        if isinstance(ref, int):
            return tr.check_step(ref)
        base, off = (ref, 0) if isinstance(ref, str) else ref
        removal = tr.intervention_step
        if base == "init":
            t = 0
        elif base == "end":
            t = tr.final_step
        else:
            if removal is None:
                raise ScoringError(f"time reference {base!r} needs an intervention in the trace")
            fallback = removal + PROMOTION_FALLBACK
            if base == "removal":
                t = removal
            elif base == "conclave":
                t = tr.first_step_of("conclave")
                t = fallback if t is None else t
            elif base == "selection":
                t = tr.first_step_of("selection")
                t = fallback if t is None else t
            else:
                t = tr.first_step_of("instatement")
                t = fallback if t is None else t
        t += off
        if not 0 <= t < tr.horizon:
            raise ScoringError(f"time reference {ref!r} resolves to step {t}, outside the trace")
        return t

    def agent(self, name: str) -> str:
        if not self.trace.has_agent(name):
            raise ScoringError(f"statement references unknown agent {name!r}")
        return name

    def agent_mask(self, selector, t: int) -> np.ndarray:
        tr = self.trace
        if selector == "orphans":
            m = tr.orphan.copy()
        elif selector == "aware":
            m = tr.aware.copy()
        elif isinstance(selector, list) and len(selector) == 2 and selector[0] == "agents":
            m = np.zeros(len(tr.agent_ids), dtype=bool)
            for a in selector[1]:
                m[tr.idx(self.agent(a))] = True
        else:
            raise ScoringError(f"unknown agent selector {selector!r}")
        return m & tr.present[t]

    def metric(self, selector, metric: str, t: int) -> float:
        tr = self.trace
        row = tr.trust[t]
        live = ~np.isnan(row)
        if selector in ("family_edges", "all_edges"):
            if metric != "mean_trust":
                raise ScoringError(f"edge selector supports mean_trust only, not {metric!r}")
            sel = live & ((tr.edge_tag == FAMILY_CODE) if selector == "family_edges" else True)
            return float(row[sel].mean()) if sel.any() else math.nan
        mask = self.agent_mask(selector, t)
        if metric in ("criminal", "violence", "financial"):
            col = ("criminal", "violence", "financial").index(metric)
            return float(tr.capitals[t, mask, col].mean()) if mask.any() else math.nan
        if metric == "pairwise_trust":
            sel = live & mask[tr.edge_i] & mask[tr.edge_j]
            return float(row[sel].mean()) if sel.any() else math.nan
        raise ScoringError(f"unknown metric {metric!r}")


def _relate(relation: str, a: float, b: float, amount: float) -> bool:
    """Compare ``b`` (later) against ``a`` (earlier) by ``relation`` and ``amount``."""
    if math.isnan(a) or math.isnan(b):
        return False
    if relation == "ratio>=":
        return a > 0 and b / a >= amount
    d = b - a
    return {">": d > amount, ">=": d >= amount, "<": d < amount, "<=": d <= amount}[relation]


def _non_kingpin(trace: SimulationTrace, t0: int, t1: int) -> np.ndarray:
    kp = ROLE_CODE[BusinessRole.KINGPIN]
    return (trace.roles[t0] != kp) & (trace.roles[t1] != kp)


def _eval(expr, ctx: _Context):
    op, args = expr[0], expr[1:]
    tr = ctx.trace
    if op == "and":
        return all(_credit(_eval(a, ctx)) == 1 for a in args)
    if op == "or":
        return any(_credit(_eval(a, ctx)) == 1 for a in args)
    if op == "not":
        return _credit(_eval(args[0], ctx)) != 1
    if op == "parts":
        credits = [_credit(_eval(a, ctx)) for a in args]
        return sum(credits, Fraction(0)) / len(credits)
    if op == "unimplemented":
        return False
    if op == "holds_role":
        agent, role, t = ctx.agent(args[0]), BusinessRole.parse(args[1]), ctx.time(args[2])
        return tr.role_at(agent, t) is role
    if op == "present":
        return tr.is_present(ctx.agent(args[0]), ctx.time(args[1]))
    if op == "absent":
        return not tr.is_present(ctx.agent(args[0]), ctx.time(args[1]))
    if op == "first_selected":
        agent = ctx.agent(args[0])
        sel = tr.events_of("selection")
        return bool(sel) and sel[0].payload["agent"] == agent
    if op == "trust_top":
        observer = ctx.agent(args[0])
        targets = {ctx.agent(a) for a in args[1]}
        t = ctx.time(args[2])
        if not tr.is_present(observer, t):
            return False
        ranked = sorted(tr.neighbor_trust(observer, t).items(), key=lambda kv: (-kv[1], kv[0]))
        return {a for a, _ in ranked[:len(targets)]} == targets
    if op == "monotone_high_trust":
        thr, t0, t1 = float(args[0]), ctx.time(args[1]), ctx.time(args[2])
        mode = args[3] if len(args) == 4 else "all"
        before, after = tr.trust[t0], tr.trust[t1]
        high = np.flatnonzero(~np.isnan(before) & (before > thr))
        if len(high) == 0:
            return True
        ok = ~np.isnan(after[high]) & (after[high] >= before[high])
        if mode == "proportional":
            return Fraction(int(ok.sum()), len(high))
        return bool(ok.all())
    if op == "aggregate":
        sel, metric, t, rel, value = args
        return _relate(rel, float(value), ctx.metric(sel, metric, ctx.time(t)), 0.0)
    if op == "aggregate_delta":
        sel, metric, t0, t1, rel, amount = args
        return _relate(rel, ctx.metric(sel, metric, ctx.time(t0)),
                       ctx.metric(sel, metric, ctx.time(t1)), float(amount))
    if op == "changed":
        measure, t0, t1, amount = args[0], ctx.time(args[1]), ctx.time(args[2]), float(args[3])
        keep = _non_kingpin(tr, t0, t1)
        edge_ok = keep[tr.edge_i] & keep[tr.edge_j]
        a, b = tr.trust[t0], tr.trust[t1]
        if measure == "mean_abs_trust_change":
            both = edge_ok & ~np.isnan(a) & ~np.isnan(b)
            return bool(both.any()) and float(np.abs(b[both] - a[both]).mean()) >= amount
        n = len(tr.agent_ids)

        def degrees(row):
            live = edge_ok & ~np.isnan(row)
            return (np.bincount(tr.edge_i[live], minlength=n)
                    + np.bincount(tr.edge_j[live], minlength=n))[keep]
        d0, d1 = degrees(a), degrees(b)
        total = d0.sum()
        return total > 0 and float(np.abs(d1 - d0).sum() / total) >= amount
    if op == "near_value":
        (sel, metric, t), target = args[0], float(args[1])
        scale = float(args[2]) if len(args) == 3 else 1.0
        return squash_partial(ctx.metric(sel, metric, ctx.time(t)), target, scale)
    raise StatementError(f"unknown operator {op!r}")


def _credit(v) -> Fraction | float:
    if isinstance(v, (bool, np.bool_)):
        return Fraction(int(bool(v)))
    return v


def evaluate_statement(s: Statement, trace: SimulationTrace) -> Fraction | float:
    """Achieved score in ``[0, s.max_score]``."""
    credit = _credit(_eval(s.predicate, _Context(trace)))
    if isinstance(credit, Fraction):
        return s.max_score * credit
    return float(s.max_score) * float(credit)


def score_case(statements: Sequence[Statement], trace: SimulationTrace) -> CaseScore:
    """Score every statement of one case against one trace."""
    if not statements:
        raise StatementError("no statements to score")
    cases = {s.case_id for s in statements}
    if len(cases) != 1:
        raise StatementError(f"statements from several cases: {sorted(cases)}")
    per = tuple((s.id, evaluate_statement(s, trace), s.max_score) for s in statements)
    total = sum((a for _, a, _ in per), Fraction(0)) if all(
        isinstance(a, Fraction) for _, a, _ in per) else float(sum(float(a) for _, a, _ in per))
    return CaseScore(cases.pop(), total, sum((s.max_score for s in statements), Fraction(0)), per)


def failed_count(statements: Sequence[Statement], trace: SimulationTrace) -> int:
    """Number of statements below full credit; the training objective's unit."""
    return sum(1 for s in statements if evaluate_statement(s, trace) < s.max_score)
