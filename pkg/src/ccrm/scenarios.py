"""Scenario files, the built-in cases, hold-out splits and expertise scoring.

A scenario is a UTF-8 JSON document with ``"schema": "ccrm-scenario/1"``::

    {
      "schema": "ccrm-scenario/1",
      "id": "A",
      "agents": [{"id": "Main", "business_role": "kingpin",
                  "social_role": "neutral", "capitals": "sample"}, ...],
      "edges": [{"i": "Main", "j": "A", "social_tag": "family",
                 "trust": "sample"}, ...],
      "intervention": {"target": "Main", "step": 60},
      "horizon": 365,
      "statements": {"training": [...], "validation": [...]},
      "metadata": {"time": "...", "agents": "...", "behaviour": "...",
                   "rules": "...", "topology": "...", "ties": "..."}
    }

``capitals`` is ``"sample"`` or ``{"criminal", "violence", "financial"}``
where each value is a number or a ``[low, high]`` range to sample from;
``trust`` is ``"sample"``, a number in [0, 1] or a ``[low, high]`` range
inside [0, 1] sampled uniformly per run. The canonical text form
(:func:`dump_scenario`) has sorted keys and two-space indentation, so a
parse/print round trip is byte-stable.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping, Sequence

import numpy as np
from jsonschema import Draft202012Validator

from .netmodel import INTERVENTION_ROLES, BusinessRole, CapitalRanges, Capitals
from .statements import Statement

SCHEMA_VERSION = "ccrm-scenario/1"
METADATA_SECTIONS = ("time", "agents", "behaviour", "rules", "topology", "ties")
BUILTIN_IDS = ("A", "B", "C", "D")
MIN_TAIL = 45

_ROLE_NAMES = [r.value for r in BusinessRole]
_TAG_NAMES = ["family", "friend", "neutral"]
_UNIT = {"type": "number", "minimum": 0, "maximum": 1}
_UNIT_OR_RANGE = {"oneOf": [_UNIT, {"type": "array", "items": _UNIT, "minItems": 2, "maxItems": 2}]}

_STATEMENT = {
    "type": "object",
    "required": ["id", "max", "predicate"],
    "additionalProperties": False,
    "properties": {
        "id": {"type": "string", "minLength": 1},
        "kind": {"enum": ["training", "validation"]},
        "max": {"oneOf": [{"type": "integer", "minimum": 1},
                          {"type": "string", "pattern": r"^[0-9]+/[0-9]+$"}]},
        "predicate": {"type": "array", "minItems": 1},
        "description": {"type": "string"},
    },
}

SCENARIO_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "id", "agents", "edges", "intervention"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "id": {"type": "string", "minLength": 1},
        "title": {"type": "string"},
        "agents": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "business_role"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "business_role": {"enum": _ROLE_NAMES},
                    "social_role": {"enum": _TAG_NAMES},
                    "capitals": {"oneOf": [
                        {"const": "sample"},
                        {"type": "object", "additionalProperties": False,
                         "required": ["criminal", "violence", "financial"],
                         "properties": {"criminal": _UNIT_OR_RANGE, "violence": _UNIT_OR_RANGE,
                                        "financial": _UNIT_OR_RANGE}},
                    ]},
                    "note": {"type": "string"},
                },
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["i", "j", "social_tag"],
                "additionalProperties": False,
                "properties": {
                    "i": {"type": "string"},
                    "j": {"type": "string"},
                    "social_tag": {"enum": _TAG_NAMES},
                    "trust": {"oneOf": [{"const": "sample"}, _UNIT_OR_RANGE]},
                },
            },
        },
        "intervention": {
            "type": "object",
            "required": ["target"],
            "additionalProperties": False,
            "properties": {"target": {"type": "string"},
                           "step": {"type": "integer", "minimum": 0}},
        },
        "horizon": {"type": "integer", "minimum": 1},
        "statements": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"training": {"type": "array", "items": _STATEMENT},
                           "validation": {"type": "array", "items": _STATEMENT}},
        },
        "metadata": {"type": "object"},
    },
}

_VALIDATOR = Draft202012Validator(SCENARIO_SCHEMA)


class ScenarioError(ValueError):
    """Scenario document failed validation."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ScenarioWarning(UserWarning):
    """Scenario is usable but incomplete."""


@dataclass(frozen=True)
class AgentSpec:
    id: str
    business_role: BusinessRole
    social_role: str = "neutral"
    capitals: Capitals | CapitalRanges | str = "sample"
    note: str | None = None


@dataclass(frozen=True)
class EdgeSpec:
    i: str
    j: str
    social_tag: str
    trust: float | str | tuple[float, float] = "sample"


@dataclass(frozen=True)
class Intervention:
    target: str
    step: int = 0


@dataclass(frozen=True)
class Scenario:
    id: str
    agents: tuple[AgentSpec, ...]
    edges: tuple[EdgeSpec, ...]
    intervention: Intervention
    horizon: int = 365
    statements: tuple[Statement, ...] = ()
    metadata: Mapping[str, Any] = field(default_factory=dict)
    title: str | None = None

    @property
    def training(self) -> list[Statement]:
        return [s for s in self.statements if s.kind == "training"]

    @property
    def validation(self) -> list[Statement]:
        return [s for s in self.statements if s.kind == "validation"]

    def max_total(self, kind: str | None = None):
        return sum((s.max_score for s in self.statements if kind in (None, s.kind)), 0)

    def to_document(self) -> dict:
        doc: dict[str, Any] = {
            "schema": SCHEMA_VERSION,
            "id": self.id,
            "agents": [],
            "edges": [],
            "intervention": {"target": self.intervention.target, "step": self.intervention.step},
            "horizon": self.horizon,
        }
        if self.title is not None:
            doc["title"] = self.title
        for a in self.agents:
            d = {"id": a.id, "business_role": a.business_role.value, "social_role": a.social_role}
            if isinstance(a.capitals, Capitals):
                d["capitals"] = {"criminal": a.capitals.criminal, "violence": a.capitals.violence,
                                 "financial": a.capitals.financial}
            elif isinstance(a.capitals, CapitalRanges):
                d["capitals"] = {n: (list(v) if v[0] != v[1] else v[0]) for n, v in (
                    ("criminal", a.capitals.criminal), ("violence", a.capitals.violence),
                    ("financial", a.capitals.financial))}
            else:
                d["capitals"] = a.capitals
            if a.note is not None:
                d["note"] = a.note
            doc["agents"].append(d)
        for e in self.edges:
            trust = list(e.trust) if isinstance(e.trust, tuple) else e.trust
            doc["edges"].append({"i": e.i, "j": e.j, "social_tag": e.social_tag, "trust": trust})
        if self.statements:
            groups: dict[str, list] = {}
            for s in self.statements:
                d = s.to_dict()
                groups.setdefault(d.pop("kind"), []).append(d)
            doc["statements"] = groups
        if self.metadata:
            doc["metadata"] = dict(self.metadata)
        return doc


def _path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def parse_scenario(document: str | bytes | Mapping) -> Scenario:
    """Validate a scenario document and build a :class:`Scenario`.

    Raises
    ------
    ScenarioError
        With one ``path: message`` entry per schema or reference problem.
    """
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ScenarioError([f"<root>: invalid JSON ({exc})"]) from None
    else:
        doc = document
    problems = [f"{_path(e)}: {e.message}"
                for e in sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))]
    if problems:
        raise ScenarioError(problems)

    agents = []
    seen: set[str] = set()
    for k, a in enumerate(doc["agents"]):
        if a["id"] in seen:
            problems.append(f"agents/{k}/id: duplicate agent id {a['id']!r}")
        seen.add(a["id"])
        caps = a.get("capitals", "sample")
        if isinstance(caps, dict):
            parts = [caps[n] for n in ("criminal", "violence", "financial")]
            try:
                if any(isinstance(v, list) for v in parts):
                    caps = CapitalRanges(*(tuple(v) if isinstance(v, list) else (v, v) for v in parts))
                else:
                    caps = Capitals(*parts)
            except ValueError as exc:
                problems.append(f"agents/{k}/capitals: {exc}")
        agents.append(AgentSpec(a["id"], BusinessRole(a["business_role"]),
                                a.get("social_role", "neutral"), caps, a.get("note")))
    if not agents:
        problems.append("agents: empty network")
    pairs: set[frozenset] = set()
    edges = []
    for k, e in enumerate(doc["edges"]):
        for end in ("i", "j"):
            if e[end] not in seen:
                problems.append(f"edges/{k}: edge {e['i']}-{e['j']} references unknown agent {e[end]!r}")
        if e["i"] == e["j"]:
            problems.append(f"edges/{k}: self-loop on {e['i']!r}")
        key = frozenset((e["i"], e["j"]))
        if key in pairs:
            problems.append(f"edges/{k}: duplicate edge {e['i']}-{e['j']}")
        pairs.add(key)
        trust = e.get("trust", "sample")
        if isinstance(trust, list):
            trust = (float(trust[0]), float(trust[1]))
            if trust[0] > trust[1]:
                problems.append(f"edges/{k}/trust: range low exceeds high")
        edges.append(EdgeSpec(e["i"], e["j"], e["social_tag"], trust))

    iv = doc["intervention"]
    intervention = Intervention(iv["target"], iv.get("step", 0))
    horizon = doc.get("horizon", 365)
    roles = {a.id: a.business_role for a in agents}
    if intervention.target not in roles:
        problems.append(f"intervention/target: unknown agent {intervention.target!r}")
    elif roles[intervention.target] not in INTERVENTION_ROLES:
        problems.append(f"intervention/target: {intervention.target!r} holds "
                        f"{roles[intervention.target].value}, not kingpin or murderbroker")
    if horizon < intervention.step + MIN_TAIL:
        problems.append(f"horizon: {horizon} leaves fewer than {MIN_TAIL} steps after the intervention")

    statements = []
    ids: set[str] = set()
    for kind in ("training", "validation"):
        for k, s in enumerate(doc.get("statements", {}).get(kind, [])):
            try:
                st = Statement.from_dict(s, kind)
            except (ValueError, ZeroDivisionError) as exc:
                problems.append(f"statements/{kind}/{k}: {exc}")
                continue
            if st.id in ids:
                problems.append(f"statements/{kind}/{k}: duplicate statement id {st.id!r}")
            ids.add(st.id)
            statements.append(st)
    if problems:
        raise ScenarioError(problems)

    meta = doc.get("metadata", {})
    missing = [s for s in METADATA_SECTIONS if s not in meta]
    if missing:
        warnings.warn(f"scenario {doc['id']!r} lacks case-file sections: {', '.join(missing)}",
                      ScenarioWarning, stacklevel=2)
    return Scenario(doc["id"], tuple(agents), tuple(edges), intervention, horizon,
                    tuple(statements), meta, doc.get("title"))


def dump_scenario(scenario: Scenario) -> str:
    """Canonical JSON text of a scenario."""
    return json.dumps(scenario.to_document(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def canonicalize(text: str) -> str:
    return dump_scenario(parse_scenario(text))


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def _data_text(name: str) -> str:
    return resources.files("ccrm").joinpath("data", name).read_text(encoding="utf-8")


def builtin_case(case_id: str) -> Scenario:
    """The shipped encoding of case file A, B, C or D."""
    key = str(case_id).upper()
    if key not in BUILTIN_IDS:
        raise KeyError(f"unknown built-in case {case_id!r}; choose from {', '.join(BUILTIN_IDS)}")
    return parse_scenario(_data_text(f"case_{key}.json"))


def synthetic_example() -> Scenario:
    """Machine-generated example case file, for parser tests only."""
    return parse_scenario(_data_text("synthetic_example.json"))


def builtin_cases(ids: Sequence[str] = BUILTIN_IDS) -> list[Scenario]:
    return [builtin_case(c) for c in ids]


def split_holdout(items: Sequence, fraction: float = 0.2, rng=None, pinned: bool = True):
    """Partition ``items`` into ``(train, holdout)``.

    With ``pinned`` and a collection of scenarios, those carrying only
    validation statements form the hold-out set (the built-ins give
    ``({A, B, C}, {D})``). Otherwise a seeded random ``round(fraction * n)``
    items (at least one) are held out. Input order is preserved in both
    parts.
    """
    items = list(items)
    if len(items) < 2:
        raise ValueError("need at least two items to split")
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    if pinned and all(isinstance(x, Scenario) for x in items):
        hold = [x for x in items if x.statements and not x.training]
        if hold and len(hold) < len(items):
            return [x for x in items if x not in hold], hold
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    n_hold = min(len(items) - 1, max(1, int(np.floor(fraction * len(items) + 0.5))))
    chosen = set(rng.choice(len(items), size=n_hold, replace=False).tolist())
    return ([x for k, x in enumerate(items) if k not in chosen],
            [x for k, x in enumerate(items) if k in chosen])


# Expert coverage of domains: rows are domains, columns experts.
EXPERTISE_TABLE_1 = {
    "Domain 1": [1, 1, 1, 1, 1],
    "Domain 2": [1, 0, 0, 1, 1],
    "Domain 3": [0, 0, 0, 0, 0],
    "Domain 4": [1, 1, 0, 1, 1],
    "Domain 5": [0, 0, 0, 0, 0],
}


@dataclass(frozen=True)
class ExpertiseScores:
    scores: dict[str, int]
    excluded: tuple[str, ...]


def score_expertise_table(table) -> ExpertiseScores:
    """Row sums of a domains-by-experts 0/1 matrix; domains scoring below 1 are excluded.

    ``table`` is a mapping ``domain -> row`` or a 2-D array (domains are then
    named ``Domain 1``, ``Domain 2``, ...).
    """
    if isinstance(table, Mapping):
        names = list(table)
        rows = [list(table[n]) for n in names]
    else:
        rows = [list(r) for r in np.asarray(table).tolist()] if len(table) else []
        names = [f"Domain {k + 1}" for k in range(len(rows))]
    if not rows or any(len(r) == 0 for r in rows):
        raise ValueError("empty expertise table")
    scores = {}
    for name, row in zip(names, rows):
        if any(v not in (0, 1) for v in row):
            raise ValueError(f"{name}: entries must be 0 or 1")
        scores[name] = int(sum(row))
    return ExpertiseScores(scores, tuple(n for n in names if scores[n] < 1))
