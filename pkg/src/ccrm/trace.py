"""Per-step record of a simulation run and its file formats.

A trace stores, for every step, the business role and presence of every
agent, capitals, the trust of every edge slot (NaN once removed) and the
stage, plus the list of discrete events. Statements are scored against it.

Three exports exist:

* ``trace.jsonl`` - complete, re-loadable record (header, one ``snapshot``
  line per step, domain events), every line shaped
  ``{"step", "event_type", "payload"}``;
* ``events.jsonl`` - domain events only, same line shape;
* ``trust.csv`` - ``step, agent_i, agent_j, trust, social_tag`` for every
  live edge at every step.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .netmodel import ROLE_CODE, ROLES, TAGS, BusinessRole, Stage

STAGES: tuple[Stage, ...] = tuple(Stage)
STAGE_CODE = {s: k for k, s in enumerate(STAGES)}

TRACE_FORMAT = "ccrm-trace/1"


@dataclass(frozen=True)
class Event:
    step: int
    event_type: str
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"step": self.step, "event_type": self.event_type, "payload": self.payload}


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass
class SimulationTrace:
    """Snapshots of one run, indexed ``[step, agent]`` or ``[step, edge]``."""

    scenario_id: str
    agent_ids: list[str]
    edge_i: np.ndarray
    edge_j: np.ndarray
    edge_tag: np.ndarray
    roles: np.ndarray
    present: np.ndarray
    capitals: np.ndarray
    trust: np.ndarray
    stage: np.ndarray
    orphan: np.ndarray
    aware: np.ndarray
    events: list[Event]
    intervention_step: int | None = None
    target: str | None = None
    vacated_role: BusinessRole | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._index = {a: k for k, a in enumerate(self.agent_ids)}

    # -- basic queries ----------------------------------------------------
    @property
    def horizon(self) -> int:
        return self.roles.shape[0]

    @property
    def final_step(self) -> int:
        return self.horizon - 1

    def has_agent(self, agent_id: str) -> bool:
        return agent_id in self._index

    def idx(self, agent_id: str) -> int:
        try:
            return self._index[agent_id]
        except KeyError:
            raise KeyError(f"agent {agent_id!r} not in trace") from None

    def check_step(self, t: int) -> int:
        if not 0 <= t < self.horizon:
            raise IndexError(f"step {t} outside trace of length {self.horizon}")
        return t

    def role_at(self, agent_id: str, t: int) -> BusinessRole | None:
        k = self.idx(agent_id)
        t = self.check_step(t)
        return ROLES[self.roles[t, k]] if self.present[t, k] else None

    def is_present(self, agent_id: str, t: int) -> bool:
        return bool(self.present[self.check_step(t), self.idx(agent_id)])

    def live_edges(self, t: int) -> np.ndarray:
        return np.flatnonzero(~np.isnan(self.trust[self.check_step(t)]))

    def neighbor_trust(self, agent_id: str, t: int) -> dict[str, float]:
        """Trust of every live edge of ``agent_id`` at step ``t``, keyed by neighbor."""
        k = self.idx(agent_id)
        row = self.trust[self.check_step(t)]
        out = {}
        for e in np.flatnonzero(((self.edge_i == k) | (self.edge_j == k)) & ~np.isnan(row)):
            other = self.edge_j[e] if self.edge_i[e] == k else self.edge_i[e]
            out[self.agent_ids[other]] = float(row[e])
        return out

    def events_of(self, event_type: str) -> list[Event]:
        return [e for e in self.events if e.event_type == event_type]

    def first_step_of(self, event_type: str) -> int | None:
        ev = self.events_of(event_type)
        return ev[0].step if ev else None

    def stage_sequence(self) -> list[Stage]:
        """Stages visited in order, including intra-step transitions."""
        seq = [STAGES[self.stage[0]]] if self.horizon else []
        for e in self.events_of("stage"):
            seq.append(Stage(e.payload["to"]))
        return seq

    # -- serialization ----------------------------------------------------
    def _header(self) -> dict:
        return {
            "format": TRACE_FORMAT,
            "scenario_id": self.scenario_id,
            "agents": list(self.agent_ids),
            "edges": [[int(i), int(j), TAGS[g].value]
                      for i, j, g in zip(self.edge_i, self.edge_j, self.edge_tag)],
            "horizon": self.horizon,
            "intervention_step": self.intervention_step,
            "target": self.target,
            "vacated_role": self.vacated_role.value if self.vacated_role else None,
            "orphans": [a for a, o in zip(self.agent_ids, self.orphan) if o],
            "aware": [a for a, o in zip(self.agent_ids, self.aware) if o],
            "meta": self.meta,
        }

    def _snapshot(self, t: int, with_caps: bool) -> dict:
        row = self.trust[t]
        payload = {
            "roles": [ROLES[r].value for r in self.roles[t]],
            "present": [bool(p) for p in self.present[t]],
            "trust": [None if np.isnan(v) else float(v) for v in row],
            "stage": STAGES[self.stage[t]].value,
        }
        if with_caps:
            payload["capitals"] = self.capitals[t].tolist()
        return payload

    def iter_records(self) -> Iterable[dict]:
        yield {"step": 0, "event_type": "trace-header", "payload": self._header()}
        by_step: dict[int, list[Event]] = {}
        for e in self.events:
            by_step.setdefault(e.step, []).append(e)
        for t in range(self.horizon):
            with_caps = t == 0 or not np.array_equal(self.capitals[t], self.capitals[t - 1])
            for e in by_step.get(t, []):
                yield e.to_dict()
            yield {"step": t, "event_type": "snapshot", "payload": self._snapshot(t, with_caps)}

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in self.iter_records():
                fh.write(_dumps(rec) + "\n")

    def write_events_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for e in self.events:
                fh.write(_dumps(e.to_dict()) + "\n")

    def trust_rows(self) -> Iterable[tuple]:
        names = self.agent_ids
        tags = [TAGS[g].value for g in self.edge_tag]
        for t in range(self.horizon):
            row = self.trust[t]
            for e in np.flatnonzero(~np.isnan(row)):
                yield (t, names[self.edge_i[e]], names[self.edge_j[e]], repr(float(row[e])), tags[e])

    def write_trust_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "agent_i", "agent_j", "trust", "social_tag"])
            w.writerows(self.trust_rows())

    def digest(self) -> str:
        """SHA-256 over the serialized trace; equal digests mean identical runs."""
        h = hashlib.sha256()
        for rec in self.iter_records():
            h.update(_dumps(rec).encode())
            h.update(b"\n")
        return h.hexdigest()

    @classmethod
    def read_jsonl(cls, source: str | Path | io.TextIOBase) -> "SimulationTrace":
        if isinstance(source, (str, Path)):
            with open(source, encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        else:
            lines = source.read().splitlines()
        records = [json.loads(x) for x in lines if x.strip()]
        if not records or records[0].get("event_type") != "trace-header":
            raise ValueError("trace file does not start with a trace-header record")
        head = records[0]["payload"]
        if head.get("format") != TRACE_FORMAT:
            raise ValueError(f"unsupported trace format {head.get('format')!r}")
        agents = head["agents"]
        n, horizon = len(agents), int(head["horizon"])
        edges = head["edges"]
        n_e = len(edges)
        roles = np.zeros((horizon, n), dtype=np.int16)
        present = np.zeros((horizon, n), dtype=bool)
        capitals = np.zeros((horizon, n, 3))
        trust = np.full((horizon, n_e), np.nan)
        stage = np.zeros(horizon, dtype=np.int8)
        events = []
        seen = 0
        caps = None
        for rec in records[1:]:
            t, kind, payload = rec["step"], rec["event_type"], rec["payload"]
            if kind != "snapshot":
                events.append(Event(t, kind, payload))
                continue
            roles[t] = [ROLE_CODE[BusinessRole(r)] for r in payload["roles"]]
            present[t] = payload["present"]
            if "capitals" in payload:
                caps = np.asarray(payload["capitals"], dtype=float)
            capitals[t] = caps
            row = payload["trust"]
            trust[t, :len(row)] = [np.nan if v is None else v for v in row]
            stage[t] = STAGE_CODE[Stage(payload["stage"])]
            seen += 1
        if seen != horizon:
            raise ValueError(f"trace has {seen} snapshots, header says {horizon}")
        vac = head.get("vacated_role")
        return cls(
            scenario_id=head["scenario_id"],
            agent_ids=agents,
            edge_i=np.array([e[0] for e in edges], dtype=np.int32),
            edge_j=np.array([e[1] for e in edges], dtype=np.int32),
            edge_tag=np.array([[t.value for t in TAGS].index(e[2]) for e in edges], dtype=np.int8),
            roles=roles, present=present, capitals=capitals, trust=trust, stage=stage,
            orphan=np.array([a in set(head["orphans"]) for a in agents]),
            aware=np.array([a in set(head["aware"]) for a in agents]),
            events=events,
            intervention_step=head["intervention_step"],
            target=head["target"],
            vacated_role=BusinessRole(vac) if vac else None,
            meta=dict(head.get("meta", {})),
        )


def event_payload(**kw: Any) -> dict:
    """Payload with JSON-native values only."""
    out = {}
    for k, v in kw.items():
        if isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out
