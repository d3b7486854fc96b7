"""Agents, roles, capitals and the dual-layer trust network.

The network keeps one connectivity graph. Each edge carries a social tag
(family / friend / neutral) and a symmetric trust value, so the social and
business layers are two sets of attributes over the same edge set.

Hot-path state is columnar (numpy arrays indexed by agent or edge
position); :class:`Agent` and :class:`TrustEdge` are value views built on
demand.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

if TYPE_CHECKING:
    from .scenarios import Scenario


class BusinessRole(Enum):
    CUSTOMS_OFFICER = "customs-officer"
    GATEKEEPER = "gatekeeper"
    TRANSPORTER = "transporter"
    DISTRIBUTOR = "distributor"
    COORDINATOR = "coordinator"
    EXPORTER = "exporter"
    FINANCER = "financer"
    KINGPIN = "kingpin"
    PRODUCER = "producer"
    ORGANIZER = "organizer"
    BROKER_OF_RETRIEVERS = "broker-of-retrievers"
    BROKER = "broker"
    CUTTER = "cutter"
    DRIVER = "driver"
    PLACER_INLAND = "placer-inland"
    STASHER = "stasher"
    FRONTMAN = "frontman"
    RETRIEVER = "retriever"
    MURDERBROKER = "murderbroker"
    ASSASSIN = "assassin"

    @property
    def group(self) -> "RoleGroup":
        return ROLE_GROUPS[self]

    @classmethod
    def parse(cls, name: str) -> "BusinessRole":
        key = name.strip().lower().replace("_", "-").replace(" ", "-")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown business role {name!r}") from None


class RoleGroup(Enum):
    ORGANIZER = "organizer-group"
    EXPERT = "expert-group"
    WORKER = "worker-group"


class SocialTag(Enum):
    FAMILY = "family"
    FRIEND = "friend"
    NEUTRAL = "neutral"


class Mindset(Enum):
    NEUTRAL = "neutral"
    CHAOTIC = "chaotic"
    UNCERTAIN = "uncertain"


class Activity(Enum):
    NORMAL = "normal"
    SEARCHING = "searching"


class Stage(Enum):
    STABLE = "stable"
    INTERVENTION = "intervention"
    WHO_DONE_IT = "who-done-it"
    COOLDOWN = "cooldown"


ROLES: tuple[BusinessRole, ...] = tuple(BusinessRole)
ROLE_CODE: dict[BusinessRole, int] = {r: k for k, r in enumerate(ROLES)}
TAGS: tuple[SocialTag, ...] = tuple(SocialTag)
TAG_CODE: dict[SocialTag, int] = {t: k for k, t in enumerate(TAGS)}
FAMILY_CODE = TAG_CODE[SocialTag.FAMILY]

_R = BusinessRole
ROLE_GROUPS: dict[BusinessRole, RoleGroup] = {
    _R.KINGPIN: RoleGroup.ORGANIZER,
    _R.ORGANIZER: RoleGroup.ORGANIZER,
    _R.COORDINATOR: RoleGroup.ORGANIZER,
    _R.FINANCER: RoleGroup.ORGANIZER,
    _R.BROKER: RoleGroup.ORGANIZER,
    _R.BROKER_OF_RETRIEVERS: RoleGroup.ORGANIZER,
    _R.MURDERBROKER: RoleGroup.ORGANIZER,
    _R.CUSTOMS_OFFICER: RoleGroup.EXPERT,
    _R.GATEKEEPER: RoleGroup.EXPERT,
    _R.PRODUCER: RoleGroup.EXPERT,
    _R.EXPORTER: RoleGroup.EXPERT,
    _R.DISTRIBUTOR: RoleGroup.EXPERT,
    _R.ASSASSIN: RoleGroup.EXPERT,
    _R.TRANSPORTER: RoleGroup.WORKER,
    _R.CUTTER: RoleGroup.WORKER,
    _R.DRIVER: RoleGroup.WORKER,
    _R.PLACER_INLAND: RoleGroup.WORKER,
    _R.STASHER: RoleGroup.WORKER,
    _R.FRONTMAN: RoleGroup.WORKER,
    _R.RETRIEVER: RoleGroup.WORKER,
}

# (criminal, violence, financial) closed ranges per role.
ROLE_CAPITAL_RANGES: dict[BusinessRole, tuple[tuple[float, float], ...]] = {
    _R.CUSTOMS_OFFICER: ((0.6, 0.7), (0.3, 0.5), (0.05, 0.15)),
    _R.GATEKEEPER: ((0.85, 0.95), (0.2, 0.3), (0.4, 0.6)),
    _R.TRANSPORTER: ((0.05, 0.15), (0.3, 0.5), (0.4, 0.6)),
    _R.DISTRIBUTOR: ((0.4, 0.5), (0.4, 0.6), (0.5, 0.6)),
    _R.COORDINATOR: ((0.9, 1.0), (0.4, 0.6), (0.5, 0.8)),
    _R.EXPORTER: ((0.3, 0.4), (0.4, 0.6), (0.5, 0.6)),
    _R.FINANCER: ((0.75, 0.85), (0.3, 0.5), (0.8, 1.0)),
    _R.KINGPIN: ((0.75, 0.85), (0.4, 0.6), (0.5, 0.7)),
    _R.PRODUCER: ((0.85, 0.95), (0.4, 0.6), (0.5, 0.7)),
    _R.ORGANIZER: ((0.9, 1.0), (0.4, 0.6), (0.5, 0.8)),
    _R.BROKER_OF_RETRIEVERS: ((0.7, 0.8), (0.4, 0.6), (0.5, 0.6)),
    _R.BROKER: ((0.7, 0.8), (0.4, 0.6), (0.4, 0.6)),
    _R.CUTTER: ((0.05, 0.1), (0.05, 0.15), (0.05, 0.15)),
    _R.DRIVER: ((0.05, 0.15), (0.05, 0.15), (0.05, 0.15)),
    _R.PLACER_INLAND: ((0.05, 0.1), (0.5, 0.6), (0.05, 0.15)),
    _R.STASHER: ((0.0, 0.05), (0.5, 0.6), (0.05, 0.15)),
    _R.FRONTMAN: ((0.05, 0.1), (0.5, 0.6), (0.05, 0.15)),
    _R.RETRIEVER: ((0.05, 0.1), (0.5, 0.6), (0.05, 0.15)),
    _R.MURDERBROKER: ((0.2, 0.4), (0.7, 0.9), (0.2, 0.4)),
    _R.ASSASSIN: ((0.2, 0.4), (0.8, 1.0), (0.2, 0.4)),
}

# Initial trust ranges by social tag of the edge.
TRUST_RANGES: dict[SocialTag, tuple[float, float]] = {
    SocialTag.FAMILY: (0.5, 1.0),
    SocialTag.FRIEND: (0.3, 0.9),
    SocialTag.NEUTRAL: (0.0, 0.5),
}

INTERVENTION_ROLES = frozenset({BusinessRole.KINGPIN, BusinessRole.MURDERBROKER})


class NetworkError(ValueError):
    """Invalid network construction or query."""


@dataclass(frozen=True)
class Capitals:
    criminal: float
    violence: float
    financial: float

    def __post_init__(self):
        for name in ("criminal", "violence", "financial"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise NetworkError(f"{name} capital {v!r} outside [0, 1]")

    def as_array(self) -> np.ndarray:
        return np.array([self.criminal, self.violence, self.financial])

    @classmethod
    def from_array(cls, a) -> "Capitals":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def total(self) -> float:
        return self.criminal + self.violence + self.financial


@dataclass(frozen=True)
class CapitalRanges:
    """Closed per-capital ranges narrower than the role's, known from a case file."""

    criminal: tuple[float, float]
    violence: tuple[float, float]
    financial: tuple[float, float]

    def __post_init__(self):
        for name in ("criminal", "violence", "financial"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo <= hi <= 1.0:
                raise NetworkError(f"{name} range ({lo}, {hi}) is not an interval inside [0, 1]")

    def sample(self, rng: np.random.Generator) -> Capitals:
        return Capitals(*(float(rng.uniform(lo, hi)) if hi > lo else float(lo)
                          for lo, hi in (self.criminal, self.violence, self.financial)))


@dataclass(frozen=True)
class Agent:
    id: str
    business_role: BusinessRole
    social_role: SocialTag
    capitals: Capitals
    mindset: Mindset = Mindset.NEUTRAL
    activity: Activity = Activity.NORMAL
    orphan: bool = False
    disconnected_steps: int = 0


@dataclass(frozen=True)
class TrustEdge:
    i: str
    j: str
    trust: float
    social_tag: SocialTag

    @property
    def family_flag(self) -> int:
        return int(self.social_tag is SocialTag.FAMILY)

    @property
    def endpoints(self) -> frozenset:
        return frozenset((self.i, self.j))


class NetworkState:
    """Full mutable simulation state of one run.

    Agent attributes live in arrays indexed by agent position; edges live in
    arrays indexed by edge position. Edges are never compacted: a removed
    edge keeps its slot with ``alive = False`` so that trace columns stay
    stable when new edges are appended.
    """

    def __init__(self, ids, roles, social_roles, capitals, edge_i, edge_j, edge_tag, trust):
        n = len(ids)
        self.ids: list[str] = list(ids)
        self.index: dict[str, int] = {a: k for k, a in enumerate(self.ids)}
        self.role = np.asarray(roles, dtype=np.int16)
        self.social_role = np.asarray(social_roles, dtype=np.int8)
        self.capitals = np.asarray(capitals, dtype=float).reshape(n, 3)
        self.present = np.ones(n, dtype=bool)
        self.mindset = np.zeros(n, dtype=np.int8)
        self.activity = np.zeros(n, dtype=np.int8)
        self.orphan = np.zeros(n, dtype=bool)
        self.aware = np.zeros(n, dtype=bool)
        self.isolated_steps = np.zeros(n, dtype=np.int32)

        self.edge_i = np.asarray(edge_i, dtype=np.int32)
        self.edge_j = np.asarray(edge_j, dtype=np.int32)
        self.edge_tag = np.asarray(edge_tag, dtype=np.int8)
        self.trust = np.asarray(trust, dtype=float)
        self.alive = np.ones(len(self.trust), dtype=bool)

        self.stage = Stage.STABLE
        self.step = 0
        self.removal_step: int | None = None
        self.removed_target: str | None = None
        self.removed_role: BusinessRole | None = None
        self.former_degree = 0
        self.former_neighbors: list[int] = []
        # hop distance of every agent to the removed node, frozen at removal
        self.snapshot_distance = np.full(n, np.inf)
        self.conclave_deadline: tuple[int, int] | None = None
        self.promotion_window: tuple[int, int] | None = None
        # replacement bookkeeping and event log, owned by the stage machine
        self.timeline = None
        self.events: list = []

    # -- sizes ------------------------------------------------------------
    @property
    def n_agents(self) -> int:
        return len(self.ids)

    @property
    def n_edges(self) -> int:
        return len(self.trust)

    @property
    def K(self) -> float:
        """Days since the intervention; ``inf`` before it."""
        if self.removal_step is None:
            return np.inf
        return float(self.step - self.removal_step)

    @property
    def family(self) -> np.ndarray:
        return (self.edge_tag == FAMILY_CODE).astype(float)

    # -- lookups ----------------------------------------------------------
    def idx(self, agent_id: str) -> int:
        try:
            return self.index[agent_id]
        except KeyError:
            raise NetworkError(f"unknown agent id {agent_id!r}") from None

    def is_present(self, agent_id: str) -> bool:
        return bool(self.present[self.idx(agent_id)])

    def agent(self, agent_id: str) -> Agent:
        k = self.idx(agent_id)
        return Agent(
            id=agent_id,
            business_role=ROLES[self.role[k]],
            social_role=TAGS[self.social_role[k]],
            capitals=Capitals.from_array(self.capitals[k]),
            mindset=list(Mindset)[self.mindset[k]],
            activity=list(Activity)[self.activity[k]],
            orphan=bool(self.orphan[k]),
            disconnected_steps=int(self.isolated_steps[k]),
        )

    @property
    def agents(self) -> list[Agent]:
        return [self.agent(a) for k, a in enumerate(self.ids) if self.present[k]]

    @property
    def edges(self) -> list[TrustEdge]:
        return [
            TrustEdge(self.ids[self.edge_i[e]], self.ids[self.edge_j[e]],
                      float(self.trust[e]), TAGS[self.edge_tag[e]])
            for e in np.flatnonzero(self.alive)
        ]

    def edge_index(self, a: str, b: str) -> int | None:
        i, j = self.idx(a), self.idx(b)
        hit = np.flatnonzero(self.alive & (((self.edge_i == i) & (self.edge_j == j))
                                           | ((self.edge_i == j) & (self.edge_j == i))))
        return int(hit[0]) if len(hit) else None

    def incident(self, k: int) -> np.ndarray:
        """Positions of the live edges touching agent ``k``."""
        return np.flatnonzero(self.alive & ((self.edge_i == k) | (self.edge_j == k)))

    def neighbors(self, k: int) -> np.ndarray:
        e = self.incident(k)
        return np.where(self.edge_i[e] == k, self.edge_j[e], self.edge_i[e])

    def degree(self) -> np.ndarray:
        live = self.alive
        return (np.bincount(self.edge_i[live], minlength=self.n_agents)
                + np.bincount(self.edge_j[live], minlength=self.n_agents))

    def mean_incident_trust(self, k: int) -> float:
        e = self.incident(k)
        return float(self.trust[e].mean()) if len(e) else 0.0

    # -- mutation ---------------------------------------------------------
    def add_edges(self, pairs: Iterable[tuple[int, int]], tag: SocialTag, trust) -> np.ndarray:
        pairs = list(pairs)
        if not pairs:
            return np.empty(0, dtype=int)
        a = np.array(pairs, dtype=np.int32).reshape(-1, 2)
        start = self.n_edges
        self.edge_i = np.concatenate([self.edge_i, a[:, 0]])
        self.edge_j = np.concatenate([self.edge_j, a[:, 1]])
        self.edge_tag = np.concatenate([self.edge_tag, np.full(len(a), TAG_CODE[tag], np.int8)])
        self.trust = np.concatenate([self.trust, np.asarray(trust, dtype=float).reshape(-1)])
        self.alive = np.concatenate([self.alive, np.ones(len(a), dtype=bool)])
        return np.arange(start, self.n_edges)

    def remove_agent(self, k: int) -> np.ndarray:
        """Drop agent ``k`` and every live edge touching it; returns those edges."""
        e = self.incident(k)
        self.alive[e] = False
        self.present[k] = False
        return e

    def copy(self) -> "NetworkState":
        return copy.deepcopy(self)


def sample_capitals(role: BusinessRole, rng: np.random.Generator) -> Capitals:
    """Draw each capital uniformly from the role's closed range."""
    ranges = ROLE_CAPITAL_RANGES[role]
    return Capitals(*(float(rng.uniform(lo, hi)) if hi > lo else float(lo) for lo, hi in ranges))


def sample_trust(tag: SocialTag, rng: np.random.Generator) -> float:
    lo, hi = TRUST_RANGES[tag]
    return float(rng.uniform(lo, hi))


def build_network(scenario: "Scenario", rng: np.random.Generator) -> NetworkState:
    """Instantiate the initial state of a scenario.

    Capitals and trusts left as ``"sample"`` are drawn from the role and
    social-tag ranges; capitals given as :class:`CapitalRanges` and trusts
    given as ``(low, high)`` pairs are drawn from those. Agents are
    sampled first, in file order, then edges, so a given seed always
    yields the same state.
    """
    if not scenario.agents:
        raise NetworkError("empty network")
    ids, roles, social, caps = [], [], [], []
    for spec in scenario.agents:
        if spec.id in ids:
            raise NetworkError(f"duplicate agent id {spec.id!r}")
        role = spec.business_role
        if not isinstance(role, BusinessRole):
            role = BusinessRole.parse(role)
        c = spec.capitals
        if c is None or c == "sample":
            c = sample_capitals(role, rng)
        elif isinstance(c, CapitalRanges):
            c = c.sample(rng)
        elif not isinstance(c, Capitals):
            c = Capitals(**c) if isinstance(c, dict) else Capitals(*c)
        ids.append(spec.id)
        roles.append(ROLE_CODE[role])
        social.append(TAG_CODE[SocialTag(spec.social_role)])
        caps.append(c.as_array())

    index = {a: k for k, a in enumerate(ids)}
    ei, ej, tags, trust = [], [], [], []
    seen = set()
    for e in scenario.edges:
        for end in (e.i, e.j):
            if end not in index:
                raise NetworkError(f"edge {e.i}-{e.j} references missing agent {end!r}")
        if e.i == e.j:
            raise NetworkError(f"self-loop on {e.i!r}")
        key = frozenset((e.i, e.j))
        if key in seen:
            raise NetworkError(f"duplicate edge {e.i}-{e.j}")
        seen.add(key)
        tag = SocialTag(e.social_tag)
        t = e.trust
        if t is None or t == "sample":
            t = sample_trust(tag, rng)
        elif isinstance(t, tuple):
            t = float(rng.uniform(t[0], t[1]))
        elif not 0.0 <= t <= 1.0:
            raise NetworkError(f"trust {t!r} on edge {e.i}-{e.j} outside [0, 1]")
        ei.append(index[e.i])
        ej.append(index[e.j])
        tags.append(TAG_CODE[tag])
        trust.append(float(t))
    return NetworkState(ids, roles, social, np.array(caps), ei, ej, tags, trust)


def _adjacency(state: NetworkState) -> csr_matrix:
    live = state.alive
    i, j = state.edge_i[live], state.edge_j[live]
    n = state.n_agents
    data = np.ones(2 * len(i))
    return csr_matrix((data, (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n))


def hop_distances(state: NetworkState, source: int) -> np.ndarray:
    """Unweighted shortest-path lengths from ``source`` to every agent (inf if unreachable)."""
    d = shortest_path(_adjacency(state), method="D", unweighted=True, indices=source)
    d = np.asarray(d, dtype=float)
    d[~state.present] = np.inf
    return d


def distance(state: NetworkState, i: str, j: str) -> float:
    a, b = state.idx(i), state.idx(j)
    if not (state.present[a] and state.present[b]):
        raise NetworkError(f"agent {i if not state.present[a] else j!r} is not present")
    if a == b:
        return 0.0
    return float(hop_distances(state, a)[b])


def total_attribute_score(agent: Agent | Capitals, incident_trust: float) -> float:
    """Criminal + violence + financial capital + mean incident trust, equally weighted."""
    caps = agent.capitals if isinstance(agent, Agent) else agent
    return caps.criminal + caps.violence + caps.financial + incident_trust
