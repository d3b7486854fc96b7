"""Disruption and replacement stage machine.

After the intervention removes the target, the network passes through
``intervention -> who-done-it -> cooldown -> stable``. A conclave of
organizer-group orphans forms 10 to 30 days after the removal, searches
(with helpers reached over trusted edges) for candidates, picks a
designate by a softmax draw over total attribute scores and, once the
promotion window opens, instates the designate if it meets the final
capital thresholds. The successor takes over the vacated role and about
70% of the old connections, every orphan included.

Each run draws from independent random streams (see :class:`RunStreams`)
so that changing one mechanism does not shift the draws of another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .dynamics import (ISOLATION_LIMIT, DynamicsParams, _prune_edge_slots,
                       prune_nodes, trust_step)
from .netmodel import (INTERVENTION_ROLES, ROLE_CODE, ROLES, TAG_CODE, Activity,
                       BusinessRole, Mindset, NetworkState, RoleGroup, SocialTag,
                       Stage, build_network, hop_distances, sample_trust)
from .trace import STAGE_CODE, Event, SimulationTrace, event_payload

if TYPE_CHECKING:
    from .scenarios import Scenario

_R = BusinessRole

# (criminal, violence, financial)
DEFAULT_FINAL_THRESHOLDS: dict[BusinessRole, tuple[float, float, float]] = {
    _R.KINGPIN: (0.5, 0.5, 0.4),
    _R.MURDERBROKER: (0.5, 0.85, 0.2),
}
DEFAULT_CANDIDATE_MINIMUMS: dict[BusinessRole, tuple[float, float, float]] = {
    _R.KINGPIN: (0.2, 0.2, 0.2),
    _R.MURDERBROKER: (0.2, 0.1, 0.2),
}


class ReplacementError(ValueError):
    """Invalid replacement operation (bad target, empty candidate list, ...)."""


@dataclass(frozen=True)
class ReplacementParams:
    """Thresholds and timing of the replacement process.

    ``kappa`` multiplies both the final thresholds and the candidate
    minimums, so ``kappa = 0`` opens the role to anyone and ``kappa = 1``
    applies the base triples. ``zeta = None`` draws the selection
    temperature uniformly from (0, 1) once per run.
    """

    beta: float = 0.5
    gamma: float = 0.3
    kappa: float = 1.0
    zeta: float | None = None
    final_thresholds: Mapping[BusinessRole, tuple] = field(
        default_factory=lambda: dict(DEFAULT_FINAL_THRESHOLDS))
    candidate_minimums: Mapping[BusinessRole, tuple] = field(
        default_factory=lambda: dict(DEFAULT_CANDIDATE_MINIMUMS))
    conclave_window: tuple[int, int] = (10, 30)
    promotion_window: tuple[int, int] = (25, 45)
    search_radius: int = 5
    searcher_roles: frozenset = frozenset({_R.ORGANIZER, _R.COORDINATOR})
    candidate_roles: frozenset = frozenset({_R.ORGANIZER, _R.MURDERBROKER, _R.ASSASSIN,
                                            _R.COORDINATOR})
    conclave_distance: int = 1
    rewire_fraction: float = 0.7
    new_edge_social_tag: SocialTag = SocialTag.NEUTRAL
    isolation_limit: int = ISOLATION_LIMIT
    refill_window: int = 20

    def __post_init__(self):
        for name in ("beta", "gamma"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if self.zeta is not None and self.zeta < 0:
            raise ValueError(f"zeta must be >= 0, got {self.zeta}")
        lo, hi = self.conclave_window
        plo, phi = self.promotion_window
        if not (0 <= lo <= hi <= phi and plo <= phi):
            raise ValueError("conclave window must open before the promotion window closes")

    def final_threshold(self, role: BusinessRole) -> np.ndarray:
        return self.kappa * np.asarray(self.final_thresholds[role], dtype=float)

    def candidate_minimum(self, role: BusinessRole) -> np.ndarray:
        return self.kappa * np.asarray(self.candidate_minimums[role], dtype=float)


@dataclass(frozen=True)
class ModelParams:
    """Everything a run needs besides the scenario."""

    dynamics: DynamicsParams = field(default_factory=DynamicsParams)
    replacement: ReplacementParams = field(default_factory=ReplacementParams)

    def with_values(self, **kw) -> "ModelParams":
        """Copy with named scalar fields of either part replaced."""
        dyn = {k: v for k, v in kw.items() if k in DynamicsParams.__dataclass_fields__}
        rep = {k: v for k, v in kw.items() if k in ReplacementParams.__dataclass_fields__}
        unknown = set(kw) - set(dyn) - set(rep)
        if unknown:
            raise KeyError(f"unknown parameter(s) {sorted(unknown)}")
        return ModelParams(replace(self.dynamics, **dyn), replace(self.replacement, **rep))


@dataclass(frozen=True)
class Conclave:
    members: tuple[str, ...]
    formed_at: int
    searchers: tuple[str, ...] = ()
    candidates: tuple[tuple[str, float], ...] = ()


@dataclass
class Timeline:
    """Per-run replacement bookkeeping."""

    conclave_step: int
    promotion_start: int
    window_end: int
    zeta: float
    conclave: Conclave | None = None
    searching: bool = False
    designate: int | None = None
    rejected: set = field(default_factory=set)
    successor: int | None = None
    successor_prior_role: int | None = None
    first_instatement: int | None = None
    stable_at: int | None = None
    halted: bool = False


@dataclass
class RunStreams:
    """Independent random streams of one run."""

    build: np.random.Generator
    noise: np.random.Generator
    timing: np.random.Generator
    selection: np.random.Generator
    rewire: np.random.Generator

    @classmethod
    def from_seed(cls, seed) -> "RunStreams":
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        return cls(*(np.random.default_rng(s) for s in ss.spawn(5)))

    @classmethod
    def shared(cls, rng: np.random.Generator) -> "RunStreams":
        return cls(rng, rng, rng, rng, rng)


def _streams(rng) -> RunStreams:
    if isinstance(rng, RunStreams):
        return rng
    if isinstance(rng, np.random.Generator):
        return RunStreams.shared(rng)
    return RunStreams.from_seed(rng)


def round_half_up(fraction: float, n: int) -> int:
    """``round(fraction * n)`` with halves rounded up, in exact arithmetic."""
    return math.floor(Fraction(str(fraction)) * n + Fraction(1, 2))


# -- events ------------------------------------------------------------------
def _emit(state: NetworkState, event_type: str, **payload) -> None:
    state.events.append(Event(state.step, event_type, event_payload(**payload)))


def _set_stage(state: NetworkState, stage: Stage) -> None:
    _emit(state, "stage", **{"from": state.stage.value, "to": stage.value})
    state.stage = stage


def _names(state: NetworkState, idx) -> list[str]:
    return [state.ids[int(k)] for k in idx]


# -- operations --------------------------------------------------------------
def apply_intervention(state: NetworkState, target: str) -> NetworkState:
    """Remove ``target`` and its edges and mark its former neighbours.

    Distance-1 neighbours become aware; those tied by family or friendship
    become orphans (mindset chaotic), the others turn uncertain. Hop
    distances to the target are frozen for the trust equation.
    """
    k = state.idx(target)
    if not state.present[k]:
        raise ReplacementError(f"intervention target {target!r} is not present")
    role = ROLES[state.role[k]]
    if role not in INTERVENTION_ROLES:
        raise ReplacementError(f"{target!r} holds role {role.value}, not an intervention role")
    if state.removed_target is not None:
        raise ReplacementError("an intervention was already applied in this run")

    state.snapshot_distance = hop_distances(state, k)
    edges = state.incident(k)
    nbrs = np.where(state.edge_i[edges] == k, state.edge_j[edges], state.edge_i[edges])
    close_tie = state.edge_tag[edges] != TAG_CODE[SocialTag.NEUTRAL]
    state.aware[nbrs] = True
    state.orphan[nbrs[close_tie]] = True
    state.mindset[nbrs] = list(Mindset).index(Mindset.UNCERTAIN)
    state.mindset[nbrs[close_tie]] = list(Mindset).index(Mindset.CHAOTIC)
    state.former_degree = len(edges)
    state.former_neighbors = sorted(int(x) for x in nbrs)
    state.remove_agent(k)
    state.removal_step = state.step
    state.removed_target = target
    state.removed_role = role

    _set_stage(state, Stage.INTERVENTION)
    _emit(state, "intervention", target=target, role=role.value,
          removed_edges=len(edges), orphans=_names(state, np.flatnonzero(state.orphan)),
          aware=_names(state, np.flatnonzero(state.aware)))
    _set_stage(state, Stage.WHO_DONE_IT)
    return state


def _recruit_searchers(state: NetworkState, members: Sequence[int], p: ReplacementParams) -> list[int]:
    searcher_codes = {ROLE_CODE[r] for r in p.searcher_roles}
    ok_role = np.isin(state.role, list(searcher_codes)) & state.present
    in_radius = state.snapshot_distance <= p.search_radius
    found = [m for m in members if ok_role[m]]
    seen = set(found)
    frontier = list(found)
    trusted = state.alive & (state.trust >= p.beta)
    while frontier:
        nxt = []
        for s in frontier:
            e = np.flatnonzero(trusted & ((state.edge_i == s) | (state.edge_j == s)))
            for o in np.where(state.edge_i[e] == s, state.edge_j[e], state.edge_i[e]):
                o = int(o)
                if o not in seen and ok_role[o] and in_radius[o]:
                    seen.add(o)
                    nxt.append(o)
        frontier = nxt
    return sorted(seen)


def form_conclave(state: NetworkState, p: ReplacementParams, rng=None) -> Conclave:
    """Gather the organizer-group orphans still present and recruit helpers.

    Searchers are the members holding a searcher role plus every
    searcher-role agent reachable from them over edges with trust >= beta
    inside the search radius. The stage moves to cooldown and members
    start searching. An empty member set is returned as is; the caller
    records the disintegration.
    """
    organizer = [ROLE_CODE[r] for r in BusinessRole if r.group is RoleGroup.ORGANIZER]
    eligible = (state.present & state.orphan & np.isin(state.role, organizer)
                & (state.snapshot_distance <= p.conclave_distance))
    members = [int(k) for k in np.flatnonzero(eligible)]
    if state.stage is Stage.WHO_DONE_IT:
        _set_stage(state, Stage.COOLDOWN)
    searchers = _recruit_searchers(state, members, p) if members else []
    state.activity[members] = list(Activity).index(Activity.SEARCHING)
    state.activity[searchers] = list(Activity).index(Activity.SEARCHING)
    conclave = Conclave(tuple(_names(state, members)), state.step, tuple(_names(state, searchers)))
    _emit(state, "conclave", members=list(conclave.members), searchers=list(conclave.searchers))
    return conclave


def enumerate_candidates(state: NetworkState, conclave: Conclave, p: ReplacementParams,
                         exclude: Sequence[str] = ()) -> list[tuple[str, float]]:
    """Candidates for the vacated role with their total attribute scores.

    Gates, in order: candidate role, snapshot distance within the search
    radius, suggested by another searcher over an edge with trust >=
    gamma, capitals at or above the kappa-scaled candidate minimums.
    Returned sorted by agent id.
    """
    vacated = state.removed_role or BusinessRole.KINGPIN
    minimum = p.candidate_minimum(vacated)
    searchers = {state.idx(s) for s in conclave.searchers if state.present[state.idx(s)]}
    excluded = {state.idx(x) for x in exclude}
    codes = [ROLE_CODE[r] for r in p.candidate_roles]
    pool = np.flatnonzero(state.present & np.isin(state.role, codes)
                          & (state.snapshot_distance <= p.search_radius))
    suggest = state.alive & (state.trust >= p.gamma)
    out = []
    for c in pool:
        c = int(c)
        if c in excluded:
            continue
        e = np.flatnonzero(suggest & ((state.edge_i == c) | (state.edge_j == c)))
        others = np.where(state.edge_i[e] == c, state.edge_j[e], state.edge_i[e])
        if not any(int(o) in searchers and int(o) != c for o in others):
            continue
        if np.any(state.capitals[c] < minimum):
            continue
        score = float(state.capitals[c].sum()) + state.mean_incident_trust(c)
        out.append((state.ids[c], score))
    out.sort(key=lambda x: x[0])
    return out


def selection_probabilities(scores: Sequence[float], zeta: float) -> np.ndarray:
    """Softmax of ``scores / zeta``; ``zeta = 0`` puts all mass on the first maximum."""
    s = np.asarray(scores, dtype=float)
    if len(s) == 0:
        raise ReplacementError("no candidates")
    if zeta == 0:
        w = np.zeros_like(s)
        w[int(np.argmax(s))] = 1.0
        return w
    w = np.exp((s - s.max()) / zeta)
    return w / w.sum()


def select_kingpin(candidates: Sequence[tuple[str, float]], zeta: float,
                   rng: np.random.Generator) -> str:
    """Draw one candidate with probability proportional to ``exp(score / zeta)``.

    Candidates are ordered by id first, so at ``zeta = 0`` ties go to the
    lexicographically smallest id. One uniform number is consumed per call
    whatever the temperature.
    """
    if not candidates:
        raise ReplacementError("no candidates to select from")
    if zeta < 0:
        raise ValueError("zeta must be >= 0")
    ordered = sorted(candidates, key=lambda x: x[0])
    prob = selection_probabilities([s for _, s in ordered], zeta)
    u = rng.random()
    k = int(np.searchsorted(np.cumsum(prob), u, side="right"))
    return ordered[min(k, len(ordered) - 1)][0]


def meets_final(state: NetworkState, agent: str, p: ReplacementParams,
                role: BusinessRole | None = None) -> bool:
    role = role or state.removed_role or BusinessRole.KINGPIN
    return bool(np.all(state.capitals[state.idx(agent)] >= p.final_threshold(role)))


def instate_kingpin(state: NetworkState, chosen: str, p: ReplacementParams,
                    rng: np.random.Generator) -> NetworkState:
    """Make ``chosen`` the holder of the vacated role and rewire it.

    The successor keeps or gains edges to ``max(round(0.7 * d), n_orphans)``
    counterparts, where ``d`` is the removed agent's degree: every present
    orphan first, then former neighbours drawn uniformly, then other
    present agents drawn uniformly if still short. Existing edges to
    counterparts keep their trust; new ones get the neutral tag and a trust
    drawn from its range. All other edges of the successor are dropped.
    """
    k = state.idx(chosen)
    if not state.present[k]:
        raise ReplacementError(f"{chosen!r} is not present")
    role = state.removed_role or BusinessRole.KINGPIN
    if not meets_final(state, chosen, p, role):
        raise ReplacementError(f"{chosen!r} does not meet the final thresholds for {role.value}")

    present = state.present
    orphans = [int(o) for o in np.flatnonzero(state.orphan & present) if o != k]
    orphan_set = set(orphans)
    former = [f for f in state.former_neighbors if present[f] and f != k and f not in orphan_set]
    taken = orphan_set | set(former) | {k}
    others = [int(a) for a in np.flatnonzero(present) if int(a) not in taken]
    quota = max(round_half_up(p.rewire_fraction, state.former_degree), len(orphans))
    quota = min(quota, len(orphans) + len(former) + len(others))
    need = quota - len(orphans)
    pick_former = sorted(rng.choice(former, size=min(need, len(former)), replace=False).tolist()) if need > 0 and former else []
    need -= len(pick_former)
    pick_other = sorted(rng.choice(others, size=need, replace=False).tolist()) if need > 0 else []
    counterparts = orphans + pick_former + pick_other

    mine = state.incident(k)
    mine_other = np.where(state.edge_i[mine] == k, state.edge_j[mine], state.edge_i[mine])
    keep = set()
    for e, o in zip(mine, mine_other):
        if int(o) in counterparts:
            keep.add(int(o))
        else:
            state.alive[e] = False
    new = [c for c in counterparts if c not in keep]
    trusts = [sample_trust(p.new_edge_social_tag, rng) for _ in new]
    state.add_edges([(k, c) for c in new], p.new_edge_social_tag, trusts)

    prior = ROLES[state.role[k]]
    state.role[k] = ROLE_CODE[role]
    state.mindset[:] = list(Mindset).index(Mindset.NEUTRAL)
    state.activity[:] = list(Activity).index(Activity.NORMAL)
    state.isolated_steps[k] = 0
    _emit(state, "instatement", agent=chosen, role=role.value, prior_role=prior.value,
          counterparts=_names(state, counterparts), new_edges=len(new), quota=quota)
    tl = state.timeline
    if tl is not None:
        tl.successor = k
        tl.successor_prior_role = ROLE_CODE[prior]
        if tl.first_instatement is None:
            tl.first_instatement = state.step
    return state


def evaluate_fitness(state: NetworkState, p: ReplacementParams) -> list[Event]:
    """Check the instated successor against the final thresholds.

    A failure demotes the successor to its prior role and reopens the
    search: the stage runs intervention -> who-done-it again, a conclave
    re-forms next step and the vacancy must be refilled within
    ``refill_window`` days.
    """
    tl = state.timeline
    if tl is None or tl.successor is None or not state.present[tl.successor]:
        return []
    k = tl.successor
    if meets_final(state, state.ids[k], p):
        return []
    before = len(state.events)
    _emit(state, "fitness", agent=state.ids[k], passed=False,
          capitals=state.capitals[k].tolist(),
          thresholds=p.final_threshold(state.removed_role or BusinessRole.KINGPIN).tolist())
    state.role[k] = tl.successor_prior_role
    tl.successor = None
    tl.designate = None
    tl.rejected.add(k)
    tl.halted = False
    tl.stable_at = None
    tl.conclave_step = state.step + 1
    tl.promotion_start = state.step + 1
    tl.window_end = state.step + p.refill_window
    _set_stage(state, Stage.INTERVENTION)
    _set_stage(state, Stage.WHO_DONE_IT)
    return state.events[before:]


def _disintegrate(state: NetworkState, reason: str) -> None:
    tl = state.timeline
    _emit(state, "disintegration", reason=reason)
    tl.halted = True
    tl.searching = False
    tl.designate = None
    if state.stage is Stage.WHO_DONE_IT:
        _set_stage(state, Stage.COOLDOWN)
    tl.stable_at = state.step + 1


def _start_timeline(state: NetworkState, p: ReplacementParams, streams: RunStreams, zeta: float) -> None:
    lo, hi = p.conclave_window
    plo, phi = p.promotion_window
    delay = int(streams.timing.integers(lo, hi + 1))
    promo = int(streams.timing.integers(max(plo, delay), phi + 1))
    t0 = state.step
    state.conclave_deadline = (t0 + lo, t0 + hi)
    state.promotion_window = (t0 + max(plo, delay), t0 + phi)
    state.timeline = Timeline(conclave_step=t0 + delay, promotion_start=t0 + promo,
                              window_end=t0 + phi, zeta=zeta)


def _replacement_events(state: NetworkState, p: ReplacementParams, streams: RunStreams) -> None:
    tl = state.timeline
    if tl is None:
        return
    t = state.step
    if state.stage is Stage.COOLDOWN and tl.stable_at is not None and t >= tl.stable_at:
        _set_stage(state, Stage.STABLE)
        tl.stable_at = None
    if tl.halted:
        return
    if state.stage is Stage.STABLE:
        evaluate_fitness(state, p)
        return
    if state.stage is Stage.WHO_DONE_IT and t >= tl.conclave_step:
        tl.conclave = form_conclave(state, p)
        if not tl.conclave.members:
            _disintegrate(state, "no eligible conclave members")
            return
        tl.searching = True
    if state.stage is not Stage.COOLDOWN or not tl.searching:
        return
    if tl.designate is None:
        cands = enumerate_candidates(state, tl.conclave, p, exclude=_names(state, tl.rejected))
        _emit(state, "candidacy", candidates=[[a, s] for a, s in cands])
        if cands:
            chosen = select_kingpin(cands, tl.zeta, streams.selection)
            tl.designate = state.idx(chosen)
            _emit(state, "selection", agent=chosen, zeta=tl.zeta)
    if tl.designate is not None and t >= tl.promotion_start:
        name = state.ids[tl.designate]
        if state.present[tl.designate] and meets_final(state, name, p):
            instate_kingpin(state, name, p, streams.rewire)
            tl.searching = False
            tl.designate = None
            tl.stable_at = t + 1
            return
        _emit(state, "rejection", agent=name, present=bool(state.present[tl.designate]))
        tl.rejected.add(tl.designate)
        tl.designate = None
    if tl.searching and t >= tl.window_end:
        _disintegrate(state, "no successor within the promotion window")


def step(state: NetworkState, params: ModelParams, rng, intervention: tuple[str, int] | None = None,
         noise: bool = True) -> NetworkState:
    """Advance one day: stage events, trust update, edge pruning, node pruning.

    ``intervention`` is ``(target, step)``; the removal happens at the start
    of that step. Removed agents and edges are logged as events.
    """
    streams = _streams(rng)
    rp = params.replacement
    if intervention is not None and state.step == intervention[1] and state.removed_target is None:
        apply_intervention(state, intervention[0])
        zeta = rp.zeta if rp.zeta is not None else float(streams.timing.uniform(0.0, 1.0))
        _start_timeline(state, rp, streams, zeta)
    _replacement_events(state, rp, streams)
    trust_step(state, params.dynamics, streams.noise, noise=noise)
    cut = _prune_edge_slots(state)
    if len(cut):
        _emit(state, "edges-pruned",
              edges=[[state.ids[state.edge_i[e]], state.ids[state.edge_j[e]]] for e in cut])
    gone = prune_nodes(state, rp.isolation_limit)
    if gone:
        _emit(state, "agents-removed", agents=gone)
    return state


def simulate(scenario: "Scenario", params: ModelParams | None = None, seed=0,
             horizon: int | None = None, noise: bool = True) -> SimulationTrace:
    """Run one scenario from initialisation to the horizon and return its trace."""
    params = params or ModelParams()
    streams = _streams(seed)
    state = build_network(scenario, streams.build)
    horizon = int(horizon if horizon is not None else scenario.horizon)
    target, t_int = scenario.intervention.target, scenario.intervention.step
    n = state.n_agents
    cap = state.n_edges + n
    roles = np.zeros((horizon, n), dtype=np.int16)
    present = np.zeros((horizon, n), dtype=bool)
    capitals = np.zeros((horizon, n, 3))
    trust = np.full((horizon, cap), np.nan)
    stage = np.zeros(horizon, dtype=np.int8)
    for t in range(horizon):
        state.step = t
        step(state, params, streams, (target, t_int), noise=noise)
        roles[t] = state.role
        present[t] = state.present
        capitals[t] = state.capitals
        m = state.n_edges
        if m > trust.shape[1]:
            trust = np.concatenate([trust, np.full((horizon, m - trust.shape[1] + n), np.nan)], axis=1)
        trust[t, :m] = np.where(state.alive, state.trust, np.nan)
        stage[t] = STAGE_CODE[state.stage]
    m = state.n_edges
    tl = state.timeline
    meta = {"zeta": tl.zeta if tl else None}
    return SimulationTrace(
        scenario_id=scenario.id,
        agent_ids=list(state.ids),
        edge_i=state.edge_i.copy(), edge_j=state.edge_j.copy(), edge_tag=state.edge_tag.copy(),
        roles=roles, present=present, capitals=capitals, trust=trust[:, :m], stage=stage,
        orphan=state.orphan.copy(), aware=state.aware.copy(), events=list(state.events),
        intervention_step=state.removal_step, target=state.removed_target,
        vacated_role=state.removed_role, meta=meta,
    )
