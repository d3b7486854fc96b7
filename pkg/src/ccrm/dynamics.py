"""Daily trust evolution, edge pruning and removal of isolated agents.

One call to :func:`trust_step` is one Euler-Maruyama step of length one
day::

    T <- clip(T + tau * (psi/(K+1) * 1/D * b(T) + F * phi * c(T) + eps), 0, 1)

with ``b(T) = T(1-T)``, ``c(T) = 1-T`` and ``eps ~ N(0, noise_scale**2)``.
``K`` counts days since the intervention and ``D`` is the (capped) hop
distance of the edge's nearer endpoint to the removed agent, taken from
the snapshot frozen at the intervention. Both reciprocals vanish before
the intervention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .netmodel import FAMILY_CODE, TAGS, NetworkState, TrustEdge

PRUNE_THRESHOLD = 0.1
ISOLATION_LIMIT = 7
DISTANCE_CAP = 5


def logistic_gain(t: np.ndarray) -> np.ndarray:
    """Post-removal gain ``T(1-T)``; zero at both ends of [0, 1]."""
    return t * (1.0 - t)


def pull_to_one(t: np.ndarray) -> np.ndarray:
    """Family gain ``1-T``."""
    return 1.0 - t


@dataclass(frozen=True)
class DynamicsParams:
    """Constants of the trust equation.

    Attributes
    ----------
    tau : float
        Step-scale constant (> 0).
    psi : float
        Strength of the post-removal term (>= 0).
    phi : float
        Strength of the family term (>= 0).
    noise_scale : float
        Standard deviation of the Gaussian increment (>= 0).
    b, c : callable
        Gain functions of the post-removal and family terms.
    """

    tau: float = 0.01
    psi: float = 3.0
    phi: float = 1.0
    noise_scale: float = 0.005
    b: Callable[[np.ndarray], np.ndarray] = logistic_gain
    c: Callable[[np.ndarray], np.ndarray] = pull_to_one

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        for name in ("psi", "phi", "noise_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


def inverse_k(k: float) -> float:
    return 0.0 if np.isinf(k) else 1.0 / (k + 1.0)


def inverse_d(d: np.ndarray) -> np.ndarray:
    """``1/min(d, 5)`` with ``1/inf = 0``; distances are >= 1 for live edges."""
    d = np.asarray(d, dtype=float)
    out = np.zeros_like(d)
    finite = np.isfinite(d) & (d > 0)
    out[finite] = 1.0 / np.minimum(d[finite], DISTANCE_CAP)
    return out


def drift(t, k, d, family, p: DynamicsParams):
    """Deterministic part of the per-step increment, before scaling by tau."""
    t = np.asarray(t, dtype=float)
    return (p.psi * inverse_k(k) * inverse_d(d) * p.b(t)
            + np.asarray(family, dtype=float) * p.phi * p.c(t))


def edge_distances(state: NetworkState, edges: np.ndarray | None = None) -> np.ndarray:
    """Snapshot distance of the nearer endpoint of each edge."""
    if edges is None:
        edges = np.arange(state.n_edges)
    sd = state.snapshot_distance
    return np.minimum(sd[state.edge_i[edges]], sd[state.edge_j[edges]])


def _edge_factors(state: NetworkState) -> tuple[np.ndarray, np.ndarray]:
    """Family indicator and ``1/D`` per edge slot, cached until edges or the snapshot change."""
    cached = getattr(state, "_factor_cache", None)
    if cached is None or cached[0][0] != state.n_edges or cached[0][1] is not state.snapshot_distance:
        family = (state.edge_tag == FAMILY_CODE).astype(float)
        inv_d = inverse_d(edge_distances(state))
        cached = ((state.n_edges, state.snapshot_distance), family, inv_d)
        state._factor_cache = cached
    return cached[1], cached[2]


def trust_step(state: NetworkState, p: DynamicsParams, rng: np.random.Generator,
               noise: bool = True) -> np.ndarray:
    """Advance every live trust by one day, in place.

    All increments are computed from the pre-step trusts and then applied,
    so the update does not depend on edge order. One Gaussian draw is made
    per edge slot (live or not) to keep the noise stream aligned across
    runs that prune differently.

    Returns
    -------
    numpy.ndarray
        Applied change per edge slot (zero for dead edges).
    """
    n = state.n_edges
    eps = rng.normal(0.0, p.noise_scale, size=n) if (noise and p.noise_scale > 0) else 0.0
    live = state.alive
    t = state.trust
    family, inv_d = _edge_factors(state)
    inc = p.phi * p.c(t) * family
    ik = inverse_k(state.K)
    if ik:
        inc = inc + p.psi * ik * inv_d * p.b(t)
    new = np.clip(t + p.tau * (inc + eps), 0.0, 1.0)
    delta = np.where(live, new - t, 0.0)
    state.trust = np.where(live, new, t)
    return delta


def _prune_edge_slots(state: NetworkState, threshold: float = PRUNE_THRESHOLD) -> np.ndarray:
    mask = state.alive & (state.trust < threshold)
    if not mask.any():
        return np.empty(0, dtype=np.intp)
    hit = np.flatnonzero(mask)
    state.alive[hit] = False
    return hit


def prune_edges(state: NetworkState, threshold: float = PRUNE_THRESHOLD) -> list[TrustEdge]:
    """Remove every live edge with trust strictly below ``threshold``."""
    hit = _prune_edge_slots(state, threshold)
    return [TrustEdge(state.ids[state.edge_i[e]], state.ids[state.edge_j[e]],
                      float(state.trust[e]), TAGS[state.edge_tag[e]]) for e in hit]


def prune_nodes(state: NetworkState, limit: int = ISOLATION_LIMIT) -> list[str]:
    """Count isolation days and remove agents isolated for ``limit`` consecutive steps."""
    isolated = state.present & (state.degree() == 0)
    if not isolated.any():
        if state.isolated_steps.any():
            state.isolated_steps[:] = 0
        return []
    state.isolated_steps = np.where(isolated, state.isolated_steps + 1, 0)
    gone = np.flatnonzero(isolated & (state.isolated_steps >= limit))
    for k in gone:
        state.remove_agent(int(k))
    return [state.ids[k] for k in gone]
