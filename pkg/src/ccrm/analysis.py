"""Hold-out validation, sensitivity, forward uncertainty, null baseline and profiles.

Every function takes the objective as a callable ``f(theta, seed=...)``
returning the mean failed-statement count (normally a
:class:`ccrm.calibrate.ModelObjective`), so the same code runs on the
model and on analytic test objectives.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .calibrate import PARAM_NAMES, Evaluation, FreeParams, bounds_array, run_seed
from .replacement import simulate
from .scenarios import Scenario
from .smoothing import linear_spline, smooth_1d
from .statements import score_case

Objective = Callable[..., float]

LOCAL_STEP = 0.05
PROFILE_SIGMA_FRACTION = 1.0 / 15.0


class AnalysisError(ValueError):
    """Invalid analysis input."""


def _index(param) -> int:
    if isinstance(param, str):
        if param not in PARAM_NAMES:
            raise AnalysisError(f"unknown parameter {param!r}")
        return PARAM_NAMES.index(param)
    k = int(param)
    if not 0 <= k < len(PARAM_NAMES):
        raise AnalysisError(f"parameter index {k} out of range")
    return k


def _eval(f: Objective, theta: FreeParams, seed: int) -> float:
    v = float(f(theta, seed=seed))
    if not math.isfinite(v):
        raise AnalysisError(f"objective returned {v}")
    return v


# -- validation --------------------------------------------------------------

@dataclass
class CaseValidation:
    case_id: str
    max_score: Fraction
    achieved: list[float]
    failed: list[int]

    @property
    def mean_achieved(self) -> float:
        return float(np.mean(self.achieved))

    @property
    def fraction(self) -> float:
        return self.mean_achieved / float(self.max_score)


@dataclass
class ValidationReport:
    theta: FreeParams
    cases: list[CaseValidation]
    training_fraction: float | None = None
    tolerance: float = 0.1

    @property
    def fraction(self) -> float:
        """Mean achieved score over the summed maxima of all hold-out cases."""
        total = sum(float(c.max_score) for c in self.cases)
        return sum(c.mean_achieved for c in self.cases) / total

    @property
    def passed(self) -> bool | None:
        """Validation score within ``tolerance`` of the training score, if one was given."""
        if self.training_fraction is None:
            return None
        return self.fraction >= self.training_fraction - self.tolerance

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.as_dict(),
            "cases": [{"case": c.case_id, "max": str(c.max_score), "mean_achieved": c.mean_achieved,
                       "fraction": c.fraction, "mean_failed": float(np.mean(c.failed))}
                      for c in self.cases],
            "fraction": self.fraction,
            "training_fraction": self.training_fraction,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def case_scores(scenario: Scenario, theta: FreeParams, runs: int, seed: int,
                kind: str = "validation", index: int = 0) -> CaseValidation:
    """Score ``runs`` seeded runs of one scenario against its ``kind`` statements."""
    statements = scenario.validation if kind == "validation" else scenario.training
    if not statements:
        raise AnalysisError(f"scenario {scenario.id!r} has no {kind} statements")
    params = theta.model_params()
    achieved, failed = [], []
    for r in range(runs):
        cs = score_case(statements, simulate(scenario, params, seed=run_seed(seed, index, r)))
        achieved.append(float(cs.achieved))
        failed.append(cs.failed_count)
    return CaseValidation(scenario.id, sum((s.max_score for s in statements), Fraction(0)), achieved, failed)


def training_fraction(theta: FreeParams, training: Sequence[Scenario], runs: int, seed: int) -> float:
    parts = [case_scores(sc, theta, runs, seed, "training", k) for k, sc in enumerate(training)]
    return sum(p.mean_achieved for p in parts) / sum(float(p.max_score) for p in parts)


def validate(theta: FreeParams, holdout: Sequence[Scenario], runs: int = 48, seed: int = 0,
             training: Sequence[Scenario] = (), tolerance: float = 0.1) -> ValidationReport:
    """Score the hold-out scenarios at a fixed parameter set.

    With ``training`` given, the training score at the same parameters and
    seed is computed too and the report says whether the hold-out score
    stays within ``tolerance`` of it. Nothing is fitted here.
    """
    holdout = list(holdout)
    if not holdout:
        raise AnalysisError("hold-out set is empty")
    overlap = {s.id for s in holdout} & {s.id for s in training}
    if overlap:
        raise AnalysisError(f"hold-out and training share scenarios: {sorted(overlap)}")
    cases = [case_scores(sc, theta, runs, seed, "validation", k) for k, sc in enumerate(holdout)]
    train = training_fraction(theta, training, runs, seed) if training else None
    return ValidationReport(theta, cases, train, tolerance)


# -- sensitivity -------------------------------------------------------------

def interquantile_width(values, low: float = 0.025, high: float = 0.975) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.quantile(v, high) - np.quantile(v, low))


def global_sensitivity(f: Objective, theta: FreeParams, param, samples: int = 20, seed: int = 0,
                       rng: np.random.Generator | None = None) -> tuple[float, np.ndarray, np.ndarray]:
    """Spread of the objective when one parameter sweeps its whole range.

    The parameter is drawn uniformly ``samples`` times over its box while
    the others stay at ``theta``; every evaluation uses master seed
    ``seed``. Returns ``(width, sampled values, objective values)`` where
    ``width`` is the distance between the 2.5 % and 97.5 % quantiles.
    """
    k = _index(param)
    if samples < 20:
        raise AnalysisError("global sensitivity needs at least 20 samples")
    lo, hi = theta.bounds[k]
    if hi <= lo:
        raise AnalysisError(f"parameter {PARAM_NAMES[k]} has a zero-width range")
    rng = rng or np.random.default_rng(np.random.SeedSequence([int(seed), k, 0x6105]))
    xs = rng.uniform(lo, hi, size=samples)
    ys = np.array([_eval(f, theta.with_value(PARAM_NAMES[k], x), seed) for x in xs])
    return interquantile_width(ys), xs, ys


def local_sensitivity(f: Objective, theta: FreeParams, param, seed: int = 0,
                      step: float = LOCAL_STEP, base: float | None = None) -> tuple[float, float]:
    """``(f(theta) - f(theta + s), f(theta) - f(theta - s))`` with ``s = step * range``.

    Perturbed values are clipped to the box; a side that clips back onto
    ``theta`` contributes exactly 0.
    """
    k = _index(param)
    name = PARAM_NAMES[k]
    lo, hi = theta.bounds[k]
    s = step * (hi - lo)
    f0 = _eval(f, theta, seed) if base is None else float(base)
    out = []
    for sign in (1.0, -1.0):
        x = float(np.clip(theta[name] + sign * s, lo, hi))
        out.append(0.0 if x == theta[name] else f0 - _eval(f, theta.with_value(name, x), seed))
    return out[0], out[1]


def _rank(scores: Mapping[str, float]) -> list[str]:
    return sorted(scores, key=lambda n: (-scores[n], PARAM_NAMES.index(n)))


@dataclass
class SensitivityReport:
    theta: FreeParams
    global_width: dict[str, float]
    local: dict[str, tuple[float, float]]
    base_value: float
    samples: int
    seed: int
    global_samples: dict[str, list[tuple[float, float]]] = field(default_factory=dict)

    @property
    def local_magnitude(self) -> dict[str, float]:
        return {n: max(abs(a), abs(b)) for n, (a, b) in self.local.items()}

    @property
    def global_ranking(self) -> list[str]:
        return _rank(self.global_width)

    @property
    def local_ranking(self) -> list[str]:
        return _rank(self.local_magnitude)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta.as_dict(),
            "seed": self.seed,
            "samples": self.samples,
            "base_value": self.base_value,
            "global_width": self.global_width,
            "local": {n: {"plus": a, "minus": b} for n, (a, b) in self.local.items()},
            "global_ranking": self.global_ranking,
            "local_ranking": self.local_ranking,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def sensitivity_report(f: Objective, theta: FreeParams, samples: int = 20, seed: int = 0,
                       params: Sequence[str] = PARAM_NAMES) -> SensitivityReport:
    """Global widths and local one-sided differences for every parameter."""
    base = _eval(f, theta, seed)
    widths, local, raw = {}, {}, {}
    for name in params:
        w, xs, ys = global_sensitivity(f, theta, name, samples, seed)
        widths[name] = w
        raw[name] = [(float(x), float(y)) for x, y in zip(xs, ys)]
        local[name] = local_sensitivity(f, theta, name, seed, base=base)
    return SensitivityReport(theta, widths, local, base, samples, seed, raw)


# -- forward uncertainty -----------------------------------------------------

def inverse_weights(values) -> np.ndarray:
    """Resampling weights ``1 / (1 + f)``, normalized to sum to one."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise AnalysisError("no objective values")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise AnalysisError("objective values must be finite and non-negative")
    w = 1.0 / (1.0 + v)
    return w / w.sum()


@dataclass
class UQResult:
    """Outcome distributions of resampled parameter sets, per scenario."""

    successors: dict[str, dict[str, float]]
    time_to_replacement: dict[str, np.ndarray]
    final_mean_trust: dict[str, np.ndarray]
    parameters: np.ndarray
    weights: np.ndarray

    def to_dict(self) -> dict:
        def stats(a):
            a = np.asarray(a, dtype=float)
            ok = a[np.isfinite(a)]
            return {"n": int(a.size), "missing": int(a.size - ok.size),
                    "mean": float(ok.mean()) if ok.size else None,
                    "quantiles": {q: float(np.quantile(ok, float(q))) for q in ("0.05", "0.5", "0.95")}
                    if ok.size else {}}
        return {
            "successors": self.successors,
            "time_to_replacement": {k: stats(v) for k, v in self.time_to_replacement.items()},
            "final_mean_trust": {k: stats(v) for k, v in self.final_mean_trust.items()},
            "draws": int(len(self.parameters)),
        }


def forward_uq(scenarios: Sequence[Scenario], thetas: Sequence[FreeParams], values: Sequence[float],
               draws: int = 100, seed: int = 0, freeze: Mapping[str, float] | None = None) -> UQResult:
    """Propagate parameter uncertainty into model outcomes.

    ``thetas`` and ``values`` are at least 100 evaluated parameter sets
    (for example an SPSA log). ``draws`` sets are resampled with weight
    ``1 / (1 + f)``; each is simulated once per scenario. Parameters named
    in ``freeze`` are pinned to the given values. Outcomes are the
    successor's identity (``"none"`` when nobody was instated), the days
    from removal to the first instatement (NaN when none) and the mean
    trust of live edges at the end.
    """
    thetas = list(thetas)
    if len(thetas) < 100:
        raise AnalysisError("forward UQ needs at least 100 evaluated parameter sets")
    if len(values) != len(thetas):
        raise AnalysisError("one objective value per parameter set is required")
    w = inverse_weights(values)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x0F0A]))
    pick = rng.choice(len(thetas), size=draws, p=w)
    chosen = []
    for j in pick:
        t = thetas[j]
        for name, v in (freeze or {}).items():
            t = t.with_value(name, v)
        chosen.append(t)
    successors: dict[str, dict[str, float]] = {}
    ttr, trust = {}, {}
    for k, sc in enumerate(scenarios):
        counts: dict[str, int] = {}
        times, means = [], []
        for d, t in enumerate(chosen):
            tr = simulate(sc, t.model_params(), seed=run_seed(seed, k, d))
            inst = tr.events_of("instatement")
            who = inst[0].payload["agent"] if inst else "none"
            counts[who] = counts.get(who, 0) + 1
            times.append(inst[0].step - tr.intervention_step if inst else math.nan)
            row = tr.trust[-1]
            means.append(float(np.nanmean(row)) if np.isfinite(row).any() else math.nan)
        successors[sc.id] = {a: counts[a] / draws for a in sorted(counts)}
        ttr[sc.id] = np.asarray(times)
        trust[sc.id] = np.asarray(means)
    return UQResult(successors, ttr, trust, np.array([t.values for t in chosen]), w)


# -- null baseline -----------------------------------------------------------

@dataclass
class BaselineResult:
    optimum_value: float
    random_values: np.ndarray
    random_thetas: np.ndarray
    alpha: float = 0.05

    @property
    def at_least_as_good(self) -> int:
        return int(np.sum(self.random_values <= self.optimum_value))

    @property
    def p_value(self) -> float:
        """``(1 + #{random <= optimum}) / (M + 1)``: one-sided, ties count against the optimum."""
        return (1 + self.at_least_as_good) / (len(self.random_values) + 1)

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha

    def to_dict(self) -> dict:
        return {
            "optimum_value": self.optimum_value,
            "models": int(len(self.random_values)),
            "at_least_as_good": self.at_least_as_good,
            "p_value": self.p_value,
            "significant": self.significant,
            "alpha": self.alpha,
            "random_values": [float(v) for v in self.random_values],
        }


def null_baseline(f: Objective, theta: FreeParams, models: int = 200, seed: int = 0,
                  optimum_value: float | None = None, alpha: float = 0.05) -> BaselineResult:
    """Compare the optimum against ``models`` parameter sets drawn uniformly in the box.

    All models, and the optimum, are scored with the same master seed.
    """
    if models < 100:
        raise AnalysisError("the null baseline needs at least 100 random models")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBA5E]))
    b = theta.bounds
    u = rng.random((models, len(PARAM_NAMES)))
    thetas = b[:, 0] + u * (b[:, 1] - b[:, 0])
    vals = np.array([_eval(f, FreeParams(tuple(t), b), seed) for t in thetas])
    f_star = _eval(f, theta, seed) if optimum_value is None else float(optimum_value)
    return BaselineResult(f_star, vals, thetas, alpha)


# -- profiles ----------------------------------------------------------------

@dataclass
class ProfilePoints:
    parameter: str
    centers: np.ndarray
    means: np.ndarray
    sem: np.ndarray
    counts: np.ndarray
    smoothed: np.ndarray
    sigma: float

    @property
    def used(self) -> np.ndarray:
        return self.counts >= 2

    def spline(self):
        """First-order interpolating spline through the smoothed points of used bins."""
        m = self.used
        if m.sum() < 2:
            raise AnalysisError("need at least two populated bins for a spline")
        return linear_spline(self.centers[m], self.smoothed[m])

    def rows(self):
        for c, m, s, n, sm in zip(self.centers, self.means, self.sem, self.counts, self.smoothed):
            yield float(c), float(m), float(s), int(n), float(sm)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["center", "mean", "sem", "count", "smoothed"])
            for row in self.rows():
                w.writerow([repr(row[0]), repr(row[1]), repr(row[2]), row[3], repr(row[4])])


def profile_1d(log: Sequence[Evaluation], param, bins: int = 15, bounds=None) -> ProfilePoints:
    """Binned mean objective along one parameter, smoothed with reflection.

    Bins split the parameter's box into ``bins`` equal parts. A bin is used
    when it holds at least two evaluations (so its standard error exists);
    unused bins report NaN. The Gaussian filter has a standard deviation of
    one fifteenth of the box width, converted to bins.
    """
    if not log:
        raise AnalysisError("empty evaluation log")
    if bins < 2:
        raise AnalysisError("need at least two bins")
    k = _index(param)
    b = bounds_array(bounds)
    lo, hi = b[k]
    if hi <= lo:
        raise AnalysisError(f"parameter {PARAM_NAMES[k]} has a zero-width range")
    x = np.array([e.theta[k] for e in log], dtype=float)
    y = np.array([e.value for e in log], dtype=float)
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins)
    means = np.full(bins, np.nan)
    sem = np.full(bins, np.nan)
    for j in range(bins):
        v = y[idx == j]
        if len(v) >= 2:
            means[j] = v.mean()
            sem[j] = v.std(ddof=1) / math.sqrt(len(v))
    if not np.isfinite(means).any():
        raise AnalysisError("no bin holds two or more evaluations")
    width = (hi - lo) / bins
    sigma = PROFILE_SIGMA_FRACTION * (hi - lo) / width
    centers = 0.5 * (edges[:-1] + edges[1:])
    return ProfilePoints(PARAM_NAMES[k], centers, means, sem, counts, smooth_1d(means, sigma), sigma)
