"""Training objective, SPSA optimizer and 2-D landscape slices.

The seven free parameters, in order, are the search-trust threshold
``beta``, the capital-threshold multiplier ``kappa``, the suggestion-trust
threshold ``gamma``, the trust time scale ``tau``, the post-removal
strength ``psi``, the family strength ``phi`` and the selection
temperature ``zeta``.

The objective of a parameter vector is the mean number of failed
statements per run, averaged over ``runs`` seeded simulations of every
scenario. Run ``r`` of scenario ``s`` under master seed ``m`` is seeded
with ``SeedSequence([m, s, r])``, so an objective value depends only on
the parameters and the master seed, never on the number of worker
processes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .replacement import ModelParams, simulate
from .scenarios import Scenario
from .smoothing import covariance_to_cells, smooth_2d
from .statements import failed_count

log = logging.getLogger(__name__)

PARAM_NAMES: tuple[str, ...] = ("beta", "kappa", "gamma", "tau", "psi", "phi", "zeta")
DEFAULT_BOUNDS: dict[str, tuple[float, float]] = {
    "beta": (0.0, 1.0),
    "kappa": (0.0, 1.5),
    "gamma": (0.0, 1.0),
    "tau": (0.001, 0.1),
    "psi": (0.0, 10.0),
    "phi": (0.0, 10.0),
    "zeta": (0.0, 1.0),
}
DEFAULT_START: dict[str, float] = {
    "beta": 0.5, "kappa": 1.0, "gamma": 0.3, "tau": 0.01, "psi": 3.0, "phi": 1.0, "zeta": 0.5,
}


class CalibrationError(ValueError):
    """Invalid objective or optimizer input."""


def bounds_array(bounds: Mapping[str, Sequence[float]] | np.ndarray | None = None) -> np.ndarray:
    """``(7, 2)`` array of ``[low, high]`` rows in :data:`PARAM_NAMES` order.

    A mapping may override a subset of the defaults.
    """
    if bounds is None:
        bounds = {}
    if isinstance(bounds, Mapping):
        unknown = set(bounds) - set(PARAM_NAMES)
        if unknown:
            raise CalibrationError(f"unknown parameter(s) in bounds: {sorted(unknown)}")
        out = np.array([bounds.get(n, DEFAULT_BOUNDS[n]) for n in PARAM_NAMES], dtype=float)
    else:
        out = np.asarray(bounds, dtype=float)
    if out.shape != (len(PARAM_NAMES), 2):
        raise CalibrationError(f"bounds must have shape (7, 2), got {out.shape}")
    if not np.all(np.isfinite(out)):
        raise CalibrationError("bounds must be finite")
    if np.any(out[:, 1] < out[:, 0]):
        raise CalibrationError("every lower bound must not exceed its upper bound")
    return out


@dataclass(frozen=True)
class FreeParams:
    """A point in the seven-dimensional calibration box."""

    values: tuple[float, ...]
    bounds: np.ndarray = field(default_factory=bounds_array, compare=False, repr=False)

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if len(v) != len(PARAM_NAMES):
            raise CalibrationError(f"expected {len(PARAM_NAMES)} values, got {len(v)}")
        b = bounds_array(self.bounds)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "bounds", b)
        out = [n for n, x, (lo, hi) in zip(PARAM_NAMES, v, b) if not lo <= x <= hi]
        if out:
            raise CalibrationError(f"outside bounds: {', '.join(out)}")

    @classmethod
    def default(cls, bounds=None) -> "FreeParams":
        return cls(tuple(DEFAULT_START[n] for n in PARAM_NAMES), bounds_array(bounds))

    @classmethod
    def from_mapping(cls, values: Mapping[str, float], bounds=None,
                     base: "FreeParams | None" = None) -> "FreeParams":
        base = base or cls.default(bounds)
        unknown = set(values) - set(PARAM_NAMES)
        if unknown:
            raise CalibrationError(f"unknown parameter(s): {sorted(unknown)}")
        merged = dict(base.as_dict(), **{k: float(v) for k, v in values.items()})
        return cls(tuple(merged[n] for n in PARAM_NAMES), bounds_array(bounds) if bounds is not None else base.bounds)

    @classmethod
    def from_unit(cls, u, bounds=None) -> "FreeParams":
        b = bounds_array(bounds)
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        return cls(tuple(b[:, 0] + u * (b[:, 1] - b[:, 0])), b)

    def to_unit(self) -> np.ndarray:
        width = self.bounds[:, 1] - self.bounds[:, 0]
        safe = np.where(width > 0, width, 1.0)
        return np.where(width > 0, (np.asarray(self.values) - self.bounds[:, 0]) / safe, 0.0)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(PARAM_NAMES, self.values))

    def __getitem__(self, name: str) -> float:
        return self.values[PARAM_NAMES.index(name)]

    def with_value(self, name: str, value: float) -> "FreeParams":
        v = list(self.values)
        v[PARAM_NAMES.index(name)] = float(value)
        return FreeParams(tuple(v), self.bounds)

    def model_params(self, base: ModelParams | None = None) -> ModelParams:
        return (base or ModelParams()).with_values(**self.as_dict())

    def to_json(self) -> str:
        return json.dumps({"values": self.as_dict(),
                           "bounds": {n: list(map(float, b)) for n, b in zip(PARAM_NAMES, self.bounds)}},
                          indent=2, sort_keys=True) + "\n"


def project(u: np.ndarray) -> np.ndarray:
    """Clip unit-box coordinates back into ``[0, 1]``."""
    return np.clip(u, 0.0, 1.0)


# -- objective ---------------------------------------------------------------

def run_seed(master: int, scenario_index: int, run: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), int(scenario_index), int(run)])


def failed_per_run(scenario: Scenario, params: ModelParams, seeds: Sequence, kind: str = "training") -> list[int]:
    """Failed-statement count of each seeded run of one scenario."""
    statements = _statements(scenario, kind)
    return [failed_count(statements, simulate(scenario, params, seed=s)) for s in seeds]


def _statements(scenario: Scenario, kind: str):
    if kind == "all":
        return list(scenario.statements)
    return scenario.training if kind == "training" else scenario.validation


_WORKER_SCENARIOS: list[Scenario] = []


def _init_worker(scenarios):
    global _WORKER_SCENARIOS
    _WORKER_SCENARIOS = scenarios


def _worker_task(args):
    index, values, bounds, kind, seeds = args
    params = FreeParams(values, bounds).model_params()
    return failed_per_run(_WORKER_SCENARIOS[index], params, seeds, kind)


class ModelObjective:
    """Mean failed statements of the model on a scenario set.

    Parameters
    ----------
    scenarios : sequence of Scenario
        Every scenario must carry statements of ``kind``.
    runs : int
        Seeded runs per scenario and evaluation.
    seed : int
        Default master seed.
    jobs : int
        Worker processes; results do not depend on it.
    kind : {"training", "validation", "all"}
        Which statements count.
    bounds : optional
        Box for the :class:`FreeParams` built from raw vectors.
    """

    def __init__(self, scenarios: Sequence[Scenario], runs: int = 48, seed: int = 0, jobs: int = 1,
                 kind: str = "training", bounds=None):
        if runs < 1:
            raise CalibrationError("runs must be >= 1")
        if kind not in ("training", "validation", "all"):
            raise CalibrationError(f"unknown statement kind {kind!r}")
        self.scenarios = list(scenarios)
        if not self.scenarios:
            raise CalibrationError("no scenarios")
        for sc in self.scenarios:
            if not _statements(sc, kind):
                raise CalibrationError(f"scenario {sc.id!r} has no {kind} statements")
        self.runs = int(runs)
        self.seed = int(seed)
        self.jobs = max(1, int(jobs))
        self.kind = kind
        self.bounds = bounds_array(bounds)
        self.calls = 0
        self._pool: ProcessPoolExecutor | None = None

    def _params(self, theta) -> FreeParams:
        if isinstance(theta, FreeParams):
            return theta
        if isinstance(theta, Mapping):
            return FreeParams.from_mapping(theta, self.bounds)
        return FreeParams(tuple(theta), self.bounds)

    def per_run(self, theta, seed: int | None = None) -> np.ndarray:
        """``(n_scenarios, runs)`` array of failed-statement counts."""
        fp = self._params(theta)
        master = self.seed if seed is None else int(seed)
        tasks = [(k, fp.values, fp.bounds, self.kind,
                  [run_seed(master, k, r) for r in range(self.runs)])
                 for k in range(len(self.scenarios))]
        self.calls += 1
        if self.jobs == 1:
            params = fp.model_params()
            rows = [failed_per_run(self.scenarios[k], params, seeds, self.kind)
                    for k, _, _, _, seeds in tasks]
        else:
            # split each scenario's runs so every worker gets a share
            chunks = []
            for k, v, b, kind, seeds in tasks:
                for part in np.array_split(np.arange(len(seeds)), min(self.jobs, len(seeds))):
                    chunks.append((k, v, b, kind, [seeds[i] for i in part]))
            results = list(self._executor().map(_worker_task, chunks))
            rows = [[] for _ in self.scenarios]
            for (k, *_), res in zip(chunks, results):
                rows[k].extend(res)
        return np.asarray(rows, dtype=float)

    def per_scenario(self, theta, seed: int | None = None) -> np.ndarray:
        return self.per_run(theta, seed).mean(axis=1)

    def __call__(self, theta, seed: int | None = None) -> float:
        return float(self.per_run(theta, seed).mean())

    def _executor(self) -> ProcessPoolExecutor:
        if self._pool is None:
            self._pool = ProcessPoolExecutor(self.jobs, initializer=_init_worker,
                                             initargs=(self.scenarios,))
        return self._pool

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_pool"] = None
        return state


def objective(theta, scenarios: Sequence[Scenario], runs: int = 48, seed: int = 0, jobs: int = 1) -> float:
    """Grand mean failed training statements over ``runs`` runs of every scenario."""
    with ModelObjective(scenarios, runs, seed, jobs) as f:
        return f(theta)


# -- SPSA --------------------------------------------------------------------

@dataclass(frozen=True)
class SpsaConfig:
    """SPSA settings.

    Gains work in unit-box coordinates, so ``a`` and ``c`` are fractions of
    each parameter's range. ``A = None`` uses ten percent of
    ``iterations``. The best iterate is chosen by re-evaluating the
    ``reevaluate`` most promising iterates (by their paired estimate) and
    the final one under ``validation_seed``.
    """

    iterations: int = 3000
    runs: int = 48
    a: float = 0.1
    c: float = 0.1
    A: float | None = None
    alpha: float = 0.602
    gamma: float = 0.101
    seed: int = 0
    reevaluate: int = 5
    validation_seed: int = 2**31 - 1
    restarts: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise CalibrationError("iterations must be >= 1")
        if self.runs < 1:
            raise CalibrationError("runs must be >= 1")
        if self.a <= 0 or self.c <= 0:
            raise CalibrationError("gain constants a and c must be positive")
        if self.alpha <= 0 or self.gamma <= 0:
            raise CalibrationError("gain exponents must be positive")
        if self.restarts < 0 or self.reevaluate < 0:
            raise CalibrationError("restarts and reevaluate must be >= 0")

    @property
    def stability(self) -> float:
        return 0.1 * self.iterations if self.A is None else float(self.A)

    def a_k(self, k) -> np.ndarray:
        return self.a / (self.stability + np.asarray(k) + 1.0) ** self.alpha

    def c_k(self, k) -> np.ndarray:
        return self.c / (np.asarray(k) + 1.0) ** self.gamma


@dataclass(frozen=True)
class Evaluation:
    iteration: int
    theta: tuple[float, ...]
    value: float
    runs: int
    kind: str = "plus"


@dataclass
class SpsaResult:
    theta: FreeParams
    value: float
    history: np.ndarray
    log: list[Evaluation]
    iterates: np.ndarray
    config: SpsaConfig

    def to_json(self) -> str:
        return json.dumps({
            "optimum": self.theta.as_dict(),
            "objective": self.value,
            "iterations": self.config.iterations,
            "runs": self.config.runs,
            "seed": self.config.seed,
            "evaluations": len(self.log),
        }, indent=2, sort_keys=True) + "\n"


Objective = Callable[..., float]


def _call(f: Objective, theta: FreeParams, seed: int) -> float:
    v = float(f(theta, seed=seed))
    if not math.isfinite(v):
        raise CalibrationError(f"objective returned {v} at {theta.as_dict()}")
    return v


def _chain(f: Objective, cfg: SpsaConfig, start: FreeParams, rng: np.random.Generator,
           log_: list[Evaluation], offset: int = 0):
    bounds = start.bounds
    u = start.to_unit()
    free = (bounds[:, 1] - bounds[:, 0]) > 0
    history = np.empty(cfg.iterations)
    iterates = np.empty((cfg.iterations + 1, len(u)))
    iterates[0] = u
    for k in range(cfg.iterations):
        ak, ck = float(cfg.a_k(k)), float(cfg.c_k(k))
        delta = np.where(free, rng.choice((-1.0, 1.0), size=len(u)), 0.0)
        seed = int(rng.integers(2**62))
        tp = FreeParams.from_unit(project(u + ck * delta), bounds)
        tm = FreeParams.from_unit(project(u - ck * delta), bounds)
        fp, fm = _call(f, tp, seed), _call(f, tm, seed)
        log_.append(Evaluation(offset + k, tp.values, fp, cfg.runs, "plus"))
        log_.append(Evaluation(offset + k, tm.values, fm, cfg.runs, "minus"))
        history[k] = 0.5 * (fp + fm)
        grad = (fp - fm) / (2.0 * ck) * delta
        u = project(u - ak * grad)
        iterates[k + 1] = u
        if k % 100 == 0:
            log.debug("spsa k=%d f~%.4f", k, history[k])
    return history, iterates


def spsa_optimize(f: Objective, cfg: SpsaConfig = SpsaConfig(), start: FreeParams | None = None,
                  bounds=None) -> SpsaResult:
    """Minimize a stochastic objective with SPSA inside a box.

    ``f(theta, seed=...)`` receives a :class:`FreeParams`; the two
    perturbed evaluations of one iteration share a seed (common random
    numbers). Iterates are projected back into the box after every step.
    """
    bounds = bounds_array(bounds) if bounds is not None else (start.bounds if start else bounds_array())
    start = start or FreeParams.default(bounds)
    if start.bounds is not bounds:
        start = FreeParams(start.values, bounds)
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0x5B5A]))
    log_: list[Evaluation] = []
    starts = [start] + [FreeParams.from_unit(rng.random(len(PARAM_NAMES)), bounds)
                        for _ in range(cfg.restarts)]
    histories, all_iterates = [], []
    for n, s in enumerate(starts):
        h, it = _chain(f, cfg, s, rng, log_, offset=n * cfg.iterations)
        histories.append(h)
        all_iterates.append(it)

    # candidates: best paired estimates plus each chain's final iterate
    pool = []
    for h, it in zip(histories, all_iterates):
        order = np.argsort(h, kind="stable")[:cfg.reevaluate]
        pool.extend(it[k] for k in order)
        pool.append(it[-1])
    seen, unique = set(), []
    for u in pool:
        key = tuple(np.round(u, 12))
        if key not in seen:
            seen.add(key)
            unique.append(u)
    total = cfg.iterations * len(starts)
    best, best_val = None, math.inf
    for u in unique:
        theta = FreeParams.from_unit(u, bounds)
        v = _call(f, theta, cfg.validation_seed)
        log_.append(Evaluation(total, theta.values, v, cfg.runs, "reevaluation"))
        if v < best_val:
            best, best_val = theta, v
    return SpsaResult(best, best_val, np.concatenate(histories), log_,
                      np.concatenate(all_iterates), cfg)


def write_eval_log(path: str | Path, log_: Sequence[Evaluation]) -> None:
    """CSV with columns ``iteration, <seven parameters>, f, runs``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", *PARAM_NAMES, "f", "runs"])
        for e in log_:
            w.writerow([e.iteration, *(repr(float(x)) for x in e.theta), repr(float(e.value)), e.runs])


def read_eval_log(path: str | Path) -> list[Evaluation]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise CalibrationError(f"{path}: empty evaluation log")
    return [Evaluation(int(r["iteration"]), tuple(float(r[n]) for n in PARAM_NAMES),
                       float(r["f"]), int(r["runs"]), "logged") for r in rows]


# -- landscape ---------------------------------------------------------------

LANDSCAPE_COVARIANCE = ((0.01, 0.0), (0.0, 0.01))


@dataclass
class LandscapeGrid:
    x: np.ndarray
    y: np.ndarray
    raw: np.ndarray
    smoothed: np.ndarray
    directions: np.ndarray
    center: FreeParams

    def rows(self):
        for i, xv in enumerate(self.x):
            for j, yv in enumerate(self.y):
                yield float(xv), float(yv), float(self.raw[i, j]), float(self.smoothed[i, j])

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "f_raw", "f_smoothed"])
            for row in self.rows():
                w.writerow([repr(v) for v in row])


def random_directions(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Two orthonormal directions, shape ``(2, dim)``."""
    q, r = np.linalg.qr(rng.standard_normal((dim, 2)))
    return (q * np.sign(np.diag(r))).T


def smooth_landscape(raw: np.ndarray, x: np.ndarray, y: np.ndarray,
                     covariance=LANDSCAPE_COVARIANCE) -> np.ndarray:
    """Gaussian smoothing with a diagonal covariance given in ``(x, y)`` units."""
    dx = float(x[1] - x[0])
    dy = float(y[1] - y[0])
    return smooth_2d(raw, covariance_to_cells(covariance, (dx, dy)))


def landscape_slice(f: Objective, center: FreeParams, n: int = 21, extent: float = 0.5,
                    seed: int = 0, covariance=LANDSCAPE_COVARIANCE) -> LandscapeGrid:
    """Objective on an ``n x n`` grid through ``center`` along two random directions.

    Directions are orthonormal in unit-box coordinates; ``x`` and ``y``
    run over ``[-extent, extent]`` with the center at ``(0, 0)``. Points
    falling outside the box are projected onto it. Every grid point is
    evaluated with the same seed.
    """
    if n < 3:
        raise CalibrationError("landscape grid must be at least 3 x 3")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1A5D]))
    dirs = random_directions(len(PARAM_NAMES), rng)
    eval_seed = int(rng.integers(2**62))
    x = np.linspace(-extent, extent, n)
    y = np.linspace(-extent, extent, n)
    u0 = center.to_unit()
    raw = np.empty((n, n))
    for i, xv in enumerate(x):
        for j, yv in enumerate(y):
            theta = FreeParams.from_unit(project(u0 + xv * dirs[0] + yv * dirs[1]), center.bounds)
            raw[i, j] = _call(f, theta, eval_seed)
    return LandscapeGrid(x, y, raw, smooth_landscape(raw, x, y, covariance), dirs, center)
