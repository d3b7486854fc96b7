"""Command-line entry point: ``ccrm <subcommand> [options]``.

Every subcommand writes its artifacts plus ``manifest.json`` (command,
configuration, seed, package version and a SHA-256 of each artifact) to
``--out``. Nothing time-dependent is recorded and ``--jobs`` is left out
of the manifest, so a rerun with the same seed reproduces every file byte
for byte whatever the worker count.

Exit status is 0 on success, 1 on a usage error and 2 on a data error.
The ``CCRM_LOG`` environment variable sets the log level (default
``WARNING``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .analysis import (forward_uq, null_baseline, profile_1d, sensitivity_report,
                       validate)
from .calibrate import (PARAM_NAMES, CalibrationError, FreeParams, ModelObjective, SpsaConfig,
                        bounds_array, landscape_slice, read_eval_log, spsa_optimize, write_eval_log)
from .replacement import ModelParams, simulate
from .scenarios import BUILTIN_IDS, Scenario, ScenarioError, builtin_case, load_scenario, score_expertise_table
from .statements import ScoringError, StatementError, score_case
from .trace import SimulationTrace

log = logging.getLogger("ccrm")


class UsageError(Exception):
    """Bad command line; exit status 1."""


class DataError(Exception):
    """Unreadable or invalid input data; exit status 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -- helpers -----------------------------------------------------------------

def _json_arg(text: str | None):
    """Inline JSON or the path of a JSON file."""
    if text is None:
        return None
    p = Path(text)
    try:
        if not text.lstrip().startswith(("{", "[")) and p.exists():
            return json.loads(p.read_text(encoding="utf-8"))
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"cannot parse JSON from {text!r}: {exc}") from exc
    except OSError as exc:
        raise DataError(str(exc)) from exc


def _param_values(doc) -> dict:
    """Accept a flat mapping, ``{"values": ...}`` or a calibrate ``optimum.json``."""
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise DataError("--params must be a JSON object")
    for key in ("optimum", "values"):
        if isinstance(doc.get(key), dict):
            return doc[key]
    return doc


def _bounds(args):
    doc = _json_arg(args.bounds)
    try:
        return bounds_array(doc if doc is None or isinstance(doc, dict) else np.asarray(doc))
    except CalibrationError as exc:
        raise DataError(f"--bounds: {exc}") from exc


def _theta(args) -> FreeParams:
    bounds = _bounds(args)
    try:
        return FreeParams.from_mapping(_param_values(_json_arg(args.params)), bounds)
    except CalibrationError as exc:
        raise DataError(f"--params: {exc}") from exc


def _scenarios(args, default: Sequence[str] = ()) -> list[Scenario]:
    out = []
    for c in args.case or []:
        try:
            out.append(builtin_case(c))
        except KeyError as exc:
            raise UsageError(exc.args[0]) from exc
    for path in args.scenario or []:
        try:
            out.append(load_scenario(path))
        except OSError as exc:
            raise DataError(str(exc)) from exc
    if not out:
        out = [builtin_case(c) for c in default]
    ids = [s.id for s in out]
    if len(set(ids)) != len(ids):
        raise UsageError(f"scenario given twice: {ids}")
    return out


def _one_scenario(args) -> Scenario:
    sc = _scenarios(args)
    if len(sc) != 1:
        raise UsageError("give exactly one --case or --scenario")
    return sc[0]


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def _clean(obj):
    """Replace non-finite floats by None so JSON stays strict."""
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(out: Path, name: str, obj) -> str:
    (out / name).write_text(_dump(_clean(obj)), encoding="utf-8")
    return name


def _manifest(out: Path, args, files: Sequence[str], config: dict) -> None:
    digests = {name: hashlib.sha256((out / name).read_bytes()).hexdigest() for name in files}
    doc = {
        "command": args.command,
        "version": __version__,
        "seed": args.seed,
        "config": config,
        "outputs": digests,
    }
    _write_json(out, "manifest.json", doc)


def _common_config(args, scenarios: Sequence[Scenario] = ()) -> dict:
    cfg = {"cases": list(args.case or []), "scenarios": [str(p) for p in args.scenario or []]}
    if scenarios:
        cfg["scenario_ids"] = [s.id for s in scenarios]
    return cfg


def _objective(args, scenarios, kind="training", bounds=None):
    return ModelObjective(scenarios, runs=args.runs, seed=args.seed, jobs=args.jobs, kind=kind,
                          bounds=bounds)


# -- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> None:
    sc = _one_scenario(args)
    values = _param_values(_json_arg(args.params))
    try:
        params = ModelParams().with_values(**values)
    except (KeyError, TypeError) as exc:
        raise DataError(f"--params: {exc}") from exc
    tr = simulate(sc, params, seed=args.seed, horizon=args.horizon)
    out = _outdir(args)
    tr.write_jsonl(out / "trace.jsonl")
    tr.write_events_jsonl(out / "events.jsonl")
    tr.write_trust_csv(out / "trust.csv")
    files = ["trace.jsonl", "events.jsonl", "trust.csv"]
    _manifest(out, args, files, {**_common_config(args, [sc]), "params": values, "horizon": args.horizon})
    print(f"{sc.id}: {tr.horizon} steps, {len(tr.events)} events, digest {tr.digest()[:16]}")


def cmd_score(args) -> None:
    sc = _one_scenario(args)
    try:
        tr = SimulationTrace.read_jsonl(args.trace)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    statements = {"training": sc.training, "validation": sc.validation, "all": list(sc.statements)}[args.kind]
    try:
        cs = score_case(statements, tr)
    except (ScoringError, StatementError) as exc:
        raise DataError(str(exc)) from exc
    out = _outdir(args)
    doc = {"case": sc.id, "achieved": float(cs.achieved), "max": str(cs.max),
           "failed": cs.failed_count,
           "statements": [{"id": i, "achieved": float(a), "max": str(m)} for i, a, m in cs.per_statement]}
    files = [_write_json(out, "score.json", doc)]
    _manifest(out, args, files, {**_common_config(args, [sc]), "trace": str(args.trace), "kind": args.kind})
    for i, a, m in cs.per_statement:
        print(f"{i:8s} {float(a):.3f} / {m}")
    print(f"{sc.id}: {float(cs.achieved):.3f} / {cs.max}")


def cmd_calibrate(args) -> None:
    default = BUILTIN_IDS if args.all_cases else ("A", "B", "C")
    scenarios = _scenarios(args, default)
    bounds = _bounds(args)
    start = _theta(args)
    cfg = SpsaConfig(iterations=args.iterations, runs=args.runs, seed=args.seed,
                     restarts=args.restarts, A=args.stability)
    kind = "all" if args.all_cases else "training"
    with _objective(args, scenarios, kind, bounds) as f:
        res = spsa_optimize(f, cfg, start, bounds)
    out = _outdir(args)
    (out / "optimum.json").write_text(res.to_json(), encoding="utf-8")
    write_eval_log(out / "eval_log.csv", res.log)
    with open(out / "history.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "f_pair_mean"])
        w.writerows((k, repr(float(v))) for k, v in enumerate(res.history))
    files = ["optimum.json", "eval_log.csv", "history.csv"]
    _manifest(out, args, files, {**_common_config(args, scenarios), "runs": args.runs,
                                 "iterations": args.iterations, "restarts": args.restarts,
                                 "stability": args.stability, "kind": kind,
                                 "start": start.as_dict(), "bounds": bounds.tolist()})
    print(_dump({"optimum": res.theta.as_dict(), "objective": res.value}), end="")


def cmd_validate(args) -> None:
    theta = _theta(args)
    holdout = _scenarios(args, ("D",))
    training = [] if args.no_training else [builtin_case(c) for c in args.training]
    training = [s for s in training if s.id not in {h.id for h in holdout}]
    rep = validate(theta, holdout, runs=args.runs, seed=args.seed, training=training,
                   tolerance=args.tolerance)
    out = _outdir(args)
    files = [_write_json(out, "validation.json", rep.to_dict())]
    _manifest(out, args, files, {**_common_config(args, holdout), "runs": args.runs,
                                 "training": [s.id for s in training], "theta": theta.as_dict(),
                                 "tolerance": args.tolerance})
    print(f"hold-out fraction {rep.fraction:.3f}" +
          ("" if rep.training_fraction is None else
           f", training fraction {rep.training_fraction:.3f}, passed {rep.passed}"))


def cmd_sensitivity(args) -> None:
    theta = _theta(args)
    scenarios = _scenarios(args, ("A", "B", "C"))
    with _objective(args, scenarios, bounds=theta.bounds) as f:
        rep = sensitivity_report(f, theta, samples=args.samples, seed=args.seed)
    out = _outdir(args)
    files = [_write_json(out, "sensitivity.json", rep.to_dict())]
    _manifest(out, args, files, {**_common_config(args, scenarios), "runs": args.runs,
                                 "samples": args.samples, "theta": theta.as_dict()})
    print("global ranking:", " ".join(rep.global_ranking))
    print("local ranking: ", " ".join(rep.local_ranking))


def cmd_uq(args) -> None:
    scenarios = _scenarios(args, ("A", "B", "C"))
    bounds = _bounds(args)
    if args.log:
        try:
            entries = read_eval_log(args.log)
        except (OSError, KeyError, ValueError) as exc:
            raise DataError(f"--log: {exc}") from exc
        thetas = [FreeParams(e.theta, bounds) for e in entries]
        values = [e.value for e in entries]
    else:
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0x0F0B]))
        u = rng.random((args.samples, len(PARAM_NAMES)))
        thetas = [FreeParams.from_unit(row, bounds) for row in u]
        with _objective(args, scenarios, bounds=bounds) as f:
            values = [f(t) for t in thetas]
    freeze = {k: float(v) for k, v in _param_values(_json_arg(args.freeze)).items()}
    try:
        res = forward_uq(scenarios, thetas, values, draws=args.draws, seed=args.seed, freeze=freeze)
    except CalibrationError as exc:
        raise DataError(str(exc)) from exc
    out = _outdir(args)
    files = [_write_json(out, "uq.json", res.to_dict())]
    _manifest(out, args, files, {**_common_config(args, scenarios), "log": args.log, "draws": args.draws,
                                 "samples": None if args.log else args.samples, "freeze": freeze})
    for sid, dist in res.successors.items():
        print(sid, ", ".join(f"{a}: {p:.2f}" for a, p in dist.items()))


def cmd_baseline(args) -> None:
    theta = _theta(args)
    scenarios = _scenarios(args, ("A", "B", "C"))
    with _objective(args, scenarios, bounds=theta.bounds) as f:
        res = null_baseline(f, theta, models=args.models, seed=args.seed, alpha=args.alpha)
    out = _outdir(args)
    files = [_write_json(out, "baseline.json", res.to_dict())]
    _manifest(out, args, files, {**_common_config(args, scenarios), "runs": args.runs,
                                 "models": args.models, "theta": theta.as_dict(), "alpha": args.alpha})
    print(f"optimum {res.optimum_value:.4f}, p = {res.p_value:.4f}, significant {res.significant}")


def cmd_landscape(args) -> None:
    theta = _theta(args)
    scenarios = _scenarios(args, ("A", "B", "C"))
    with _objective(args, scenarios, bounds=theta.bounds) as f:
        grid = landscape_slice(f, theta, n=args.grid, extent=args.extent, seed=args.seed)
    out = _outdir(args)
    grid.write_csv(out / "landscape.csv")
    files = ["landscape.csv"]
    _manifest(out, args, files, {**_common_config(args, scenarios), "runs": args.runs, "grid": args.grid,
                                 "extent": args.extent, "theta": theta.as_dict(),
                                 "directions": grid.directions.tolist()})
    print(f"{args.grid}x{args.grid} grid, smoothed minimum {float(np.min(grid.smoothed)):.4f}")


def cmd_profile(args) -> None:
    bounds = _bounds(args)
    try:
        entries = read_eval_log(args.log)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"--log: {exc}") from exc
    names = PARAM_NAMES if args.param == "all" else (args.param,)
    out = _outdir(args)
    files = []
    for name in names:
        prof = profile_1d(entries, name, bins=args.bins, bounds=bounds)
        fname = f"profile_{name}.csv"
        prof.write_csv(out / fname)
        files.append(fname)
        used = prof.used
        j = int(np.nanargmin(np.where(used, prof.smoothed, np.nan)))
        print(f"{name}: smoothed minimum at {prof.centers[j]:.4g}")
    _manifest(out, args, files, {"log": str(args.log), "bins": args.bins, "params": list(names),
                                 "bounds": bounds.tolist()})


def _read_table(path) -> dict[str, list[int]]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(str(exc)) from exc
    if not rows:
        raise DataError(f"{path}: empty table")

    def numeric(cells):
        try:
            [int(c) for c in cells]
            return True
        except ValueError:
            return False

    if not numeric(rows[0][1:]):
        rows = rows[1:]
    table = {}
    for r in rows:
        try:
            table[r[0].strip()] = [int(c) for c in r[1:]]
        except ValueError as exc:
            raise DataError(f"{path}: non-integer entry in row {r[0]!r}") from exc
    return table


def cmd_expertise(args) -> None:
    table = _read_table(args.table)
    try:
        res = score_expertise_table(table)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    out = _outdir(args)
    files = [_write_json(out, "expertise.json", {"scores": res.scores, "excluded": list(res.excluded)})]
    _manifest(out, args, files, {"table": str(args.table)})
    for name, score in res.scores.items():
        print(f"{name}: {score}{' (excluded)' if name in res.excluded else ''}")


# -- parser ------------------------------------------------------------------

def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--case", action="append", choices=BUILTIN_IDS, help="built-in case id (repeatable)")
    common.add_argument("--scenario", action="append", metavar="PATH", help="scenario JSON file (repeatable)")
    common.add_argument("--seed", type=_nonneg_int, default=0, help="master seed (default 0)")
    common.add_argument("--runs", type=_pos_int, default=48, help="runs per scenario and evaluation")
    common.add_argument("--jobs", type=_pos_int, default=1, help="worker processes")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--params", metavar="JSON", help="parameter values: inline JSON or a file")
    common.add_argument("--bounds", metavar="JSON", help="parameter box: {name: [low, high]}")

    p = _Parser(prog="ccrm", description="Criminal cocaine replacement model.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="run one scenario and export its trace")
    s.add_argument("--horizon", type=_pos_int, help="override the scenario horizon")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("score", parents=[common], help="score a trace against a scenario's statements")
    s.add_argument("--trace", required=True, help="trace JSONL written by simulate")
    s.add_argument("--kind", choices=("all", "training", "validation"), default="all")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("calibrate", parents=[common], help="SPSA calibration on the training cases")
    s.add_argument("--iterations", type=_pos_int, default=3000)
    s.add_argument("--restarts", type=_nonneg_int, default=0)
    s.add_argument("--stability", type=float, help="SPSA stability constant (default: 10%% of iterations)")
    s.add_argument("--all-cases", action="store_true", help="average over all four built-in cases")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("validate", parents=[common], help="hold-out scoring at fixed parameters")
    s.add_argument("--training", nargs="+", default=["A", "B", "C"], choices=BUILTIN_IDS)
    s.add_argument("--no-training", action="store_true", help="skip the training-score comparison")
    s.add_argument("--tolerance", type=float, default=0.1)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("sensitivity", parents=[common], help="global and local sensitivity report")
    s.add_argument("--samples", type=_pos_int, default=20)
    s.set_defaults(func=cmd_sensitivity)

    s = sub.add_parser("uq", parents=[common], help="forward uncertainty propagation")
    s.add_argument("--log", help="evaluation log CSV from calibrate")
    s.add_argument("--samples", type=_pos_int, default=100, help="uniform sets when no log is given")
    s.add_argument("--draws", type=_pos_int, default=100)
    s.add_argument("--freeze", metavar="JSON", help="parameters pinned during resampling")
    s.set_defaults(func=cmd_uq)

    s = sub.add_parser("baseline", parents=[common], help="null-hypothesis comparison with random models")
    s.add_argument("--models", type=_pos_int, default=200)
    s.add_argument("--alpha", type=float, default=0.05)
    s.set_defaults(func=cmd_baseline)

    s = sub.add_parser("landscape", parents=[common], help="2-D objective slice along random directions")
    s.add_argument("--grid", type=_pos_int, default=21)
    s.add_argument("--extent", type=float, default=0.5)
    s.set_defaults(func=cmd_landscape)

    s = sub.add_parser("profile", parents=[common], help="smoothed 1-D profiles from an evaluation log")
    s.add_argument("--log", required=True, help="evaluation log CSV from calibrate")
    s.add_argument("--param", default="all", choices=("all", *PARAM_NAMES))
    s.add_argument("--bins", type=_pos_int, default=15)
    s.set_defaults(func=cmd_profile)

    s = sub.add_parser("expertise", parents=[common], help="score a domains-by-experts table")
    s.add_argument("--table", required=True, help="CSV: domain name, then one 0/1 column per expert")
    s.set_defaults(func=cmd_expertise)
    return p


def _configure_logging() -> None:
    level = os.environ.get("CCRM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Sequence[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"ccrm {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, ScenarioError, ScoringError, StatementError, CalibrationError, ValueError) as exc:
        print(f"ccrm {args.command}: data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
