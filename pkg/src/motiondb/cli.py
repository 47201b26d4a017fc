"""Command-line front-end: ``motiondb {simulate,query,validate,lyapunov}``.

Exit codes: 0 success, 2 bad configuration or query text, 3 runtime
error, 4 convergence timeout, 5 failed validation criterion.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, chaos, data
from .crypto import read_table
from .errors import (ConfigError, ConvergenceTimeout, MotionDBError, PlanError, SchemaError,
                     SQLSyntaxError, TypeMismatch)
from .geometry import place_obstacles
from .orchestrator import SimulationConfig, next_epoch, run_query, setup_epoch, write_event_log
from .query import Agg, QueryPlan, execute_oracle, from_json, parse_sql
from .validate import SUITES, run_suite

EXIT_CONFIG, EXIT_RUNTIME, EXIT_TIMEOUT, EXIT_VALIDATION = 2, 3, 4, 5
_CONFIG_ERRORS = (ConfigError, SchemaError, PlanError, TypeMismatch, SQLSyntaxError)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return Path(path)


def load_config(args) -> tuple[SimulationConfig, Path | None]:
    path = Path(args.config) if args.config else data.path("default_config.json")
    config = SimulationConfig.load(path)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "mode", None):
        overrides["map_mode"] = "on-the-fly" if args.mode in ("onfly", "on-the-fly") else "at-obstacle"
    if overrides:
        config = SimulationConfig.from_dict({**config.to_dict(), **overrides})
    return config, path.parent if args.config else None


def load_tables(config: SimulationConfig, base: Path | None) -> dict:
    if not config.tables:
        t = data.sample_table()
        return {t.name: t}
    out = {}
    for entry in config.tables:
        try:
            csv_path, schema_path = Path(entry["csv"]), Path(entry["schema"])
        except (KeyError, TypeError):
            raise ConfigError(f"table entries need 'csv' and 'schema' paths, got {entry!r}") from None
        if base is not None:
            csv_path, schema_path = base / csv_path, base / schema_path
        for p, what in ((schema_path, "schema"), (csv_path, "table")):
            if not p.is_file():
                raise ConfigError(f"{what} file not found: {p}")
        t = read_table(csv_path, schema_path)
        out[t.name] = t
    return out


def load_plan(text: str, tables: dict) -> QueryPlan:
    p = Path(text)
    if text.endswith(".json") or (p.suffix and p.is_file()):
        if not p.is_file():
            raise ConfigError(f"plan file not found: {p}")
        try:
            return from_json(json.loads(p.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    return parse_sql(text)


class Manifest:
    def __init__(self, command: str, config: SimulationConfig | None, seed):
        self.doc = {"tool": "motiondb", "version": __version__, "command": command,
                    "config": config.to_dict() if config else None, "seed": seed,
                    "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "outputs": [], "epochs": []}

    def add(self, path):
        self.doc["outputs"].append({"path": Path(path).name, "sha256": _sha256(path)})

    def write(self, out_dir) -> Path:
        self.doc["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        return _dump(self.doc, Path(out_dir) / "manifest.json")


def result_doc(result, epoch) -> dict:
    doc = result.to_dict()
    doc["convergence_time"] = epoch.convergence_time
    doc["sim_time"] = epoch.sim_time
    return doc


def cmd_simulate(args) -> int:
    config, base = load_config(args)
    tables = load_tables(config, base)
    first = sorted(tables)[0]
    plan = parse_sql(args.query) if args.query else QueryPlan(first, aggregates=(Agg("COUNT"),))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("simulate", config, config.seed)
    epochs = []
    epoch = setup_epoch(config, tables, 0)
    for i in range(args.epochs):
        if i:
            epoch = next_epoch(epoch, config, tables)
        result = run_query(epoch, plan, jobs=args.jobs)
        epochs.append(epoch)
        rpath = _dump(result_doc(result, epoch), out / f"result-epoch{epoch.epoch_id}.json")
        manifest.add(rpath)
        manifest.doc["epochs"].append({"epoch": epoch.epoch_id, "convergence_time": epoch.convergence_time,
                                       "events": len(epoch.event_log), "delivered": sorted(epoch.delivered),
                                       "result": rpath.name})
    log = write_event_log(epochs, out / "events.csv")
    manifest.add(log)
    manifest.write(out)
    print(f"{len(epochs)} epoch(s), {sum(len(e.event_log) for e in epochs)} events -> {log}")
    return 0


def cmd_query(args) -> int:
    config, base = load_config(args)
    tables = load_tables(config, base)
    plan = load_plan(args.plan, tables)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("query", config, config.seed)
    epoch = setup_epoch(config, tables, 0)
    try:
        result = run_query(epoch, plan, arrival_time=args.arrival, jobs=args.jobs)
    except ConvergenceTimeout as exc:
        report = {"error": "ConvergenceTimeout", "sim_time": exc.sim_time, "delivered": exc.delivered,
                  "undelivered": exc.undelivered}
        manifest.add(_dump(report, out / "result.json"))
        manifest.add(write_event_log([epoch], out / "events.csv"))
        manifest.write(out)
        print(json.dumps(report, sort_keys=True))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT
    doc = result_doc(result, epoch)
    if args.oracle:
        doc["oracle_equal"] = result.same_answer(execute_oracle(plan, tables))
    manifest.add(_dump(doc, out / "result.json"))
    manifest.add(write_event_log([epoch], out / "events.csv"))
    manifest.doc["epochs"].append({"epoch": epoch.epoch_id, "convergence_time": epoch.convergence_time,
                                   "events": len(epoch.event_log)})
    manifest.write(out)
    print(json.dumps(doc, sort_keys=True))
    if args.oracle and not doc["oracle_equal"]:
        print("error: result differs from the unsharded oracle", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


def _parse_param(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise ConfigError(f"--param expects KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def cmd_validate(args) -> int:
    params = dict(_parse_param(p) for p in args.param)
    seed = 0 if args.seed is None else args.seed
    out = Path(args.out_dir)
    report = run_suite(args.suite, params, seed, args.jobs)
    manifest = Manifest(f"validate {args.suite}", None, seed)
    for p in report.write(out):
        manifest.add(p)
    manifest.write(out)
    for c in report.criteria:
        print(c.line())
    return 0 if report.passed else EXIT_VALIDATION


def cmd_lyapunov(args) -> int:
    config, _ = load_config(args)
    rng = np.random.default_rng([config.seed, 0])
    shape = config.shape()
    n = config.n_obstacles if args.obstacles is None else args.obstacles
    if n < 0:
        raise ConfigError("--obstacles must be >= 0")
    arena = place_obstacles(shape, n, config.obstacle_radius, rng)
    est = chaos.estimate_lyapunov(arena, horizon=args.horizon, rng=rng, speed=config.speed)
    doc = {"lambda_hat": est.lambda_hat, "horizon": est.horizon,
           "renormalization_count": est.renormalization_count,
           "per_window_rates": est.per_window_rates, "window_durations": est.window_durations,
           "arena": config.arena, "obstacles": len(arena.obstacles), "seed": config.seed}
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest("lyapunov", config, config.seed)
    manifest.add(_dump(doc, out / "lyapunov.json"))
    manifest.write(out)
    print(json.dumps({k: doc[k] for k in ("lambda_hat", "horizon", "renormalization_count", "obstacles")},
                     sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the config seed")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker count (default 1)")
    common.add_argument("--config", default=argparse.SUPPRESS, help="config JSON (default: bundled)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="output directory (default: out)")

    parser = argparse.ArgumentParser(prog="motiondb", parents=[common],
                                     description="Chaotic-billiard sharded query simulator.")
    parser.add_argument("--version", action="version", version=f"motiondb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run epochs and write the event log")
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--query", help="SQL to answer each epoch (default: COUNT(*) on the first table)")
    p.add_argument("--mode", choices=("at-obstacle", "onfly", "on-the-fly"))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("query", parents=[common], help="answer one query through a full epoch")
    p.add_argument("plan", help="plan JSON file or SQL text")
    p.add_argument("--oracle", action="store_true", help="also run the unsharded oracle and compare")
    p.add_argument("--mode", choices=("at-obstacle", "onfly", "on-the-fly"))
    p.add_argument("--arrival", type=float, default=None, help="simulated query arrival time")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("validate", parents=[common], help="run a statistical validation suite")
    p.add_argument("suite", choices=SUITES)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="override a suite parameter (VALUE parsed as JSON when possible)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("lyapunov", parents=[common], help="estimate the largest Lyapunov exponent")
    p.add_argument("--horizon", type=float, default=1e4)
    p.add_argument("--obstacles", type=int, default=None, help="override the obstacle count (0 allowed)")
    p.set_defaults(func=cmd_lyapunov)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name, default in (("seed", None), ("jobs", 1), ("config", None), ("out_dir", "out")):
        if not hasattr(args, name):
            setattr(args, name, default)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceTimeout as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT
    except (MotionDBError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
