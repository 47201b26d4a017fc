"""Validation suites: each replays one closed-form law by Monte-Carlo and grades it.

Every suite is a pure function of ``(params, seed)``. Replicates draw from
``default_rng([seed, k])`` and are fanned out over processes when
``jobs > 1``; results are gathered in replicate order, so the report does
not depend on the worker count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import chaos, stats
from .crypto import Table
from .geometry import Arena, BunimovichStadium, Obstacle, Rectangle, SinaiSquare, place_obstacles
from .orchestrator import SimulationConfig, run_query, setup_epoch
from .query import Agg, QueryPlan

SUITES = ("exp-fit", "rate", "all-collide", "mft", "ks-entropy", "geom-limit", "lyapunov-trend",
          "convergence")


@dataclass
class Criterion:
    name: str
    measured: float
    predicted: float
    tolerance: str
    passed: bool
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name}: measured={self.measured:.6g} predicted={self.predicted:.6g} "
                f"tolerance={self.tolerance}{' (' + self.note + ')' if self.note else ''}")


@dataclass
class SuiteReport:
    suite: str
    seed: int
    params: dict
    criteria: list
    tables: dict = field(default_factory=dict, repr=False)  # csv name -> (header, rows)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "seed": self.seed, "params": self.params, "passed": self.passed,
                "criteria": [asdict(c) for c in self.criteria], "csv": sorted(self.tables)}

    def write(self, out_dir) -> list:
        """Write report JSON plus plot-ready CSVs; returns the written paths."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, (header, rows) in sorted(self.tables.items()):
            p = out_dir / name
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows([_cell(v) for v in r] for r in rows)
            paths.append(p)
        p = out_dir / f"{self.suite}-report.json"
        p.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        paths.append(p)
        return paths


def _cell(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _fan_out(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _rng(seed, k):
    return np.random.default_rng([seed, k])


def _shape(name, params):
    return {"square": Rectangle, "stadium": BunimovichStadium, "sinai": SinaiSquare}[name](**params)


def _ecdf_rows(times, cdf_fn, points=200):
    t = np.sort(np.asarray(times, dtype=float))
    if not t.size:
        return []
    grid = np.linspace(0.0, t[-1], points)
    emp = np.searchsorted(t, grid, side="right") / t.size
    return [(g, e, cdf_fn(g)) for g, e in zip(grid, emp)]


# collision-rate laws on a single target

RATE_DEFAULTS = {"arena": "square", "arena_params": {}, "radius": 0.05, "speed": 1.0, "trials": 10_000}


def _single_target_arena(p):
    shape = _shape(p["arena"], p["arena_params"])
    if isinstance(shape, SinaiSquare):
        return Arena.build(shape)
    (x0, x1), (y0, y1) = shape.bounds
    return Arena.build(shape, [Obstacle(0, ((x0 + x1) / 2, (y0 + y1) / 2), p["radius"])])


def _first_collision_task(task):
    p, seed, k = task
    arena = _single_target_arena(p)
    sample = stats.sample_first_collision(arena, p["trials"], _rng(seed, k), speed=p["speed"], seed=seed)
    return sample


def suite_rate(params=None, seed=0, jobs=1) -> SuiteReport:
    p = {**RATE_DEFAULTS, **(params or {})}
    sample = _first_collision_task((p, seed, 0))
    lam = sample.lambda_predicted
    mean = float(sample.completed.mean())
    rel = abs(mean - 1 / lam) / (1 / lam)
    ok = rel <= 0.10 and sample.censored_fraction <= stats.MAX_CENSORED_FRACTION
    crit = [
        Criterion("mean-first-collision-time", mean, 1 / lam, "10% relative, <= 1% censored", ok,
                  f"lambda_hat={1 / mean:.6g} lambda={lam:.6g} censored={sample.censored_fraction:.4g}"),
    ]
    rows = [(i, t, int(c)) for i, (t, c) in enumerate(zip(sample.times, sample.censored))]
    return SuiteReport("rate", seed, p, crit, {"rate-times.csv": (("trial", "first_collision_time", "censored"), rows)})


def suite_exp_fit(params=None, seed=0, jobs=1) -> SuiteReport:
    p = {**RATE_DEFAULTS, "seeds": 20, "required": 18, **(params or {})}
    samples = _fan_out(_first_collision_task, [(p, seed, k) for k in range(p["seeds"])], jobs)
    fits = [stats.fit_exponential(s) for s in samples]
    passes = sum(f.passed and f.censored_fraction <= stats.MAX_CENSORED_FRACTION for f in fits)
    crit = [Criterion("ks-pass-count", passes, p["required"], f">= {p['required']}/{p['seeds']} seeds",
                      passes >= p["required"],
                      f"median D={np.median([f.ks_statistic for f in fits]):.4g} "
                      f"critical={fits[0].ks_critical:.4g}")]
    lam0 = fits[0].lambda_hat
    tables = {
        "exp-fit-seeds.csv": (("replicate", "lambda_hat", "ks_statistic", "ks_critical", "passed", "censored_fraction"),
                              [(k, f.lambda_hat, f.ks_statistic, f.ks_critical, int(f.passed), f.censored_fraction)
                               for k, f in enumerate(fits)]),
        "exp-fit-cdf.csv": (("t", "empirical_cdf", "fitted_cdf"),
                            _ecdf_rows(samples[0].completed, lambda t: -math.expm1(-lam0 * t))),
    }
    return SuiteReport("exp-fit", seed, p, crit, tables)


# all-collide

ALL_DEFAULTS = {"arena": "stadium", "arena_params": {"length": 1.0, "radius": 0.5}, "n": 8,
                "radius": 0.02, "speed": 1.0, "trials": 10_000}


def suite_all_collide(params=None, seed=0, jobs=1) -> SuiteReport:
    p = {**ALL_DEFAULTS, **(params or {})}
    rng = _rng(seed, 0)
    arena = place_obstacles(_shape(p["arena"], p["arena_params"]), p["n"], p["radius"], rng)
    sample = stats.sample_all_collide(arena, p["trials"], rng, speed=p["speed"])
    gap = sample.sup_gap()
    lam, n = sample.lambda_predicted, sample.n
    crit = [Criterion("all-collide-sup-gap", gap, 0.0, "<= 0.05", gap <= 0.05,
                      f"n={n} lambda={lam:.6g} censored={int(sample.censored.sum())}")]
    done = sample.max_times[~sample.censored]
    rows = _ecdf_rows(done, lambda t: stats.all_collide_cdf(lam, n, t))
    total = sample.max_times.size
    rows = [(t, e * done.size / total, a) for t, e, a in rows]
    return SuiteReport("all-collide", seed, p, crit,
                       {"all-collide-cdf.csv": (("t", "empirical_cdf", "analytic_cdf"), rows)})


# mean free time

MFT_DEFAULTS = {"arena": "square", "arena_params": {}, "ns": [1, 2, 4], "radius": 0.05, "speed": 1.0,
                "trials": 10_000}


def _mft_task(task):
    p, seed, k, n = task
    rng = _rng(seed, k)
    arena = place_obstacles(_shape(p["arena"], p["arena_params"]), n, p["radius"], rng)
    if isinstance(arena.shape, SinaiSquare):
        raise ValueError("mft uses arenas without a fixed central disk")
    return chaos.measure_mean_free_time(arena, p["trials"], rng, speed=p["speed"])


def suite_mft(params=None, seed=0, jobs=1) -> SuiteReport:
    p = {**MFT_DEFAULTS, **(params or {})}
    results = _fan_out(_mft_task, [(p, seed, k, n) for k, n in enumerate(p["ns"])], jobs)
    crit, rows = [], []
    for n, r in zip(p["ns"], results):
        crit.append(Criterion(f"mean-free-time-n{n}", r.tau_hat, r.tau_predicted, "10% relative",
                              r.relative_error <= 0.10, f"samples={r.sample_count}"))
        rows.append((n, r.tau_hat, r.tau_predicted, r.relative_error, r.sample_count))
    return SuiteReport("mft", seed, p, crit,
                       {"mft.csv": (("n", "tau_hat", "tau_predicted", "relative_error", "samples"), rows)})


# KS entropy

KS_DEFAULTS = {"radii": [0.05, 0.1], "horizon": 1e5, "trials": 100_000}


def _ks_task(task):
    p, seed, k, radius = task
    arena = Arena.build(SinaiSquare(1.0, radius))
    return chaos.ks_entropy_relation(arena, p["horizon"], _rng(seed, k), trials=p["trials"])


def suite_ks_entropy(params=None, seed=0, jobs=1) -> SuiteReport:
    p = {**KS_DEFAULTS, **(params or {})}
    results = _fan_out(_ks_task, [(p, seed, k, r) for k, r in enumerate(p["radii"])], jobs)
    crit, rows = [], []
    for radius, r in zip(p["radii"], results):
        crit.append(Criterion(f"ks-entropy-R{radius}", r.lhs, r.rhs, "25% relative", r.relative_gap <= 0.25,
                              f"tau={r.tau_hat:.6g} lambda={r.lambda_hat:.6g}"))
        rows.append((radius, r.tau_hat, r.lambda_hat, r.lhs, r.rhs, r.relative_gap))
    return SuiteReport("ks-entropy", seed, p, crit, {
        "ks-entropy.csv": (("R", "tau_hat", "lambda_hat", "tau_lambda", "minus_2_ln_R", "relative_gap"), rows)})


# geometric limit

GEOM_DEFAULTS = {"p": 0.001, "steps": 100_000, "trials": 100_000}


def suite_geom_limit(params=None, seed=0, jobs=1) -> SuiteReport:
    p = {**GEOM_DEFAULTS, **(params or {})}
    rep = stats.geometric_limit_check(p["p"], p["steps"], p["trials"], _rng(seed, 0))
    crit = [
        Criterion("geometric-chi-square", rep.chi2_pvalue, stats.ALPHA, "p-value >= 0.05",
                  rep.geometric_passed, f"chi2={rep.chi2_statistic:.4g}"),
        Criterion("exponential-limit-ks", rep.ks_statistic, rep.ks_critical, "D < critical",
                  rep.exponential_passed),
    ]
    q = p["p"]
    k = np.arange(1, int(min(p["steps"], math.ceil(10 / q))) + 1)
    rows = [(int(i), 1 - (1 - q) ** i, -math.expm1(-q * i)) for i in k[:: max(1, k.size // 500)]]
    return SuiteReport("geom-limit", seed, p, crit,
                       {"geom-limit-cdf.csv": (("k", "geometric_cdf", "exponential_cdf"), rows)})


# Lyapunov

LYAP_DEFAULTS = {"ns": [1, 2, 4, 8], "radius": 0.05, "seeds": 20, "horizon": 1e4,
                 "sinai_radius": 0.1, "stadium": {"length": 1.0, "radius": 0.5}}


def _lyap_task(task):
    kind, p, seed, k, n = task
    rng = _rng(seed, k)
    if kind == "trend":
        arena = place_obstacles(Rectangle(), n, p["radius"], rng)
    elif kind == "sinai":
        arena = Arena.build(SinaiSquare(1.0, p["sinai_radius"]))
    elif kind == "stadium":
        arena = Arena.build(BunimovichStadium(**p["stadium"]))
    else:
        arena = Arena.build(Rectangle())
    return chaos.estimate_lyapunov(arena, horizon=p["horizon"], rng=rng).lambda_hat


def suite_lyapunov_trend(params=None, seed=0, jobs=1) -> SuiteReport:
    p = {**LYAP_DEFAULTS, **(params or {})}
    tasks = [("trend", p, seed, 1000 * i + s, n) for i, n in enumerate(p["ns"]) for s in range(p["seeds"])]
    tasks += [("sinai", p, seed, 90_000, 0), ("stadium", p, seed, 90_001, 0), ("rectangle", p, seed, 90_002, 0)]
    out = _fan_out(_lyap_task, tasks, jobs)
    trend = np.array(out[:-3]).reshape(len(p["ns"]), p["seeds"])
    means = trend.mean(axis=1)
    sinai, stadium, rect = out[-3:]
    increasing = bool(np.all(np.diff(means) > 0))
    crit = [
        Criterion("lyapunov-sinai-positive", sinai, 0.0, "> 0", sinai > 0),
        Criterion("lyapunov-stadium-positive", stadium, 0.0, "> 0", stadium > 0),
        Criterion("lyapunov-trend-increasing", float(np.min(np.diff(means))), 0.0,
                  "mean over seeds strictly increasing in n", increasing,
                  "means=" + ",".join(f"{m:.4g}" for m in means)),
        Criterion("lyapunov-rectangle-small", abs(rect), 0.05 * sinai, "< 5% of Sinai", abs(rect) < 0.05 * sinai),
    ]
    rows = [(n, s, trend[i, s]) for i, n in enumerate(p["ns"]) for s in range(p["seeds"])]
    return SuiteReport("lyapunov-trend", seed, p, crit, {
        "lyapunov-trend.csv": (("n", "replicate", "lambda_hat"), rows),
        "lyapunov-trend-means.csv": (("n", "mean_lambda_hat"), list(zip(p["ns"], means)))})


# convergence of a full epoch

CONV_DEFAULTS = {"n": 8, "arena": "stadium", "arena_params": {"length": 1.0, "radius": 0.5},
                 "radius": 0.02, "lam": 0.1, "runs": 1000}


def _conv_config(p, speed, seed):
    return SimulationConfig(n_shards=p["n"], n_balls=p["n"], n_obstacles=p["n"], obstacle_radius=p["radius"],
                            speed=speed, arena=p["arena"], arena_params=dict(p["arena_params"]), seed=seed)


def _tiny_table():
    return Table("t", (("k", "integer"),), [(i,) for i in range(16)])


def convergence_time(p, speed, seed) -> float:
    """Simulated time from query arrival to delivery of the last shard."""
    epoch = setup_epoch(_conv_config(p, speed, seed), _tiny_table())
    run_query(epoch, QueryPlan("t", aggregates=(Agg("COUNT"),)))
    return epoch.convergence_time


def _conv_task(task):
    p, speed, seed, chunk = task
    return [convergence_time(p, speed, s) for s in chunk]


def _speed_for_rate(p) -> float:
    shape = _shape(p["arena"], p["arena_params"])
    free = shape.area - p["n"] * math.pi * p["radius"] ** 2
    return p["lam"] * free / (2 * p["radius"])


def suite_convergence(params=None, seed=0, jobs=1) -> SuiteReport:
    p = {**CONV_DEFAULTS, **(params or {})}
    v = _speed_for_rate(p)
    chunks = np.array_split(np.arange(p["runs"]), max(1, min(jobs, p["runs"])))
    times = {}
    for j, speed in enumerate((v, 2 * v)):
        # independent seed streams for the two speeds
        base = (seed * 2 + j) * 10_000_000
        tasks = [(p, speed, seed, [int(base + s) for s in c]) for c in chunks]
        times[speed] = np.concatenate([np.asarray(x) for x in _fan_out(_conv_task, tasks, jobs)])
    m1, m2 = times[v].mean(), times[2 * v].mean()
    h = sum(1.0 / k for k in range(1, p["n"] + 1))
    crit = [
        Criterion("velocity-scaling-ratio", m1 / m2, 2.0, "10% relative", abs(m1 / m2 - 2) / 2 <= 0.10,
                  f"mean(v)={m1:.6g} mean(2v)={m2:.6g}"),
        Criterion("convergence-mean-harmonic", m1, h / p["lam"], "15% relative",
                  abs(m1 - h / p["lam"]) / (h / p["lam"]) <= 0.15, f"speed={v:.6g}"),
    ]
    rows = [(s, i, t) for s in (v, 2 * v) for i, t in enumerate(times[s])]
    return SuiteReport("convergence", seed, p, crit,
                       {"convergence.csv": (("speed", "run", "convergence_time"), rows)})


RUNNERS = {
    "exp-fit": suite_exp_fit, "rate": suite_rate, "all-collide": suite_all_collide, "mft": suite_mft,
    "ks-entropy": suite_ks_entropy, "geom-limit": suite_geom_limit, "lyapunov-trend": suite_lyapunov_trend,
    "convergence": suite_convergence,
}


def run_suite(name: str, params=None, seed: int = 0, jobs: int = 1) -> SuiteReport:
    if name not in RUNNERS:
        raise KeyError(f"unknown suite {name!r}; choose from {SUITES}")
    return RUNNERS[name](params, seed, jobs)
