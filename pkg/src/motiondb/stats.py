"""Monte-Carlo checks of the collision-time laws.

First-collision times against a single target disk, the exponential fit,
the all-collide CDF for n independent ball/disk pairs, and the
geometric-to-exponential limit of Bernoulli first-success times.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import batch
from .errors import InsufficientSample
from .geometry import Arena, sample_free_states

ALPHA = 0.05
KS_C_ALPHA = 1.358
# estimated-rate correction applied to the KS critical value
KS_ESTIMATED_FACTOR = 0.886
MIN_SAMPLE = 1000
MAX_CENSORED_FRACTION = 0.01


def collision_rate(radius: float, speed: float, area: float) -> float:
    """Predicted first-collision rate 2 r |v| / A."""
    return 2.0 * radius * speed / area


def t_max(lam_pair: float, n: int) -> float:
    """Simulation cap (20 / lambda) (ln n + 5) for n pairs at rate lambda."""
    return (20.0 / lam_pair) * (math.log(n) + 5.0)


@dataclass
class CollisionSample:
    times: np.ndarray = field(repr=False)
    censored: np.ndarray = field(repr=False)
    config: dict = field(default_factory=dict)
    lambda_predicted: float = float("nan")
    seed: int | None = None

    @property
    def completed(self) -> np.ndarray:
        return self.times[~self.censored]

    @property
    def censored_fraction(self) -> float:
        return float(self.censored.mean()) if self.censored.size else 0.0

    def write_csv(self, path):
        cfg = ";".join(f"{k}={v}" for k, v in sorted(self.config.items()))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "trial", "config", "first_collision_time", "censored"])
            for i, (t, c) in enumerate(zip(self.times, self.censored)):
                w.writerow([self.seed, i, cfg, repr(float(t)), int(c)])


@dataclass
class FitReport:
    lambda_hat: float
    ks_statistic: float
    ks_critical: float
    passed: bool
    sample_count: int
    censored_fraction: float = 0.0

    def to_dict(self):
        return {k: (bool(v) if isinstance(v, np.bool_) else v) for k, v in self.__dict__.items()}


def sample_first_collision(arena: Arena, trials: int, rng: np.random.Generator, *,
                           target: int | None = 0, speed: float = 1.0, t_cap: float | None = None,
                           radius: float | None = None, seed: int | None = None) -> CollisionSample:
    """Time for balls started uniformly in free space to first hit ``target``.

    Other obstacles only reflect. ``target=None`` runs with no target at
    all (every trial censors at ``t_cap``); ``radius`` then supplies the
    nominal disk size for the predicted rate.
    """
    if trials < MIN_SAMPLE:
        raise InsufficientSample(f"need at least {MIN_SAMPLE} trials, got {trials}")
    if target is not None:
        radius = arena.obstacles[target].radius
    if radius is None:
        raise ValueError("radius is required when there is no target")
    lam = collision_rate(radius, speed, arena.area)
    if t_cap is None:
        t_cap = t_max(lam, 1)
    pos, vel = sample_free_states(arena, trials, rng, speed)
    targets = np.full(trials, -1 if target is None else target, dtype=np.int64)
    times, censored, _ = batch.first_hits(arena, targets, pos, vel, t_cap)
    config = {"r": radius, "n": len(arena.obstacles), "speed": speed, "area": arena.area}
    return CollisionSample(times=times, censored=censored, config=config, lambda_predicted=lam, seed=seed)


def ks_exponential(times, rate: float) -> float:
    """Sup distance between the empirical CDF of ``times`` and Exp(rate)."""
    t = np.sort(np.asarray(times, dtype=float))
    n = t.size
    cdf = -np.expm1(-rate * t)
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(n) / n
    return float(max(upper.max(), lower.max()))


def fit_exponential(sample, alpha: float = ALPHA) -> FitReport:
    """Maximum-likelihood rate and a KS test against Exp(rate).

    Accepts a :class:`CollisionSample` (completed trials are fitted) or a
    plain array of times.
    """
    if alpha != ALPHA:
        raise ValueError("only the 5% level is tabulated")
    if isinstance(sample, CollisionSample):
        times = sample.completed
        cens = sample.censored_fraction
    else:
        times = np.asarray(sample, dtype=float)
        cens = 0.0
    n = times.size
    if n < MIN_SAMPLE:
        raise InsufficientSample(f"need at least {MIN_SAMPLE} completed trials, got {n}")
    lam = 1.0 / float(times.mean())
    d = ks_exponential(times, lam)
    crit = KS_ESTIMATED_FACTOR * KS_C_ALPHA / math.sqrt(n)
    return FitReport(lambda_hat=lam, ks_statistic=d, ks_critical=crit, passed=bool(d < crit),
                     sample_count=int(n), censored_fraction=cens)


def all_collide_cdf(lam: float, n: int, t):
    """P(all n pairs have collided by t) = (1 - exp(-lam t))^n."""
    if lam <= 0 or n < 1:
        raise ValueError("need lam > 0 and n >= 1")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    out = (-np.expm1(-lam * t)) ** n
    return float(out) if out.ndim == 0 else out


def all_collide_pdf(lam: float, n: int, t):
    """n lam exp(-lam t) (1 - exp(-lam t))^(n-1)."""
    t = np.asarray(t, dtype=float)
    e = np.exp(-lam * t)
    out = n * lam * e * (1.0 - e) ** (n - 1)
    return float(out) if out.ndim == 0 else out


def expected_max_time(lam: float, n: int) -> float:
    """Mean of the max of n Exp(lam) variables, H_n / lam."""
    return sum(1.0 / k for k in range(1, n + 1)) / lam


@dataclass
class AllCollideSample:
    max_times: np.ndarray = field(repr=False)
    censored: np.ndarray = field(repr=False)
    lambda_predicted: float
    n: int

    def sup_gap(self) -> float:
        """Sup |empirical CDF - closed form| over all trials (censored count as > t_cap)."""
        t = np.sort(self.max_times[~self.censored])
        total = self.max_times.size
        cdf = all_collide_cdf(self.lambda_predicted, self.n, t)
        upper = np.arange(1, t.size + 1) / total - cdf
        lower = cdf - np.arange(t.size) / total
        gap = max(upper.max(initial=0.0), lower.max(initial=0.0))
        # censored trials keep the empirical CDF below 1 as t -> inf
        return float(max(gap, 1.0 - t.size / total))


def sample_all_collide(arena: Arena, trials: int, rng: np.random.Generator, *, speed: float = 1.0,
                       t_cap: float | None = None) -> AllCollideSample:
    """Max first-collision time over n balls, ball k targeting obstacle k.

    Requires equal radii; the n = len(arena.obstacles) pairs never interact.
    """
    n = len(arena.obstacles)
    radii = {o.radius for o in arena.obstacles}
    if n < 1 or len(radii) != 1:
        raise ValueError("needs n >= 1 obstacles of equal radius")
    lam = collision_rate(radii.pop(), speed, arena.area)
    if t_cap is None:
        t_cap = t_max(lam, n)
    pos, vel = sample_free_states(arena, trials * n, rng, speed)
    targets = np.tile(np.arange(n, dtype=np.int64), trials)
    times, censored, _ = batch.first_hits(arena, targets, pos, vel, t_cap)
    times = times.reshape(trials, n)
    censored = censored.reshape(trials, n)
    return AllCollideSample(max_times=times.max(axis=1), censored=censored.any(axis=1),
                            lambda_predicted=lam, n=n)


@dataclass
class GeometricReport:
    p: float
    trials: int
    chi2_statistic: float
    chi2_pvalue: float
    geometric_passed: bool
    ks_statistic: float
    ks_critical: float
    exponential_passed: bool
    censored: int

    def to_dict(self):
        return {k: (bool(v) if isinstance(v, np.bool_) else v) for k, v in self.__dict__.items()}


def first_success_steps(p: float, trials: int, rng: np.random.Generator, steps: int):
    """Step index of the first success in Bernoulli(p) sequences, by direct simulation.

    Sequences still failing after ``steps`` get 0.
    """
    out = np.zeros(trials, dtype=np.int64)
    active = np.arange(trials)
    for k in range(1, steps + 1):
        if not active.size:
            break
        hit = rng.random(active.size) < p
        out[active[hit]] = k
        active = active[~hit]
    return out


def geometric_limit_check(p: float = 0.01, steps: int = 100_000, trials: int = 100_000,
                          rng: np.random.Generator | None = None) -> GeometricReport:
    """First-success steps against (1-p)^(k-1) p and their Exp(p) limit.

    The geometric law is checked by chi-square over bins with expected
    count >= 5; the limit by the KS distance between the step ECDF and
    1 - exp(-p k), evaluated at the integer support.
    """
    if not 0 < p < 1:
        raise ValueError("p must be in (0, 1)")
    if trials < MIN_SAMPLE:
        raise InsufficientSample(f"need at least {MIN_SAMPLE} trials, got {trials}")
    rng = rng if rng is not None else np.random.default_rng()
    k = first_success_steps(p, trials, rng, steps)
    censored = int((k == 0).sum())
    k = k[k > 0]
    n = k.size

    # bins 1..K with expected >= 5 each, plus a tail bin
    pmf = p * (1.0 - p) ** np.arange(steps)
    expected = n * pmf
    last = int(np.searchsorted(-expected, -5.0))
    last = max(last, 1)
    observed = np.bincount(k, minlength=last + 1)[1:last + 1].astype(float)
    obs = np.append(observed, n - observed.sum())
    exp_ = np.append(expected[:last], n - expected[:last].sum())
    chi2, pval = sps.chisquare(obs, exp_)

    support = np.arange(1, k.max() + 1)
    ecdf = np.cumsum(np.bincount(k, minlength=k.max() + 1)[1:]) / n
    d = float(np.max(np.abs(ecdf - (-np.expm1(-p * support)))))
    crit = KS_C_ALPHA / math.sqrt(n)
    return GeometricReport(p=p, trials=trials, chi2_statistic=float(chi2), chi2_pvalue=float(pval),
                           geometric_passed=bool(pval >= ALPHA), ks_statistic=d, ks_critical=crit,
                           exponential_passed=bool(d < crit), censored=censored)
