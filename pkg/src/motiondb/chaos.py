"""Chaos diagnostics: Lyapunov exponent, mean free time, KS-entropy check."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import batch, kernels
from .errors import HorizonTooShort, NoObstacles
from .geometry import Arena, Ball, SinaiSquare, sample_free_states

DELTA0 = 1e-9
DELTA_MAX = 1e-3
# longest window, in units of length travelled; bounds integrable cases
WINDOW_LENGTH = 500.0
MIN_RENORMALIZATIONS = 10


@dataclass
class LyapunovEstimate:
    lambda_hat: float
    horizon: float
    renormalization_count: int
    per_window_rates: list = field(repr=False)
    window_durations: list = field(repr=False)

    def to_dict(self):
        return asdict(self)


@dataclass
class MeanFreeTime:
    tau_hat: float
    sample_count: int
    tau_predicted: float

    @property
    def relative_error(self) -> float:
        return abs(self.tau_hat - self.tau_predicted) / self.tau_predicted


@dataclass
class KSEntropyRelation:
    lhs: float
    rhs: float
    tau_hat: float
    lambda_hat: float

    @property
    def relative_gap(self) -> float:
        return abs(self.lhs - self.rhs) / abs(self.rhs)


def estimate_lyapunov(arena: Arena, initial: Ball | None = None, delta0: float = DELTA0,
                      horizon: float = 1e4, rng: np.random.Generator | None = None, *,
                      delta_max: float = DELTA_MAX, speed: float = 1.0) -> LyapunovEstimate:
    """Largest Lyapunov exponent from a reference/twin trajectory pair.

    ``initial`` defaults to a uniform free-space state at ``speed``; the
    perturbation direction is drawn from ``rng`` in (position, direction)
    space. The estimate is total log growth over total time, i.e. the
    duration-weighted mean of the per-window rates.
    """
    rng = rng if rng is not None else np.random.default_rng()
    if initial is None:
        pos, vel = sample_free_states(arena, 1, rng, speed)
        (px, py), (vx, vy) = pos[0], vel[0]
    else:
        (px, py), (vx, vy) = initial.position, initial.velocity
    v = math.hypot(vx, vy)
    d = rng.normal(size=4)
    kind, g0, g1, obs = arena.flat
    capacity = int(horizon * v * 2) + 128
    while True:
        logs, durs, n, done = kernels.lyapunov_pair(
            kind, g0, g1, obs, float(px), float(py), float(vx), float(vy),
            float(d[0]), float(d[1]), float(d[2]), float(d[3]),
            delta0, delta_max, float(horizon), WINDOW_LENGTH / v, capacity)
        if done:
            break
        capacity *= 4
    if n < MIN_RENORMALIZATIONS:
        raise HorizonTooShort(f"only {n} renormalizations within horizon {horizon}")
    logs, durs = logs[:n], durs[:n]
    return LyapunovEstimate(
        lambda_hat=float(logs.sum() / durs.sum()),
        horizon=float(horizon),
        renormalization_count=int(n),
        per_window_rates=(logs / durs).tolist(),
        window_durations=durs.tolist(),
    )


def predicted_mean_free_time(area: float, radii, speed: float = 1.0) -> float:
    """A / (2 |v| sum r); for n equal disks, A / (2 r n |v|)."""
    return area / (2.0 * speed * float(np.sum(radii)))


def measure_mean_free_time(arena: Arena, trials: int = 10_000, rng: np.random.Generator | None = None,
                           *, speed: float = 1.0, chains: int = 8) -> MeanFreeTime:
    """Mean time between successive obstacle hits (wall hits not counted).

    ``trials`` intervals are collected over ``chains`` independent
    trajectories started uniformly in free space.
    """
    if not arena.obstacles:
        raise NoObstacles("mean free time needs at least one obstacle")
    rng = rng if rng is not None else np.random.default_rng()
    radii = [o.radius for o in arena.obstacles]
    tau_pred = predicted_mean_free_time(arena.area, radii, speed)
    per_chain = -(-trials // chains)
    pos, vel = sample_free_states(arena, chains, rng, speed)
    t_cap = 100.0 * (per_chain + 1) * tau_pred
    runs = batch.free_times(arena, pos, vel, per_chain, t_cap)
    samples = np.concatenate(runs)
    return MeanFreeTime(tau_hat=float(samples.mean()), sample_count=int(samples.size),
                        tau_predicted=tau_pred)


def ks_entropy_rhs(radius: float) -> float:
    """-2 ln R."""
    return -2.0 * math.log(radius)


def ks_entropy_relation(arena: Arena, horizon: float = 1e5, rng: np.random.Generator | None = None,
                        *, trials: int = 100_000) -> KSEntropyRelation:
    """Compare <tau> h against -2 ln R on a single-disk Sinai square."""
    shape = arena.shape
    if not isinstance(shape, SinaiSquare) or len(arena.obstacles) != 1:
        raise ValueError("needs a SinaiSquare with only its central disk")
    radius = shape.disk_radius / shape.side
    if not 0 < radius < 0.25:
        raise ValueError(f"disk radius {radius} outside the small-R regime (0, 0.25)")
    rng = rng if rng is not None else np.random.default_rng()
    tau = measure_mean_free_time(arena, trials, rng)
    lyap = estimate_lyapunov(arena, horizon=horizon, rng=rng)
    return KSEntropyRelation(lhs=tau.tau_hat * lyap.lambda_hat, rhs=ks_entropy_rhs(radius),
                             tau_hat=tau.tau_hat, lambda_hat=lyap.lambda_hat)
