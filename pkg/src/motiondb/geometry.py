"""Arena, obstacle and ball types plus exact event-driven motion.

Lengths are normalized so the default arena is the unit square. Balls are
point particles; an obstacle's radius absorbs any effective ball size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Union

import numpy as np

from . import kernels
from .errors import EventSkipped, InvalidArena, NoEventFound, PlacementInfeasible

DEFAULT_PLACEMENT_BUDGET = 100_000


@dataclass(frozen=True)
class Rectangle:
    width: float = 1.0
    height: float = 1.0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def bounds(self):
        return (0.0, self.width), (0.0, self.height)

    def wall_distance(self, x, y):
        return np.minimum(np.minimum(x, self.width - x), np.minimum(y, self.height - y))

    def flat(self):
        return kernels.RECTANGLE, float(self.width), float(self.height)


@dataclass(frozen=True)
class BunimovichStadium:
    """Flat section of ``length`` capped by two semicircles of ``radius``.

    Spans [0, length + 2 radius] x [0, 2 radius].
    """

    length: float = 1.0
    radius: float = 0.5

    @property
    def area(self) -> float:
        return 2.0 * self.radius * self.length + math.pi * self.radius ** 2

    @property
    def bounds(self):
        return (0.0, self.length + 2.0 * self.radius), (0.0, 2.0 * self.radius)

    def wall_distance(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        rho = self.radius
        cx = np.clip(x, rho, rho + self.length)
        return rho - np.hypot(x - cx, y - rho)

    def flat(self):
        return kernels.STADIUM, float(self.length), float(self.radius)


@dataclass(frozen=True)
class SinaiSquare:
    """Square of ``side`` with a fixed central disk of ``disk_radius``."""

    side: float = 1.0
    disk_radius: float = 0.1

    @property
    def area(self) -> float:
        return self.side ** 2

    @property
    def bounds(self):
        return (0.0, self.side), (0.0, self.side)

    def wall_distance(self, x, y):
        s = self.side
        return np.minimum(np.minimum(x, s - x), np.minimum(y, s - y))

    def flat(self):
        return kernels.RECTANGLE, float(self.side), float(self.side)


Shape = Union[Rectangle, BunimovichStadium, SinaiSquare]

WALL_NAMES = {
    kernels.RECTANGLE: ("left", "right", "bottom", "top"),
    kernels.STADIUM: ("left-arc", "right-arc", "bottom", "top"),
}


@dataclass(frozen=True)
class Obstacle:
    id: int
    center: tuple
    radius: float
    key_ring: frozenset = frozenset()


class Surface(NamedTuple):
    kind: str  # "wall" or "obstacle"
    id: int

    @classmethod
    def from_code(cls, code: int) -> "Surface":
        if code >= kernels.N_WALLS:
            return cls("obstacle", code - kernels.N_WALLS)
        return cls("wall", code)

    @property
    def code(self) -> int:
        return self.id + kernels.N_WALLS if self.kind == "obstacle" else self.id


@dataclass(frozen=True)
class Arena:
    shape: Shape
    obstacles: tuple = ()
    _flat: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        obstacles = tuple(self.obstacles)
        object.__setattr__(self, "obstacles", obstacles)
        for i, ob in enumerate(obstacles):
            if ob.id != i:
                raise InvalidArena(f"obstacle ids must be 0..P-1 in order, got {ob.id} at {i}")
            if not ob.radius > 0:
                raise InvalidArena(f"obstacle {i} has non-positive radius {ob.radius}")
            if not self.shape.wall_distance(*ob.center) > ob.radius:
                raise InvalidArena(f"obstacle {i} touches or crosses the boundary")
            for other in obstacles[:i]:
                gap = math.dist(ob.center, other.center) - ob.radius - other.radius
                if not gap > 0:
                    raise InvalidArena(f"obstacles {other.id} and {i} overlap")
        if not self.area > 0:
            raise InvalidArena("free area must be positive")
        obs = np.array([(*o.center, o.radius) for o in obstacles], dtype=float).reshape(-1, 3)
        obs.setflags(write=False)
        object.__setattr__(self, "_flat", (*self.shape.flat(), obs))

    @classmethod
    def build(cls, shape: Shape, obstacles=()) -> "Arena":
        """Arena over ``shape``; a SinaiSquare gets its central disk as obstacle 0."""
        obstacles = list(obstacles)
        if isinstance(shape, SinaiSquare):
            c = shape.side / 2.0
            central = Obstacle(0, (c, c), shape.disk_radius)
            obstacles = [central] + [replace(o, id=i + 1) for i, o in enumerate(obstacles)]
        return cls(shape, tuple(obstacles))

    @property
    def boundary_area(self) -> float:
        return self.shape.area

    @property
    def area(self) -> float:
        """Free area: boundary area minus obstacle disks."""
        return self.shape.area - math.pi * sum(o.radius ** 2 for o in self.obstacles)

    @property
    def flat(self):
        """(kind, g0, g1, obstacle array) for the kernels."""
        return self._flat

    def wall_name(self, wall_id: int) -> str:
        return WALL_NAMES[self._flat[0]][wall_id]

    def clearance(self, x, y):
        """Signed distance to the nearest surface (negative inside a solid)."""
        d = self.shape.wall_distance(x, y)
        for o in self.obstacles:
            d = np.minimum(d, np.hypot(np.asarray(x) - o.center[0], np.asarray(y) - o.center[1]) - o.radius)
        return d

    def contains(self, x, y, tol: float = 0.0):
        return self.clearance(x, y) >= -tol

    def with_key_rings(self, rings) -> "Arena":
        """Copy with ``rings[obstacle_id]`` installed as key rings."""
        obstacles = tuple(replace(o, key_ring=frozenset(rings.get(o.id, ()))) for o in self.obstacles)
        return Arena(self.shape, obstacles)


@dataclass
class Ball:
    id: int
    position: np.ndarray
    velocity: np.ndarray
    payload: object = None
    key_id: str | None = None
    status: str = "InFlight"
    # code of the surface just left, excluded from the next root search
    last_surface: int = -1

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)

    @property
    def speed(self) -> float:
        return float(math.hypot(*self.velocity))


@dataclass(frozen=True)
class CollisionEvent:
    time: float
    ball_id: int
    surface: Surface
    matched: bool = False


def next_event(ball: Ball, arena: Arena):
    """Time to impact and the surface that will be hit first."""
    kind, g0, g1, obs = arena.flat
    (px, py), (vx, vy) = ball.position, ball.velocity
    dt, code = kernels.next_event(float(px), float(py), float(vx), float(vy), kind, g0, g1, obs,
                                  ball.last_surface)
    if code < 0:
        raise NoEventFound(f"ball {ball.id} at {tuple(ball.position)} has no future impact")
    return float(dt), Surface.from_code(int(code))


def reflect(velocity, normal) -> np.ndarray:
    """Specular reflection ``v - 2 (v.n) n``; ``normal`` must be a unit vector."""
    v = np.asarray(velocity, dtype=float)
    n = np.asarray(normal, dtype=float)
    return v - 2.0 * np.dot(v, n) * n


def advance(ball: Ball, dt: float, arena: Arena | None = None) -> Ball:
    """Free flight for ``dt``. With ``arena`` given, refuses to skip an impact."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if arena is not None and dt > 0:
        t_hit, surface = next_event(ball, arena)
        if t_hit < dt - kernels.EPS_EVENT:
            raise EventSkipped(f"{surface} is hit at {t_hit} < dt={dt}")
    return replace(ball, position=ball.position + ball.velocity * dt)


def bounce(ball: Ball, arena: Arena):
    """Move ``ball`` to its next impact and reflect. Returns (dt, surface, ball)."""
    dt, surface = next_event(ball, arena)
    kind, g0, g1, obs = arena.flat
    pos = ball.position + ball.velocity * dt
    nx, ny = kernels.surface_normal(float(pos[0]), float(pos[1]), surface.code, kind, g0, g1, obs)
    vel = reflect(ball.velocity, (nx, ny))
    return dt, surface, replace(ball, position=pos, velocity=vel, last_surface=surface.code)


def place_obstacles(shape: Shape, count: int, radius: float, rng: np.random.Generator,
                    budget: int = DEFAULT_PLACEMENT_BUDGET) -> Arena:
    """Drop ``count`` disks uniformly over admissible centers by rejection.

    Raises PlacementInfeasible once ``budget`` candidates have been rejected.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if radius <= 0:
        raise ValueError("radius must be > 0")
    base = Arena.build(shape)
    fixed = list(base.obstacles)
    free = base.area
    if count * math.pi * radius ** 2 >= free:
        raise PlacementInfeasible(f"{count} disks of radius {radius} exceed the free area {free:.4g}")
    (x0, x1), (y0, y1) = shape.bounds
    placed = []
    rejections = 0
    while len(placed) < count:
        x, y = rng.uniform((x0 + radius, y0 + radius), (x1 - radius, y1 - radius))
        ok = shape.wall_distance(x, y) > radius
        if ok:
            for cx, cy, r in _all_disks(fixed, placed):
                if math.hypot(x - cx, y - cy) <= r + radius:
                    ok = False
                    break
        if ok:
            placed.append((float(x), float(y), radius))
            continue
        rejections += 1
        if rejections >= budget:
            raise PlacementInfeasible(
                f"placed {len(placed)}/{count} disks of radius {radius} after {budget} rejections")
    extra = [Obstacle(i, (x, y), r) for i, (x, y, r) in enumerate(placed)]
    return Arena.build(shape, extra)


def _all_disks(fixed, placed):
    for o in fixed:
        yield (*o.center, o.radius)
    yield from placed


def sample_free_states(arena: Arena, n: int, rng: np.random.Generator, speed: float = 1.0):
    """``n`` positions uniform over free space and directions uniform on [0, 2 pi)."""
    (x0, x1), (y0, y1) = arena.shape.bounds
    pos = np.empty((n, 2))
    filled = 0
    while filled < n:
        want = n - filled
        cand = rng.uniform((x0, y0), (x1, y1), size=(2 * want + 16, 2))
        ok = cand[arena.clearance(cand[:, 0], cand[:, 1]) > 0]
        take = min(want, len(ok))
        pos[filled:filled + take] = ok[:take]
        filled += take
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
    vel = speed * np.column_stack([np.cos(theta), np.sin(theta)])
    return pos, vel
