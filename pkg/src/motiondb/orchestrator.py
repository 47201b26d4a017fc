"""Epoch lifecycle: shard, encrypt, launch, collide, Map, converge, Reduce, re-randomize.

One epoch serves one query. Balls never interact, so the event loop keeps
a per-ball clock and a heap of each ball's next impact; ties are broken by
ball id, which makes the event order a pure function of the seed.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import kernels
from .crypto import (CIPHERS, DEFAULT_CIPHER, EncryptedShard, KeyRegistry, ShardBundle, Table,
                     assign_keys, decrypt_shard, encrypt_shard, shard_table)
from .errors import (AuthenticationError, AuthFailureOnClaimedMatch, ConfigError,
                     ConvergenceTimeout, DuplicateShard, NoEventFound, PhaseError, ReplayMismatch)
from .geometry import (Arena, Ball, BunimovichStadium, CollisionEvent, Rectangle, SinaiSquare,
                       Surface, place_obstacles, sample_free_states)
from .query import QueryPlan, QueryResult, map_shard, onfly_execute, output_schema, reduce
from .stats import collision_rate

PHASES = ("Setup", "InMotion", "Converged", "Reduced")
MAP_MODES = ("at-obstacle", "on-the-fly")
ARENAS = ("square", "stadium", "sinai")
EVENT_LOG_COLUMNS = ("epoch", "sim_time", "ball_id", "surface_kind", "surface_id", "matched")


@dataclass
class SimulationConfig:
    n_shards: int = 4
    n_balls: int = 4
    n_obstacles: int = 4
    obstacle_radius: float = 0.05
    speed: float = 1.0
    arena: str = "square"
    arena_params: dict = field(default_factory=dict)
    seed: int = 0
    map_mode: str = "at-obstacle"
    tmax_factor: float = 20.0
    tmax_offset: float = 5.0
    cipher: str = DEFAULT_CIPHER
    query_arrival: float = 0.0
    # [{"csv": path, "schema": path}, ...]; empty means the bundled sample table
    tables: list = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        for name in ("n_shards", "n_balls", "n_obstacles", "seed"):
            v = getattr(self, name)
            need(isinstance(v, int) and not isinstance(v, bool), f"{name} must be an integer, got {v!r}")
        need(self.n_shards >= 1, "n_shards must be >= 1")
        need(self.n_balls >= self.n_shards, "n_balls must be >= n_shards")
        need(self.n_obstacles >= 1, "n_obstacles must be >= 1")
        need(self.seed >= 0, "seed must be >= 0")
        for name in ("obstacle_radius", "speed", "tmax_factor"):
            v = getattr(self, name)
            need(isinstance(v, (int, float)) and math.isfinite(v) and v > 0, f"{name} must be > 0")
        need(isinstance(self.tmax_offset, (int, float)) and self.tmax_offset >= 0, "tmax_offset must be >= 0")
        need(isinstance(self.query_arrival, (int, float)) and self.query_arrival >= 0,
             "query_arrival must be >= 0")
        need(self.arena in ARENAS, f"arena must be one of {ARENAS}, got {self.arena!r}")
        need(self.map_mode in MAP_MODES, f"map_mode must be one of {MAP_MODES}, got {self.map_mode!r}")
        need(self.cipher in CIPHERS, f"cipher must be one of {sorted(CIPHERS)}")
        need(isinstance(self.arena_params, dict), "arena_params must be an object")
        need(isinstance(self.tables, list), "tables must be a list")
        try:
            self.shape()
        except TypeError as exc:
            raise ConfigError(f"bad arena_params for {self.arena}: {exc}") from None

    def shape(self):
        if self.arena == "square":
            return Rectangle(**self.arena_params)
        if self.arena == "stadium":
            return BunimovichStadium(**self.arena_params)
        return SinaiSquare(**self.arena_params)

    @classmethod
    def from_dict(cls, doc: dict) -> "SimulationConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "SimulationConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def lambda_pair(self, arena: Arena) -> float:
        """Collision rate 2 r |v| / A of one ball with its keyed obstacle."""
        return collision_rate(self.obstacle_radius, self.speed, arena.area)

    def t_max(self, arena: Arena) -> float:
        return (self.tmax_factor / self.lambda_pair(arena)) * (math.log(self.n_shards) + self.tmax_offset)


class MasterAccumulator:
    """Partials keyed by shard id; duplicates are rejected."""

    def __init__(self, n_shards: int):
        self.n_shards = n_shards
        self.partials: dict = {}

    def receive(self, partial):
        if partial.shard_id in self.partials:
            raise DuplicateShard(f"shard {partial.shard_id} delivered twice")
        self.partials[partial.shard_id] = partial

    @property
    def complete(self) -> bool:
        return len(self.partials) == self.n_shards


@dataclass
class EpochState:
    epoch_id: int
    config: SimulationConfig
    arena: Arena
    registry: KeyRegistry
    balls: list
    schemas: dict
    shard_of_ball: dict
    phase: str = "Setup"
    delivered: set = field(default_factory=set)
    pending: QueryPlan | None = None
    arrival_time: float = 0.0
    event_log: list = field(default_factory=list)
    sim_time: float = 0.0
    convergence_time: float | None = None
    clocks: list = field(default_factory=list)
    master: MasterAccumulator | None = None
    onfly: dict = field(default_factory=dict)
    _schedule: dict = field(default_factory=dict, repr=False)
    _pool: object = field(default=None, repr=False)
    _futures: dict = field(default_factory=dict, repr=False)

    @property
    def n_shards(self) -> int:
        return self.config.n_shards

    @property
    def undelivered(self) -> list:
        return sorted(set(range(self.n_shards)) - self.delivered)

    def set_phase(self, phase: str):
        if PHASES.index(phase) < PHASES.index(self.phase):
            raise PhaseError(f"cannot move from {self.phase} back to {phase}")
        self.phase = phase

    def fingerprint(self) -> str:
        """Digest of the dynamic state: ball states, clocks, deliveries and the event log."""
        h = hashlib.sha256()
        h.update(f"{self.epoch_id}|{self.phase}|{self.sim_time!r}|{sorted(self.delivered)}".encode())
        for b, t in zip(self.balls, self.clocks):
            h.update(f"{b.id}|{b.status}|{b.last_surface}|{t!r}|".encode())
            h.update(b.position.tobytes() + b.velocity.tobytes())
        for e in self.event_log:
            h.update(f"{e.time!r}|{e.ball_id}|{e.surface.code}|{int(e.matched)}".encode())
        return h.hexdigest()


def _as_tables(tables) -> dict:
    if isinstance(tables, Table):
        return {tables.name: tables}
    return {t.name: t for t in tables} if isinstance(tables, (list, tuple)) else dict(tables)


def setup_epoch(config: SimulationConfig, tables, epoch_id: int = 0,
                rng: np.random.Generator | None = None) -> EpochState:
    """Place obstacles, shard and encrypt every table, assign keys, and launch the balls."""
    config.validate()
    tables = _as_tables(tables)
    rng = rng if rng is not None else np.random.default_rng([config.seed, epoch_id])
    shape = config.shape()
    arena = place_obstacles(shape, config.n_obstacles, config.obstacle_radius, rng)
    # a Sinai square's central disk is scenery: it never holds a key
    offset = 1 if isinstance(shape, SinaiSquare) else 0

    names = sorted(tables)
    sharded = [shard_table(tables[n], config.n_shards) for n in names]
    bundles = [ShardBundle(k, tuple(s.shards[k] for s in sharded)) for k in range(config.n_shards)]

    registry = assign_keys(config.n_shards, config.n_balls, config.n_obstacles, rng)
    registry.obstacle_of = {k: ob + offset for k, ob in registry.obstacle_of.items()}
    arena = arena.with_key_rings(registry.rings())
    pos, vel = sample_free_states(arena, config.n_balls, rng, config.speed)
    shard_of_ball = {b: s for s, b in registry.ball_of_shard.items()}

    balls = [Ball(i, pos[i], vel[i]) for i in range(config.n_balls)]
    for shard_id in range(config.n_shards):
        b = registry.ball_of_shard[shard_id]
        key_id = registry.key_of_ball[b]
        balls[b].key_id = key_id
        balls[b].payload = encrypt_shard(bundles[shard_id], registry.keys[key_id], rng, key_id,
                                         config.cipher)
    size = len(balls[registry.ball_of_shard[0]].payload.ciphertext)
    for ball in balls:
        if ball.payload is None:
            # decoy: ciphertext-shaped noise under a key id nobody holds
            ball.key_id = rng.bytes(8).hex()
            ball.payload = EncryptedShard(-1, rng.bytes(size), rng.bytes(12), ball.key_id,
                                          rng.bytes(16), config.cipher)

    epoch = EpochState(epoch_id=epoch_id, config=config, arena=arena, registry=registry, balls=balls,
                       schemas={n: tables[n].schema for n in names}, shard_of_ball=shard_of_ball,
                       clocks=[0.0] * config.n_balls, master=MasterAccumulator(config.n_shards))
    epoch.set_phase("InMotion")
    return epoch


def _map_work(plan, bundle):
    return map_shard(plan, bundle)


def handle_collision(event: CollisionEvent, epoch: EpochState, registry: KeyRegistry | None = None) -> EpochState:
    """Log ``event``; on a key match, decrypt at the obstacle and hand a partial to the Master."""
    registry = registry if registry is not None else epoch.registry
    ball = epoch.balls[event.ball_id]
    matched = False
    if (event.surface.kind == "obstacle" and epoch.pending is not None
            and event.time >= epoch.arrival_time and ball.status == "InFlight"
            and ball.key_id in epoch.arena.obstacles[event.surface.id].key_ring):
        matched = True
        shard_id = epoch.shard_of_ball[ball.id]
        try:
            bundle = decrypt_shard(ball.payload, registry.keys[ball.key_id], site="obstacle")
        except (AuthenticationError, KeyError) as exc:
            raise AuthFailureOnClaimedMatch(
                f"ball {ball.id} matched obstacle {event.surface.id} but decryption failed") from exc
        if bundle.shard_id != shard_id:
            raise AuthFailureOnClaimedMatch(f"ball {ball.id} carried shard {bundle.shard_id}, expected {shard_id}")
        if ball.id in epoch.onfly:
            # the key check above authenticated the payload; forward the precomputed partial
            epoch.master.receive(epoch.onfly.pop(ball.id))
        elif epoch._pool is not None:
            epoch._futures[shard_id] = epoch._pool.submit(_map_work, epoch.pending, bundle)
        else:
            epoch.master.receive(map_shard(epoch.pending, bundle))
        del bundle
        ball.status = "Delivered"
        epoch.delivered.add(shard_id)
    epoch.event_log.append(CollisionEvent(event.time, event.ball_id, event.surface, matched))
    if len(epoch.delivered) == epoch.n_shards and epoch.phase == "InMotion":
        epoch.set_phase("Converged")
        epoch.sim_time = event.time
        epoch.convergence_time = event.time - epoch.arrival_time
    return epoch


def _schedule_next(epoch: EpochState, b: int):
    ball = epoch.balls[b]
    kind, g0, g1, obs = epoch.arena.flat
    dt, code = kernels.next_event(float(ball.position[0]), float(ball.position[1]),
                                  float(ball.velocity[0]), float(ball.velocity[1]),
                                  kind, g0, g1, obs, ball.last_surface)
    if code < 0:
        raise NoEventFound(f"ball {b} at {tuple(ball.position)} has no future impact")
    t = epoch.clocks[b] + dt
    epoch._schedule[b] = (t, int(code))
    return t


def _fire(epoch: EpochState, b: int) -> CollisionEvent:
    """Move ball ``b`` to its scheduled impact, reflect, and reschedule."""
    t, code = epoch._schedule[b]
    ball = epoch.balls[b]
    kind, g0, g1, obs = epoch.arena.flat
    dt = t - epoch.clocks[b]
    px = float(ball.position[0]) + float(ball.velocity[0]) * dt
    py = float(ball.position[1]) + float(ball.velocity[1]) * dt
    nx, ny = kernels.surface_normal(px, py, code, kind, g0, g1, obs)
    vx, vy = kernels.reflect(float(ball.velocity[0]), float(ball.velocity[1]), nx, ny)
    ball.position = np.array((px, py))
    ball.velocity = np.array((vx, vy))
    ball.last_surface = code
    epoch.clocks[b] = t
    _schedule_next(epoch, b)
    return CollisionEvent(t, b, Surface.from_code(code))


def _begin_query(epoch: EpochState, plan: QueryPlan, arrival_time: float):
    if epoch.phase != "InMotion":
        raise PhaseError(f"run_query needs phase InMotion, epoch is {epoch.phase}")
    if epoch.pending is not None:
        raise PhaseError("a query is already pending in this epoch")
    output_schema(plan, epoch.schemas)
    epoch.pending = plan
    epoch.arrival_time = float(arrival_time)
    if epoch.config.map_mode == "on-the-fly":
        for ball in epoch.balls:
            if ball.id in epoch.shard_of_ball and ball.status == "InFlight":
                key = epoch.registry.keys[ball.key_id]
                view = decrypt_shard(ball.payload, key, site="ball-onfly")
                epoch.onfly[ball.id] = onfly_execute(plan, view)
    for b in range(len(epoch.balls)):
        if b not in epoch._schedule:
            _schedule_next(epoch, b)


def _finish(epoch: EpochState, plan: QueryPlan) -> QueryResult:
    for shard_id in sorted(epoch._futures):
        epoch.master.receive(epoch._futures[shard_id].result())
    epoch._futures.clear()
    result = reduce(list(epoch.master.partials.values()), plan, epoch.schemas,
                    n_shards=epoch.n_shards, epoch=epoch.epoch_id)
    epoch.set_phase("Reduced")
    return result


def run_query(epoch: EpochState, plan: QueryPlan, arrival_time: float | None = None,
              jobs: int = 1) -> QueryResult:
    """Simulate until every shard is delivered (or T_max passes), then Reduce.

    Raises ConvergenceTimeout with the delivered/undelivered shard ids if
    the cap is reached first.
    """
    arrival = epoch.config.query_arrival if arrival_time is None else arrival_time
    _begin_query(epoch, plan, arrival)
    deadline = epoch.arrival_time + epoch.config.t_max(epoch.arena)
    heap = [(t, b) for b, (t, _) in epoch._schedule.items()]
    heapq.heapify(heap)
    pool = ThreadPoolExecutor(max_workers=jobs) if jobs > 1 else None
    epoch._pool = pool
    try:
        while epoch.phase == "InMotion":
            t, b = heap[0]
            if t > deadline:
                epoch.sim_time = deadline
                raise ConvergenceTimeout(deadline, epoch.delivered, epoch.undelivered)
            event = _fire(epoch, b)
            heapq.heapreplace(heap, (epoch._schedule[b][0], b))
            handle_collision(event, epoch)
        return _finish(epoch, plan)
    finally:
        epoch._pool = None
        if pool is not None:
            pool.shutdown(wait=True)


def replay_epoch(config: SimulationConfig, tables, log, plan: QueryPlan, epoch_id: int = 0,
                 arrival_time: float | None = None) -> EpochState:
    """Rebuild an epoch from its seed and re-apply a logged event sequence.

    Each logged event must coincide with the recomputed impact (time and
    surface bit-for-bit) or :class:`ReplayMismatch` is raised.
    """
    epoch = setup_epoch(config, tables, epoch_id)
    arrival = config.query_arrival if arrival_time is None else arrival_time
    _begin_query(epoch, plan, arrival)
    for i, logged in enumerate(log):
        b = logged.ball_id
        t, code = epoch._schedule[b]
        if t != logged.time or code != logged.surface.code:
            raise ReplayMismatch(f"event {i}: logged ({logged.time!r}, {logged.surface}) "
                                 f"but dynamics give ({t!r}, {Surface.from_code(code)})")
        event = _fire(epoch, b)
        handle_collision(event, epoch)
        if epoch.event_log[-1].matched != logged.matched:
            raise ReplayMismatch(f"event {i}: match flag differs")
    if epoch.phase == "Converged":
        _finish(epoch, plan)
    return epoch


def next_epoch(epoch: EpochState, config: SimulationConfig | None = None, tables=None,
               rng: np.random.Generator | None = None) -> EpochState:
    """Fresh placement, keys and matching under the next epoch id."""
    if epoch.phase != "Reduced":
        raise PhaseError(f"next_epoch needs phase Reduced, epoch is {epoch.phase}")
    config = config if config is not None else epoch.config
    if tables is None:
        raise ValueError("tables are required to re-shard")
    return setup_epoch(config, tables, epoch.epoch_id + 1, rng)


def event_rows(epoch: EpochState):
    for e in epoch.event_log:
        yield (epoch.epoch_id, repr(float(e.time)), e.ball_id, e.surface.kind, e.surface.id, int(e.matched))


def write_event_log(epochs, path):
    """CSV of every logged collision, one row per event, times in round-trip repr."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVENT_LOG_COLUMNS)
        for epoch in epochs:
            w.writerows(event_rows(epoch))
    return path


def read_event_log(path) -> dict:
    """epoch id -> list of CollisionEvent."""
    out: dict = {}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            ev = CollisionEvent(float(rec["sim_time"]), int(rec["ball_id"]),
                                Surface(rec["surface_kind"], int(rec["surface_id"])),
                                rec["matched"] == "1")
            out.setdefault(int(rec["epoch"]), []).append(ev)
    return out
