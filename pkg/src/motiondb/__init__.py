"""Encrypted database shards riding chaotic billiard balls, queried by MapReduce on collision."""

from ._accel import backend
from .geometry import (Arena, Ball, BunimovichStadium, CollisionEvent, Obstacle, Rectangle,
                       SinaiSquare, Surface, place_obstacles)
from .orchestrator import SimulationConfig, next_epoch, run_query, setup_epoch
from .query import QueryPlan, execute_oracle, parse_sql

__version__ = "0.1.0"

__all__ = [
    "Arena", "Ball", "BunimovichStadium", "CollisionEvent", "Obstacle", "QueryPlan", "Rectangle",
    "SimulationConfig", "SinaiSquare", "Surface", "backend", "execute_oracle", "next_epoch", "parse_sql",
    "place_obstacles", "run_query", "setup_epoch",
]
