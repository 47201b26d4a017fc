"""Relational-algebra plans executed as per-shard Map plus Master Reduce."""

from .engine import (AggState, PartialResult, QueryResult, canonical, execute_oracle, map_shard,
                     onfly_execute, reduce)
from .plan import (Agg, And, Col, Compare, Const, Join, Not, Or, QueryPlan, SetOp, from_json,
                   output_schema, to_json)
from .sql import parse_sql

__all__ = [
    "Agg", "AggState", "And", "Col", "Compare", "Const", "Join", "Not", "Or", "PartialResult",
    "QueryPlan", "QueryResult", "SetOp", "canonical", "execute_oracle", "from_json", "map_shard",
    "onfly_execute", "output_schema", "parse_sql", "reduce", "to_json",
]
