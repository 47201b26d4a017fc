"""Per-shard Map, Master-side Reduce, and the unsharded oracle executor.

Aggregate accumulators keep exact sums (int or Fraction), so merging is
associative and commutative bit-for-bit and a sharded answer equals the
unsharded one regardless of shard count or arrival order. AVG is divided
out only in :func:`reduce`.
"""

from __future__ import annotations

import json
import operator
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

from ..crypto import Shard, ShardBundle, Table
from ..errors import DuplicateShard, MissingShard, PlanError, TypeMismatch
from .plan import And, Col, Compare, Not, Or, QueryPlan, output_schema

_OPS = {"=": operator.eq, "!=": operator.ne, "<": operator.lt, "<=": operator.le,
        ">": operator.gt, ">=": operator.ge}


# predicate evaluation

def _compile_operand(node, index):
    if isinstance(node, Col):
        try:
            i = index[node.name]
        except KeyError:
            raise PlanError(f"unknown column {node.name!r}") from None
        return lambda row: row[i]
    v = node.value
    return lambda row: v


def compile_predicate(pred, columns):
    """Row -> bool closure for ``pred`` over rows laid out as ``columns``."""
    if pred is None:
        return lambda row: True
    index = {c: i for i, c in enumerate(columns)}
    if isinstance(pred, Compare):
        left = _compile_operand(pred.left, index)
        right = _compile_operand(pred.right, index)
        op = _OPS[pred.op]

        def test(row):
            a, b = left(row), right(row)
            if isinstance(a, str) != isinstance(b, str):
                raise TypeMismatch(f"cannot compare {a!r} with {b!r}")
            return op(a, b)
        return test
    if isinstance(pred, And):
        parts = [compile_predicate(p, columns) for p in pred.items]
        return lambda row: all(p(row) for p in parts)
    if isinstance(pred, Or):
        parts = [compile_predicate(p, columns) for p in pred.items]
        return lambda row: any(p(row) for p in parts)
    if isinstance(pred, Not):
        inner = compile_predicate(pred.item, columns)
        return lambda row: not inner(row)
    raise PlanError(f"bad predicate {pred!r}")


def select_project(plan: QueryPlan, schema, rows) -> list:
    columns = [c for c, _ in schema]
    keep = compile_predicate(plan.where, columns)
    if plan.columns is None:
        return [tuple(r) for r in rows if keep(r)]
    idx = [columns.index(c) for c in plan.columns]
    return [tuple(r[i] for i in idx) for r in rows if keep(r)]


# aggregate accumulators: (count, exact total, min, max)

EMPTY_ACC = (0, 0, None, None)


def _exact(v):
    return Fraction(v) if isinstance(v, float) else v


def merge_acc(a, b):
    lo = b[2] if a[2] is None else a[2] if b[2] is None else min(a[2], b[2])
    hi = b[3] if a[3] is None else a[3] if b[3] is None else max(a[3], b[3])
    return (a[0] + b[0], a[1] + b[1], lo, hi)


@dataclass(frozen=True)
class AggState:
    """group key -> one accumulator per aggregate."""

    groups: dict = field(default_factory=dict)
    width: int = 0

    @classmethod
    def empty(cls, width: int) -> "AggState":
        return cls({}, width)

    @classmethod
    def from_rows(cls, plan: QueryPlan, schema, rows) -> "AggState":
        columns = [c for c, _ in schema]
        keep = compile_predicate(plan.where, columns)
        gidx = [columns.index(c) for c in plan.group_by]
        aidx = [None if a.column is None else columns.index(a.column) for a in plan.aggregates]
        groups = {}
        for r in rows:
            if not keep(r):
                continue
            key = tuple(r[i] for i in gidx)
            accs = groups.get(key)
            if accs is None:
                accs = [EMPTY_ACC] * len(aidx)
            new = []
            for acc, i in zip(accs, aidx):
                if i is None:
                    new.append((acc[0] + 1, acc[1], acc[2], acc[3]))
                else:
                    v = r[i]
                    new.append(merge_acc(acc, (1, _exact(v) if not isinstance(v, str) else 0, v, v)))
            groups[key] = new
        return cls({k: tuple(v) for k, v in groups.items()}, len(aidx))

    def merge(self, other: "AggState") -> "AggState":
        width = max(self.width, other.width)
        out = dict(self.groups)
        for key, accs in other.groups.items():
            mine = out.get(key)
            out[key] = accs if mine is None else tuple(merge_acc(a, b) for a, b in zip(mine, accs))
        return AggState(out, width)

    def __eq__(self, other):
        return isinstance(other, AggState) and self.groups == other.groups

    def finalize(self, plan: QueryPlan, out_schema) -> list:
        groups = dict(self.groups)
        if not plan.group_by and () not in groups:
            groups[()] = tuple([EMPTY_ACC] * len(plan.aggregates))
        types = [t for _, t in out_schema[len(plan.group_by):]]
        rows = []
        for key, accs in groups.items():
            vals = list(key)
            for agg, acc, typ in zip(plan.aggregates, accs, types):
                vals.append(finish(agg.fn, acc, typ))
            rows.append(tuple(vals))
        return rows


def finish(fn: str, acc, typ: str):
    count, total, lo, hi = acc
    if fn == "COUNT":
        return count
    if count == 0:
        return None
    if fn == "SUM":
        return int(total) if typ == "integer" else float(total)
    if fn == "MIN":
        return lo
    if fn == "MAX":
        return hi
    return float(Fraction(total) / count)


# results

def _sort_key(row):
    return tuple((v is None, "" if v is None else v) for v in row)


def canonical(rows) -> list:
    return sorted((tuple(r) for r in rows), key=_sort_key)


def _jsonable(v):
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    return v


@dataclass
class PartialResult:
    shard_id: int
    kind: str  # "RowSet" or "AggState"
    rows: tuple = ()
    other_rows: tuple = ()
    state: AggState | None = None

    def to_json(self) -> str:
        doc = {"shard_id": self.shard_id, "kind": self.kind}
        if self.kind == "RowSet":
            doc["rows"] = [list(r) for r in self.rows]
            doc["other_rows"] = [list(r) for r in self.other_rows]
        else:
            doc["groups"] = sorted(
                ([list(k), [[_jsonable(x) for x in acc] for acc in accs]]
                 for k, accs in self.state.groups.items()),
                key=lambda g: _sort_key(g[0]))
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


@dataclass
class QueryResult:
    columns: tuple
    rows: list
    provenance: list = field(default_factory=list)
    epoch: int | None = None

    def same_answer(self, other: "QueryResult") -> bool:
        return (list(self.columns) == list(other.columns)
                and canonical(self.rows) == canonical(other.rows))

    def to_dict(self) -> dict:
        return {"columns": [list(c) for c in self.columns], "rows": [list(r) for r in self.rows],
                "provenance": list(self.provenance), "epoch": self.epoch}


# Map

def _shard_tables(shard) -> tuple[int, dict]:
    if isinstance(shard, ShardBundle):
        return shard.shard_id, shard.view()
    if isinstance(shard, Shard):
        return shard.shard_id, {shard.table: shard}
    if isinstance(shard, dict):
        ids = {s.shard_id for s in shard.values()}
        if len(ids) != 1:
            raise PlanError("shard view mixes shard ids")
        return ids.pop(), dict(shard)
    raise TypeError(f"not a shard: {type(shard).__name__}")


def map_shard(plan: QueryPlan, shard) -> PartialResult:
    """Selection, projection and partial aggregation over one decrypted shard."""
    shard_id, tables = _shard_tables(shard)
    missing = [t for t in plan.tables() if t not in tables]
    if missing:
        raise PlanError(f"shard {shard_id} carries no rows of {missing}")
    output_schema(plan, {name: s.schema for name, s in tables.items()})
    src = tables[plan.source]
    if plan.is_aggregate:
        return PartialResult(shard_id, "AggState", state=AggState.from_rows(plan, src.schema, src.rows))
    rows = select_project(plan, src.schema, src.rows)
    other = ()
    sub = plan.set_op.plan if plan.set_op else plan.join.plan if plan.join else None
    if sub is not None:
        t = tables[sub.source]
        other = tuple(select_project(sub, t.schema, t.rows))
    return PartialResult(shard_id, "RowSet", rows=tuple(rows), other_rows=other)


def onfly_execute(plan: QueryPlan, shard) -> PartialResult:
    """Map work against the payload a ball carries, ahead of its delivery collision."""
    return map_shard(plan, shard)


# Reduce

def _hash_join(left, right, li, ri):
    index = defaultdict(list)
    for r in right:
        index[r[ri]].append(r)
    return [l + r for l in left for r in index.get(l[li], ())]


def reduce(partials, plan: QueryPlan, schemas: dict, n_shards: int | None = None,
           epoch: int | None = None) -> QueryResult:
    """Merge one partial per shard into the final answer."""
    partials = sorted(partials, key=lambda p: p.shard_id)
    ids = [p.shard_id for p in partials]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise DuplicateShard(f"duplicate partials for shards {dup}")
    if n_shards is not None:
        missing = sorted(set(range(n_shards)) - set(ids))
        extra = sorted(set(ids) - set(range(n_shards)))
        if missing or extra:
            raise MissingShard(f"missing shards {missing}, unexpected shards {extra}")
    out_schema = output_schema(plan, schemas)
    if plan.is_aggregate:
        state = AggState.empty(len(plan.aggregates))
        for p in partials:
            state = state.merge(p.state)
        rows = state.finalize(plan, out_schema)
    else:
        rows = [r for p in partials for r in p.rows]
        other = [r for p in partials for r in p.other_rows]
        rows = _combine(plan, rows, other, schemas)
    return QueryResult(out_schema, canonical(rows), ids, epoch)


def _combine(plan, rows, other, schemas):
    if plan.set_op:
        a, b = set(rows), set(other)
        kind = plan.set_op.kind
        return list(a | b if kind == "UNION" else a & b if kind == "INTERSECT" else a - b)
    if plan.join:
        left_cols = [c for c, _ in output_schema(_strip(plan), schemas)]
        right_cols = [c for c, _ in output_schema(plan.join.plan, schemas)]
        return _hash_join(rows, other, left_cols.index(plan.join.left_column),
                          right_cols.index(plan.join.right_column))
    return rows


def _strip(plan: QueryPlan) -> QueryPlan:
    return QueryPlan(plan.source, plan.where, plan.columns)


# oracle

def _as_tables(tables) -> dict:
    if isinstance(tables, Table):
        return {tables.name: tables}
    return dict(tables)


def _direct_rows(plan: QueryPlan, table: Table) -> list:
    columns = table.columns
    idx = {c: i for i, c in enumerate(columns)}

    def val(node, row):
        return row[idx[node.name]] if isinstance(node, Col) else node.value

    def holds(p, row):
        if p is None:
            return True
        if isinstance(p, Compare):
            a, b = val(p.left, row), val(p.right, row)
            if isinstance(a, str) != isinstance(b, str):
                raise TypeMismatch(f"cannot compare {a!r} with {b!r}")
            return _OPS[p.op](a, b)
        if isinstance(p, And):
            return all(holds(q, row) for q in p.items)
        if isinstance(p, Or):
            return any(holds(q, row) for q in p.items)
        return not holds(p.item, row)

    return [row for row in table.rows if holds(plan.where, row)]


def execute_oracle(plan: QueryPlan, tables) -> QueryResult:
    """Reference semantics: one direct pass over the full plaintext tables."""
    tables = _as_tables(tables)
    schemas = {n: t.schema for n, t in tables.items()}
    out_schema = output_schema(plan, schemas)
    table = tables[plan.source]
    matched = _direct_rows(plan, table)
    cols = table.columns

    if plan.is_aggregate:
        buckets = defaultdict(list)
        for row in matched:
            buckets[tuple(row[cols.index(g)] for g in plan.group_by)].append(row)
        if not plan.group_by:
            buckets.setdefault((), [])
        rows = []
        for key, members in buckets.items():
            out = list(key)
            for agg, (_, typ) in zip(plan.aggregates, out_schema[len(plan.group_by):]):
                vals = [] if agg.column is None else [m[cols.index(agg.column)] for m in members]
                if agg.fn == "COUNT":
                    out.append(len(members))
                elif not members:
                    out.append(None)
                elif agg.fn == "SUM":
                    s = sum(Fraction(v) for v in vals)
                    out.append(int(s) if typ == "integer" else float(s))
                elif agg.fn == "MIN":
                    out.append(min(vals))
                elif agg.fn == "MAX":
                    out.append(max(vals))
                else:
                    out.append(float(sum(Fraction(v) for v in vals) / len(vals)))
            rows.append(tuple(out))
        return QueryResult(out_schema, canonical(rows), [], None)

    def project(p, t, rs):
        if p.columns is None:
            return [tuple(r) for r in rs]
        return [tuple(r[t.columns.index(c)] for c in p.columns) for r in rs]

    rows = project(plan, table, matched)
    if plan.set_op:
        sub = plan.set_op.plan
        other = project(sub, tables[sub.source], _direct_rows(sub, tables[sub.source]))
        kind = plan.set_op.kind
        if kind == "UNION":
            rows = list(dict.fromkeys(rows + other))
        elif kind == "INTERSECT":
            rows = [r for r in dict.fromkeys(rows) if r in other]
        else:
            rows = [r for r in dict.fromkeys(rows) if r not in other]
    elif plan.join:
        sub = plan.join.plan
        other = project(sub, tables[sub.source], _direct_rows(sub, tables[sub.source]))
        lnames = list(plan.columns) if plan.columns is not None else table.columns
        rt = tables[sub.source]
        rnames = list(sub.columns) if sub.columns is not None else rt.columns
        li, ri = lnames.index(plan.join.left_column), rnames.index(plan.join.right_column)
        rows = [l + r for l in rows for r in other if l[li] == r[ri]]
    return QueryResult(out_schema, canonical(rows), [], None)
