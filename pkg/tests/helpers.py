"""Random tables and query plans for oracle-equivalence tests."""

import numpy as np

from motiondb.crypto import Table
from motiondb.query import Agg, And, Col, Compare, Const, Join, Not, Or, QueryPlan, SetOp

A_SCHEMA = (("id", "integer"), ("grp", "text"), ("x", "integer"), ("y", "float"))
B_SCHEMA = (("id", "integer"), ("tag", "text"), ("z", "float"))
WORDS = ("ash", "birch", "cedar", "doum", "elm")


def random_tables(rng: np.random.Generator, max_rows: int = 500) -> dict:
    na = int(rng.integers(0, max_rows + 1))
    nb = int(rng.integers(0, max_rows + 1))
    a = [(int(rng.integers(0, 60)), str(rng.choice(WORDS)), int(rng.integers(-1000, 1000)),
          float(rng.normal(0, 100))) for _ in range(na)]
    b = [(int(rng.integers(0, 60)), str(rng.choice(WORDS)), float(rng.choice([0.5, -1.25, 3.0, rng.normal()])))
         for _ in range(nb)]
    return {"a": Table("a", A_SCHEMA, a), "b": Table("b", B_SCHEMA, b)}


def _const(rng, typ):
    if typ == "integer":
        return Const(int(rng.integers(-100, 100)) if rng.random() < 0.5 else int(rng.integers(0, 60)))
    if typ == "float":
        return Const(float(np.round(rng.normal(0, 60), 2)))
    return Const(str(rng.choice(WORDS + ("a", "zz"))))


def random_predicate(rng, schema, depth=2):
    r = rng.random()
    if depth > 0 and r < 0.3:
        cls = And if rng.random() < 0.5 else Or
        return cls(tuple(random_predicate(rng, schema, depth - 1) for _ in range(int(rng.integers(2, 4)))))
    if depth > 0 and r < 0.4:
        return Not(random_predicate(rng, schema, depth - 1))
    col, typ = schema[int(rng.integers(len(schema)))]
    op = str(rng.choice(["=", "!=", "<", "<=", ">", ">="]))
    numeric = [c for c, t in schema if t != "text" and c != col]
    if typ != "text" and numeric and rng.random() < 0.2:
        return Compare(op, Col(col), Col(str(rng.choice(numeric))))
    return Compare(op, Col(col), _const(rng, typ))


def _maybe(rng, p, fn):
    return fn() if rng.random() < p else None


def _subset(rng, cols):
    k = int(rng.integers(1, len(cols) + 1))
    return tuple(str(c) for c in rng.choice(cols, size=k, replace=False))


def random_plan(rng) -> QueryPlan:
    """One plan from five families: select/project, aggregate, group-by, set op, join."""
    family = int(rng.integers(5))
    src, schema = ("a", A_SCHEMA) if rng.random() < 0.7 else ("b", B_SCHEMA)
    cols = [c for c, _ in schema]
    numeric = [c for c, t in schema if t != "text"]
    where = _maybe(rng, 0.75, lambda: random_predicate(rng, schema))
    if family == 0:
        return QueryPlan(src, where, _maybe(rng, 0.7, lambda: _subset(rng, cols)))
    if family in (1, 2):
        aggs = [Agg("COUNT")]
        for _ in range(int(rng.integers(1, 4))):
            fn = str(rng.choice(["COUNT", "SUM", "MIN", "MAX", "AVG"]))
            aggs.append(Agg(fn, str(rng.choice(numeric))))
        group = () if family == 1 else _subset(rng, [c for c in cols if c not in ("y", "z")])
        return QueryPlan(src, where, tuple(group[:1]) if group and rng.random() < 0.3 else None,
                         tuple(aggs), tuple(group))
    if family == 3:
        pairs = [(("id",), ("id",)), (("grp",), ("tag",)), (("y",), ("z",)), (("id", "grp"), ("id", "tag"))]
        left, right = pairs[int(rng.integers(len(pairs)))]
        kind = str(rng.choice(["UNION", "INTERSECT", "DIFFERENCE"]))
        if rng.random() < 0.5:
            other = QueryPlan("b", _maybe(rng, 0.6, lambda: random_predicate(rng, B_SCHEMA)), right)
        else:
            other = QueryPlan("a", _maybe(rng, 0.6, lambda: random_predicate(rng, A_SCHEMA)), left)
        a_where = _maybe(rng, 0.6, lambda: random_predicate(rng, A_SCHEMA))
        return QueryPlan("a", a_where, left, set_op=SetOp(kind, other))
    on = [("id", "id"), ("grp", "tag")][int(rng.integers(2))]
    lcols = None if rng.random() < 0.4 else tuple(dict.fromkeys((on[0],) + _subset(rng, [c for c, _ in A_SCHEMA])))
    rcols = None if rng.random() < 0.4 else tuple(dict.fromkeys((on[1],) + _subset(rng, [c for c, _ in B_SCHEMA])))
    right = QueryPlan("b", _maybe(rng, 0.6, lambda: random_predicate(rng, B_SCHEMA)), rcols)
    return QueryPlan("a", _maybe(rng, 0.6, lambda: random_predicate(rng, A_SCHEMA)), lcols,
                     join=Join(right, on[0], on[1]))
