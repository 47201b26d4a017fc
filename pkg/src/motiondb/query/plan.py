"""Relational-algebra plan AST, validation and JSON form."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import PlanError, TypeMismatch

COMPARISONS = ("=", "!=", "<", "<=", ">", ">=")
AGGREGATES = ("COUNT", "SUM", "MIN", "MAX", "AVG")
SET_OPS = ("UNION", "INTERSECT", "DIFFERENCE")
NUMERIC = ("integer", "float")


@dataclass(frozen=True)
class Col:
    name: str


@dataclass(frozen=True)
class Const:
    value: object


@dataclass(frozen=True)
class Compare:
    op: str
    left: object
    right: object

    def __post_init__(self):
        if self.op not in COMPARISONS:
            raise PlanError(f"unknown comparison {self.op!r}")


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class Not:
    item: object


@dataclass(frozen=True)
class Agg:
    fn: str
    column: str | None = None  # None only for COUNT(*)

    def __post_init__(self):
        if self.fn not in AGGREGATES:
            raise PlanError(f"unknown aggregate {self.fn!r}")
        if self.column is None and self.fn != "COUNT":
            raise PlanError(f"{self.fn} needs a column")

    @property
    def label(self) -> str:
        return f"{self.fn.lower()}({self.column or '*'})"


@dataclass(frozen=True)
class SetOp:
    kind: str
    plan: "QueryPlan"

    def __post_init__(self):
        if self.kind not in SET_OPS:
            raise PlanError(f"unknown set operation {self.kind!r}")


@dataclass(frozen=True)
class Join:
    """Equi-join with ``plan``'s output, executed at the Master."""

    plan: "QueryPlan"
    left_column: str
    right_column: str


@dataclass(frozen=True)
class QueryPlan:
    source: str
    where: object = None
    columns: tuple | None = None
    aggregates: tuple = ()
    group_by: tuple = ()
    set_op: SetOp | None = None
    join: Join | None = None

    @property
    def is_aggregate(self) -> bool:
        return bool(self.aggregates or self.group_by)

    def tables(self) -> list:
        """Source tables touched, in evaluation order."""
        out = [self.source]
        for sub in (self.set_op and self.set_op.plan, self.join and self.join.plan):
            if sub is not None:
                out.extend(t for t in sub.tables() if t not in out)
        return out


# validation

def _operand_type(node, schema: dict):
    if isinstance(node, Col):
        if node.name not in schema:
            raise PlanError(f"unknown column {node.name!r}")
        return schema[node.name]
    if isinstance(node, Const):
        v = node.value
        if isinstance(v, bool) or not isinstance(v, (int, float, str)):
            raise PlanError(f"unsupported constant {v!r}")
        return "text" if isinstance(v, str) else "float" if isinstance(v, float) else "integer"
    raise PlanError(f"bad operand {node!r}")


def check_predicate(pred, schema: dict):
    if pred is None:
        return
    if isinstance(pred, Compare):
        lt = _operand_type(pred.left, schema)
        rt = _operand_type(pred.right, schema)
        if (lt == "text") != (rt == "text"):
            raise TypeMismatch(f"cannot compare {lt} with {rt} in {pred}")
    elif isinstance(pred, (And, Or)):
        for p in pred.items:
            check_predicate(p, schema)
    elif isinstance(pred, Not):
        check_predicate(pred.item, schema)
    else:
        raise PlanError(f"bad predicate {pred!r}")


def output_schema(plan: QueryPlan, schemas: dict) -> tuple:
    """Validate ``plan`` against ``schemas`` (table -> ((col, type), ...)) and return its output schema."""
    if plan.source not in schemas:
        raise PlanError(f"unknown table {plan.source!r}")
    schema = dict(schemas[plan.source])
    check_predicate(plan.where, schema)
    for c in plan.group_by:
        if c not in schema:
            raise PlanError(f"unknown group-by column {c!r}")
    if plan.is_aggregate:
        if plan.set_op or plan.join:
            raise PlanError("aggregates cannot be combined with set operations or joins")
        if plan.columns is not None and not set(plan.columns) <= set(plan.group_by):
            raise PlanError("with aggregates, projected columns must be group-by columns")
        out = [(c, schema[c]) for c in plan.group_by]
        for agg in plan.aggregates:
            if agg.column is not None:
                if agg.column not in schema:
                    raise PlanError(f"unknown aggregate column {agg.column!r}")
                if agg.fn != "COUNT" and schema[agg.column] not in NUMERIC:
                    raise TypeMismatch(f"{agg.label} needs a numeric column")
            if agg.fn == "COUNT":
                typ = "integer"
            elif agg.fn == "AVG":
                typ = "float"
            else:
                typ = schema[agg.column]
            out.append((agg.label, typ))
        return tuple(out)

    cols = list(schema) if plan.columns is None else list(plan.columns)
    for c in cols:
        if c not in schema:
            raise PlanError(f"unknown column {c!r}")
    if len(set(cols)) != len(cols):
        raise PlanError("duplicate projected column")
    out = tuple((c, schema[c]) for c in cols)
    if plan.set_op and plan.join:
        raise PlanError("a plan takes either a set operation or a join, not both")
    if plan.set_op:
        other = output_schema(plan.set_op.plan, schemas)
        if plan.set_op.plan.is_aggregate or plan.set_op.plan.join:
            raise PlanError("set-operation operands must be plain select/project plans")
        if [t for _, t in other] != [t for _, t in out]:
            raise PlanError(f"{plan.set_op.kind} operands are not union-compatible")
    if plan.join:
        right = plan.join.plan
        if right.is_aggregate or right.join or right.set_op:
            raise PlanError("the join's right side must be a plain select/project plan")
        rschema = output_schema(right, schemas)
        lcols, rcols = dict(out), dict(rschema)
        if plan.join.left_column not in lcols or plan.join.right_column not in rcols:
            raise PlanError("join columns must appear in both sides' outputs")
        if (lcols[plan.join.left_column] == "text") != (rcols[plan.join.right_column] == "text"):
            raise TypeMismatch("join columns have incompatible types")
        names = set(lcols)
        joined = list(out)
        for c, t in rschema:
            joined.append((f"{right.source}.{c}" if c in names else c, t))
        out = tuple(joined)
    return out


# JSON

def _pred_to_json(p):
    if p is None:
        return None
    if isinstance(p, Compare):
        return {"cmp": p.op, "left": _operand_to_json(p.left), "right": _operand_to_json(p.right)}
    if isinstance(p, And):
        return {"and": [_pred_to_json(x) for x in p.items]}
    if isinstance(p, Or):
        return {"or": [_pred_to_json(x) for x in p.items]}
    if isinstance(p, Not):
        return {"not": _pred_to_json(p.item)}
    raise PlanError(f"bad predicate {p!r}")


def _operand_to_json(o):
    return {"col": o.name} if isinstance(o, Col) else {"const": o.value}


def _operand_from_json(d):
    if "col" in d:
        return Col(d["col"])
    if "const" in d:
        return Const(d["const"])
    raise PlanError(f"bad operand {d!r}")


def _pred_from_json(d):
    if d is None:
        return None
    if "cmp" in d:
        return Compare(d["cmp"], _operand_from_json(d["left"]), _operand_from_json(d["right"]))
    if "and" in d:
        return And(tuple(_pred_from_json(x) for x in d["and"]))
    if "or" in d:
        return Or(tuple(_pred_from_json(x) for x in d["or"]))
    if "not" in d:
        return Not(_pred_from_json(d["not"]))
    raise PlanError(f"bad predicate {d!r}")


def to_json(plan: QueryPlan) -> dict:
    d = {"source": plan.source}
    if plan.where is not None:
        d["where"] = _pred_to_json(plan.where)
    if plan.columns is not None:
        d["columns"] = list(plan.columns)
    if plan.aggregates:
        d["aggregates"] = [{"fn": a.fn, "column": a.column} for a in plan.aggregates]
    if plan.group_by:
        d["group_by"] = list(plan.group_by)
    if plan.set_op:
        d["set_op"] = {"kind": plan.set_op.kind, "plan": to_json(plan.set_op.plan)}
    if plan.join:
        d["join"] = {"plan": to_json(plan.join.plan), "left_column": plan.join.left_column,
                     "right_column": plan.join.right_column}
    return d


def from_json(d: dict) -> QueryPlan:
    try:
        return QueryPlan(
            source=d["source"],
            where=_pred_from_json(d.get("where")),
            columns=tuple(d["columns"]) if d.get("columns") is not None else None,
            aggregates=tuple(Agg(a["fn"].upper(), a.get("column")) for a in d.get("aggregates", ())),
            group_by=tuple(d.get("group_by", ())),
            set_op=SetOp(d["set_op"]["kind"].upper(), from_json(d["set_op"]["plan"])) if d.get("set_op") else None,
            join=Join(from_json(d["join"]["plan"]), d["join"]["left_column"], d["join"]["right_column"])
            if d.get("join") else None,
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise PlanError(f"malformed plan JSON: {exc!r}") from None
