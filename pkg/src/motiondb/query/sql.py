"""A small SQL front-end that compiles to :class:`QueryPlan`.

Grammar::

    query   := select [(UNION | INTERSECT | EXCEPT) select]
    select  := SELECT items FROM name [WHERE expr] [GROUP BY name {, name}]
    items   := '*' | item {, item}
    item    := name | fn '(' (name | '*') ')'
    expr    := term {OR term};  term := factor {AND factor}
    factor  := NOT factor | '(' expr ')' | operand cmp operand
    operand := name | number | 'string'

Keywords are case-insensitive. Joins are only available through the plan
JSON form.
"""

from __future__ import annotations

import re

from ..errors import SQLSyntaxError
from .plan import AGGREGATES, Agg, And, Col, Compare, Const, Not, Or, QueryPlan, SetOp

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>-?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<string>'(?:[^']|'')*')
  | (?P<op><=|>=|!=|<>|=|<|>)
  | (?P<punct>[(),*])
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
""", re.VERBOSE)

KEYWORDS = {"SELECT", "FROM", "WHERE", "GROUP", "BY", "AND", "OR", "NOT",
            "UNION", "INTERSECT", "EXCEPT"}
_SET_KINDS = {"UNION": "UNION", "INTERSECT": "INTERSECT", "EXCEPT": "DIFFERENCE"}


def tokenize(text: str) -> list:
    """(kind, value, position) triples, ending with an ``end`` token."""
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SQLSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        val = m.group()
        if kind == "name" and val.upper() in KEYWORDS | set(AGGREGATES):
            kind, val = "kw", val.upper()
        elif kind == "string":
            val = val[1:-1].replace("''", "'")
        elif kind == "number":
            val = float(val) if any(c in val for c in ".eE") else int(val)
        if kind != "ws":
            out.append((kind, val, pos))
        pos = m.end()
    out.append(("end", None, len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def fail(self, msg):
        kind, val, pos = self.peek()
        got = "end of input" if kind == "end" else repr(val)
        raise SQLSyntaxError(f"{msg}, got {got}", pos, self.text)

    def accept(self, kind, value=None):
        k, v, _ = self.peek()
        if k == kind and (value is None or v == value):
            self.i += 1
            return v
        return None

    def expect(self, kind, value=None, what=None):
        v = self.accept(kind, value)
        if v is None:
            self.fail(f"expected {what or value or kind}")
        return v

    def query(self):
        plan = self.select()
        k, v, _ = self.peek()
        if k == "kw" and v in _SET_KINDS:
            self.i += 1
            other = self.select()
            plan = QueryPlan(plan.source, plan.where, plan.columns, plan.aggregates, plan.group_by,
                             set_op=SetOp(_SET_KINDS[v], other))
        if self.peek()[0] != "end":
            self.fail("expected end of query")
        return plan

    def select(self):
        self.expect("kw", "SELECT")
        cols, aggs = self.items()
        self.expect("kw", "FROM")
        source = self.expect("name", what="table name")
        where = None
        if self.accept("kw", "WHERE"):
            where = self.expr()
        group = ()
        if self.accept("kw", "GROUP"):
            self.expect("kw", "BY")
            group = [self.expect("name", what="column name")]
            while self.accept("punct", ","):
                group.append(self.expect("name", what="column name"))
            group = tuple(group)
        return QueryPlan(source, where, None if cols is None else tuple(cols), tuple(aggs), group)

    def items(self):
        if self.accept("punct", "*"):
            return None, []
        cols, aggs = [], []
        while True:
            k, v, _ = self.peek()
            if k == "kw" and v in AGGREGATES:
                self.i += 1
                self.expect("punct", "(")
                if self.accept("punct", "*"):
                    if v != "COUNT":
                        self.i -= 1
                        self.fail(f"{v} needs a column")
                    aggs.append(Agg(v))
                else:
                    aggs.append(Agg(v, self.expect("name", what="column name")))
                self.expect("punct", ")")
            elif k == "name":
                self.i += 1
                cols.append(v)
            else:
                self.fail("expected column or aggregate")
            if not self.accept("punct", ","):
                break
        return cols, aggs

    def expr(self):
        items = [self.term()]
        while self.accept("kw", "OR"):
            items.append(self.term())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def term(self):
        items = [self.factor()]
        while self.accept("kw", "AND"):
            items.append(self.factor())
        return items[0] if len(items) == 1 else And(tuple(items))

    def factor(self):
        if self.accept("kw", "NOT"):
            return Not(self.factor())
        if self.accept("punct", "("):
            e = self.expr()
            self.expect("punct", ")")
            return e
        left = self.operand()
        op = self.expect("op", what="comparison operator")
        return Compare("!=" if op == "<>" else op, left, self.operand())

    def operand(self):
        k, v, _ = self.peek()
        if k == "name":
            self.i += 1
            return Col(v)
        if k in ("number", "string"):
            self.i += 1
            return Const(v)
        self.fail("expected column, number or string")


def parse_sql(text: str) -> QueryPlan:
    """Compile SQL text to a plan; raises :class:`SQLSyntaxError` with the offending position."""
    return _Parser(text).query()
