"""A minimal relational dialect and its in-repo interpreter.

The compiler emits plain ANSI-style text in this dialect; the interpreter
executes that text over CSV-backed tables so compiled queries can be
checked against sheet replay without any external database. Supported
shapes (exactly what the compiler produces):

    query  := select (UNION ALL select)* [ORDER BY key [DESC], ...]
    select := SELECT item, ...  [FROM LOAD('file')] [WHERE expr]
    item   := * | expr [AS name]
    expr   := literals, column names, ROWID, + - * / ||, comparisons,
              AND OR NOT, BETWEEN, IN (...), CAST(e AS type),
              CASE WHEN c THEN r ... [ELSE d] END,
              SUM(e) OVER (ORDER BY k, ... ROWS UNBOUNDED PRECEDING)

Expressions parse into the same AST the formula engine uses (CASE becomes
a chain of conditionals), and every scalar operation routes through the
shared value semantics, which is how interpreter results stay aligned
with the sheet engine on nulls, type errors, and division by zero. The
one window form implements the running accumulation recurrence
``acc_i = e_i + acc_{i-1}`` over the frame's order.

Tables carry a hidden row identity column (the loader reuses sheet
ingestion, so identity tags agree with replay); it is addressable as
ROWID but never included in ``*`` projections.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Union

from . import values
from .executor import load_csv
from .formula import (
    Between,
    Binary,
    Cast,
    ColumnRef,
    Formula,
    If,
    InList,
    Lit,
    RowIdRef,
    TokenStream,
    Unary,
    _BINARY_BP,
    _BP_ADD,
    _BP_CMP,
    _BP_CONCAT,
    _BP_MUL,
    _BP_NEG,
    _BP_NOT,
    _ident_text,
    _lit_text,
    _parens,
    tokenize,
)
from .model import ErrorValue, SheetState, Value, VizualError

ROWID_KEY = "@rowid"

_SQL_TYPE = {"int": "INTEGER", "float": "REAL", "string": "TEXT", "bool": "BOOLEAN"}
_SQL_TYPE_BACK = {v: k for k, v in _SQL_TYPE.items()} | {
    "INT": "int", "FLOAT": "float", "STRING": "string", "BOOL": "bool"}


class SqlError(VizualError):
    code = "SQL"


_SQL_RESERVED = {
    "SELECT", "FROM", "WHERE", "UNION", "ALL", "ORDER", "BY", "AS", "WHEN",
    "THEN", "ELSE", "END", "OVER", "ROWS", "UNBOUNDED", "PRECEDING", "AND",
    "OR", "BETWEEN", "IN", "ASC", "DESC", "LOAD",
}


# ---------------------------------------------------------------------------
# Query AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class RunningSum:
    """``SUM(arg) OVER (ORDER BY ... ROWS UNBOUNDED PRECEDING)``: the
    running accumulation of ``arg`` in frame order."""

    arg: Formula
    order: tuple["OrderKey", ...]


@dataclass(frozen=True, slots=True)
class OrderKey:
    expr: Formula
    descending: bool = False


@dataclass(frozen=True, slots=True)
class SelectItem:
    expr: Optional[Union[Formula, RunningSum]]  # None means *
    alias: Optional[str] = None


@dataclass(frozen=True, slots=True)
class SelectBlock:
    items: tuple[SelectItem, ...]
    source: Optional[str] = None  # LOAD path
    where: Optional[Formula] = None


@dataclass(frozen=True, slots=True)
class QueryAst:
    blocks: tuple[SelectBlock, ...]
    order: tuple[OrderKey, ...] = ()


# ---------------------------------------------------------------------------
# Expression text (SQL rendering of the shared AST)
# ---------------------------------------------------------------------------


def sql_expr_text(f: Union[Formula, RunningSum], min_prec: int = 0) -> str:
    def sub(node, prec: int) -> str:
        return sql_expr_text(node, prec)

    if isinstance(f, RunningSum):
        keys = ", ".join(
            sql_expr_text(k.expr) + (" DESC" if k.descending else "") for k in f.order)
        return f"SUM({sql_expr_text(f.arg)}) OVER (ORDER BY {keys} ROWS UNBOUNDED PRECEDING)"
    if isinstance(f, Lit):
        return _lit_text(f.value)
    if isinstance(f, ColumnRef):
        return _ident_text(f.name)
    if isinstance(f, RowIdRef):
        return "ROWID"
    if isinstance(f, If):
        whens: list[tuple[Formula, Formula]] = []
        node: Formula = f
        while isinstance(node, If):
            whens.append((node.cond, node.then))
            node = node.orelse
        parts = " ".join(f"WHEN {sub(c, 0)} THEN {sub(r, 0)}" for c, r in whens)
        default = "" if node == Lit(None) else f" ELSE {sub(node, 0)}"
        return f"CASE {parts}{default} END"
    if isinstance(f, Cast):
        return f"CAST({sub(f.operand, 0)} AS {_SQL_TYPE[f.type]})"
    if isinstance(f, Unary):
        if f.op == "NOT":
            return _parens(f"NOT {sub(f.operand, _BP_NOT)}", _BP_NOT, min_prec)
        if isinstance(f.operand, (Lit, Unary)):
            return _parens(f"-({sub(f.operand, 0)})", _BP_NEG, min_prec)
        return _parens(f"-{sub(f.operand, _BP_NEG)}", _BP_NEG, min_prec)
    if isinstance(f, Between):
        text = (f"{sub(f.operand, _BP_CMP + 1)} BETWEEN {sub(f.low, _BP_CONCAT + 1)}"
                f" AND {sub(f.high, _BP_CONCAT + 1)}")
        return _parens(text, _BP_CMP, min_prec)
    if isinstance(f, InList):
        items = ", ".join(sub(i, 0) for i in f.items)
        return _parens(f"{sub(f.operand, _BP_CMP + 1)} IN ({items})", _BP_CMP, min_prec)
    if isinstance(f, Binary):
        bp = _BINARY_BP[f.op]
        op = "||" if f.op == "&" else f.op
        return _parens(f"{sub(f.left, bp)} {op} {sub(f.right, bp + 1)}", bp, min_prec)
    raise SqlError(f"expression not representable in SQL: {f!r}")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _SqlParser:
    def __init__(self, ts: TokenStream):
        self.ts = ts

    def query(self) -> QueryAst:
        blocks = [self.select()]
        while self.ts.at_keyword("UNION"):
            self.ts.advance()
            self.ts.take_keyword("ALL")
            blocks.append(self.select())
        order: tuple[OrderKey, ...] = ()
        if self.ts.at_keyword("ORDER"):
            self.ts.advance()
            self.ts.take_keyword("BY")
            order = tuple(self._order_keys())
        if self.ts.cur.kind != "eof":
            raise self.ts.error(f"trailing input {self.ts.cur.text!r}")
        return QueryAst(tuple(blocks), order)

    def _order_keys(self) -> list[OrderKey]:
        keys = []
        while True:
            expr = self.expr(0)
            desc = False
            if self.ts.at_keyword("ASC"):
                self.ts.advance()
            elif self.ts.at_keyword("DESC"):
                self.ts.advance()
                desc = True
            keys.append(OrderKey(expr, desc))
            if self.ts.at_op(","):
                self.ts.advance()
                continue
            return keys

    def select(self) -> SelectBlock:
        ts = self.ts
        ts.take_keyword("SELECT")
        items = [self._item()]
        while ts.at_op(","):
            ts.advance()
            items.append(self._item())
        source = None
        if ts.at_keyword("FROM"):
            ts.advance()
            ts.take_keyword("LOAD")
            ts.take_op("(")
            tok = ts.advance()
            if tok.kind != "str":
                raise ts.error("LOAD takes a quoted path")
            source = str(tok.value)
            ts.take_op(")")
        where = None
        if ts.at_keyword("WHERE"):
            ts.advance()
            where = self.expr(0)
        return SelectBlock(tuple(items), source, where)

    def _item(self) -> SelectItem:
        ts = self.ts
        if ts.at_op("*"):
            ts.advance()
            return SelectItem(None)
        expr = self.expr(0)
        alias = None
        if ts.at_keyword("AS"):
            ts.advance()
            tok = ts.advance()
            if tok.kind not in ("ident", "qident"):
                raise ts.error("expected an alias name")
            alias = str(tok.value)
        return SelectItem(expr, alias)

    # -- expressions ---------------------------------------------------------

    def expr(self, bp: int) -> Formula:
        left = self._prefix()
        while True:
            nxt = self._infix_bp()
            if nxt is None or nxt <= bp:
                return left
            left = self._infix(left)

    def _prefix(self) -> Formula:
        ts = self.ts
        tok = ts.cur
        if tok.kind == "num":
            ts.advance()
            return Lit(tok.value)
        if tok.kind == "str":
            ts.advance()
            return Lit(tok.value)
        if tok.kind == "qident":
            ts.advance()
            return ColumnRef(str(tok.value))
        if tok.kind == "op" and tok.value == "(":
            ts.advance()
            inner = self.expr(0)
            ts.take_op(")")
            return inner
        if tok.kind == "op" and tok.value == "-":
            ts.advance()
            if ts.cur.kind == "num":
                return Lit(-ts.advance().value)  # type: ignore[operator]
            return Unary("-", self.expr(_BP_NEG))
        if tok.kind == "ident":
            word = tok.value.upper()
            if word == "NOT":
                ts.advance()
                return Unary("NOT", self.expr(_BP_NOT))
            if word in ("TRUE", "FALSE"):
                ts.advance()
                return Lit(word == "TRUE")
            if word == "NULL":
                ts.advance()
                return Lit(None)
            if word == "ROWID":
                ts.advance()
                return RowIdRef()
            if word == "CASE":
                ts.advance()
                whens = []
                while ts.at_keyword("WHEN"):
                    ts.advance()
                    cond = self.expr(0)
                    ts.take_keyword("THEN")
                    whens.append((cond, self.expr(0)))
                default: Formula = Lit(None)
                if ts.at_keyword("ELSE"):
                    ts.advance()
                    default = self.expr(0)
                ts.take_keyword("END")
                out = default
                for cond, res in reversed(whens):
                    out = If(cond, res, out)
                return out
            if word == "CAST":
                ts.advance()
                ts.take_op("(")
                operand = self.expr(0)
                ts.take_keyword("AS")
                type_tok = ts.advance()
                target = _SQL_TYPE_BACK.get(str(type_tok.value).upper())
                if target is None:
                    raise ts.error(f"unknown SQL type {type_tok.text}")
                ts.take_op(")")
                return Cast(operand, target)
            if word == "SUM":
                ts.advance()
                ts.take_op("(")
                arg = self.expr(0)
                ts.take_op(")")
                ts.take_keyword("OVER")
                ts.take_op("(")
                ts.take_keyword("ORDER")
                ts.take_keyword("BY")
                keys = self._order_keys()
                ts.take_keyword("ROWS")
                ts.take_keyword("UNBOUNDED")
                ts.take_keyword("PRECEDING")
                ts.take_op(")")
                return RunningSum(arg, tuple(keys))  # type: ignore[return-value]
            if word in _SQL_RESERVED:
                raise ts.error(f"unexpected keyword {tok.text}")
            ts.advance()
            return ColumnRef(str(tok.value))
        raise ts.error(f"unexpected {tok.text or 'end of input'} in SQL expression")

    def _infix_bp(self) -> Optional[int]:
        ts = self.ts
        if ts.cur.kind == "op":
            op = ts.cur.value
            if op in ("+", "-"):
                return _BP_ADD
            if op in ("*", "/"):
                return _BP_MUL
            if op == "||":
                return _BP_CONCAT
            if op in ("=", "<>", "<", "<=", ">", ">="):
                return _BP_CMP
            return None
        if ts.cur.kind == "ident":
            word = ts.cur.value.upper()
            if word == "AND":
                return 20
            if word == "OR":
                return 10
            if word in ("BETWEEN", "IN"):
                return _BP_CMP
        return None

    def _infix(self, left: Formula) -> Formula:
        ts = self.ts
        if ts.cur.kind == "op":
            op = str(ts.advance().value)
            if op == "||":
                op = "&"
            return Binary(op, left, self.expr(_BINARY_BP[op]))
        word = ts.advance().value.upper()
        if word in ("AND", "OR"):
            return Binary(word, left, self.expr(20 if word == "AND" else 10))
        if word == "BETWEEN":
            low = self.expr(_BP_CONCAT)
            ts.take_keyword("AND")
            return Between(left, low, self.expr(_BP_CONCAT))
        if word == "IN":
            ts.take_op("(")
            items = [self.expr(0)]
            while ts.at_op(","):
                ts.advance()
                items.append(self.expr(0))
            ts.take_op(")")
            return InList(left, tuple(items))
        raise ts.error(f"unexpected {word}")


def parse_query(text: str) -> QueryAst:
    return _SqlParser(TokenStream(tokenize(text))).query()


def render_query(q: QueryAst) -> str:
    parts = []
    for i, block in enumerate(q.blocks):
        items = []
        for item in block.items:
            if item.expr is None:
                items.append("*")
            else:
                text = sql_expr_text(item.expr)
                items.append(f"{text} AS {_ident_text(item.alias)}" if item.alias else text)
        text = "SELECT " + ", ".join(items)
        if block.source is not None:
            text += f"\nFROM LOAD('{block.source}')"
        if block.where is not None:
            text += f"\nWHERE {sql_expr_text(block.where)}"
        parts.append(("UNION ALL\n" if i else "") + text)
    out = "\n".join(parts)
    if q.order:
        keys = ", ".join(sql_expr_text(k.expr) + (" DESC" if k.descending else "")
                         for k in q.order)
        out += f"\nORDER BY {keys}"
    return out


# ---------------------------------------------------------------------------
# Tables and execution
# ---------------------------------------------------------------------------


@dataclass
class Table:
    columns: list[str]
    rows: list[dict[str, Value]]  # ROWID_KEY holds the hidden identity tag

    def tuples(self) -> list[tuple[Value, ...]]:
        return [tuple(r.get(c) for c in self.columns) for r in self.rows]


def table_from_state(state: SheetState) -> Table:
    columns = state.column_names
    rows = []
    for ri in range(state.coords.n_rows):
        row: dict[str, Value] = {ROWID_KEY: state.coords.rows[ri].n}
        for ci, name in enumerate(columns):
            row[name] = state.value_at(ci, ri)
        rows.append(row)
    return Table(columns, rows)


def load_table(path: str, *, header: bool = True, infer_types: bool = True,
               fixtures: Optional[Mapping[str, str]] = None) -> Table:
    """Load a CSV through the same ingestion as the sheet engine, so row
    identity tags agree with script replay."""
    return table_from_state(load_csv(path, header=header, infer_types=infer_types,
                                     fixtures=fixtures))


WindowValues = Mapping["RunningSum", Value]


def eval_row_expr(f: Union[Formula, RunningSum], row: Mapping[str, Value],
                  windows: Optional[WindowValues] = None) -> Value:
    """Row-local expression evaluation; mirrors the sheet engine on the
    shared fragment because all scalar ops come from the same module.
    ``windows`` carries this row's precomputed running-sum values."""
    if isinstance(f, RunningSum):
        if windows is None or f not in windows:
            raise SqlError("window expression outside a SELECT item")
        return windows[f]
    if isinstance(f, Lit):
        return f.value
    if isinstance(f, ColumnRef):
        return row.get(f.name)
    if isinstance(f, RowIdRef):
        return row.get(ROWID_KEY)
    if isinstance(f, Unary):
        v = eval_row_expr(f.operand, row, windows)
        return values.negate(v) if f.op == "-" else values.logical_not(v)
    if isinstance(f, Binary):
        left = eval_row_expr(f.left, row, windows)
        right = eval_row_expr(f.right, row, windows)
        if f.op in ("AND", "OR"):
            return values.logical(f.op, left, right)
        if f.op in ("+", "-", "*", "/"):
            return values.arith(f.op, left, right)
        if f.op == "&":
            return values.concat(left, right)
        return values.compare(f.op, left, right)
    if isinstance(f, If):
        cond = eval_row_expr(f.cond, row, windows)
        if isinstance(cond, ErrorValue):
            return cond
        if cond is not None and not isinstance(cond, bool):
            return values.type_error("CASE condition must be boolean")
        return eval_row_expr(f.then if cond is True else f.orelse, row, windows)
    if isinstance(f, Cast):
        return values.cast(eval_row_expr(f.operand, row, windows), f.type)
    if isinstance(f, Between):
        v = eval_row_expr(f.operand, row, windows)
        lo = eval_row_expr(f.low, row, windows)
        hi = eval_row_expr(f.high, row, windows)
        return values.logical("AND", values.compare(">=", v, lo),
                              values.compare("<=", v, hi))
    if isinstance(f, InList):
        v = eval_row_expr(f.operand, row, windows)
        if isinstance(v, ErrorValue):
            return v
        saw_null = False
        for item in f.items:
            res = values.compare("=", v, eval_row_expr(item, row, windows))
            if isinstance(res, ErrorValue):
                return res
            if res is True:
                return True
            if res is None:
                saw_null = True
        return None if saw_null else False
    raise SqlError(f"cannot evaluate {f!r} on a row")


def _find_windows(f: Union[Formula, RunningSum, None]) -> list[RunningSum]:
    found: list[RunningSum] = []

    def scan(node) -> None:
        if isinstance(node, RunningSum):
            found.append(node)
            return
        if isinstance(node, Unary):
            scan(node.operand)
        elif isinstance(node, Binary):
            scan(node.left)
            scan(node.right)
        elif isinstance(node, If):
            scan(node.cond)
            scan(node.then)
            scan(node.orelse)
        elif isinstance(node, Cast):
            scan(node.operand)
        elif isinstance(node, Between):
            scan(node.operand)
            scan(node.low)
            scan(node.high)
        elif isinstance(node, InList):
            scan(node.operand)
            for item in node.items:
                scan(item)

    if f is not None:
        scan(f)
    return found


def _running_values(win: RunningSum, rows: list[dict[str, Value]]) -> list[Value]:
    """Per-row values of a running accumulation: rows are visited in frame
    order and each contributes ``term + acc`` exactly like the sheet's
    chained formulas."""
    order = sorted(
        range(len(rows)),
        key=lambda i: values.sort_rows_key(
            [eval_row_expr(k.expr, rows[i]) for k in win.order],
            [k.descending for k in win.order]))
    out: list[Value] = [None] * len(rows)
    acc: Value = None
    first = True
    for idx in order:
        term = eval_row_expr(win.arg, rows[idx])
        acc = term if first else values.arith("+", term, acc)
        first = False
        out[idx] = acc
    return out


def run_query(q: Union[QueryAst, str], tables: Mapping[str, Table]) -> Table:
    if isinstance(q, str):
        q = parse_query(q)
    out_columns: list[str] = []
    out_rows: list[dict[str, Value]] = []
    for block_no, block in enumerate(q.blocks):
        if block.source is not None:
            if block.source not in tables:
                raise SqlError(f"no table registered for {block.source!r}")
            source_rows = tables[block.source].rows
            source_cols = tables[block.source].columns
        else:
            source_rows = [{}]
            source_cols = []
        if block.where is not None:
            source_rows = [r for r in source_rows
                           if values.is_true(eval_row_expr(block.where, r))]
        # expand * items; precompute any running sums over this block's rows
        names: list[str] = []
        exprs: list[Union[Formula, RunningSum, str, None]] = []
        window_series: dict[RunningSum, list[Value]] = {}
        for item in block.items:
            if item.expr is None:
                for name in source_cols:
                    names.append(name)
                    exprs.append(name)  # plain column passthrough
            else:
                default = (item.expr.name if isinstance(item.expr, ColumnRef)
                           else f"col{len(names) + 1}")
                names.append(item.alias or default)
                exprs.append(item.expr)
                for win in _find_windows(item.expr):
                    if win not in window_series:
                        window_series[win] = _running_values(win, source_rows)
        if block_no == 0:
            out_columns = names
        elif len(names) != len(out_columns):
            raise SqlError("UNION ALL branches must have the same width")
        for i, row in enumerate(source_rows):
            out: dict[str, Value] = {}
            if ROWID_KEY in row:
                out[ROWID_KEY] = row[ROWID_KEY]
            windows = {win: series[i] for win, series in window_series.items()}
            for name, expr in zip(out_columns, exprs):
                if isinstance(expr, str):
                    out[name] = row.get(expr)
                else:
                    out[name] = eval_row_expr(expr, row, windows)
            out_rows.append(out)
    if q.order:
        directions = [k.descending for k in q.order]
        out_rows = sorted(
            out_rows,
            key=lambda r: values.sort_rows_key(
                [eval_row_expr(k.expr, r) for k in q.order], directions))
    return Table(out_columns, out_rows)
