"""Script-to-SQL compilation.

A script over one LOAD source composes, statement by statement, into a
single query: updates become (possibly guarded) column expressions that
nest into CASE chains, deletes become filters, inserted rows become
UNION ALL branches of constants, and ordering statements become ORDER BY
keys over a tracked symbolic row order. Each statement's conditions are
frozen against the column expressions as they stood when it ran, which is
exactly the sheet's behavior because a guard picks its target cells once.

The compilable fragment is row-local: formulas may use column references,
ROWID, literals, operators, conditionals, and casts. Grid-positional
references are rejected with a pointer to ``compile_positional``, which
additionally recognizes one cross-row idiom: a column built as a running
accumulation (each cell = row-local expression + the cell above), which
compiles to the dialect's running-sum window.

Rewrites the sheet could express but SQL cannot are refused rather than
silently miscompiled: overwriting or removing a column while other
columns' live formulas still read it (their cells would recompute or
dangle), reordering rows whose current order is no longer the load
order, and formulas that would cycle.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

from . import minisql
from .formula import (
    CellRef,
    ColumnRef,
    DanglingRef,
    ExplicitRef,
    Formula,
    If,
    InList,
    Lit,
    RangeRef,
    Agg,
    RowIdRef,
    SelfValue,
    SurfaceRef,
    bind,
    render_expr,
    transform as map_formula,
    walk,
)
from .lang import (
    AddColumn,
    Delete,
    InsertRow,
    Load,
    RegionSpec,
    RemoveColumn,
    ReorderColumns,
    ReorderRows,
    Script,
    SortRows,
    Statement,
    Update,
)
from .minisql import OrderKey, QueryAst, RunningSum, SelectBlock, SelectItem, eval_row_expr
from .model import Value, VizualError, column_letter
from .values import is_true


class CompileError(VizualError):
    code = "NOT_COMPILABLE"


class PositionalNotCompilable(CompileError):
    code = "POSITIONAL_NOT_COMPILABLE"


class UnsupportedPattern(CompileError):
    code = "UNSUPPORTED_PATTERN"


class OrderNotCompilable(CompileError):
    code = "ORDER_NOT_COMPILABLE"


@dataclass(frozen=True)
class SourceTable:
    path: str
    header: bool = True
    infer_types: bool = True


@dataclass(frozen=True)
class SqlQuery:
    """Compiled query text plus the manifest of source tables it reads."""

    text: str
    manifest: tuple[SourceTable, ...]

    def manifest_json(self) -> str:
        return json.dumps(
            {"sources": [{"path": s.path, "header": s.header,
                          "infer_types": s.infer_types} for s in self.manifest]},
            indent=2)


# ---------------------------------------------------------------------------
# Row-local validation
# ---------------------------------------------------------------------------

_POSITIONAL_NODES = (CellRef, SurfaceRef, RangeRef, Agg, ExplicitRef, DanglingRef)


def _check_row_local(f: Formula, where: str) -> None:
    for node in walk(f):
        if isinstance(node, _POSITIONAL_NODES):
            raise PositionalNotCompilable(
                f"{where} uses grid-positional reference "
                f"{type(node).__name__}; see compile_positional")


def _column_refs(f: Formula) -> set[str]:
    return {n.name for n in walk(f) if isinstance(n, ColumnRef)}


def compile_formula(f: Formula, schema: Sequence[str]) -> str:
    """SQL text for one row-local formula over the given columns."""
    _check_row_local(f, "formula")
    for node in walk(f):
        if isinstance(node, SelfValue):
            raise CompileError("VALUE has no meaning outside an update target")
        if isinstance(node, ColumnRef) and node.name not in schema:
            raise CompileError(f"unknown column {node.name!r}", code="UNKNOWN_COLUMN")
    return minisql.sql_expr_text(f)


# ---------------------------------------------------------------------------
# The compiler
# ---------------------------------------------------------------------------

Expr = Union[Formula, RunningSum]

_LOAD_ORDER = (OrderKey(RowIdRef(), False),)


class _Compiler:
    def __init__(self, script: Script, fixtures: Optional[Mapping[str, str]],
                 allow_windows: bool):
        if not isinstance(script.source, Load):
            raise CompileError(
                "only LOAD-sourced scripts compile directly; flatten page "
                "references first")
        self.load = script.source
        self.fixtures = fixtures
        self.allow_windows = allow_windows
        self.base_cols = _csv_header(self.load, fixtures)
        self.order_cols: list[str] = list(self.base_cols)
        self.env: dict[str, Expr] = {n: ColumnRef(n) for n in self.base_cols}
        # column -> columns its cells' formulas currently read (live)
        self.live_deps: dict[str, set[str]] = {n: set() for n in self.base_cols}
        self.filters: list[Formula] = []
        self.union_rows: list[dict[str, Value]] = []
        self.order_keys: Optional[tuple[OrderKey, ...]] = _LOAD_ORDER

    # -- helpers -------------------------------------------------------------

    def _where(self, stmt: Statement, index: int) -> str:
        return f"statement {index + 1} ({type(stmt).__name__})"

    def _inline(self, f: Formula, self_name: Optional[str] = None) -> Expr:
        contains_window = False

        def fix(node: Formula) -> Optional[Formula]:
            nonlocal contains_window
            if isinstance(node, ColumnRef):
                expr = self.env.get(node.name)
                if expr is None:
                    raise CompileError(f"unknown column {node.name!r}",
                                       code="UNKNOWN_COLUMN")
                if isinstance(expr, RunningSum):
                    contains_window = True
                    return expr  # type: ignore[return-value]
                return expr
            if isinstance(node, SelfValue):
                if self_name is None:
                    raise CompileError("VALUE outside an update target")
                expr = self.env[self_name]
                if isinstance(expr, RunningSum):
                    contains_window = True
                return expr  # type: ignore[return-value]
            return None

        return map_formula(f, fix)

    def _fold_on_row(self, f: Formula, row: Mapping[str, Value],
                     self_name: Optional[str] = None) -> Value:
        def fix(node: Formula) -> Optional[Formula]:
            if isinstance(node, SelfValue):
                if self_name is None:
                    raise CompileError("VALUE outside an update target")
                return Lit(row.get(self_name))
            return None

        return eval_row_expr(map_formula(f, fix), row)

    def _hazard_check(self, name: str, stmt_where: str) -> None:
        readers = sorted(c for c, deps in self.live_deps.items()
                         if name in deps and c != name)
        if readers:
            raise CompileError(
                f"{stmt_where} rewrites column {name!r} while live formulas in "
                f"{readers} still read it; the staged query cannot express "
                f"that recomputation")

    # -- statements ----------------------------------------------------------

    def feed(self, stmt: Statement, index: int) -> None:
        where = self._where(stmt, index)
        if isinstance(stmt, Update):
            self._update(stmt, where)
        elif isinstance(stmt, AddColumn):
            self._add_column(stmt, where)
        elif isinstance(stmt, RemoveColumn):
            self._remove_column(stmt, where)
        elif isinstance(stmt, InsertRow):
            self._insert_row(stmt, where)
        elif isinstance(stmt, Delete):
            self._delete(stmt, where)
        elif isinstance(stmt, ReorderColumns):
            self._reorder_columns(stmt)
        elif isinstance(stmt, ReorderRows):
            self._reorder_rows(stmt, where)
        elif isinstance(stmt, SortRows):
            self._sort(stmt, where)
        elif isinstance(stmt, _WindowUpdate):
            self._window_update(stmt, where)
        else:
            raise CompileError(f"{where}: no compilation rule")

    def _target_columns(self, stmt: Update, where: str) -> list[str]:
        if isinstance(stmt.target, str):
            if stmt.target not in self.env:
                raise CompileError(f"unknown column {stmt.target!r}",
                                   code="UNKNOWN_COLUMN")
            return [stmt.target]
        spec: RegionSpec = stmt.target
        if spec.row_start is not None:
            raise PositionalNotCompilable(
                f"{where} targets rows by position "
                f"({render_expr(stmt.formula)}); see compile_positional")
        if spec.col_start is None:
            return list(self.order_cols)
        return [self.order_cols[i]
                for i in range(spec.col_start, min(spec.col_end + 1, len(self.order_cols)))]

    def _update(self, stmt: Update, where_text: str) -> None:
        _check_row_local(stmt.formula, where_text)
        condition = stmt.where
        if isinstance(stmt.target, RegionSpec) and stmt.target.predicate is not None:
            condition = (stmt.target.predicate if condition is None
                         else If(stmt.target.predicate, condition, Lit(False)))
        if condition is not None:
            _check_row_local(condition, where_text)
        for name in self._target_columns(stmt, where_text):
            refs = _column_refs(stmt.formula)
            if name in refs:
                raise CompileError(
                    f"{where_text} would make {name!r} reference itself "
                    f"(a cycle on the sheet)")
            self._hazard_check(name, where_text)
            new_expr = self._inline(stmt.formula, self_name=name)
            if condition is not None:
                cond_expr = self._inline(condition, self_name=name)
                self.env[name] = If(cond_expr, new_expr, self.env[name])  # type: ignore[arg-type]
                self.live_deps[name] = self.live_deps[name] | refs
            else:
                self.env[name] = new_expr
                self.live_deps[name] = refs
            for row in self.union_rows:
                matched = condition is None or is_true(
                    self._fold_on_row(condition, row, self_name=name))
                if matched:
                    row[name] = self._fold_on_row(stmt.formula, row, self_name=name)

    def _add_column(self, stmt: AddColumn, where: str) -> None:
        if stmt.name in self.env:
            raise CompileError(f"column {stmt.name!r} already exists",
                               code="DUPLICATE_COLUMN")
        at = len(self.order_cols) if stmt.at is None else max(
            0, min(stmt.at, len(self.order_cols)))
        self.order_cols.insert(at, stmt.name)
        if stmt.derive is None:
            self.env[stmt.name] = Lit(None)
            self.live_deps[stmt.name] = set()
            for row in self.union_rows:
                row[stmt.name] = None
        else:
            _check_row_local(stmt.derive, where)
            refs = _column_refs(stmt.derive)
            if stmt.name in refs:
                raise CompileError(f"{where} derives {stmt.name!r} from itself")
            self.env[stmt.name] = self._inline(stmt.derive, self_name=None)
            self.live_deps[stmt.name] = refs
            for row in self.union_rows:
                row[stmt.name] = self._fold_on_row(stmt.derive, row)

    def _remove_column(self, stmt: RemoveColumn, where: str) -> None:
        if stmt.name not in self.env:
            raise CompileError(f"unknown column {stmt.name!r}", code="UNKNOWN_COLUMN")
        self._hazard_check(stmt.name, where)
        del self.env[stmt.name]
        del self.live_deps[stmt.name]
        self.order_cols.remove(stmt.name)
        for row in self.union_rows:
            row.pop(stmt.name, None)

    def _insert_row(self, stmt: InsertRow, where: str) -> None:
        assigned = dict(stmt.assignments)
        for name, f in assigned.items():
            if name not in self.env:
                raise CompileError(f"unknown column {name!r}", code="UNKNOWN_COLUMN")
            _check_row_local(f, where)
            for node in walk(f):
                if isinstance(node, RowIdRef):
                    raise CompileError(
                        f"{where}: an inserted row's identity tag is assigned at "
                        f"run time and cannot be compiled")
        row: dict[str, Value] = {name: None for name in self.order_cols}
        resolved: set[str] = {n for n in self.order_cols if n not in assigned}
        pending = dict(assigned)
        while pending:
            progressed = False
            for name, f in list(pending.items()):
                if _column_refs(f) <= resolved:
                    row[name] = self._fold_on_row(f, row)
                    resolved.add(name)
                    del pending[name]
                    progressed = True
            if not progressed:
                raise CompileError(f"{where}: inserted row's assignments cycle")
        self.union_rows.append(row)
        if stmt.at is not None:
            self.order_keys = None  # position among unknown rows

    def _delete(self, stmt: Delete, where: str) -> None:
        _check_row_local(stmt.where, where)
        cond = self._inline(stmt.where)
        if isinstance(cond, RunningSum):
            raise UnsupportedPattern(f"{where}: cannot filter on a running column")
        # survivors are rows where the condition is NOT true (null keeps)
        self.filters.append(If(cond, Lit(False), Lit(True)))
        self.union_rows = [
            row for row in self.union_rows
            if not is_true(self._fold_on_row(stmt.where, row))]

    def _reorder_columns(self, stmt: ReorderColumns) -> None:
        if sorted(stmt.names) != sorted(self.order_cols):
            raise CompileError("REORDER COLUMNS must list every column exactly once",
                               code="UNKNOWN_COLUMN")
        self.order_cols = list(stmt.names)

    def _reorder_rows(self, stmt: ReorderRows, where: str) -> None:
        if self.order_keys != _LOAD_ORDER:
            raise OrderNotCompilable(
                f"{where}: positional reorder is only expressible while rows "
                f"are still in load order")
        keys = sorted(stmt.row_tags)
        expr: Formula = RowIdRef()
        for tag, key in reversed(list(zip(stmt.row_tags, keys))):
            expr = If(InList(RowIdRef(), (Lit(tag),)), Lit(key), expr)
        self.order_keys = (OrderKey(expr, False),)

    def _sort(self, stmt: SortRows, where: str) -> None:
        keys = []
        for key in stmt.keys:
            if key.column not in self.env:
                raise CompileError(f"unknown column {key.column!r}",
                                   code="UNKNOWN_COLUMN")
            # ORDER BY names the output column (each branch sorts by its own
            # values); later rewrites of it would reorder, so it becomes live
            keys.append(OrderKey(ColumnRef(key.column), key.descending))
            self.live_deps.setdefault("__order__", set()).add(key.column)
        if self.order_keys is None:
            raise OrderNotCompilable(
                f"{where}: stable sort ties depend on an order the query no "
                f"longer tracks")
        self.order_keys = tuple(keys) + self.order_keys

    def _window_update(self, stmt: "_WindowUpdate", where: str) -> None:
        if self.union_rows:
            raise UnsupportedPattern(
                f"{where}: running columns over inserted rows are not supported")
        if self.order_keys is None:
            raise UnsupportedPattern(
                f"{where}: running column needs a trackable row order")
        self._hazard_check(stmt.column, where)
        term = self._inline(stmt.term)
        if isinstance(term, RunningSum):
            raise UnsupportedPattern(f"{where}: nested running columns")
        self.env[stmt.column] = RunningSum(term, self.order_keys)
        self.live_deps[stmt.column] = _column_refs(stmt.term)

    # -- assembly ------------------------------------------------------------

    def build(self, emit_order: bool) -> QueryAst:
        items = tuple(
            SelectItem(self.env[name],
                       None if self.env[name] == ColumnRef(name) else name)
            for name in self.order_cols)
        where: Optional[Formula] = None
        for f in self.filters:
            where = f if where is None else If(where, f, Lit(False))
        blocks = [SelectBlock(items, self.load.path, where)]
        for row in self.union_rows:
            blocks.append(SelectBlock(
                tuple(SelectItem(Lit(row[name]), name) for name in self.order_cols),
                None, None))
        order: tuple[OrderKey, ...] = ()
        if emit_order:
            if self.order_keys is None:
                raise OrderNotCompilable(
                    "the final row order is not expressible as ORDER BY keys")
            order = self.order_keys
        return QueryAst(tuple(blocks), order)


@dataclass(frozen=True)
class _WindowUpdate:
    """Internal: a positional update family recognized as a running
    accumulation of ``term`` over ``column``."""

    column: str
    term: Formula  # row-local (column references)
    gesture_group: Optional[int] = None


def _csv_header(load: Load, fixtures: Optional[Mapping[str, str]]) -> list[str]:
    if fixtures is not None and load.path in fixtures:
        text = fixtures[load.path]
    else:
        with open(load.path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    try:
        first = next(csv.reader(io.StringIO(text)))
    except StopIteration:
        return []
    if load.header:
        return list(first)
    return [column_letter(i) for i in range(len(first))]


def _compile(script: Script, fixtures: Optional[Mapping[str, str]],
             allow_windows: bool) -> SqlQuery:
    statements: Sequence[Statement] = script.statements
    if allow_windows:
        statements = _rewrite_positional_runs(script, fixtures)
    if not statements and isinstance(script.source, Load):
        text = f"SELECT *\nFROM LOAD('{script.source.path}')"
        return SqlQuery(text, (SourceTable(script.source.path, script.source.header,
                                           script.source.infer_types),))
    compiler = _Compiler(script, fixtures, allow_windows)
    for index, stmt in enumerate(statements):
        compiler.feed(stmt, index)
    emit_order = bool(statements) and isinstance(statements[-1], (SortRows, ReorderRows))
    ast = compiler.build(emit_order)
    return SqlQuery(minisql.render_query(ast),
                    (SourceTable(compiler.load.path, compiler.load.header,
                                 compiler.load.infer_types),))


def compile_script(script: Script, fixtures: Optional[Mapping[str, str]] = None) -> SqlQuery:
    """Compile a row-local script to one SQL query over its LOAD source."""
    return _compile(script, fixtures, allow_windows=False)


def compile_positional(script: Script,
                       fixtures: Optional[Mapping[str, str]] = None) -> SqlQuery:
    """Like compile_script, but first recognizes per-cell update families
    that build a column as a running accumulation and compiles them to the
    running-sum window. Any other cross-row shape is refused."""
    return _compile(script, fixtures, allow_windows=True)


# ---------------------------------------------------------------------------
# Positional-run recognition
# ---------------------------------------------------------------------------


def _singleton_pos(stmt: Statement) -> Optional[tuple[int, int]]:
    if (isinstance(stmt, Update) and isinstance(stmt.target, RegionSpec)
            and stmt.target.is_singleton() and stmt.where is None):
        return stmt.target.col_start, stmt.target.row_start  # type: ignore[return-value]
    return None


_ACC = CellRef(col=0, row=-1)


def _rewrite_positional_runs(script: Script,
                             fixtures: Optional[Mapping[str, str]]) -> list[Statement]:
    """Collapse maximal runs of singleton positional updates that follow the
    running-accumulation recurrence into _WindowUpdate pseudo-statements."""
    header = (_csv_header(script.source, fixtures)
              if isinstance(script.source, Load) else [])
    out: list[Statement] = []
    stmts = list(script.statements)
    # column order tracking so deltas can resolve to names mid-script
    order = list(header)
    i = 0
    while i < len(stmts):
        stmt = stmts[i]
        pos = _singleton_pos(stmt)
        if pos is None or pos[1] != 0:
            out.append(stmt)
            _track_columns(stmt, order)
            i += 1
            continue
        col = pos[0]
        run = [stmt]
        j = i + 1
        while j < len(stmts):
            nxt = _singleton_pos(stmts[j])
            if nxt is None or nxt[0] != col or nxt[1] != len(run):
                break
            run.append(stmts[j])  # type: ignore[arg-type]
            j += 1
        window = _recognize_run(run, col, order) if len(run) >= 2 else None
        if window is None:
            out.append(stmt)
            _track_columns(stmt, order)
            i += 1
        else:
            out.append(window)
            i = j
    return out


def _track_columns(stmt: Statement, order: list[str]) -> None:
    if isinstance(stmt, AddColumn):
        at = len(order) if stmt.at is None else max(0, min(stmt.at, len(order)))
        order.insert(at, stmt.name)
    elif isinstance(stmt, RemoveColumn) and stmt.name in order:
        order.remove(stmt.name)
    elif isinstance(stmt, ReorderColumns):
        order[:] = list(stmt.names)


def _recognize_run(run: list[Update], col: int, order: list[str]) -> Optional[_WindowUpdate]:
    if col >= len(order):
        return None
    shapes = [bind(stmt.formula, (col, ri)) for ri, stmt in enumerate(run)]
    base = shapes[0]
    if _has_cross_row(base):
        raise UnsupportedPattern(
            "positional run starts with a cross-row reference; only the "
            "running accumulation over the previous row is supported")
    from .formula import Binary
    for shape in shapes[1:]:
        ok = (isinstance(shape, Binary) and shape.op == "+"
              and ((shape.left == base and shape.right == _ACC)
                   or (shape.right == base and shape.left == _ACC)))
        if not ok:
            if any(isinstance(n, (CellRef, SurfaceRef)) and _is_cross_row(n)
                   for n in walk(shape)):
                raise UnsupportedPattern(
                    "cross-row reference does not match the running "
                    "accumulation over the previous row")
            return None
    term = _deltas_to_columns(base, col, order)
    return _WindowUpdate(order[col], term)


def _is_cross_row(node: Union[CellRef, SurfaceRef]) -> bool:
    return isinstance(node, CellRef) and (node.row != 0 or node.abs_row or node.abs_col)


def _has_cross_row(f: Formula) -> bool:
    return any(isinstance(n, (CellRef, SurfaceRef)) and _is_cross_row(n)
               for n in walk(f))


def _deltas_to_columns(f: Formula, host_col: int, order: list[str]) -> Formula:
    def fix(node: Formula) -> Optional[Formula]:
        if isinstance(node, CellRef):
            target = host_col + node.col
            if node.row != 0 or node.abs_row or node.abs_col or not (
                    0 <= target < len(order)):
                raise UnsupportedPattern(
                    "running-column term must stay on the current row")
            return ColumnRef(order[target])
        return None

    return map_formula(f, fix)
