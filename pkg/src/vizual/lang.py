"""The statement language: AST, parser, and canonical printer.

Core statement forms::

    s := UPDATE attribute = formula [WHERE condition]
       | ADD COLUMN colname
       | REMOVE COLUMN colname
       | INSERT ROW ( attribute = formula, ... )
       | DELETE WHERE condition
       | REORDER COLUMNS ( colname, colname, ... )
       | REORDER ROWS ( rowid, rowid, ... )
       | SORT ROWS colname [ASC|DESC], ...

    page := LOAD 'file' | page ; s

Documented extensions (flagged per statement via ``statement_extensions``):

    * ``AT <position>`` on ADD COLUMN / INSERT ROW, so rows and columns can
      be inserted before or after any existing one rather than appended;
    * region targets: ``UPDATE [A1:B4 WHERE pred] = formula`` addresses a
      positional rectangle filtered by a per-cell predicate (``VALUE`` is
      the candidate cell's own content);
    * ``ADD COLUMN name = formula`` declares a derived column in one
      statement (produced by the rewriter's fuse pass);
    * ``FROM PAGE 'name'`` as a page source, so notebook pages can consume
      earlier pages' outputs;
    * ``LOAD ... WITH (NOHEADER, NOTYPES)`` ingestion options.

Statements carry a gesture-group tag naming the UI action that produced
them; it is provenance metadata, excluded from equality and from the
canonical text.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Union

from .formula import (
    ExpressionParser,
    Formula,
    ParseError,
    TokenStream,
    render_expr,
    tokenize,
)
from .model import column_letter, letter_to_index

LETTERS_ONLY = str.isalpha


class UnknownStatementError(ParseError):
    code = "UNKNOWN_STATEMENT"


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegionSpec:
    """Positional region literal: column span, row span (both optional,
    0-based, inclusive), and an optional per-cell predicate."""

    col_start: Optional[int] = None
    col_end: Optional[int] = None
    row_start: Optional[int] = None
    row_end: Optional[int] = None
    predicate: Optional[Formula] = None

    def is_singleton(self) -> bool:
        return (self.col_start is not None and self.col_start == self.col_end
                and self.row_start is not None and self.row_start == self.row_end
                and self.predicate is None)


@dataclass(frozen=True)
class Load:
    path: str
    header: bool = True
    infer_types: bool = True
    gesture_group: Optional[int] = field(default=None, compare=False)


@dataclass(frozen=True)
class PageRef:
    page: str
    gesture_group: Optional[int] = field(default=None, compare=False)


@dataclass(frozen=True)
class Update:
    target: Union[str, RegionSpec]
    formula: Formula
    where: Optional[Formula] = None
    gesture_group: Optional[int] = field(default=None, compare=False)


@dataclass(frozen=True)
class AddColumn:
    name: str
    at: Optional[int] = None
    derive: Optional[Formula] = None
    gesture_group: Optional[int] = field(default=None, compare=False)


@dataclass(frozen=True)
class RemoveColumn:
    name: str
    gesture_group: Optional[int] = field(default=None, compare=False)


@dataclass(frozen=True)
class InsertRow:
    assignments: tuple[tuple[str, Formula], ...] = ()
    at: Optional[int] = None
    gesture_group: Optional[int] = field(default=None, compare=False)


@dataclass(frozen=True)
class Delete:
    where: Formula
    gesture_group: Optional[int] = field(default=None, compare=False)


@dataclass(frozen=True)
class ReorderColumns:
    names: tuple[str, ...]
    gesture_group: Optional[int] = field(default=None, compare=False)


@dataclass(frozen=True)
class ReorderRows:
    row_tags: tuple[int, ...]
    gesture_group: Optional[int] = field(default=None, compare=False)


@dataclass(frozen=True)
class SortKey:
    column: str
    descending: bool = False


@dataclass(frozen=True)
class SortRows:
    keys: tuple[SortKey, ...]
    gesture_group: Optional[int] = field(default=None, compare=False)


Statement = Union[Update, AddColumn, RemoveColumn, InsertRow, Delete,
                  ReorderColumns, ReorderRows, SortRows]
Source = Union[Load, PageRef]


@dataclass(frozen=True)
class Script:
    """A page's provenance record: its source plus every statement applied
    since, in order. Replaying a script from its source deterministically
    reproduces the page's sheet."""

    source: Source
    statements: tuple[Statement, ...] = ()

    def with_appended(self, *stmts: Statement) -> "Script":
        return Script(self.source, self.statements + tuple(stmts))

    def with_replaced(self, start: int, end: int, replacement: tuple[Statement, ...]) -> "Script":
        return Script(self.source,
                      self.statements[:start] + replacement + self.statements[end:])


def statement_extensions(stmt: Union[Statement, Source]) -> tuple[str, ...]:
    """Which documented grammar extensions a statement uses, if any."""
    out: list[str] = []
    if isinstance(stmt, Update) and isinstance(stmt.target, RegionSpec):
        out.append("region-target")
    if isinstance(stmt, (AddColumn, InsertRow)) and stmt.at is not None:
        out.append("at-position")
    if isinstance(stmt, AddColumn) and stmt.derive is not None:
        out.append("derived-column")
    if isinstance(stmt, Load) and not (stmt.header and stmt.infer_types):
        out.append("load-options")
    if isinstance(stmt, PageRef):
        out.append("page-source")
    return tuple(out)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _StatementParser:
    def __init__(self, ts: TokenStream):
        self.ts = ts

    def expr(self) -> Formula:
        return ExpressionParser(self.ts, host=None, allow_unbound=True).parse(0)

    def identifier(self) -> str:
        tok = self.ts.advance()
        if tok.kind in ("ident", "qident"):
            return str(tok.value)
        if tok.kind == "cellref":
            # a column name that happens to look like a cell reference
            return tok.text
        raise ParseError(f"expected a name, found {tok.text or 'end of input'}",
                         tok.line, tok.col)

    def string(self) -> str:
        tok = self.ts.advance()
        if tok.kind != "str":
            raise ParseError(f"expected a quoted string, found {tok.text!r}",
                             tok.line, tok.col)
        return str(tok.value)

    def integer(self) -> int:
        tok = self.ts.advance()
        if tok.kind != "num" or not isinstance(tok.value, int):
            raise ParseError(f"expected an integer, found {tok.text!r}",
                             tok.line, tok.col)
        return tok.value

    # -- sources -------------------------------------------------------------

    def source(self) -> Source:
        ts = self.ts
        if ts.at_keyword("LOAD"):
            ts.advance()
            path = self.string()
            header, infer = True, True
            if ts.at_keyword("WITH"):
                ts.advance()
                ts.take_op("(")
                while True:
                    opt = self.identifier().upper()
                    if opt == "NOHEADER":
                        header = False
                    elif opt == "NOTYPES":
                        infer = False
                    else:
                        raise ts.error(f"unknown LOAD option {opt}")
                    if ts.at_op(","):
                        ts.advance()
                        continue
                    break
                ts.take_op(")")
            return Load(path, header=header, infer_types=infer)
        if ts.at_keyword("FROM"):
            ts.advance()
            ts.take_keyword("PAGE")
            return PageRef(self.string())
        raise UnknownStatementError(
            "a page must start with LOAD or FROM PAGE", ts.cur.line, ts.cur.col)

    # -- statements ----------------------------------------------------------

    def statement(self) -> Statement:
        ts = self.ts
        if ts.at_keyword("UPDATE"):
            ts.advance()
            return self._update()
        if ts.at_keyword("ADD"):
            ts.advance()
            ts.take_keyword("COLUMN")
            name = self.identifier()
            derive = None
            if ts.at_op("="):
                ts.advance()
                derive = self.expr()
            at = None
            if ts.at_keyword("AT"):
                ts.advance()
                at = self.integer()
            return AddColumn(name, at=at, derive=derive)
        if ts.at_keyword("REMOVE"):
            ts.advance()
            ts.take_keyword("COLUMN")
            return RemoveColumn(self.identifier())
        if ts.at_keyword("INSERT"):
            ts.advance()
            ts.take_keyword("ROW")
            ts.take_op("(")
            assignments: list[tuple[str, Formula]] = []
            if not ts.at_op(")"):
                while True:
                    name = self.identifier()
                    ts.take_op("=")
                    assignments.append((name, self.expr()))
                    if ts.at_op(","):
                        ts.advance()
                        continue
                    break
            ts.take_op(")")
            at = None
            if ts.at_keyword("AT"):
                ts.advance()
                at = self.integer()
            return InsertRow(tuple(assignments), at=at)
        if ts.at_keyword("DELETE"):
            ts.advance()
            ts.take_keyword("WHERE")
            return Delete(self.expr())
        if ts.at_keyword("REORDER"):
            ts.advance()
            if ts.at_keyword("COLUMNS"):
                ts.advance()
                ts.take_op("(")
                names = [self.identifier()]
                while ts.at_op(","):
                    ts.advance()
                    names.append(self.identifier())
                ts.take_op(")")
                return ReorderColumns(tuple(names))
            ts.take_keyword("ROWS")
            ts.take_op("(")
            tags = [self.integer()]
            while ts.at_op(","):
                ts.advance()
                tags.append(self.integer())
            ts.take_op(")")
            return ReorderRows(tuple(tags))
        if ts.at_keyword("SORT"):
            ts.advance()
            ts.take_keyword("ROWS")
            keys = [self._sort_key()]
            while ts.at_op(","):
                ts.advance()
                keys.append(self._sort_key())
            return SortRows(tuple(keys))
        raise UnknownStatementError(
            f"unknown statement {ts.cur.text or 'end of input'!s}",
            ts.cur.line, ts.cur.col)

    def _sort_key(self) -> SortKey:
        column = self.identifier()
        descending = False
        if self.ts.at_keyword("ASC"):
            self.ts.advance()
        elif self.ts.at_keyword("DESC"):
            self.ts.advance()
            descending = True
        return SortKey(column, descending)

    def _update(self) -> Update:
        ts = self.ts
        target: Union[str, RegionSpec]
        if ts.at_op("["):
            target = self._region()
        else:
            target = self.identifier()
        ts.take_op("=")
        formula = self.expr()
        where = None
        if ts.at_keyword("WHERE"):
            ts.advance()
            where = self.expr()
        return Update(target, formula, where)

    def _region(self) -> RegionSpec:
        ts = self.ts
        ts.take_op("[")
        col_start = col_end = row_start = row_end = None
        if ts.at_op("*"):
            ts.advance()
        elif ts.cur.kind == "cellref":
            a = self._region_cell()
            if ts.at_op(":"):
                ts.advance()
                b = self._region_cell()
            else:
                b = a
            col_start, col_end = sorted((a[0], b[0]))
            row_start, row_end = sorted((a[1], b[1]))
        elif ts.cur.kind == "ident" and LETTERS_ONLY(ts.cur.text):
            a = letter_to_index(ts.advance().text)
            ts.take_op(":")
            if ts.cur.kind != "ident" or not LETTERS_ONLY(ts.cur.text):
                raise ts.error("expected a column letter")
            b = letter_to_index(ts.advance().text)
            col_start, col_end = sorted((a, b))
        elif ts.cur.kind == "num":
            a = self.integer() - 1
            ts.take_op(":")
            b = self.integer() - 1
            row_start, row_end = sorted((a, b))
        else:
            raise ts.error("expected a region (cells, columns, rows, or *)")
        predicate = None
        if ts.at_keyword("WHERE"):
            ts.advance()
            predicate = self.expr()
        ts.take_op("]")
        return RegionSpec(col_start, col_end, row_start, row_end, predicate)

    def _region_cell(self) -> tuple[int, int]:
        tok = self.ts.advance()
        import re
        m = re.match(r"^([A-Za-z]+)(\d+)$", tok.text)
        if m is None:
            raise ParseError(f"region corners cannot be absolute ({tok.text!r})",
                             tok.line, tok.col)
        return letter_to_index(m.group(1)), int(m.group(2)) - 1


def parse_script(text: str) -> Script:
    ts = TokenStream(tokenize(text))
    parser = _StatementParser(ts)
    source = parser.source()
    statements: list[Statement] = []
    while True:
        if ts.cur.kind == "eof":
            break
        ts.take_op(";")
        if ts.cur.kind == "eof":
            break
        statements.append(parser.statement())
    return Script(source, tuple(statements))


def parse_statement(text: str) -> Statement:
    """One statement on its own (a script tail fragment)."""
    ts = TokenStream(tokenize(text))
    stmt = _StatementParser(ts).statement()
    if ts.at_op(";"):
        ts.advance()
    if ts.cur.kind != "eof":
        raise ParseError(f"trailing input {ts.cur.text!r}", ts.cur.line, ts.cur.col)
    return stmt


def parse_region(text: str) -> RegionSpec:
    """A region literal on its own, e.g. ``[B1:B4 WHERE VALUE > 8]``."""
    ts = TokenStream(tokenize(text))
    spec = _StatementParser(ts)._region()
    if ts.cur.kind != "eof":
        raise ParseError(f"trailing input {ts.cur.text!r}", ts.cur.line, ts.cur.col)
    return spec


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------


def _quote(text: str) -> str:
    return "'" + text.replace("'", "''") + "'"


def _name_text(name: str) -> str:
    from .formula import _ident_text
    return _ident_text(name)


def _region_text(spec: RegionSpec) -> str:
    if spec.col_start is None and spec.row_start is None:
        body = "*"
    elif spec.col_start is None:
        body = f"{spec.row_start + 1}:{spec.row_end + 1}"
    elif spec.row_start is None:
        body = f"{column_letter(spec.col_start)}:{column_letter(spec.col_end)}"
    else:
        a = f"{column_letter(spec.col_start)}{spec.row_start + 1}"
        b = f"{column_letter(spec.col_end)}{spec.row_end + 1}"
        body = a if a == b else f"{a}:{b}"
    if spec.predicate is not None:
        body += f" WHERE {render_expr(spec.predicate)}"
    return f"[{body}]"


def render_statement(stmt: Union[Statement, Source]) -> str:
    if isinstance(stmt, Load):
        opts = []
        if not stmt.header:
            opts.append("NOHEADER")
        if not stmt.infer_types:
            opts.append("NOTYPES")
        suffix = f" WITH ({', '.join(opts)})" if opts else ""
        return f"LOAD {_quote(stmt.path)}{suffix}"
    if isinstance(stmt, PageRef):
        return f"FROM PAGE {_quote(stmt.page)}"
    if isinstance(stmt, Update):
        target = stmt.target if isinstance(stmt.target, str) else None
        head = _name_text(target) if target is not None else _region_text(stmt.target)  # type: ignore[arg-type]
        text = f"UPDATE {head} = {render_expr(stmt.formula)}"
        if stmt.where is not None:
            text += f" WHERE {render_expr(stmt.where)}"
        return text
    if isinstance(stmt, AddColumn):
        text = f"ADD COLUMN {_name_text(stmt.name)}"
        if stmt.derive is not None:
            text += f" = {render_expr(stmt.derive)}"
        if stmt.at is not None:
            text += f" AT {stmt.at}"
        return text
    if isinstance(stmt, RemoveColumn):
        return f"REMOVE COLUMN {_name_text(stmt.name)}"
    if isinstance(stmt, InsertRow):
        inner = ", ".join(f"{_name_text(n)} = {render_expr(f)}" for n, f in stmt.assignments)
        text = f"INSERT ROW ({inner})"
        if stmt.at is not None:
            text += f" AT {stmt.at}"
        return text
    if isinstance(stmt, Delete):
        return f"DELETE WHERE {render_expr(stmt.where)}"
    if isinstance(stmt, ReorderColumns):
        return f"REORDER COLUMNS ({', '.join(_name_text(n) for n in stmt.names)})"
    if isinstance(stmt, ReorderRows):
        return f"REORDER ROWS ({', '.join(str(t) for t in stmt.row_tags)})"
    if isinstance(stmt, SortRows):
        keys = ", ".join(
            f"{_name_text(k.column)} DESC" if k.descending else _name_text(k.column)
            for k in stmt.keys)
        return f"SORT ROWS {keys}"
    raise TypeError(f"cannot render {stmt!r}")


def render_script(script: Script) -> str:
    """Canonical text: one statement per line, ``;``-terminated. Re-parses
    to an equal AST; rendering is idempotent."""
    lines = [render_statement(script.source) + ";"]
    lines.extend(render_statement(s) + ";" for s in script.statements)
    return "\n".join(lines)


def script_hash(script: Script) -> str:
    """Content hash of the canonical text; the service and the UI compare
    these to prove the script pane mirrors the notebook."""
    return hashlib.sha256(render_script(script).encode("utf-8")).hexdigest()
