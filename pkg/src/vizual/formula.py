"""Formula syntax: AST, tokenizer, parser, and renderer.

Reference forms, all coexisting in one expression language:

  * ``B2``        relative to the host cell (stored as per-axis deltas);
  * ``$B$2``      absolute grid coordinates; ``$B2`` / ``B$1`` pin one axis;
  * ``@17``       explicit reference to a cell identity tag;
  * ``price``     the cell in the named column on the host's row;
  * ``ROWID``     the host row's identity tag as a value;
  * ``VALUE``     the target cell's own pre-statement content (statement
                  contexts only);
  * ``#REF!``     a dangling marker left behind when a referenced cell was
                  deleted.

Parsing relative references needs a host position to turn surface
coordinates into deltas. Statement text is parsed before targets are
known, so the parser also has an unbound mode producing ``SurfaceRef``
nodes that carry surface coordinates until they are bound per target.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterator, Optional, Sequence, Union

from .model import (
    CellId,
    CoordinateSystem,
    ErrorKind,
    ErrorValue,
    Value,
    VizualError,
    column_letter,
    letter_to_index,
)
from .values import infer_scalar


class ParseError(VizualError):
    code = "SYNTAX"

    def __init__(self, message: str, line: int = 1, col: int = 1, *, code: str | None = None):
        super().__init__(f"{message} at line {line}, column {col}", code=code)
        self.line = line
        self.col = col


class MissingHostError(ParseError):
    code = "MISSING_HOST"


class UnresolvedRefError(VizualError):
    code = "UNRESOLVED_REF"


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Lit:
    value: Value


@dataclass(frozen=True, slots=True)
class CellRef:
    """Host-bound grid reference. An absolute axis stores a grid index; a
    relative axis stores a delta from the host cell."""

    col: int
    row: int
    abs_col: bool = False
    abs_row: bool = False


@dataclass(frozen=True, slots=True)
class SurfaceRef:
    """A grid reference as written, before binding to a host: both axes
    hold surface indices regardless of absoluteness."""

    col: int
    row: int
    abs_col: bool = False
    abs_row: bool = False


@dataclass(frozen=True, slots=True)
class ExplicitRef:
    cell: CellId


@dataclass(frozen=True, slots=True)
class DanglingRef:
    """Reference whose target was deleted; evaluates to REF_DANGLING.

    The original tag is kept for diagnostics but excluded from equality so
    the surface form ``#REF!`` round-trips structurally.
    """

    tag: Optional[int] = field(default=None, compare=False)


@dataclass(frozen=True, slots=True)
class ColumnRef:
    name: str


@dataclass(frozen=True, slots=True)
class RowIdRef:
    pass


@dataclass(frozen=True, slots=True)
class SelfValue:
    pass


RangeCorner = Union[CellRef, SurfaceRef, ExplicitRef, DanglingRef]


@dataclass(frozen=True, slots=True)
class RangeRef:
    start: RangeCorner
    end: RangeCorner


@dataclass(frozen=True, slots=True)
class Unary:
    op: str  # "-" | "NOT"
    operand: "Formula"


@dataclass(frozen=True, slots=True)
class Binary:
    op: str  # + - * / & = <> < <= > >= AND OR
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True, slots=True)
class If:
    cond: "Formula"
    then: "Formula"
    orelse: "Formula"


class AggFunc(Enum):
    SUM = "SUM"
    AVG = "AVG"
    MIN = "MIN"
    MAX = "MAX"
    COUNT = "COUNT"


@dataclass(frozen=True, slots=True)
class Agg:
    func: AggFunc
    range: RangeRef


@dataclass(frozen=True, slots=True)
class Cast:
    operand: "Formula"
    type: str  # int | float | string | bool


@dataclass(frozen=True, slots=True)
class Between:
    operand: "Formula"
    low: "Formula"
    high: "Formula"


@dataclass(frozen=True, slots=True)
class InList:
    operand: "Formula"
    items: tuple["Formula", ...]


Formula = Union[
    Lit, CellRef, SurfaceRef, ExplicitRef, DanglingRef, ColumnRef, RowIdRef,
    SelfValue, RangeRef, Unary, Binary, If, Agg, Cast, Between, InList,
]


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, Unary):
        return (f.operand,)
    if isinstance(f, Binary):
        return (f.left, f.right)
    if isinstance(f, If):
        return (f.cond, f.then, f.orelse)
    if isinstance(f, Cast):
        return (f.operand,)
    if isinstance(f, Between):
        return (f.operand, f.low, f.high)
    if isinstance(f, InList):
        return (f.operand, *f.items)
    return ()


def walk(f: Formula) -> Iterator[Formula]:
    """All nodes, preorder. Range corners are visited as nodes too."""
    yield f
    if isinstance(f, Agg):
        yield f.range
        yield f.range.start
        yield f.range.end
    elif isinstance(f, RangeRef):
        yield f.start
        yield f.end
    for c in children(f):
        yield from walk(c)


def transform(f: Formula, fn: Callable[[Formula], Optional[Formula]]) -> Formula:
    """Rebuild bottom-up; ``fn`` may return a replacement for any node."""
    if isinstance(f, Unary):
        f = Unary(f.op, transform(f.operand, fn))
    elif isinstance(f, Binary):
        f = Binary(f.op, transform(f.left, fn), transform(f.right, fn))
    elif isinstance(f, If):
        f = If(transform(f.cond, fn), transform(f.then, fn), transform(f.orelse, fn))
    elif isinstance(f, Cast):
        f = Cast(transform(f.operand, fn), f.type)
    elif isinstance(f, Between):
        f = Between(transform(f.operand, fn), transform(f.low, fn), transform(f.high, fn))
    elif isinstance(f, InList):
        f = InList(transform(f.operand, fn), tuple(transform(i, fn) for i in f.items))
    elif isinstance(f, Agg):
        start = fn(f.range.start) or f.range.start
        end = fn(f.range.end) or f.range.end
        f = Agg(f.func, RangeRef(start, end))  # type: ignore[arg-type]
    out = fn(f)
    return out if out is not None else f


def is_literal(f: Formula) -> bool:
    return isinstance(f, Lit)


def bind(f: Formula, host: tuple[int, int]) -> Formula:
    """Resolve SurfaceRef nodes against a host position, yielding CellRefs
    whose relative axes are deltas."""
    hc, hr = host

    def fix(node: Formula) -> Optional[Formula]:
        if isinstance(node, SurfaceRef):
            return CellRef(
                col=node.col if node.abs_col else node.col - hc,
                row=node.row if node.abs_row else node.row - hr,
                abs_col=node.abs_col,
                abs_row=node.abs_row,
            )
        return None

    return transform(f, fix)


def unbind(f: Formula, host: tuple[int, int]) -> Formula:
    """Inverse of bind: re-express host-bound relative references as
    surface coordinates so the formula can travel inside statement text.
    References that resolve off the grid become dangling markers."""

    def fix(node: Formula) -> Optional[Formula]:
        if isinstance(node, CellRef) and not (node.abs_col and node.abs_row):
            target = ref_target(node, host)
            if target is None or target[0] < 0 or target[1] < 0:
                return DanglingRef(None)
            return SurfaceRef(target[0], target[1], node.abs_col, node.abs_row)
        return None

    return transform(f, fix)


def ref_target(ref: Union[CellRef, SurfaceRef], host: Optional[tuple[int, int]]) -> Optional[tuple[int, int]]:
    """Grid position a reference points at, given the host position (which
    may be None for fully absolute references)."""
    if isinstance(ref, SurfaceRef):
        return ref.col, ref.row
    hc, hr = host if host is not None else (None, None)
    col = ref.col if ref.abs_col else (None if hc is None else hc + ref.col)
    row = ref.row if ref.abs_row else (None if hr is None else hr + ref.row)
    if col is None or row is None:
        return None
    return col, row


# ---------------------------------------------------------------------------
# Tokenizer (shared with the statement and SQL parsers)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # num str ident qident cellref ref hashref op eof
    text: str
    value: object
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|--[^\n]*)
  | (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+)
  | (?P<str>'(?:[^']|'')*')
  | (?P<qident>"(?:[^"]|"")*")
  | (?P<hashref>\#REF!)
  | (?P<ref>@\d+)
  | (?P<cellref>\$?[A-Za-z]+\$?\d+(?![A-Za-z0-9_]))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|<>|!=|\|\||[=<>+\-*/&(),;:\[\].])
    """,
    re.VERBOSE,
)

_CELLREF_RE = re.compile(r"^(\$?)([A-Za-z]+)(\$?)(\d+)$")


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line, col = 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        raw = m.group(0)
        kind = m.lastgroup or "ws"
        if kind != "ws":
            value: object = raw
            if kind == "num":
                value = int(raw) if raw.isdigit() else float(raw)
            elif kind == "str":
                value = raw[1:-1].replace("''", "'")
            elif kind == "qident":
                value = raw[1:-1].replace('""', '"')
            elif kind == "ref":
                value = int(raw[1:])
            elif kind == "op" and raw == "!=":
                value = "<>"
            tokens.append(Token(kind, raw, value, line, col))
        nl = raw.count("\n")
        if nl:
            line += nl
            col = len(raw) - raw.rfind("\n")
        else:
            col += len(raw)
        pos = m.end()
    tokens.append(Token("eof", "", None, line, col))
    return tokens


class TokenStream:
    def __init__(self, tokens: Sequence[Token]):
        self.tokens = tokens
        self.i = 0

    @property
    def cur(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def at_op(self, *ops: str) -> bool:
        return self.cur.kind == "op" and self.cur.value in ops

    def at_keyword(self, *words: str) -> bool:
        return self.cur.kind == "ident" and self.cur.value.upper() in words

    def take_op(self, op: str) -> Token:
        if not self.at_op(op):
            raise ParseError(f"expected {op!r}, found {self.cur.text or 'end of input'}",
                             self.cur.line, self.cur.col)
        return self.advance()

    def take_keyword(self, word: str) -> Token:
        if not self.at_keyword(word):
            raise ParseError(f"expected {word}, found {self.cur.text or 'end of input'}",
                             self.cur.line, self.cur.col)
        return self.advance()

    def error(self, message: str) -> ParseError:
        return ParseError(message, self.cur.line, self.cur.col)


# ---------------------------------------------------------------------------
# Expression parser (Pratt)
# ---------------------------------------------------------------------------

_BP_OR = 10
_BP_AND = 20
_BP_NOT = 25
_BP_CMP = 30
_BP_CONCAT = 40
_BP_ADD = 50
_BP_MUL = 60
_BP_NEG = 70
_BP_ATOM = 100

_KEYWORDS = {
    "AND", "OR", "NOT", "TRUE", "FALSE", "NULL", "IF", "CAST", "BETWEEN",
    "IN", "ROWID", "VALUE", "SUM", "AVG", "MIN", "MAX", "COUNT",
}

# statement/query words that may follow an expression; a bare identifier in
# prefix position matching one of these is always a syntax error, so the
# expression parser stops cleanly at clause boundaries
_RESERVED_NON_PREFIX = {
    "AND", "OR", "WHERE", "ASC", "DESC", "AT", "WITH", "THEN", "ELSE",
    "END", "WHEN", "AS", "FROM", "SELECT", "UNION", "ORDER", "BY", "OVER",
    "ROWS", "BETWEEN", "IN", "TO",
}

_AGG_NAMES = {f.value for f in AggFunc}


class ExpressionParser:
    """Parses the expression fragment from a token stream.

    ``host`` binds relative references to deltas immediately. With
    ``allow_unbound`` the parser instead produces SurfaceRef nodes for
    later binding; without either, relative references are an error.
    """

    def __init__(self, ts: TokenStream, host: Optional[tuple[int, int]] = None,
                 allow_unbound: bool = False):
        self.ts = ts
        self.host = host
        self.allow_unbound = allow_unbound

    def parse(self, bp: int = 0) -> Formula:
        left = self._prefix()
        while True:
            nxt = self._infix_bp()
            if nxt is None or nxt <= bp:
                return left
            left = self._infix(left)

    # -- prefix -------------------------------------------------------------

    def _prefix(self) -> Formula:
        ts = self.ts
        tok = ts.cur
        if tok.kind == "num":
            ts.advance()
            return Lit(tok.value)
        if tok.kind == "str":
            ts.advance()
            return Lit(tok.value)
        if tok.kind == "hashref":
            ts.advance()
            return DanglingRef()
        if tok.kind == "ref":
            ts.advance()
            return ExplicitRef(CellId(tok.value))
        if tok.kind == "cellref":
            ts.advance()
            ref = self._cell_ref(tok)
            if ts.at_op(":"):
                ts.advance()
                end_tok = ts.advance()
                if end_tok.kind != "cellref":
                    raise ts.error("expected range end reference")
                return RangeRef(ref, self._cell_ref(end_tok))  # type: ignore[arg-type]
            return ref
        if tok.kind == "qident":
            ts.advance()
            return ColumnRef(tok.value)
        if tok.kind == "op" and tok.value == "(":
            ts.advance()
            inner = self.parse(0)
            ts.take_op(")")
            return inner
        if tok.kind == "op" and tok.value == "-":
            ts.advance()
            if ts.cur.kind == "num":
                num = ts.advance()
                return Lit(-num.value)  # type: ignore[operator]
            return Unary("-", self.parse(_BP_NEG))
        if tok.kind == "ident":
            word = tok.value.upper()
            if word == "NOT":
                ts.advance()
                return Unary("NOT", self.parse(_BP_NOT))
            if word == "TRUE":
                ts.advance()
                return Lit(True)
            if word == "FALSE":
                ts.advance()
                return Lit(False)
            if word == "NULL":
                ts.advance()
                return Lit(None)
            if word == "ROWID":
                ts.advance()
                return RowIdRef()
            if word == "VALUE":
                ts.advance()
                return SelfValue()
            if word == "IF":
                ts.advance()
                ts.take_op("(")
                cond = self.parse(0)
                ts.take_op(",")
                then = self.parse(0)
                ts.take_op(",")
                orelse = self.parse(0)
                ts.take_op(")")
                return If(cond, then, orelse)
            if word == "CAST":
                ts.advance()
                ts.take_op("(")
                operand = self.parse(0)
                ts.take_op(",")
                type_tok = ts.advance()
                if type_tok.kind not in ("ident", "str") or str(type_tok.value).lower() not in (
                        "int", "float", "string", "bool"):
                    raise ts.error("CAST type must be int, float, string, or bool")
                ts.take_op(")")
                return Cast(operand, str(type_tok.value).lower())
            if word in _AGG_NAMES:
                ts.advance()
                ts.take_op("(")
                start_tok = ts.advance()
                if start_tok.kind != "cellref":
                    raise ts.error(f"{word} takes a cell range")
                ts.take_op(":")
                end_tok = ts.advance()
                if end_tok.kind != "cellref":
                    raise ts.error(f"{word} takes a cell range")
                ts.take_op(")")
                rng = RangeRef(self._cell_ref(start_tok), self._cell_ref(end_tok))  # type: ignore[arg-type]
                return Agg(AggFunc(word), rng)
            if word in _RESERVED_NON_PREFIX:
                raise ts.error(f"unexpected keyword {tok.text}")
            ts.advance()
            return ColumnRef(tok.value)
        raise ts.error(f"unexpected {tok.text or 'end of input'} in expression")

    def _cell_ref(self, tok: Token) -> Union[CellRef, SurfaceRef]:
        m = _CELLREF_RE.match(tok.text)
        assert m is not None
        abs_col = m.group(1) == "$"
        col = letter_to_index(m.group(2))
        abs_row = m.group(3) == "$"
        row = int(m.group(4)) - 1
        if row < 0:
            raise ParseError(f"row number must be positive in {tok.text!r}", tok.line, tok.col)
        if abs_col and abs_row:
            return CellRef(col, row, True, True)
        if self.host is not None:
            hc, hr = self.host
            return CellRef(
                col=col if abs_col else col - hc,
                row=row if abs_row else row - hr,
                abs_col=abs_col,
                abs_row=abs_row,
            )
        if self.allow_unbound:
            return SurfaceRef(col, row, abs_col, abs_row)
        raise MissingHostError(
            f"relative reference {tok.text!r} needs a host cell", tok.line, tok.col)

    # -- infix --------------------------------------------------------------

    def _infix_bp(self) -> Optional[int]:
        ts = self.ts
        if ts.cur.kind == "op":
            op = ts.cur.value
            if op in ("+", "-"):
                return _BP_ADD
            if op in ("*", "/"):
                return _BP_MUL
            if op in ("&", "||"):
                return _BP_CONCAT
            if op in ("=", "<>", "<", "<=", ">", ">="):
                return _BP_CMP
            return None
        if ts.cur.kind == "ident":
            word = ts.cur.value.upper()
            if word == "AND":
                return _BP_AND
            if word == "OR":
                return _BP_OR
            if word in ("BETWEEN", "IN"):
                return _BP_CMP
        return None

    def _infix(self, left: Formula) -> Formula:
        ts = self.ts
        if ts.cur.kind == "op":
            op = str(ts.advance().value)
            if op == "||":
                op = "&"
            bp = {"+": _BP_ADD, "-": _BP_ADD, "*": _BP_MUL, "/": _BP_MUL,
                  "&": _BP_CONCAT, "=": _BP_CMP, "<>": _BP_CMP, "<": _BP_CMP,
                  "<=": _BP_CMP, ">": _BP_CMP, ">=": _BP_CMP}[op]
            return Binary(op, left, self.parse(bp))
        word = ts.advance().value.upper()
        if word == "AND":
            return Binary("AND", left, self.parse(_BP_AND))
        if word == "OR":
            return Binary("OR", left, self.parse(_BP_OR))
        if word == "BETWEEN":
            low = self.parse(_BP_CONCAT)
            ts.take_keyword("AND")
            high = self.parse(_BP_CONCAT)
            return Between(left, low, high)
        if word == "IN":
            ts.take_op("(")
            items = [self.parse(0)]
            while ts.at_op(","):
                ts.advance()
                items.append(self.parse(0))
            ts.take_op(")")
            return InList(left, tuple(items))
        raise ts.error(f"unexpected {word}")


def parse_formula(text: str, host: Optional[tuple[int, int]] = None, *,
                  allow_unbound: bool = False) -> Formula:
    """Parse formula-bar text: a leading ``=`` marks an expression, anything
    else is a constant (typed by inference, like a spreadsheet entry).
    """
    stripped = text.strip()
    if not stripped.startswith("="):
        return Lit(infer_scalar(stripped))
    ts = TokenStream(tokenize(stripped[1:]))
    parser = ExpressionParser(ts, host=host, allow_unbound=allow_unbound)
    out = parser.parse(0)
    if ts.cur.kind != "eof":
        raise ts.error(f"trailing input {ts.cur.text!r}")
    return out


def parse_expression(text: str, host: Optional[tuple[int, int]] = None, *,
                     allow_unbound: bool = False) -> Formula:
    """Parse a bare expression (no ``=`` marker), as embedded in statements."""
    ts = TokenStream(tokenize(text))
    parser = ExpressionParser(ts, host=host, allow_unbound=allow_unbound)
    out = parser.parse(0)
    if ts.cur.kind != "eof":
        raise ts.error(f"trailing input {ts.cur.text!r}")
    return out


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_BARE_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _ident_text(name: str) -> str:
    """Column names that would lex as something else must be quoted."""
    if (_BARE_IDENT_RE.match(name)
            and name.upper() not in _KEYWORDS
            and not _CELLREF_RE.match(name)):
        return name
    return '"' + name.replace('"', '""') + '"'


def _lit_text(value: Value) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    if isinstance(value, ErrorValue):
        return "#REF!" if value.kind == ErrorKind.REF_DANGLING else repr(value)
    return repr(value) if isinstance(value, float) else str(value)


def _ref_text(ref: Union[CellRef, SurfaceRef], host: Optional[tuple[int, int]]) -> str:
    target = ref_target(ref, host)
    if target is None:
        raise MissingHostError("cannot render a relative reference without a host")
    col, row = target
    if col < 0 or row < 0:
        return "#REF!"
    return (("$" if ref.abs_col else "") + column_letter(col)
            + ("$" if ref.abs_row else "") + str(row + 1))


_BINARY_BP = {"OR": _BP_OR, "AND": _BP_AND, "=": _BP_CMP, "<>": _BP_CMP,
              "<": _BP_CMP, "<=": _BP_CMP, ">": _BP_CMP, ">=": _BP_CMP,
              "&": _BP_CONCAT, "+": _BP_ADD, "-": _BP_ADD,
              "*": _BP_MUL, "/": _BP_MUL}


def render_expr(f: Formula, host: Optional[tuple[int, int]] = None,
                coords: Optional[CoordinateSystem] = None, min_prec: int = 0) -> str:
    """Surface text for an expression; parenthesized exactly as needed to
    re-parse into the same AST."""

    def sub(node: Formula, prec: int) -> str:
        return render_expr(node, host, coords, prec)

    if isinstance(f, Lit):
        return _lit_text(f.value)
    if isinstance(f, (CellRef, SurfaceRef)):
        return _ref_text(f, host)
    if isinstance(f, ExplicitRef):
        if coords is None:
            return f"@{f.cell.n}"
        pos = coords.position_of(f.cell)
        if pos is None:
            raise UnresolvedRefError(f"{f.cell} has no grid position")
        return column_letter(pos[0]) + str(pos[1] + 1)
    if isinstance(f, DanglingRef):
        return "#REF!"
    if isinstance(f, ColumnRef):
        return _ident_text(f.name)
    if isinstance(f, RowIdRef):
        return "ROWID"
    if isinstance(f, SelfValue):
        return "VALUE"
    if isinstance(f, RangeRef):
        return _range_text(f, host, coords)
    if isinstance(f, Agg):
        return f"{f.func.value}({_range_text(f.range, host, coords)})"
    if isinstance(f, Cast):
        return f"CAST({sub(f.operand, 0)}, {f.type})"
    if isinstance(f, If):
        return f"IF({sub(f.cond, 0)}, {sub(f.then, 0)}, {sub(f.orelse, 0)})"
    if isinstance(f, Unary):
        if f.op == "NOT":
            text = f"NOT {sub(f.operand, _BP_NOT)}"
            return _parens(text, _BP_NOT, min_prec)
        operand = f.operand
        # bare "-3" re-parses as a folded literal; "--" would lex as a comment
        if isinstance(operand, (Lit, Unary)):
            return _parens(f"-({sub(operand, 0)})", _BP_NEG, min_prec)
        return _parens(f"-{sub(operand, _BP_NEG)}", _BP_NEG, min_prec)
    if isinstance(f, Between):
        text = (f"{sub(f.operand, _BP_CMP + 1)} BETWEEN {sub(f.low, _BP_CONCAT + 1)}"
                f" AND {sub(f.high, _BP_CONCAT + 1)}")
        return _parens(text, _BP_CMP, min_prec)
    if isinstance(f, InList):
        items = ", ".join(sub(i, 0) for i in f.items)
        text = f"{sub(f.operand, _BP_CMP + 1)} IN ({items})"
        return _parens(text, _BP_CMP, min_prec)
    if isinstance(f, Binary):
        bp = _BINARY_BP[f.op]
        left = sub(f.left, bp)
        right = sub(f.right, bp + 1)
        if f.op in ("+", "-", "*", "/", "&"):
            # arithmetic renders tight (spreadsheet style); a space guards
            # "-" against a negative literal fusing into a "--" comment
            gap = " " if f.op == "-" and right.startswith("-") else ""
            text = f"{left}{f.op}{gap}{right}"
        else:
            text = f"{left} {f.op} {right}"
        return _parens(text, bp, min_prec)
    raise TypeError(f"cannot render {f!r}")


def _parens(text: str, prec: int, min_prec: int) -> str:
    return f"({text})" if prec < min_prec else text


def _range_text(rng: RangeRef, host, coords) -> str:
    def corner(c: RangeCorner) -> str:
        if isinstance(c, (CellRef, SurfaceRef)):
            return _ref_text(c, host)
        if isinstance(c, ExplicitRef):
            return render_expr(c, host, coords)
        return "#REF!"

    return f"{corner(rng.start)}:{corner(rng.end)}"


def render_formula(f: Formula, host: Optional[tuple[int, int]] = None,
                   coords: Optional[CoordinateSystem] = None) -> str:
    """Formula-bar text: constants render bare when re-entry would
    reproduce them, everything else gets the ``=`` expression marker."""
    if isinstance(f, Lit):
        v = f.value
        if isinstance(v, str):
            if v != "" and not v.startswith("=") and infer_scalar(v) == v:
                return v
            return "=" + _lit_text(v)
        if isinstance(v, ErrorValue):
            return "=" + _lit_text(v)
        return _lit_text(v) if v is not None else ""
    return "=" + render_expr(f, host, coords)


def relative_normal_form(f: Formula) -> str:
    """Host-independent canonical text: relative axes render as offsets
    (``R[-1]C[0]`` style), so formulas can be compared across moves."""

    def rnf(node: Formula, bp: int = 0, right: bool = False) -> str:
        if isinstance(node, (CellRef, SurfaceRef)):
            if isinstance(node, SurfaceRef):
                return f"R{node.row + 1}C{node.col + 1}"
            row = f"R{node.row + 1}" if node.abs_row else f"R[{node.row:+d}]"
            col = f"C{node.col + 1}" if node.abs_col else f"C[{node.col:+d}]"
            return row + col
        if isinstance(node, RangeRef):
            return f"{rnf(node.start)}:{rnf(node.end)}"
        if isinstance(node, Agg):
            return f"{node.func.value}({rnf(node.range)})"
        if isinstance(node, ExplicitRef):
            return f"@{node.cell.n}"
        if isinstance(node, (Lit, DanglingRef, ColumnRef, RowIdRef, SelfValue)):
            return render_expr(node)
        if isinstance(node, Unary):
            inner = rnf(node.operand, _BP_NEG if node.op == "-" else _BP_NOT)
            text = f"{node.op}({inner})" if node.op == "-" else f"NOT {inner}"
            return text
        if isinstance(node, Binary):
            return f"({rnf(node.left)} {node.op} {rnf(node.right)})"
        if isinstance(node, If):
            return f"IF({rnf(node.cond)}, {rnf(node.then)}, {rnf(node.orelse)})"
        if isinstance(node, Cast):
            return f"CAST({rnf(node.operand)}, {node.type})"
        if isinstance(node, Between):
            return f"({rnf(node.operand)} BETWEEN {rnf(node.low)} AND {rnf(node.high)})"
        if isinstance(node, InList):
            return f"({rnf(node.operand)} IN ({', '.join(rnf(i) for i in node.items)}))"
        raise TypeError(f"cannot normalize {node!r}")

    return rnf(f)
