"""Scalar value semantics shared by the formula evaluator and the SQL
interpreter.

Both engines route every arithmetic, comparison, cast, and ordering
decision through this module, which is what makes compiled queries agree
with sheet replay value-for-value (including on nulls and error values).

Rules in force everywhere:
  * errors propagate, first error wins left-to-right;
  * null propagates through arithmetic, concatenation, and comparison;
  * arithmetic is numeric-only (bool is not a number here); type
    mismatches yield a TYPE error value rather than raising;
  * division by zero yields DIV_ZERO;
  * ordering ranks numbers < strings < booleans, with nulls and then
    errors last regardless of direction.
"""

from __future__ import annotations

import functools
from typing import Any, Optional

from .model import ErrorKind, ErrorValue, Value

NUMERIC = (int, float)


def is_numeric(v: Value) -> bool:
    return isinstance(v, NUMERIC) and not isinstance(v, bool)


def first_error(*values: Value) -> Optional[ErrorValue]:
    for v in values:
        if isinstance(v, ErrorValue):
            return v
    return None


def type_error(detail: str) -> ErrorValue:
    return ErrorValue(ErrorKind.TYPE, detail)


# ---------------------------------------------------------------------------
# Arithmetic and concatenation
# ---------------------------------------------------------------------------


def arith(op: str, a: Value, b: Value) -> Value:
    err = first_error(a, b)
    if err is not None:
        return err
    if a is None or b is None:
        return None
    if not is_numeric(a) or not is_numeric(b):
        return type_error(f"{op} needs numbers, got {_typename(a)} and {_typename(b)}")
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            return ErrorValue(ErrorKind.DIV_ZERO, f"{a!r} / 0")
        return a / b
    raise ValueError(f"unknown arithmetic op {op!r}")


def negate(a: Value) -> Value:
    if isinstance(a, ErrorValue):
        return a
    if a is None:
        return None
    if not is_numeric(a):
        return type_error(f"unary - needs a number, got {_typename(a)}")
    return -a


def concat(a: Value, b: Value) -> Value:
    err = first_error(a, b)
    if err is not None:
        return err
    if a is None or b is None:
        return None
    if not isinstance(a, str) or not isinstance(b, str):
        return type_error("& needs strings; CAST first")
    return a + b


# ---------------------------------------------------------------------------
# Comparison and logic
# ---------------------------------------------------------------------------


def compare(op: str, a: Value, b: Value) -> Value:
    """Three-valued comparison: errors propagate, null compares to null."""
    err = first_error(a, b)
    if err is not None:
        return err
    if a is None or b is None:
        return None
    same_class = _comparison_class(a) == _comparison_class(b)
    if op == "=":
        return same_class and a == b
    if op == "<>":
        return not (same_class and a == b)
    if not same_class:
        return type_error(f"cannot order {_typename(a)} against {_typename(b)}")
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise ValueError(f"unknown comparison op {op!r}")


def logical_not(a: Value) -> Value:
    if isinstance(a, ErrorValue):
        return a
    if a is None:
        return None
    if not isinstance(a, bool):
        return type_error(f"NOT needs a boolean, got {_typename(a)}")
    return not a


def logical(op: str, a: Value, b: Value) -> Value:
    """SQL-flavored three-valued AND/OR over bool | null | error."""
    err = first_error(a, b)
    if err is not None:
        return err
    for v in (a, b):
        if v is not None and not isinstance(v, bool):
            return type_error(f"{op} needs booleans, got {_typename(v)}")
    if op == "AND":
        if a is False or b is False:
            return False
        if a is None or b is None:
            return None
        return True
    if op == "OR":
        if a is True or b is True:
            return True
        if a is None or b is None:
            return None
        return False
    raise ValueError(f"unknown logical op {op!r}")


def is_true(v: Value) -> bool:
    """Predicate acceptance: only an actual boolean True passes."""
    return v is True


# ---------------------------------------------------------------------------
# Casting
# ---------------------------------------------------------------------------

CAST_TYPES = ("int", "float", "string", "bool")


def cast(v: Value, target: str) -> Value:
    if isinstance(v, ErrorValue):
        return v
    if v is None:
        return None
    try:
        if target == "int":
            if isinstance(v, bool):
                return int(v)
            if isinstance(v, (int, float)):
                return int(v)
            if isinstance(v, str):
                return int(v.strip())
        elif target == "float":
            if isinstance(v, bool):
                return float(v)
            if isinstance(v, (int, float)):
                return float(v)
            if isinstance(v, str):
                return float(v.strip())
        elif target == "string":
            return render_scalar(v)
        elif target == "bool":
            if isinstance(v, bool):
                return v
            if isinstance(v, (int, float)) and v in (0, 1):
                return bool(v)
            if isinstance(v, str) and v.strip().lower() in ("true", "false"):
                return v.strip().lower() == "true"
        else:
            raise ValueError(f"unknown cast target {target!r}")
    except (ValueError, OverflowError):
        pass
    if target in CAST_TYPES:
        return type_error(f"cannot cast {v!r} to {target}")
    raise ValueError(f"unknown cast target {target!r}")


def render_scalar(v: Value) -> str:
    """Canonical text for a scalar, as used by CAST(..., string)."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, ErrorValue):
        return repr(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------------------
# Ordering (SORT ROWS and ORDER BY share this)
# ---------------------------------------------------------------------------

_CLASS_NUMBER = 0
_CLASS_STRING = 1
_CLASS_BOOL = 2
_CLASS_NULL = 3
_CLASS_ERROR = 4


def _comparison_class(v: Value) -> int:
    if isinstance(v, bool):
        return _CLASS_BOOL
    if isinstance(v, NUMERIC):
        return _CLASS_NUMBER
    if isinstance(v, str):
        return _CLASS_STRING
    if v is None:
        return _CLASS_NULL
    if isinstance(v, ErrorValue):
        return _CLASS_ERROR
    return _CLASS_ERROR


def order_cmp(a: Value, b: Value, descending: bool = False) -> int:
    """Total order for sorting. Class rank (numbers, strings, booleans,
    then nulls, then errors) is fixed; ``descending`` flips order only
    within a class."""
    ca, cb = _comparison_class(a), _comparison_class(b)
    if ca != cb:
        return -1 if ca < cb else 1
    if ca in (_CLASS_NULL, _CLASS_ERROR):
        return 0
    if a == b:
        return 0
    lt = a < b
    if descending:
        lt = not lt
    return -1 if lt else 1


def sort_rows_key(row_values: list[Value], directions: list[bool]) -> Any:
    """functools key object for multi-key stable sorting."""

    @functools.total_ordering
    class _Key:
        __slots__ = ("vals",)

        def __init__(self, vals):
            self.vals = vals

        def __eq__(self, other):
            return all(order_cmp(x, y, d) == 0 for (x, y, d) in self._zip(other))

        def __lt__(self, other):
            for x, y, d in self._zip(other):
                c = order_cmp(x, y, d)
                if c != 0:
                    return c < 0
            return False

        def _zip(self, other):
            return zip(self.vals, other.vals, directions)

    return _Key(row_values)


def _typename(v: Value) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, int):
        return "int"
    if isinstance(v, float):
        return "float"
    if isinstance(v, str):
        return "string"
    if isinstance(v, ErrorValue):
        return "error"
    return type(v).__name__


# ---------------------------------------------------------------------------
# Literal inference (CSV ingestion and formula-bar constants)
# ---------------------------------------------------------------------------


def infer_scalar(text: str) -> Value:
    """Best-effort typed parse of a raw field: int, then float, then bool,
    else the string itself. Empty text is null."""
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        f = float(text)
        # inf/nan would not round-trip through the formula surface; keep text
        if f == f and f not in (float("inf"), float("-inf")):
            return f
    except ValueError:
        pass
    if text.lower() == "true":
        return True
    if text.lower() == "false":
        return False
    return text
