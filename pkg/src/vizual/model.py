"""Core sheet model: identities, values, cells, coordinates, regions.

Every piece of sheet state is immutable. Operations elsewhere in the
package build new snapshots instead of mutating, so any state object can
be shared freely across threads and kept around as a checkpoint.

Identity is the load-bearing idea: cells, rows, and columns carry opaque
tags that survive every reposition, so "the cell that used to be at B2"
remains addressable after sorts, drags, inserts, and deletes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping, Optional, Sequence

if TYPE_CHECKING:
    from .formula import Formula


class VizualError(Exception):
    """Base for all package errors; ``code`` is a stable machine-readable tag."""

    code = "ERROR"

    def __init__(self, message: str, *, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ModelError(VizualError):
    code = "MODEL"


class DuplicateColumnError(ModelError):
    code = "DUPLICATE_COLUMN"


class UnknownColumnError(ModelError):
    code = "UNKNOWN_COLUMN"


class UnknownRowError(ModelError):
    code = "UNKNOWN_ROWID"


# ---------------------------------------------------------------------------
# Identifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, order=True)
class CellId:
    n: int

    def __repr__(self) -> str:
        return f"cell:{self.n}"


@dataclass(frozen=True, slots=True, order=True)
class RowId:
    n: int

    def __repr__(self) -> str:
        return f"row:{self.n}"


@dataclass(frozen=True, slots=True, order=True)
class ColId:
    n: int

    def __repr__(self) -> str:
        return f"col:{self.n}"


class IdAllocator:
    """Monotone tag source. Tags are never reused, even across deletions.

    Each sheet lineage owns one allocator counter (threaded through states as
    ``next_id``) so that replaying the same script always assigns the same
    tags -- replay determinism depends on it.
    """

    def __init__(self, start: int = 1):
        self._counter = itertools.count(start)
        self._last = start - 1

    def cell(self) -> CellId:
        return CellId(self._next())

    def row(self) -> RowId:
        return RowId(self._next())

    def col(self) -> ColId:
        return ColId(self._next())

    def _next(self) -> int:
        self._last = next(self._counter)
        return self._last

    @property
    def next_value(self) -> int:
        return self._last + 1


# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


class ErrorKind(Enum):
    REF_DANGLING = "REF_DANGLING"
    CYCLE = "CYCLE"
    TYPE = "TYPE"
    DIV_ZERO = "DIV_ZERO"


@dataclass(frozen=True, slots=True)
class ErrorValue:
    """A first-class error value. Errors flow through formulas like any
    other value so that a sheet with dangling references stays
    representable and displayable."""

    kind: ErrorKind
    detail: str = field(default="", compare=False)

    def __repr__(self) -> str:
        return f"#{self.kind.value}"


# Plain Python scalars carry the non-error cases: None, int, float, str, bool.
Value = object


def is_error(v: Value) -> bool:
    return isinstance(v, ErrorValue)


# ---------------------------------------------------------------------------
# Cells and coordinates
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Cell:
    """The atom of sheet state: an identity, the formula that defines the
    cell, and the value that formula last evaluated to."""

    id: CellId
    formula: "Formula"
    value: Value


@dataclass(frozen=True)
class CoordinateSystem:
    """Bijective grid addressing.

    ``columns`` and ``rows`` hold identity tags in display order; ``grid``
    anchors each cell to its (ColId, RowId) pair. Display positions are
    always derived from the order lists, never stored, so reordering is a
    list permutation and display letters stay positional.
    """

    columns: tuple[tuple[ColId, str], ...]
    rows: tuple[RowId, ...]
    grid: Mapping[tuple[ColId, RowId], CellId]

    def __post_init__(self):
        # one-to-one: a cell id may occupy at most one anchor
        seen: set[CellId] = set()
        col_ids = {c for c, _ in self.columns}
        row_ids = set(self.rows)
        for (cid, rid), cell_id in self.grid.items():
            if cid not in col_ids or rid not in row_ids:
                raise ModelError(f"anchor ({cid},{rid}) outside grid")
            if cell_id in seen:
                raise ModelError(f"{cell_id} anchored at two positions")
            seen.add(cell_id)
        names = [n for _, n in self.columns]
        if len(set(names)) != len(names):
            raise DuplicateColumnError("duplicate column display name")
        object.__setattr__(self, "_pos_of", {v: k for k, v in self.grid.items()})
        object.__setattr__(self, "_col_index", {c: i for i, (c, _) in enumerate(self.columns)})
        object.__setattr__(self, "_row_index", {r: i for i, r in enumerate(self.rows)})
        object.__setattr__(self, "_name_index", {n: c for c, n in self.columns})

    # -- lookups ------------------------------------------------------------

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def cell_at(self, col: int, row: int) -> Optional[CellId]:
        """Cell id at display position (col, row), or None if off-grid."""
        if not (0 <= col < len(self.columns) and 0 <= row < len(self.rows)):
            return None
        return self.grid.get((self.columns[col][0], self.rows[row]))

    def cell_by_anchor(self, col_id: ColId, row_id: RowId) -> Optional[CellId]:
        return self.grid.get((col_id, row_id))

    def anchor_of(self, cell_id: CellId) -> Optional[tuple[ColId, RowId]]:
        return self._pos_of.get(cell_id)  # type: ignore[attr-defined]

    def position_of(self, cell_id: CellId) -> Optional[tuple[int, int]]:
        """Display (col, row) of a cell, or None if it is not anchored."""
        anchor = self._pos_of.get(cell_id)  # type: ignore[attr-defined]
        if anchor is None:
            return None
        ci = self._col_index.get(anchor[0])  # type: ignore[attr-defined]
        ri = self._row_index.get(anchor[1])  # type: ignore[attr-defined]
        if ci is None or ri is None:
            return None
        return ci, ri

    def col_index(self, col_id: ColId) -> Optional[int]:
        return self._col_index.get(col_id)  # type: ignore[attr-defined]

    def row_index(self, row_id: RowId) -> Optional[int]:
        return self._row_index.get(row_id)  # type: ignore[attr-defined]

    def col_by_name(self, name: str) -> Optional[ColId]:
        return self._name_index.get(name)  # type: ignore[attr-defined]

    def col_name(self, col_id: ColId) -> Optional[str]:
        idx = self._col_index.get(col_id)  # type: ignore[attr-defined]
        return self.columns[idx][1] if idx is not None else None


@dataclass(frozen=True)
class SheetState:
    """A complete snapshot: cells keyed by id plus the coordinate system.

    ``next_id`` carries the tag allocator so that operations extending this
    state allocate deterministically.
    """

    cells: Mapping[CellId, Cell]
    coords: CoordinateSystem
    next_id: int = 1

    def __post_init__(self):
        anchored = set(self.coords.grid.values())
        stored = set(self.cells.keys())
        if anchored != stored:
            raise ModelError("cells and coordinate anchors disagree")

    def allocator(self) -> IdAllocator:
        return IdAllocator(self.next_id)

    def with_allocator(self, alloc: IdAllocator) -> "SheetState":
        return replace(self, next_id=alloc.next_value)

    def cell(self, cell_id: CellId) -> Cell:
        return self.cells[cell_id]

    def cell_at(self, col: int, row: int) -> Optional[Cell]:
        cid = self.coords.cell_at(col, row)
        return self.cells[cid] if cid is not None else None

    def value_at(self, col: int, row: int) -> Value:
        cell = self.cell_at(col, row)
        return cell.value if cell is not None else None

    @property
    def column_names(self) -> list[str]:
        return [n for _, n in self.coords.columns]


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """A cell set qualified three ways at once: by a column set, a row set,
    and a per-cell boolean predicate.

    ``columns``/``rows`` of None mean "all". A literal-true predicate with
    finite rectangular sets is exactly a classic spreadsheet range; a
    universal column/row set with a real predicate is a relational
    selection.
    """

    columns: Optional[frozenset[ColId]] = None
    rows: Optional[frozenset[RowId]] = None
    predicate: Optional["Formula"] = None

    def admits_anchor(self, col_id: ColId, row_id: RowId) -> bool:
        if self.columns is not None and col_id not in self.columns:
            return False
        if self.rows is not None and row_id not in self.rows:
            return False
        return True


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def new_sheet(columns: Sequence[str]) -> SheetState:
    """An empty sheet with the given column display names and zero rows."""
    if len(set(columns)) != len(columns):
        raise DuplicateColumnError(f"duplicate column names in {list(columns)}")
    alloc = IdAllocator()
    cols = tuple((alloc.col(), name) for name in columns)
    coords = CoordinateSystem(columns=cols, rows=(), grid={})
    return SheetState(cells={}, coords=coords, next_id=alloc.next_value)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


class Severity(Enum):
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"


@dataclass(frozen=True, slots=True)
class Diagnostic:
    """One structured entry in the diagnostics stream."""

    severity: Severity
    message: str
    statement_index: Optional[int] = None

    def __str__(self) -> str:
        where = f" (statement {self.statement_index})" if self.statement_index is not None else ""
        return f"[{self.severity.value}]{where} {self.message}"


def column_letter(index: int) -> str:
    """Positional display letter: 0 -> A, 25 -> Z, 26 -> AA."""
    if index < 0:
        raise ValueError("column index must be non-negative")
    letters = ""
    index += 1
    while index:
        index, rem = divmod(index - 1, 26)
        letters = chr(ord("A") + rem) + letters
    return letters


def letter_to_index(letters: str) -> int:
    """Inverse of column_letter; accepts any case."""
    n = 0
    for ch in letters.upper():
        if not "A" <= ch <= "Z":
            raise ValueError(f"bad column letters {letters!r}")
        n = n * 26 + (ord(ch) - ord("A") + 1)
    return n - 1


def iter_positions(coords: CoordinateSystem) -> Iterable[tuple[int, int]]:
    """All display positions in column-major order."""
    for ci in range(coords.n_cols):
        for ri in range(coords.n_rows):
            yield ci, ri
