"""Statement application, CSV ingestion, structural transforms, and the
mapping from UI gestures to statements.

Structural actions route through one kernel (``apply_transform``) under a
stability policy. Value-stable actions rewrite formulas so every cell
keeps its value across the coordinate change; formula-stable actions keep
formulas (in relative normal form) and recompute values. Defaults follow
the common behavior of commercial spreadsheets: everything value-stable
except sorting.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence, Union

from . import engine, lang
from .engine import GridTransform, StabilityMode, rebase, recompute, region_resolve
from .formula import (
    Binary,
    Cast,
    DanglingRef,
    Formula,
    InList,
    Lit,
    RowIdRef,
    SelfValue,
    Unary,
    bind,
    parse_expression,
    parse_formula,
    transform as map_formula,
    unbind,
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
    SortKey,
    SortRows,
    Statement,
    Update,
)
from .model import (
    Cell,
    CellId,
    ColId,
    CoordinateSystem,
    Diagnostic,
    DuplicateColumnError,
    IdAllocator,
    ModelError,
    Region,
    RowId,
    Severity,
    SheetState,
    UnknownColumnError,
    UnknownRowError,
    Value,
    VizualError,
    column_letter,
)
from .values import infer_scalar, is_true, sort_rows_key

FixtureMap = Mapping[str, str]


class ExecutorError(VizualError):
    code = "EXECUTOR"


class EmptyTargetError(ExecutorError):
    code = "EMPTY_TARGET"


# ---------------------------------------------------------------------------
# Stability policy (per structural action)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilityPolicy:
    """Which stability each structural action enforces. The defaults are
    the majority behavior across Excel, Numbers, and Sheets: value-stable
    everywhere except sort. ``cut_paste`` flips to FORMULA_STABLE to
    reproduce the Numbers column of that comparison."""

    insert: StabilityMode = StabilityMode.VALUE_STABLE
    reorder: StabilityMode = StabilityMode.VALUE_STABLE
    delete: StabilityMode = StabilityMode.VALUE_STABLE
    cut_paste: StabilityMode = StabilityMode.VALUE_STABLE
    sort: StabilityMode = StabilityMode.FORMULA_STABLE


DEFAULT_POLICY = StabilityPolicy()


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def load_csv(path: str, *, header: bool = True, infer_types: bool = True,
             fixtures: Optional[FixtureMap] = None,
             diagnostics: Optional[list[Diagnostic]] = None) -> SheetState:
    """Load a CSV file into a fresh all-literal sheet.

    Every datum becomes a cell whose formula is the parsed literal, so the
    loaded state is valid by construction. ``fixtures`` short-circuits the
    filesystem with path -> csv text, which keeps notebook replay hermetic.
    Short rows are padded with nulls (and reported); long rows are
    truncated (and reported).
    """
    if fixtures is not None and path in fixtures:
        text = fixtures[path]
    else:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            text = fh.read()
    rows = [row for row in csv.reader(io.StringIO(text))]
    if header:
        if not rows:
            raise ExecutorError(f"{path!r} is empty but a header was expected", code="IO")
        names = rows[0]
        data = rows[1:]
    else:
        width = max((len(r) for r in rows), default=0)
        names = [column_letter(i) for i in range(width)]
        data = rows
    if len(set(names)) != len(names):
        raise DuplicateColumnError(f"duplicate header names in {path!r}")

    alloc = IdAllocator()
    # rows take the first tags so a fresh n-row file reads as rows 1..n
    row_ids = [alloc.row() for _ in data]
    columns = tuple((alloc.col(), name) for name in names)
    grid: dict[tuple[ColId, RowId], CellId] = {}
    cells: dict[CellId, Cell] = {}
    for line_no, raw in enumerate(data):
        if len(raw) != len(names) and diagnostics is not None:
            diagnostics.append(Diagnostic(
                Severity.WARNING,
                f"RAGGED_ROW: row {line_no + 1} of {path!r} has {len(raw)} fields, "
                f"expected {len(names)}"))
        row_id = row_ids[line_no]
        for ci, (col_id, _) in enumerate(columns):
            raw_value = raw[ci] if ci < len(raw) else ""
            value: Value = infer_scalar(raw_value) if infer_types else raw_value
            if not infer_types and raw_value == "" and ci >= len(raw):
                value = None
            cell_id = alloc.cell()
            grid[(col_id, row_id)] = cell_id
            cells[cell_id] = Cell(cell_id, Lit(value), value)
    coords = CoordinateSystem(columns=columns, rows=tuple(row_ids), grid=grid)
    return SheetState(cells=cells, coords=coords, next_id=alloc.next_value)


def load_source(source: lang.Source, fixtures: Optional[FixtureMap] = None,
                diagnostics: Optional[list[Diagnostic]] = None) -> SheetState:
    if isinstance(source, Load):
        return load_csv(source.path, header=source.header,
                        infer_types=source.infer_types, fixtures=fixtures,
                        diagnostics=diagnostics)
    raise ExecutorError(f"page references are resolved by the notebook layer: {source!r}")


# ---------------------------------------------------------------------------
# Shared structural kernel
# ---------------------------------------------------------------------------


def apply_transform(state: SheetState, new_coords: CoordinateSystem,
                    mode: StabilityMode, *,
                    dropped: frozenset[CellId] = frozenset(),
                    created: Optional[dict[CellId, Cell]] = None,
                    next_id: Optional[int] = None) -> SheetState:
    """Move the sheet onto a new coordinate system.

    VALUE_STABLE rewrites surviving formulas so each cell keeps its value
    (references to dropped cells start dangling); FORMULA_STABLE keeps
    formulas as written and recomputes everything.
    """
    transform = GridTransform(state.coords, new_coords, dropped)
    created = created or {}
    survivors: dict[CellId, Cell] = {}
    dirty: set[CellId] = set(created.keys())
    if mode == StabilityMode.VALUE_STABLE:
        for cell_id, cell in state.cells.items():
            if cell_id in dropped:
                continue
            host = state.coords.position_of(cell_id)
            if host is None:
                survivors[cell_id] = cell
                continue
            new_formula = rebase(cell.formula, host, transform, mode)
            if new_formula is not cell.formula and new_formula != cell.formula:
                cell = replace(cell, formula=new_formula)
                if any(isinstance(n, DanglingRef) for n in walk(new_formula)):
                    dirty.add(cell_id)
            survivors[cell_id] = cell
    else:
        for cell_id, cell in state.cells.items():
            if cell_id not in dropped:
                survivors[cell_id] = cell
        dirty.update(survivors.keys())
    survivors.update(created)
    out = SheetState(cells=survivors, coords=new_coords,
                     next_id=next_id if next_id is not None else state.next_id)
    return recompute(out, dirty)


def permuted_rows_coords(coords: CoordinateSystem, new_rows: Sequence[RowId]) -> CoordinateSystem:
    return CoordinateSystem(columns=coords.columns, rows=tuple(new_rows), grid=coords.grid)


def permuted_grid(coords: CoordinateSystem,
                  mapping: Mapping[tuple[int, int], tuple[int, int]]) -> CoordinateSystem:
    """Arbitrary position permutation: cells re-anchor to their new
    (column, row) identity pairs. Used by tests and by cut/paste."""
    grid = dict(coords.grid)
    moves: dict[tuple[ColId, RowId], CellId] = {}
    for (c0, r0), (c1, r1) in mapping.items():
        cell_id = coords.cell_at(c0, r0)
        if cell_id is None:
            continue
        del grid[(coords.columns[c0][0], coords.rows[r0])]
        moves[(coords.columns[c1][0], coords.rows[r1])] = cell_id
    grid.update(moves)
    return CoordinateSystem(columns=coords.columns, rows=coords.rows, grid=grid)


# ---------------------------------------------------------------------------
# Statement application
# ---------------------------------------------------------------------------


def region_from_spec(state: SheetState, spec: RegionSpec) -> Region:
    coords = state.coords
    cols = None
    if spec.col_start is not None:
        cols = frozenset(coords.columns[i][0]
                         for i in range(spec.col_start, min(spec.col_end + 1, coords.n_cols)))
    rows = None
    if spec.row_start is not None:
        rows = frozenset(coords.rows[i]
                         for i in range(spec.row_start, min(spec.row_end + 1, coords.n_rows)))
    return Region(columns=cols, rows=rows, predicate=spec.predicate)


def _prepare_cell_formula(raw: Formula, host: tuple[int, int], old: Formula) -> Formula:
    """Bind statement-level formula text to a concrete target cell: surface
    references become host deltas and VALUE splices in the cell's previous
    formula (keeping its provenance live, e.g. for typecasts)."""
    bound = bind(raw, host)

    def splice(node: Formula) -> Optional[Formula]:
        if isinstance(node, SelfValue):
            return old
        return None

    return map_formula(bound, splice)


def _matching_rows(state: SheetState, where: Optional[Formula],
                   diagnostics: Optional[list[Diagnostic]],
                   host_col: int = 0) -> list[int]:
    if where is None:
        return list(range(state.coords.n_rows))
    out = []
    for ri in range(state.coords.n_rows):
        verdict = engine.evaluate(where, state, (host_col, ri))
        if is_true(verdict):
            out.append(ri)
        elif isinstance(verdict, engine.ErrorValue) and diagnostics is not None:
            diagnostics.append(Diagnostic(
                Severity.WARNING, f"WHERE errored on row {ri + 1}: {verdict!r}"))
    return out


def apply(state: SheetState, stmt: Statement, policy: StabilityPolicy = DEFAULT_POLICY,
          diagnostics: Optional[list[Diagnostic]] = None) -> SheetState:
    """Apply one statement, returning the next valid snapshot."""
    if isinstance(stmt, Update):
        return _apply_update(state, stmt, diagnostics)
    if isinstance(stmt, AddColumn):
        return _apply_add_column(state, stmt, policy)
    if isinstance(stmt, RemoveColumn):
        return _apply_remove_column(state, stmt, policy)
    if isinstance(stmt, InsertRow):
        return _apply_insert_row(state, stmt, policy)
    if isinstance(stmt, Delete):
        return _apply_delete(state, stmt, policy, diagnostics)
    if isinstance(stmt, ReorderColumns):
        return _apply_reorder_columns(state, stmt, policy)
    if isinstance(stmt, ReorderRows):
        return _apply_reorder_rows(state, stmt, policy)
    if isinstance(stmt, SortRows):
        return _apply_sort(state, stmt, policy)
    raise ExecutorError(f"cannot apply {stmt!r}")


def apply_script(script: lang.Script, fixtures: Optional[FixtureMap] = None,
                 policy: StabilityPolicy = DEFAULT_POLICY,
                 diagnostics: Optional[list[Diagnostic]] = None,
                 base: Optional[SheetState] = None) -> SheetState:
    """Replay a whole script from its source (or from ``base`` when the
    source is a page reference resolved by the caller)."""
    if base is None:
        state = load_source(script.source, fixtures, diagnostics)
    else:
        state = base
    for stmt in script.statements:
        state = apply(state, stmt, policy, diagnostics)
    return state


def _apply_update(state: SheetState, stmt: Update,
                  diagnostics: Optional[list[Diagnostic]]) -> SheetState:
    targets: list[CellId] = []
    if isinstance(stmt.target, str):
        col_id = state.coords.col_by_name(stmt.target)
        if col_id is None:
            raise UnknownColumnError(f"no column named {stmt.target!r}")
        ci = state.coords.col_index(col_id)
        for ri in _matching_rows(state, stmt.where, diagnostics, host_col=ci or 0):
            cell_id = state.coords.cell_at(ci, ri)
            if cell_id is not None:
                targets.append(cell_id)
    else:
        region = region_from_spec(state, stmt.target)
        targets = sorted(region_resolve(state, region, diagnostics))
        if stmt.where is not None:
            keep = []
            for cell_id in targets:
                host = state.coords.position_of(cell_id)
                if is_true(engine.evaluate(stmt.where, state, host)):
                    keep.append(cell_id)
            targets = keep
    new_cells = dict(state.cells)
    for cell_id in targets:
        host = state.coords.position_of(cell_id)
        old = state.cells[cell_id]
        formula = _prepare_cell_formula(stmt.formula, host, old.formula)
        new_cells[cell_id] = replace(old, formula=formula)
    out = replace(state, cells=new_cells)
    return recompute(out, targets)


def _apply_add_column(state: SheetState, stmt: AddColumn,
                      policy: StabilityPolicy) -> SheetState:
    coords = state.coords
    if coords.col_by_name(stmt.name) is not None:
        raise DuplicateColumnError(f"column {stmt.name!r} already exists")
    at = coords.n_cols if stmt.at is None else max(0, min(stmt.at, coords.n_cols))
    alloc = state.allocator()
    col_id = alloc.col()
    columns = coords.columns[:at] + ((col_id, stmt.name),) + coords.columns[at:]
    grid = dict(coords.grid)
    created: dict[CellId, Cell] = {}
    for ri, row_id in enumerate(coords.rows):
        cell_id = alloc.cell()
        grid[(col_id, row_id)] = cell_id
        if stmt.derive is None:
            created[cell_id] = Cell(cell_id, Lit(None), None)
        else:
            formula = _prepare_cell_formula(stmt.derive, (at, ri), Lit(None))
            created[cell_id] = Cell(cell_id, formula, None)
    new_coords = CoordinateSystem(columns=columns, rows=coords.rows, grid=grid)
    return apply_transform(state, new_coords, policy.insert, created=created,
                           next_id=alloc.next_value)


def _apply_remove_column(state: SheetState, stmt: RemoveColumn,
                         policy: StabilityPolicy) -> SheetState:
    coords = state.coords
    col_id = coords.col_by_name(stmt.name)
    if col_id is None:
        raise UnknownColumnError(f"no column named {stmt.name!r}")
    dropped = frozenset(cid for (c, _), cid in coords.grid.items() if c == col_id)
    columns = tuple(c for c in coords.columns if c[0] != col_id)
    grid = {k: v for k, v in coords.grid.items() if k[0] != col_id}
    new_coords = CoordinateSystem(columns=columns, rows=coords.rows, grid=grid)
    return apply_transform(state, new_coords, policy.delete, dropped=dropped)


def _apply_insert_row(state: SheetState, stmt: InsertRow,
                      policy: StabilityPolicy) -> SheetState:
    coords = state.coords
    by_name = dict(stmt.assignments)
    for name in by_name:
        if coords.col_by_name(name) is None:
            raise UnknownColumnError(f"no column named {name!r}")
    at = coords.n_rows if stmt.at is None else max(0, min(stmt.at, coords.n_rows))
    alloc = state.allocator()
    row_id = alloc.row()
    rows = coords.rows[:at] + (row_id,) + coords.rows[at:]
    grid = dict(coords.grid)
    created: dict[CellId, Cell] = {}
    for ci, (col_id, name) in enumerate(coords.columns):
        cell_id = alloc.cell()
        grid[(col_id, row_id)] = cell_id
        raw = by_name.get(name)
        if raw is None:
            created[cell_id] = Cell(cell_id, Lit(None), None)
        else:
            formula = _prepare_cell_formula(raw, (ci, at), Lit(None))
            created[cell_id] = Cell(cell_id, formula, None)
    new_coords = CoordinateSystem(columns=coords.columns, rows=rows, grid=grid)
    return apply_transform(state, new_coords, policy.insert, created=created,
                           next_id=alloc.next_value)


def _apply_delete(state: SheetState, stmt: Delete, policy: StabilityPolicy,
                  diagnostics: Optional[list[Diagnostic]]) -> SheetState:
    coords = state.coords
    doomed_rows = {coords.rows[ri] for ri in _matching_rows(state, stmt.where, diagnostics)}
    if not doomed_rows:
        return state
    dropped = frozenset(cid for (_, r), cid in coords.grid.items() if r in doomed_rows)
    rows = tuple(r for r in coords.rows if r not in doomed_rows)
    grid = {k: v for k, v in coords.grid.items() if k[1] not in doomed_rows}
    new_coords = CoordinateSystem(columns=coords.columns, rows=rows, grid=grid)
    return apply_transform(state, new_coords, policy.delete, dropped=dropped)


def _apply_reorder_columns(state: SheetState, stmt: ReorderColumns,
                           policy: StabilityPolicy) -> SheetState:
    coords = state.coords
    by_name = {name: (col_id, name) for col_id, name in coords.columns}
    for name in stmt.names:
        if name not in by_name:
            raise UnknownColumnError(f"no column named {name!r}")
    if len(set(stmt.names)) != len(stmt.names) or len(stmt.names) != coords.n_cols:
        raise ModelError("REORDER COLUMNS must list every column exactly once")
    columns = tuple(by_name[name] for name in stmt.names)
    new_coords = CoordinateSystem(columns=columns, rows=coords.rows, grid=coords.grid)
    return apply_transform(state, new_coords, policy.reorder)


def _apply_reorder_rows(state: SheetState, stmt: ReorderRows,
                        policy: StabilityPolicy) -> SheetState:
    coords = state.coords
    index_of = {r.n: i for i, r in enumerate(coords.rows)}
    for tag in stmt.row_tags:
        if tag not in index_of:
            raise UnknownRowError(f"no row with id {tag}")
    if len(set(stmt.row_tags)) != len(stmt.row_tags):
        raise UnknownRowError("duplicate row ids in REORDER ROWS")
    # listed rows are reassigned, in the given order, to the ascending set
    # of positions they jointly occupy; everything else stays put
    positions = sorted(index_of[tag] for tag in stmt.row_tags)
    rows = list(coords.rows)
    for pos, tag in zip(positions, stmt.row_tags):
        rows[pos] = RowId(tag)
    new_coords = permuted_rows_coords(coords, rows)
    return apply_transform(state, new_coords, policy.reorder)


def _apply_sort(state: SheetState, stmt: SortRows, policy: StabilityPolicy) -> SheetState:
    coords = state.coords
    key_cols: list[int] = []
    for key in stmt.keys:
        col_id = coords.col_by_name(key.column)
        if col_id is None:
            raise UnknownColumnError(f"no column named {key.column!r}")
        key_cols.append(coords.col_index(col_id))
    directions = [k.descending for k in stmt.keys]

    def row_key(ri: int):
        vals = [state.value_at(ci, ri) for ci in key_cols]
        return sort_rows_key(vals, directions)

    order = sorted(range(coords.n_rows), key=row_key)  # stable within ties
    rows = [coords.rows[i] for i in order]
    new_coords = permuted_rows_coords(coords, rows)
    return apply_transform(state, new_coords, policy.sort)


def cut_paste(state: SheetState, src: "Rect", dst: tuple[int, int],
              mode: Optional[StabilityMode] = None,
              policy: StabilityPolicy = DEFAULT_POLICY) -> SheetState:
    """Kernel-level move of a rectangle to a new top-left anchor: the cells
    themselves travel (identity included); displaced target cells are
    dropped and the vacated source positions get fresh empty cells.

    This is how a move behaves in the data model; the script language has
    no MOVE form, so the gesture layer records cut/paste as updates
    instead (see gesture_to_statements).
    """
    mode = mode or policy.cut_paste
    coords = state.coords
    dc, dr = dst[0] - src.c0, dst[1] - src.r0
    src_positions = [(c, r) for c in range(src.c0, src.c1 + 1)
                     for r in range(src.r0, src.r1 + 1)]
    for c, r in src_positions:
        if not (0 <= c + dc < coords.n_cols and 0 <= r + dr < coords.n_rows):
            raise ExecutorError("cut/paste target extends beyond the grid")
    dst_positions = [(c + dc, r + dr) for c, r in src_positions]
    displaced = frozenset(
        cid for pos in dst_positions if pos not in src_positions
        and (cid := coords.cell_at(*pos)) is not None)
    grid = {k: v for k, v in coords.grid.items() if v not in displaced}
    anchor_of = {}
    for (c, r) in src_positions:
        cid = coords.cell_at(c, r)
        if cid is not None:
            anchor_of[cid] = (coords.columns[c + dc][0], coords.rows[r + dr])
            del grid[(coords.columns[c][0], coords.rows[r])]
    for cid, anchor in anchor_of.items():
        grid[anchor] = cid
    alloc = state.allocator()
    created: dict[CellId, Cell] = {}
    vacated = [p for p in src_positions if p not in dst_positions]
    for c, r in vacated:
        cell_id = alloc.cell()
        grid[(coords.columns[c][0], coords.rows[r])] = cell_id
        created[cell_id] = Cell(cell_id, Lit(None), None)
    new_coords = CoordinateSystem(columns=coords.columns, rows=coords.rows, grid=grid)
    return apply_transform(state, new_coords, mode, dropped=displaced,
                           created=created, next_id=alloc.next_value)


# ---------------------------------------------------------------------------
# Gestures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rect:
    """Inclusive rectangle of grid positions."""

    c0: int
    r0: int
    c1: int
    r1: int

    @property
    def width(self) -> int:
        return self.c1 - self.c0 + 1

    @property
    def height(self) -> int:
        return self.r1 - self.r0 + 1


@dataclass(frozen=True)
class EditCell:
    col: int
    row: int
    text: str


@dataclass(frozen=True)
class TypecastRegion:
    region: RegionSpec
    type: str  # int | float | string | bool


@dataclass(frozen=True)
class CopyPaste:
    src: Rect
    dst: Rect


@dataclass(frozen=True)
class FillRange:
    src: Rect
    dst: Rect


@dataclass(frozen=True)
class CutPasteGesture:
    src: Rect
    to: tuple[int, int]


@dataclass(frozen=True)
class DragRows:
    row_tags: tuple[int, ...]
    to_index: int


@dataclass(frozen=True)
class DragColumns:
    names: tuple[str, ...]
    to_index: int


@dataclass(frozen=True)
class InsertRowAt:
    index: int
    before: bool = True


@dataclass(frozen=True)
class InsertColumnAt:
    index: int
    before: bool = True
    name: Optional[str] = None


@dataclass(frozen=True)
class DeleteRows:
    row_tags: tuple[int, ...]


@dataclass(frozen=True)
class SortGesture:
    keys: tuple[SortKey, ...]


@dataclass(frozen=True)
class FilterGesture:
    predicate: str  # formula text over the row


Gesture = Union[EditCell, TypecastRegion, CopyPaste, FillRange, CutPasteGesture,
                DragRows, DragColumns, InsertRowAt, InsertColumnAt, DeleteRows,
                SortGesture, FilterGesture]

_gesture_groups = itertools.count(1)


def next_gesture_group() -> int:
    return next(_gesture_groups)


def _with_group(stmts: list[Statement], group: int) -> list[Statement]:
    return [replace(s, gesture_group=group) for s in stmts]


def gesture_to_statements(g: Gesture, state: SheetState,
                          group: Optional[int] = None,
                          policy: StabilityPolicy = DEFAULT_POLICY) -> list[Statement]:
    """Translate a UI gesture into the statements that realize it. All
    emitted statements share one gesture-group id."""
    group = group if group is not None else next_gesture_group()
    coords = state.coords
    if isinstance(g, EditCell):
        cell = state.cell_at(g.col, g.row)
        if cell is None:
            raise EmptyTargetError(f"no cell at ({g.col}, {g.row})")
        name = coords.columns[g.col][1]
        tag = coords.rows[g.row].n
        formula = unbind(parse_formula(g.text, host=(g.col, g.row)), (g.col, g.row))
        stmt = Update(target=name, formula=formula,
                      where=Binary("=", RowIdRef(), Lit(tag)))
        return _with_group([stmt], group)
    if isinstance(g, TypecastRegion):
        if not region_resolve(state, region_from_spec(state, g.region)):
            raise EmptyTargetError("typecast region resolves to no cells")
        stmt = Update(target=g.region, formula=Cast(SelfValue(), g.type))
        return _with_group([stmt], group)
    if isinstance(g, (CopyPaste, FillRange)):
        return _with_group(_paste_statements(g.src, g.dst, state), group)
    if isinstance(g, CutPasteGesture):
        return _with_group(_cut_statements(g.src, g.to, state, policy), group)
    if isinstance(g, DragRows):
        new_rows = _dragged_row_order(coords, g.row_tags, g.to_index)
        diff = [i for i, (a, b) in enumerate(zip(coords.rows, new_rows)) if a != b]
        if not diff:
            return []
        stmt = ReorderRows(tuple(new_rows[i].n for i in diff))
        return _with_group([stmt], group)
    if isinstance(g, DragColumns):
        order = [n for _, n in coords.columns if n not in g.names]
        at = min(g.to_index, len(order))
        order[at:at] = list(g.names)
        if order == [n for _, n in coords.columns]:
            return []
        return _with_group([ReorderColumns(tuple(order))], group)
    if isinstance(g, InsertRowAt):
        at = g.index if g.before else g.index + 1
        return _with_group([InsertRow((), at=at)], group)
    if isinstance(g, InsertColumnAt):
        at = g.index if g.before else g.index + 1
        name = g.name or _fresh_column_name(state)
        return _with_group([AddColumn(name, at=at)], group)
    if isinstance(g, DeleteRows):
        if not g.row_tags:
            raise EmptyTargetError("no rows to delete")
        if len(g.row_tags) == 1:
            where: Formula = Binary("=", RowIdRef(), Lit(g.row_tags[0]))
        else:
            where = InList(RowIdRef(), tuple(Lit(t) for t in g.row_tags))
        return _with_group([Delete(where)], group)
    if isinstance(g, SortGesture):
        return _with_group([SortRows(g.keys)], group)
    if isinstance(g, FilterGesture):
        pred = parse_expression(g.predicate, allow_unbound=True)
        return _with_group([Delete(Unary("NOT", pred))], group)
    raise ExecutorError(f"unknown gesture {g!r}")


def _fresh_column_name(state: SheetState) -> str:
    taken = set(state.column_names)
    i = state.coords.n_cols
    while column_letter(i) in taken:
        i += 1
    return column_letter(i)


def _singleton_region(col: int, row: int) -> RegionSpec:
    return RegionSpec(col_start=col, col_end=col, row_start=row, row_end=row)


def _paste_statements(src: Rect, dst: Rect, state: SheetState) -> list[Statement]:
    """Copy/paste: the source's formulas are replicated over the target by
    adapt&apply, tiling the source block when the target is larger."""
    stmts: list[Statement] = []
    for j in range(dst.height):
        for i in range(dst.width):
            sc = src.c0 + (i % src.width)
            sr = src.r0 + (j % src.height)
            source_cell = state.cell_at(sc, sr)
            if source_cell is None:
                raise EmptyTargetError(f"paste source position ({sc}, {sr}) is empty")
            tc, tr = dst.c0 + i, dst.r0 + j
            offset = (tc - sc, tr - sr)
            shaped = engine.adapt(source_cell.formula, offset)
            stmts.append(Update(target=_singleton_region(tc, tr),
                                formula=unbind(shaped, (tc, tr))))
    if not stmts:
        raise EmptyTargetError("empty paste target")
    return stmts


def _cut_statements(src: Rect, to: tuple[int, int], state: SheetState,
                    policy: StabilityPolicy) -> list[Statement]:
    """Cut/paste as statements: the grammar has no MOVE form, so the move
    is recorded as target updates plus source clears. Under the default
    value-stable policy the pasted text keeps naming the original target
    positions; under formula-stable it is re-read relative to the
    destination (adapt), matching the Numbers behavior."""
    stmts: list[Statement] = []
    dc, dr = to[0] - src.c0, to[1] - src.r0
    dst_positions = set()
    for c in range(src.c0, src.c1 + 1):
        for r in range(src.r0, src.r1 + 1):
            cell = state.cell_at(c, r)
            if cell is None:
                raise EmptyTargetError(f"cut source position ({c}, {r}) is empty")
            tc, tr = c + dc, r + dr
            dst_positions.add((tc, tr))
            if policy.cut_paste == StabilityMode.VALUE_STABLE:
                formula = unbind(cell.formula, (c, r))  # keeps old targets
            else:
                formula = unbind(cell.formula, (tc, tr))  # re-read at target
            stmts.append(Update(target=_singleton_region(tc, tr), formula=formula))
    for c in range(src.c0, src.c1 + 1):
        for r in range(src.r0, src.r1 + 1):
            if (c, r) not in dst_positions:
                stmts.append(Update(target=_singleton_region(c, r), formula=Lit(None)))
    return stmts


def _dragged_row_order(coords: CoordinateSystem, tags: Sequence[int],
                       to_index: int) -> list[RowId]:
    index_of = {r.n: i for i, r in enumerate(coords.rows)}
    for tag in tags:
        if tag not in index_of:
            raise UnknownRowError(f"no row with id {tag}")
    moving = sorted(tags, key=lambda t: index_of[t])
    rest = [r for r in coords.rows if r.n not in set(tags)]
    at = max(0, min(to_index, len(rest)))
    return rest[:at] + [RowId(t) for t in moving] + rest[at:]
