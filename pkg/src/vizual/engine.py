"""Formula semantics over sheet snapshots: evaluation, dependency
analysis, recomputation, cycle handling, the validity judgment, region
resolution, and the reference rewriting that keeps structural edits
value-stable.

A formula evaluates against the *stored* values of the cells it
references; ``recompute`` is what restores global consistency after a
change by re-evaluating downstream cells in dependency order. Cells on a
reference cycle get a CYCLE error value (fixpoint semantics are out),
and anything reading them inherits the error.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional

import networkx as nx

from . import values
from .formula import (
    Agg,
    AggFunc,
    Between,
    Binary,
    Cast,
    CellRef,
    ColumnRef,
    DanglingRef,
    ExplicitRef,
    Formula,
    If,
    InList,
    Lit,
    RangeRef,
    RowIdRef,
    SelfValue,
    SurfaceRef,
    Unary,
    ref_target,
    transform as map_formula,
)
from .model import (
    Cell,
    CellId,
    CoordinateSystem,
    Diagnostic,
    ErrorKind,
    ErrorValue,
    Region,
    Severity,
    SheetState,
    Value,
)

_DANGLING = ErrorValue(ErrorKind.REF_DANGLING)


class StabilityMode(Enum):
    """How a structural action treats existing formulas (see rebase)."""

    VALUE_STABLE = "VALUE_STABLE"
    FORMULA_STABLE = "FORMULA_STABLE"


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(f: Formula, state: SheetState, host: Optional[tuple[int, int]] = None) -> Value:
    """Evaluate ``f`` as hosted at grid position ``host``.

    Never raises on data problems: unresolvable references, type
    mismatches, and division by zero come back as error values.
    """
    if isinstance(f, Lit):
        return f.value
    if isinstance(f, (CellRef, SurfaceRef)):
        target = ref_target(f, host)
        if target is None:
            return ErrorValue(ErrorKind.REF_DANGLING, "relative reference with no host")
        cell = state.cell_at(*target)
        return cell.value if cell is not None else _DANGLING
    if isinstance(f, ExplicitRef):
        cell = state.cells.get(f.cell)
        return cell.value if cell is not None else ErrorValue(
            ErrorKind.REF_DANGLING, f"no cell {f.cell}")
    if isinstance(f, DanglingRef):
        return ErrorValue(ErrorKind.REF_DANGLING, f"deleted target {f.tag}")
    if isinstance(f, ColumnRef):
        cell = _column_cell(f.name, state, host)
        return cell.value if cell is not None else ErrorValue(
            ErrorKind.REF_DANGLING, f"no column {f.name!r} on this row")
    if isinstance(f, RowIdRef):
        if host is None or not (0 <= host[1] < state.coords.n_rows):
            return ErrorValue(ErrorKind.REF_DANGLING, "ROWID outside the grid")
        return state.coords.rows[host[1]].n
    if isinstance(f, SelfValue):
        if host is None:
            return ErrorValue(ErrorKind.REF_DANGLING, "VALUE outside a cell context")
        cell = state.cell_at(*host)
        return cell.value if cell is not None else _DANGLING
    if isinstance(f, RangeRef):
        return values.type_error("a bare range is not a value")
    if isinstance(f, Agg):
        return _aggregate(f, state, host)
    if isinstance(f, Unary):
        v = evaluate(f.operand, state, host)
        return values.negate(v) if f.op == "-" else values.logical_not(v)
    if isinstance(f, Binary):
        left = evaluate(f.left, state, host)
        right = evaluate(f.right, state, host)
        if f.op in ("AND", "OR"):
            return values.logical(f.op, left, right)
        if f.op in ("+", "-", "*", "/"):
            return values.arith(f.op, left, right)
        if f.op == "&":
            return values.concat(left, right)
        return values.compare(f.op, left, right)
    if isinstance(f, If):
        cond = evaluate(f.cond, state, host)
        if isinstance(cond, ErrorValue):
            return cond
        if cond is not None and not isinstance(cond, bool):
            return values.type_error("IF condition must be boolean")
        # a null condition is not true: fall to the else branch, exactly
        # like the CASE WHEN this compiles to
        return evaluate(f.then if cond is True else f.orelse, state, host)
    if isinstance(f, Cast):
        return values.cast(evaluate(f.operand, state, host), f.type)
    if isinstance(f, Between):
        v = evaluate(f.operand, state, host)
        lo = evaluate(f.low, state, host)
        hi = evaluate(f.high, state, host)
        return values.logical("AND", values.compare(">=", v, lo), values.compare("<=", v, hi))
    if isinstance(f, InList):
        v = evaluate(f.operand, state, host)
        if isinstance(v, ErrorValue):
            return v
        saw_null = False
        for item in f.items:
            res = values.compare("=", v, evaluate(item, state, host))
            if isinstance(res, ErrorValue):
                return res
            if res is True:
                return True
            if res is None:
                saw_null = True
        return None if saw_null else False
    raise TypeError(f"cannot evaluate {f!r}")


def _column_cell(name: str, state: SheetState, host: Optional[tuple[int, int]]) -> Optional[Cell]:
    col_id = state.coords.col_by_name(name)
    if col_id is None or host is None or not (0 <= host[1] < state.coords.n_rows):
        return None
    row_id = state.coords.rows[host[1]]
    cell_id = state.coords.cell_by_anchor(col_id, row_id)
    return state.cells[cell_id] if cell_id is not None else None


def _range_positions(rng: RangeRef, state: SheetState,
                     host: Optional[tuple[int, int]]) -> Optional[list[tuple[int, int]]]:
    """Row-major positions covered by a range; None if a corner dangles."""

    def corner_pos(c) -> Optional[tuple[int, int]]:
        if isinstance(c, (CellRef, SurfaceRef)):
            return ref_target(c, host)
        if isinstance(c, ExplicitRef):
            return state.coords.position_of(c.cell)
        return None

    a = corner_pos(rng.start)
    b = corner_pos(rng.end)
    if a is None or b is None:
        return None
    c0, c1 = sorted((a[0], b[0]))
    r0, r1 = sorted((a[1], b[1]))
    if c0 < 0 or r0 < 0 or c1 >= state.coords.n_cols or r1 >= state.coords.n_rows:
        return None
    return [(c, r) for r in range(r0, r1 + 1) for c in range(c0, c1 + 1)]


def _aggregate(agg: Agg, state: SheetState, host: Optional[tuple[int, int]]) -> Value:
    positions = _range_positions(agg.range, state, host)
    if positions is None:
        return ErrorValue(ErrorKind.REF_DANGLING, "aggregate range off the grid")
    vals: list[Value] = []
    for pos in positions:
        cell = state.cell_at(*pos)
        v = cell.value if cell is not None else None
        if isinstance(v, ErrorValue):
            return v
        if v is not None:
            vals.append(v)
    if agg.func == AggFunc.COUNT:
        return len(vals)
    if not vals:
        return None
    if agg.func in (AggFunc.SUM, AggFunc.AVG):
        total: Value = 0
        for v in vals:
            total = values.arith("+", total, v)
            if isinstance(total, ErrorValue):
                return total
        if agg.func == AggFunc.SUM:
            return total
        return values.arith("/", total, len(vals))
    best = vals[0]
    for v in vals[1:]:
        cmp = values.compare("<" if agg.func == AggFunc.MIN else ">", v, best)
        if isinstance(cmp, ErrorValue):
            return cmp
        if cmp is True:
            best = v
    return best


# ---------------------------------------------------------------------------
# Dependencies
# ---------------------------------------------------------------------------


def dependencies(f: Formula, state: SheetState,
                 host: Optional[tuple[int, int]] = None) -> set[CellId]:
    """Cells whose value can feed into ``f`` (syntactic, ranges expanded)."""
    deps, _ = dependency_info(f, state, host)
    return deps


def dependency_info(f: Formula, state: SheetState,
                    host: Optional[tuple[int, int]] = None) -> tuple[set[CellId], list[str]]:
    """Dependencies plus a report of references that resolve nowhere."""
    deps: set[CellId] = set()
    dangling: list[str] = []

    def visit(node: Formula) -> None:
        if isinstance(node, (CellRef, SurfaceRef)):
            target = ref_target(node, host)
            cell = state.cell_at(*target) if target is not None else None
            if cell is None:
                dangling.append(f"grid reference to {target}")
            else:
                deps.add(cell.id)
        elif isinstance(node, ExplicitRef):
            if node.cell in state.cells:
                deps.add(node.cell)
            else:
                dangling.append(f"explicit reference to {node.cell}")
        elif isinstance(node, DanglingRef):
            dangling.append(f"dangling marker (was {node.tag})")
        elif isinstance(node, ColumnRef):
            cell = _column_cell(node.name, state, host)
            if cell is None:
                dangling.append(f"column reference to {node.name!r}")
            else:
                deps.add(cell.id)
        elif isinstance(node, SelfValue):
            if host is not None:
                cell = state.cell_at(*host)
                if cell is not None:
                    deps.add(cell.id)
        elif isinstance(node, RangeRef):
            positions = _range_positions(node, state, host)
            if positions is None:
                dangling.append("range with unresolved corner")
            else:
                for pos in positions:
                    cell = state.cell_at(*pos)
                    if cell is not None:
                        deps.add(cell.id)
            return  # corners already covered
        for child in _dep_children(node):
            visit(child)

    visit(f)
    return deps, dangling


def _dep_children(f: Formula) -> tuple[Formula, ...]:
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
    if isinstance(f, Agg):
        return (f.range,)
    return ()


def dependency_graph(state: SheetState) -> dict[CellId, set[CellId]]:
    """cell id -> ids it reads from."""
    graph: dict[CellId, set[CellId]] = {}
    for cell_id, cell in state.cells.items():
        host = state.coords.position_of(cell_id)
        graph[cell_id] = dependencies(cell.formula, state, host)
    return graph


# ---------------------------------------------------------------------------
# Cycle detection
# ---------------------------------------------------------------------------


def detect_cycles(state: SheetState) -> list[list[CellId]]:
    """Every elementary cycle in the dependency graph, canonically ordered
    (rotated to start at the smallest id; sorted by length then ids)."""
    graph = nx.DiGraph()
    graph.add_nodes_from(state.cells.keys())
    for cell_id, deps in dependency_graph(state).items():
        for dep in deps:
            graph.add_edge(cell_id, dep)
    cycles: list[list[CellId]] = []
    for cyc in nx.simple_cycles(graph):
        k = min(range(len(cyc)), key=lambda i: cyc[i])
        cycles.append(cyc[k:] + cyc[:k])
    cycles.sort(key=lambda c: (len(c), c))
    return cycles


def _cyclic_cells(graph: dict[CellId, set[CellId]]) -> set[CellId]:
    """Cells lying on at least one cycle: members of non-trivial strongly
    connected components, plus self-loops."""
    g = nx.DiGraph()
    g.add_nodes_from(graph.keys())
    for src, deps in graph.items():
        for dep in deps:
            if dep in graph:
                g.add_edge(src, dep)
    out: set[CellId] = set()
    for comp in nx.strongly_connected_components(g):
        if len(comp) > 1:
            out |= comp
    for src, deps in graph.items():
        if src in deps:
            out.add(src)
    return out


# ---------------------------------------------------------------------------
# Recomputation
# ---------------------------------------------------------------------------


def recompute(state: SheetState, dirty: Iterable[CellId]) -> SheetState:
    """Re-evaluate every cell transitively depending on ``dirty``, in
    dependency order. Cells on cycles get CYCLE values; their dependents
    inherit the error by ordinary propagation."""
    dirty_set = {d for d in dirty if d in state.cells}
    if not dirty_set:
        return state
    graph = dependency_graph(state)
    dependents: dict[CellId, set[CellId]] = {cid: set() for cid in graph}
    for cid, deps in graph.items():
        for dep in deps:
            if dep in dependents:
                dependents[dep].add(cid)
    closure: set[CellId] = set()
    frontier = list(dirty_set)
    while frontier:
        cid = frontier.pop()
        if cid in closure:
            continue
        closure.add(cid)
        frontier.extend(dependents[cid])

    cyclic = _cyclic_cells(graph) & closure
    new_cells = dict(state.cells)
    for cid in cyclic:
        cell = new_cells[cid]
        new_cells[cid] = replace(cell, value=ErrorValue(
            ErrorKind.CYCLE, "reference cycle"))

    # topological pass over the acyclic remainder of the closure; scratch
    # shares the mutable dict so freshly computed values are visible
    pending = {cid: len((graph[cid] - cyclic) & closure) for cid in closure - cyclic}
    ready = [cid for cid, n in pending.items() if n == 0]
    scratch = replace(state, cells=new_cells)
    done: set[CellId] = set(cyclic)
    while ready:
        cid = ready.pop()
        cell = new_cells[cid]
        host = state.coords.position_of(cid)
        value = evaluate(cell.formula, scratch, host)
        new_cells[cid] = replace(cell, value=value)
        done.add(cid)
        for dep in dependents[cid]:
            if dep in pending and dep not in done:
                pending[dep] -= 1
                if pending[dep] == 0:
                    ready.append(dep)
    return replace(state, cells=dict(new_cells))


def recompute_all(state: SheetState) -> SheetState:
    return recompute(state, set(state.cells.keys()))


# ---------------------------------------------------------------------------
# Validity
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Violation:
    cell: CellId
    expected: Value
    stored: Value


def validate_state(state: SheetState) -> list[Violation]:
    """The validity judgment: every cell's formula must reduce to the
    cell's stored value. Expected values come from a fresh full
    re-evaluation, so a single corrupted cell reports once rather than
    dragging every downstream cell into the list. Cells on reference
    cycles are expected to hold CYCLE (no fixpoint semantics)."""
    fresh = recompute_all(state)
    violations: list[Violation] = []
    for cell_id in sorted(state.cells.keys()):
        expected = fresh.cells[cell_id].value
        stored = state.cells[cell_id].value
        if not _values_agree(expected, stored):
            violations.append(Violation(cell_id, expected, stored))
    return violations


def _values_agree(a: Value, b: Value) -> bool:
    if isinstance(a, ErrorValue) or isinstance(b, ErrorValue):
        return isinstance(a, ErrorValue) and isinstance(b, ErrorValue) and a.kind == b.kind
    if isinstance(a, bool) != isinstance(b, bool):
        return False
    return a == b


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------


def region_resolve(state: SheetState, region: Region,
                   diagnostics: Optional[list[Diagnostic]] = None) -> set[CellId]:
    """Cells inside the region's column and row sets whose predicate holds.

    A predicate that errors on some candidate excludes that cell and
    records a diagnostic; the rest of the region still resolves.
    """
    out: set[CellId] = set()
    for (col_id, row_id), cell_id in state.coords.grid.items():
        if not region.admits_anchor(col_id, row_id):
            continue
        if region.predicate is None:
            out.add(cell_id)
            continue
        host = state.coords.position_of(cell_id)
        verdict = evaluate(region.predicate, state, host)
        if isinstance(verdict, ErrorValue):
            if diagnostics is not None:
                diagnostics.append(Diagnostic(
                    Severity.WARNING,
                    f"region predicate errored on {cell_id}: {verdict!r}; cell excluded"))
            continue
        if values.is_true(verdict):
            out.add(cell_id)
    return out


# ---------------------------------------------------------------------------
# Structural rewriting (value stability)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridTransform:
    """A coordinate change: the grid before, the grid after, and which
    cells did not survive. Position permutations, insertions, and
    deletions are all expressible this way because cells keep their
    identity anchors."""

    old: CoordinateSystem
    new: CoordinateSystem
    dropped: frozenset[CellId] = frozenset()

    def new_position(self, cell_id: CellId) -> Optional[tuple[int, int]]:
        if cell_id in self.dropped:
            return None
        return self.new.position_of(cell_id)

    def map_position(self, pos: tuple[int, int]) -> Optional[tuple[int, int]]:
        cell_id = self.old.cell_at(*pos)
        if cell_id is None:
            return None
        return self.new_position(cell_id)


def identity_transform(coords: CoordinateSystem) -> GridTransform:
    return GridTransform(coords, coords)


def rebase(f: Formula, host: tuple[int, int], transform: GridTransform,
           mode: StabilityMode) -> Formula:
    """Rewrite ``f`` (hosted at ``host`` under the old grid) for the new
    grid.

    VALUE_STABLE resolves every reference to the cell it denoted and
    re-expresses it so it still denotes that cell afterwards, keeping the
    original relative/absolute surface style wherever the style can still
    express the target. References whose target is gone become dangling
    markers. FORMULA_STABLE returns the formula untouched.
    """
    if mode == StabilityMode.FORMULA_STABLE:
        return f
    old, new = transform.old, transform.new
    host_cell = old.cell_at(*host)
    new_host = transform.new_position(host_cell) if host_cell is not None else host

    def rewrite(node: Formula) -> Optional[Formula]:
        if isinstance(node, (CellRef, SurfaceRef)):
            target = ref_target(node, host)
            target_cell = old.cell_at(*target) if target is not None else None
            if target_cell is None:
                return DanglingRef(None)
            new_target = transform.new_position(target_cell)
            if new_target is None or new_host is None:
                return DanglingRef(target_cell.n)
            abs_col = node.abs_col
            abs_row = node.abs_row
            return CellRef(
                col=new_target[0] if abs_col else new_target[0] - new_host[0],
                row=new_target[1] if abs_row else new_target[1] - new_host[1],
                abs_col=abs_col,
                abs_row=abs_row,
            )
        if isinstance(node, ExplicitRef):
            if node.cell in transform.dropped:
                return DanglingRef(node.cell.n)
            return None
        if isinstance(node, ColumnRef):
            col_id = old.col_by_name(node.name)
            if col_id is None or not (0 <= host[1] < old.n_rows):
                return None  # already dangling; leave as written
            target_cell = old.cell_by_anchor(col_id, old.rows[host[1]])
            if target_cell is None:
                return None
            new_target = transform.new_position(target_cell)
            if new_target is None or new_host is None:
                return DanglingRef(target_cell.n)
            new_col_name = new.columns[new_target[0]][1]
            if new_target[1] == new_host[1]:
                return ColumnRef(new_col_name)
            # target left the host's row; fall back to a relative reference
            return CellRef(col=new_target[0] - new_host[0],
                           row=new_target[1] - new_host[1])
        return None

    return map_formula(f, rewrite)


def adapt(f: Formula, offset: tuple[int, int]) -> Formula:
    """Prepare a formula for placement ``offset`` away from its source.

    Relative references are already host-offsets and absolute/explicit
    references are pinned, so the AST itself is unchanged; the shift
    happens when the formula is evaluated (or rendered) at the new host.
    The function exists to make copy/paste intent explicit at call sites.
    """
    del offset
    return f
