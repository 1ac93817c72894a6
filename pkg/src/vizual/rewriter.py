"""Source-to-source script rewriting: readability passes (re-rolling
singleton runs, fusing column definitions) and data-driven generalization
of singleton edits, with an execution-based equivalence oracle.

Readability is measured as (statement count, total AST node count),
compared lexicographically; every readability suggestion strictly reduces
it. REROLL and FUSE suggestions are only surfaced once replaying the
rewritten script reproduces the original output on the page's own
fixtures. GENERALIZE suggestions are different in kind: they deliberately
change behavior on future data (that is their point), so they are never
auto-applied and carry their evidence instead of an equivalence verdict.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from . import executor
from .formula import (
    Between,
    Binary,
    ColumnRef,
    Formula,
    If,
    InList,
    Lit,
    RowIdRef,
    SelfValue,
    render_expr,
    transform as map_formula,
    walk,
)
from .lang import (
    AddColumn,
    Delete,
    RegionSpec,
    RemoveColumn,
    Script,
    Statement,
    Update,
    render_statement,
)
from .model import SheetState, Value, VizualError
from .values import is_numeric


class RewriteError(VizualError):
    code = "REWRITE"


class NoCandidateError(RewriteError):
    code = "NO_CANDIDATE"


class RewriteKind(Enum):
    REROLL = "REROLL"
    FUSE = "FUSE"
    GENERALIZE = "GENERALIZE"


class Verdict(Enum):
    EQUIVALENT = "EQUIVALENT"
    DIFFERENT = "DIFFERENT"
    INCOMPARABLE = "INCOMPARABLE"


@dataclass(frozen=True)
class CheckResult:
    verdict: Verdict
    detail: str = ""


@dataclass(frozen=True)
class RewriteSuggestion:
    """A proposed replacement of some statements by fewer ones.

    ``indices`` are the statement positions (sorted) the replacement
    covers; applying removes them and inserts ``replacement`` where the
    earliest removed statement stood.
    """

    kind: RewriteKind
    indices: tuple[int, ...]
    replacement: tuple[Statement, ...]
    verified: bool = False
    evidence: Mapping[str, object] = field(default_factory=dict)

    @property
    def suggestion_id(self) -> str:
        payload = (",".join(map(str, self.indices)) + "|"
                   + "|".join(render_statement(s) for s in self.replacement))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def apply_suggestion(script: Script, suggestion: RewriteSuggestion) -> Script:
    removed = set(suggestion.indices)
    kept = [s for i, s in enumerate(script.statements) if i not in removed]
    insert_at = sum(1 for i in range(min(removed)) if i not in removed)
    kept[insert_at:insert_at] = list(suggestion.replacement)
    return Script(script.source, tuple(kept))


def readability_cost(script: Script) -> tuple[int, int]:
    """(statement count, total formula AST nodes): the metric suggestions
    must strictly reduce."""
    nodes = 0
    for stmt in script.statements:
        for f in _statement_formulas(stmt):
            nodes += sum(1 for _ in walk(f))
    return len(script.statements), nodes


def _statement_formulas(stmt: Statement) -> list[Formula]:
    out = []
    if isinstance(stmt, Update):
        out.append(stmt.formula)
        if stmt.where is not None:
            out.append(stmt.where)
        if isinstance(stmt.target, RegionSpec) and stmt.target.predicate is not None:
            out.append(stmt.target.predicate)
    elif isinstance(stmt, AddColumn) and stmt.derive is not None:
        out.append(stmt.derive)
    elif isinstance(stmt, Delete):
        out.append(stmt.where)
    elif hasattr(stmt, "assignments"):
        out.extend(f for _, f in stmt.assignments)  # type: ignore[attr-defined]
    return out


# ---------------------------------------------------------------------------
# REROLL: collapse runs differing in a single literal
# ---------------------------------------------------------------------------


def _diff_paths(a: object, b: object, path: tuple = ()) -> list[tuple]:
    """Paths at which two statement/formula trees differ structurally."""
    if type(a) is not type(b):
        return [path]
    if isinstance(a, Lit):
        return [] if a == b else [path]
    if dataclasses.is_dataclass(a) and not isinstance(a, type):
        out: list[tuple] = []
        for f in dataclasses.fields(a):
            if not f.compare:
                continue
            out.extend(_diff_paths(getattr(a, f.name), getattr(b, f.name),
                                   path + (f.name,)))
        return out
    if isinstance(a, tuple):
        if len(a) != len(b):  # type: ignore[arg-type]
            return [path]
        out = []
        for i, (x, y) in enumerate(zip(a, b)):  # type: ignore[arg-type]
            out.extend(_diff_paths(x, y, path + (i,)))
        return out
    return [] if a == b else [path]


def _get_path(node: object, path: tuple) -> object:
    for step in path:
        node = getattr(node, step) if isinstance(step, str) else node[step]  # type: ignore[index]
    return node


def _replace_path(node: object, path: tuple, value: object) -> object:
    if not path:
        return value
    step = path[0]
    if isinstance(step, str):
        child = _replace_path(getattr(node, step), path[1:], value)
        return dataclasses.replace(node, **{step: child})  # type: ignore[arg-type]
    items = list(node)  # type: ignore[call-overload]
    items[step] = _replace_path(items[step], path[1:], value)
    return tuple(items)


def _hole_path(a: Statement, b: Statement) -> Optional[tuple]:
    """The unification hole between two statements: exactly one differing
    position, holding a scalar literal inside the WHERE condition."""
    if type(a) is not type(b) or not isinstance(a, (Update, Delete)):
        return None
    diffs = _diff_paths(a, b)
    if len(diffs) != 1:
        return None
    path = diffs[0]
    if not path or path[0] != "where":
        return None
    x, y = _get_path(a, path), _get_path(b, path)
    if not (isinstance(x, Lit) and isinstance(y, Lit)):
        return None
    return path


def _collapsible(stmt: Statement, path: tuple) -> bool:
    """The hole must sit on one side of an equality so the run can become
    IN/BETWEEN. SelfValue would splice per application, so duplicates of a
    target would change meaning; callers also check value distinctness."""
    parent = _get_path(stmt, path[:-1])
    return isinstance(parent, Binary) and parent.op == "="


def reroll(script: Script) -> list[RewriteSuggestion]:
    """Collapse maximal consecutive runs of statements identical up to a
    single literal in their WHERE into one IN/BETWEEN statement. Runs
    produced by one gesture are listed first."""
    stmts = script.statements
    suggestions: list[tuple[tuple, RewriteSuggestion]] = []
    i = 0
    while i < len(stmts) - 1:
        path = _hole_path(stmts[i], stmts[i + 1])
        if path is None or not _collapsible(stmts[i], path):
            i += 1
            continue
        run = [i, i + 1]
        while (run[-1] + 1 < len(stmts)
               and _hole_path(stmts[i], stmts[run[-1] + 1]) == path):
            run.append(run[-1] + 1)
        values = [_get_path(stmts[k], path).value for k in run]  # type: ignore[union-attr]
        replacement = _collapse_run(stmts[i], path, values)
        if replacement is not None:
            groups = {stmts[k].gesture_group for k in run}
            same_gesture = len(groups) == 1 and None not in groups
            suggestion = RewriteSuggestion(
                kind=RewriteKind.REROLL,
                indices=tuple(run),
                replacement=(replacement,),
                evidence={"values": values, "shared_gesture": same_gesture},
            )
            suggestions.append(((0 if same_gesture else 1, -len(run), run[0]),
                                suggestion))
        i = run[-1] + 1
    suggestions.sort(key=lambda pair: pair[0])
    return [s for _, s in suggestions]


def _collapse_run(template: Statement, path: tuple,
                  values: list[Value]) -> Optional[Statement]:
    parent_path = path[:-1]
    parent = _get_path(template, parent_path)
    assert isinstance(parent, Binary)
    subject = parent.right if path[-1] == "left" else parent.left
    distinct = sorted(set(values), key=lambda v: (str(type(v)), str(v)))
    if len(distinct) < len(values) and any(
            isinstance(n, SelfValue) for f in _statement_formulas(template) for n in walk(f)):
        return None
    condition: Formula
    if all(isinstance(v, int) and not isinstance(v, bool) for v in distinct):
        ints = sorted(distinct)  # type: ignore[type-var]
        if ints == list(range(ints[0], ints[-1] + 1)) and len(ints) > 1:
            condition = Between(subject, Lit(ints[0]), Lit(ints[-1]))
            return _replace_path(template, parent_path, condition)  # type: ignore[return-value]
        condition = InList(subject, tuple(Lit(v) for v in ints))
        return _replace_path(template, parent_path, condition)  # type: ignore[return-value]
    condition = InList(subject, tuple(Lit(v) for v in distinct))
    return _replace_path(template, parent_path, condition)  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# FUSE: column creation + updates into one derived column
# ---------------------------------------------------------------------------


def _references_column(f: Formula, name: str) -> bool:
    return any(isinstance(n, ColumnRef) and n.name == name for n in walk(f))


def _substitute_prior(f: Formula, name: str, prior: Formula) -> Formula:
    """Rewrite a follow-up update's condition so it reads the fused prior
    definition instead of the column's intermediate state."""

    def fix(node: Formula) -> Optional[Formula]:
        if isinstance(node, SelfValue):
            return prior
        if isinstance(node, ColumnRef) and node.name == name:
            return prior
        return None

    return map_formula(f, fix)


def _substitute_self(f: Formula, prior: Formula) -> Formula:
    """Replace VALUE with the folded prior definition (a follow-up
    statement's VALUE reads the state its predecessor left behind)."""

    def fix(node: Formula) -> Optional[Formula]:
        if isinstance(node, SelfValue):
            return prior
        return None

    return map_formula(f, fix)


def _fuse_pair(a: Statement, b: Statement) -> Optional[Statement]:
    """One fusion step: (ADD COLUMN [+derive]) + UPDATE of that column, or
    two consecutive updates of one column.

    A stored *formula* that names its own target column is a reference
    cycle on the sheet; fusing such statements would substitute the cycle
    away and change meaning, so those pairs are left alone. Conditions are
    different: the original evaluates them transiently, so their reads of
    the target become VALUE (first statement) or the folded prior
    definition (second statement).
    """
    if isinstance(a, AddColumn) and isinstance(b, Update) and b.target == a.name:
        if _references_column(b.formula, a.name) or (
                a.derive is not None and _references_column(a.derive, a.name)):
            return None
        prior: Formula = a.derive if a.derive is not None else Lit(None)
        new_formula = _substitute_self(b.formula, prior)
        if b.where is None:
            return dataclasses.replace(a, derive=new_formula)
        cond = _substitute_prior(b.where, a.name, prior)
        return dataclasses.replace(a, derive=If(cond, new_formula, prior))
    if (isinstance(a, Update) and isinstance(b, Update)
            and isinstance(a.target, str) and a.target == b.target):
        if _references_column(a.formula, a.target) or \
                _references_column(b.formula, a.target):
            return None
        own = SelfValue()
        prior = a.formula if a.where is None else If(
            _substitute_prior(a.where, a.target, own), a.formula, own)
        new_formula = _substitute_self(b.formula, prior)
        if b.where is None:
            merged: Formula = new_formula
        else:
            merged = If(_substitute_prior(b.where, a.target, prior), new_formula, prior)
        return Update(a.target, merged, None)
    return None


def fuse(script: Script) -> list[RewriteSuggestion]:
    """Fuse adjacent column-definition chains into single statements.

    Fusion turns transient guards into stored formula parts, so a chain is
    only proposed while the columns it reads are never rewritten later in
    the script (a later rewrite would re-derive the fused cells where the
    original had already pinned its decision). Data-dependent residues,
    e.g. guards that error on some rows, are caught by the equivalence
    gate before anything is surfaced.
    """
    stmts = script.statements
    suggestions = []
    i = 0
    while i < len(stmts):
        fused = stmts[i]
        end = i
        while end + 1 < len(stmts):
            step = _fuse_pair(fused, stmts[end + 1])
            if step is None:
                break
            fused = step
            end += 1
        if end > i and not _inputs_rewritten_later(fused, stmts, end + 1):
            suggestions.append(RewriteSuggestion(
                kind=RewriteKind.FUSE,
                indices=tuple(range(i, end + 1)),
                replacement=(fused,),
            ))
            i = end + 1
        else:
            i += 1
    return suggestions


def _inputs_rewritten_later(fused: Statement, stmts: Sequence[Statement],
                            start: int) -> bool:
    reads = {n.name for f in _statement_formulas(fused)
             for n in walk(f) if isinstance(n, ColumnRef)}
    for later in stmts[start:]:
        if isinstance(later, Update) and isinstance(later.target, str) \
                and later.target in reads:
            return True
        if isinstance(later, RemoveColumn) and later.name in reads:
            return True
    return False


# ---------------------------------------------------------------------------
# GENERALIZE: singleton updates into qualitative predicates
# ---------------------------------------------------------------------------


def _singleton_update(stmt: Statement) -> Optional[tuple[str, int, Formula]]:
    if (isinstance(stmt, Update) and isinstance(stmt.target, str)
            and isinstance(stmt.where, Binary) and stmt.where.op == "="):
        sides = (stmt.where.left, stmt.where.right)
        if isinstance(sides[0], RowIdRef) and isinstance(sides[1], Lit) \
                and isinstance(sides[1].value, int):
            return stmt.target, sides[1].value, stmt.formula
    return None


@dataclass(frozen=True)
class _Candidate:
    predicate: Formula
    conjuncts: int
    arity: int
    kind_rank: int
    label: str


_MAX_VALUES_PER_ATTR = 64


def _attr_predicates(state: SheetState, targets: list[int],
                     exclude: str) -> list[_Candidate]:
    """Single-conjunct candidates from the targeted rows' current values."""
    coords = state.coords
    row_index = {r.n: i for i, r in enumerate(coords.rows)}
    out: list[_Candidate] = []
    for ci, (_, name) in enumerate(coords.columns):
        if name == exclude:
            continue
        vals = [state.value_at(ci, row_index[t]) for t in targets if t in row_index]
        if len(vals) != len(targets) or len(set(map(repr, vals))) > _MAX_VALUES_PER_ATTR:
            continue
        first = vals[0]
        if all(type(v) is type(first) and v == first for v in vals) and not isinstance(
                first, (dict, list)) and first is not None:
            out.append(_Candidate(Binary("=", ColumnRef(name), Lit(first)),
                                  1, 1, 0, name))
        if all(is_numeric(v) for v in vals):
            lo, hi = min(vals), max(vals)
            if lo != hi:
                out.append(_Candidate(
                    Between(ColumnRef(name), Lit(lo), Lit(hi)), 1, 1, 1, name))
    return out


def _matches_exactly(state: SheetState, predicate: Formula,
                     targets: set[int]) -> bool:
    from . import engine
    from .values import is_true
    matched = set()
    for ri in range(state.coords.n_rows):
        if is_true(engine.evaluate(predicate, state, (0, ri))):
            matched.add(state.coords.rows[ri].n)
    return matched == targets


def _affine_fit(points: list[tuple[Value, Value]]) -> Optional[tuple[Fraction, Fraction]]:
    """Exact one-variable affine fit v = a*x + b over decimal readings of
    the points; None unless every point lies on the line."""
    def frac(v: Value) -> Optional[Fraction]:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return None
        return Fraction(str(v))

    pts = [(frac(x), frac(v)) for x, v in points]
    if any(x is None or v is None for x, v in pts):
        return None
    distinct_x = {x for x, _ in pts}
    if len(distinct_x) < 2:
        return None
    x1, v1 = pts[0]
    x2, v2 = next((x, v) for x, v in pts if x != x1)
    a = (v2 - v1) / (x2 - x1)
    b = v1 - a * x1
    if all(v == a * x + b for x, v in pts):
        return a, b
    return None


def _fraction_lit(f: Fraction) -> Lit:
    if f.denominator == 1:
        return Lit(int(f))
    return Lit(float(f))


def generalize(script: Script, state: SheetState) -> list[RewriteSuggestion]:
    """Propose qualitative replacements for families of singleton updates.

    Families need at least two singletons on one column. Candidates are
    predicates (at most two conjuncts of equality/BETWEEN constraints over
    current attribute values) matching exactly the targeted rows; when the
    written constants differ, an exact affine fit over one numeric
    attribute is attempted instead. Raises NoCandidateError when families
    exist but nothing separates their rows.
    """
    families: dict[str, dict[int, tuple[int, Formula]]] = {}
    for idx, stmt in enumerate(script.statements):
        hit = _singleton_update(stmt)
        if hit is not None:
            column, tag, formula = hit
            families.setdefault(column, {})[tag] = (idx, formula)
    families = {c: f for c, f in families.items() if len(f) >= 2}
    if not families:
        return []
    suggestions = []
    had_family = False
    for column, members in sorted(families.items()):
        had_family = True
        tags = sorted(members.keys())
        indices = tuple(sorted(idx for idx, _ in members.values()))
        formulas = [members[t][1] for t in tags]
        shared_rhs = all(f == formulas[0] for f in formulas)
        candidates = _rank_candidates(state, tags, column)
        if not candidates:
            continue
        best = candidates[0]
        if shared_rhs:
            replacement = Update(column, formulas[0], best.predicate)
            fit_evidence = {}
        else:
            fit = _fit_family(state, tags, formulas, column)
            if fit is None:
                continue
            attr, a, b = fit
            expr: Formula = Binary("*", _fraction_lit(a), ColumnRef(attr))
            if b > 0:
                expr = Binary("+", expr, _fraction_lit(b))
            elif b < 0:
                expr = Binary("-", expr, _fraction_lit(-b))
            replacement = Update(column, expr, best.predicate)
            fit_evidence = {"fit_attr": attr, "fit_a": str(a), "fit_b": str(b)}
        suggestions.append(RewriteSuggestion(
            kind=RewriteKind.GENERALIZE,
            indices=indices,
            replacement=(replacement,),
            verified=False,
            evidence={"predicate": render_expr(best.predicate),
                      "rows_matched": tags,
                      "alternatives": [render_expr(c.predicate) for c in candidates[1:4]],
                      **fit_evidence},
        ))
    if had_family and not suggestions:
        raise NoCandidateError(
            "no enumerated predicate separates the targeted rows from the rest")
    return suggestions


def _rank_candidates(state: SheetState, tags: list[int],
                     column: str) -> list[_Candidate]:
    singles = _attr_predicates(state, tags, exclude=column)
    target_set = set(tags)
    exact = [c for c in singles
             if _matches_exactly(state, c.predicate, target_set)]
    if not exact:
        for i, a in enumerate(singles):
            for b in singles[i + 1:]:
                if a.label == b.label:
                    continue
                pred = Binary("AND", a.predicate, b.predicate)
                if _matches_exactly(state, pred, target_set):
                    exact.append(_Candidate(pred, 2, 2,
                                            max(a.kind_rank, b.kind_rank),
                                            f"{a.label}&{b.label}"))
    exact.sort(key=lambda c: (c.conjuncts, c.arity, c.kind_rank, c.label))
    return exact


def _fit_family(state: SheetState, tags: list[int], formulas: list[Formula],
                column: str) -> Optional[tuple[str, Fraction, Fraction]]:
    if not all(isinstance(f, Lit) for f in formulas):
        return None
    targets = [f.value for f in formulas]  # type: ignore[union-attr]
    coords = state.coords
    row_index = {r.n: i for i, r in enumerate(coords.rows)}
    for ci, (_, name) in enumerate(coords.columns):
        if name == column:
            continue
        xs = [state.value_at(ci, row_index[t]) for t in tags if t in row_index]
        if len(xs) != len(tags):
            continue
        fit = _affine_fit(list(zip(xs, targets)))
        if fit is not None:
            return name, fit[0], fit[1]
    return None


# ---------------------------------------------------------------------------
# Equivalence oracle and verified suggestion surface
# ---------------------------------------------------------------------------


def equivalence_check(original: Script, rewritten: Script,
                      fixtures: Optional[Mapping[str, str]] = None,
                      base: Optional[SheetState] = None) -> CheckResult:
    """Replay both scripts and compare final states position by position."""
    try:
        left = executor.apply_script(original, fixtures=fixtures, base=base)
    except Exception as exc:  # noqa: BLE001 - replay failure is the verdict
        return CheckResult(Verdict.INCOMPARABLE, f"original failed: {exc}")
    try:
        right = executor.apply_script(rewritten, fixtures=fixtures, base=base)
    except Exception as exc:  # noqa: BLE001
        return CheckResult(Verdict.INCOMPARABLE, f"rewritten failed: {exc}")
    return compare_states(left, right)


def compare_states(left: SheetState, right: SheetState) -> CheckResult:
    if left.column_names != right.column_names:
        return CheckResult(Verdict.DIFFERENT, "column sets differ")
    if left.coords.n_rows != right.coords.n_rows:
        return CheckResult(Verdict.DIFFERENT, "row counts differ")
    for ci in range(left.coords.n_cols):
        for ri in range(left.coords.n_rows):
            a = left.value_at(ci, ri)
            b = right.value_at(ci, ri)
            if not _same_value(a, b):
                return CheckResult(
                    Verdict.DIFFERENT,
                    f"value mismatch at column {ci}, row {ri}: {a!r} vs {b!r}")
    return CheckResult(Verdict.EQUIVALENT)


def _same_value(a: Value, b: Value) -> bool:
    from .model import ErrorValue
    if isinstance(a, ErrorValue) or isinstance(b, ErrorValue):
        return (isinstance(a, ErrorValue) and isinstance(b, ErrorValue)
                and a.kind == b.kind)
    if isinstance(a, bool) != isinstance(b, bool):
        return False
    return a == b


def suggest_rewrites(script: Script,
                     fixtures: Optional[Mapping[str, str]] = None,
                     state: Optional[SheetState] = None,
                     include_generalize: bool = True) -> list[RewriteSuggestion]:
    """All surfaced suggestions for a script: REROLL and FUSE verified by
    the equivalence oracle (others are dropped), plus data-dependent
    GENERALIZE proposals computed against the current output."""
    verified: list[RewriteSuggestion] = []
    for suggestion in reroll(script) + fuse(script):
        candidate = apply_suggestion(script, suggestion)
        if readability_cost(candidate) >= readability_cost(script):
            continue
        if equivalence_check(script, candidate, fixtures).verdict == Verdict.EQUIVALENT:
            verified.append(dataclasses.replace(suggestion, verified=True))
    if include_generalize:
        try:
            output = state if state is not None else executor.apply_script(
                script, fixtures=fixtures)
            verified.extend(generalize(script, output))
        except NoCandidateError:
            pass
        except Exception:  # noqa: BLE001 - generalization is best-effort
            pass
    return verified
