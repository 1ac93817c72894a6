"""Notebooks: ordered pages of scripts with cached outputs, cascading
re-execution, linear branching, and hermetic persistence.

A page's source is either a file LOAD or a reference to an earlier page's
output, so the page graph is acyclic by construction. Loaded files are
snapshotted into a content-addressed fixture registry the first time they
are seen; replay always reads the registry, never the filesystem, which
makes every cached output reproducible from the container file alone.

Notebook values are immutable: every mutation builds a new Notebook, so
readers can keep using the snapshot they already hold. Mutations are
atomic by the same token: a failing statement leaves the original value
untouched.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

from . import executor, lang
from .engine import validate_state
from .lang import Load, PageRef, Script, Statement, script_hash
from .model import ErrorValue, SheetState, Value, VizualError

MAIN = "main"
FORMAT = "vizual-notebook/1"


class NotebookError(VizualError):
    code = "NOTEBOOK"


class UnknownPageError(NotebookError):
    code = "UNKNOWN_PAGE"


class DuplicateBranchError(NotebookError):
    code = "DUPLICATE_BRANCH_NAME"


@dataclass(frozen=True)
class Fixture:
    path: str
    text: str
    sha256: str

    @staticmethod
    def of(path: str, text: str) -> "Fixture":
        return Fixture(path, text, hashlib.sha256(text.encode("utf-8")).hexdigest())


@dataclass(frozen=True)
class Page:
    name: str
    script: Script
    output: SheetState
    output_hash: str
    accepted_rewrites: tuple[str, ...] = ()  # provenance notes for applied suggestions


@dataclass(frozen=True)
class Notebook:
    branches: Mapping[str, tuple[Page, ...]] = field(default_factory=dict)
    fixtures: Mapping[str, Fixture] = field(default_factory=dict)

    def pages(self, branch: str = MAIN) -> tuple[Page, ...]:
        if branch not in self.branches:
            raise UnknownPageError(f"no branch named {branch!r}")
        return self.branches[branch]

    def page(self, name: str, branch: str = MAIN) -> Page:
        for page in self.pages(branch):
            if page.name == name:
                return page
        raise UnknownPageError(f"no page named {name!r} on branch {branch!r}")

    def page_index(self, name: str, branch: str = MAIN) -> int:
        for i, page in enumerate(self.pages(branch)):
            if page.name == name:
                return i
        raise UnknownPageError(f"no page named {name!r} on branch {branch!r}")

    def fixture_texts(self) -> dict[str, str]:
        return {path: fx.text for path, fx in self.fixtures.items()}


# ---------------------------------------------------------------------------
# Hashing
# ---------------------------------------------------------------------------


def _value_json(v: Value) -> object:
    if isinstance(v, bool):
        return {"t": "bool", "v": v}
    if isinstance(v, int):
        return {"t": "int", "v": v}
    if isinstance(v, float):
        return {"t": "float", "v": repr(v)}
    if isinstance(v, str):
        return {"t": "str", "v": v}
    if isinstance(v, ErrorValue):
        return {"t": "error", "v": v.kind.value}
    return None


def state_hash(state: SheetState) -> str:
    """Content hash of a sheet snapshot: identities, layout, formulas
    (structural), and values."""
    doc = {
        "columns": [[c.n, name] for c, name in state.coords.columns],
        "rows": [r.n for r in state.coords.rows],
        "cells": sorted(
            [anchor[0].n, anchor[1].n, cid.n,
             repr(state.cells[cid].formula), _value_json(state.cells[cid].value)]
            for anchor, cid in state.coords.grid.items()),
        "next_id": state.next_id,
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Construction and replay
# ---------------------------------------------------------------------------


def new_notebook(fixtures: Optional[Mapping[str, str]] = None) -> Notebook:
    registry = {path: Fixture.of(path, text) for path, text in (fixtures or {}).items()}
    return Notebook(branches={MAIN: ()}, fixtures=registry)


def register_fixture(nb: Notebook, path: str, text: str) -> Notebook:
    registry = dict(nb.fixtures)
    registry[path] = Fixture.of(path, text)
    return replace(nb, fixtures=registry)


def _base_state(nb: Notebook, pages_so_far: Sequence[Page],
                source: lang.Source) -> Optional[SheetState]:
    """Resolve a PageRef source against already-computed pages; None for
    file loads (the executor handles those)."""
    if isinstance(source, PageRef):
        for page in pages_so_far:
            if page.name == source.page:
                return page.output
        raise UnknownPageError(
            f"page source {source.page!r} must name a preceding page")
    return None


def _run_page(nb: Notebook, pages_so_far: Sequence[Page], name: str,
              script: Script,
              accepted: tuple[str, ...] = ()) -> Page:
    base = _base_state(nb, pages_so_far, script.source)
    output = executor.apply_script(script, fixtures=nb.fixture_texts(), base=base)
    return Page(name, script, output, state_hash(output), accepted)


def _recompute_from(nb: Notebook, branch: str, start: int,
                    pages: list[Page]) -> Notebook:
    """Re-execute pages[start:] in order (cascading), leaving no page
    stale."""
    rebuilt: list[Page] = pages[:start]
    for page in pages[start:]:
        rebuilt.append(_run_page(nb, rebuilt, page.name, page.script,
                                 page.accepted_rewrites))
    branches = dict(nb.branches)
    branches[branch] = tuple(rebuilt)
    return replace(nb, branches=branches)


def add_page(nb: Notebook, name: str, source: lang.Source,
             branch: str = MAIN) -> Notebook:
    pages = list(nb.pages(branch))
    if any(p.name == name for p in pages):
        raise NotebookError(f"page {name!r} already exists", code="DUPLICATE_PAGE")
    if isinstance(source, Load) and source.path not in nb.fixtures:
        # snapshot the file now so replay stays hermetic
        with open(source.path, "r", encoding="utf-8", newline="") as fh:
            nb = register_fixture(nb, source.path, fh.read())
    page = _run_page(nb, pages, name, Script(source))
    branches = dict(nb.branches)
    branches[branch] = tuple(pages) + (page,)
    return replace(nb, branches=branches)


def append_statement(nb: Notebook, page_name: str, stmt: Statement,
                     branch: str = MAIN) -> Notebook:
    """Append one statement to a page and cascade to dependents. The
    notebook is unchanged if application fails."""
    pages = list(nb.pages(branch))
    idx = nb.page_index(page_name, branch)
    page = pages[idx]
    # incremental: apply to the cached output, then cascade downstream
    new_output = executor.apply(page.output, stmt)
    new_script = page.script.with_appended(stmt)
    pages[idx] = Page(page.name, new_script, new_output, state_hash(new_output),
                      page.accepted_rewrites)
    return _recompute_from(nb, branch, idx + 1, pages)


def edit_statement(nb: Notebook, page_name: str, index: int, stmt: Statement,
                   branch: str = MAIN) -> Notebook:
    """Replace one statement; the page replays from its source and
    dependents cascade. Errors leave the notebook unchanged."""
    pages = list(nb.pages(branch))
    idx = nb.page_index(page_name, branch)
    page = pages[idx]
    if not (0 <= index < len(page.script.statements)):
        raise NotebookError(f"statement index {index} out of range",
                            code="BAD_INDEX")
    statements = list(page.script.statements)
    statements[index] = stmt
    pages[idx] = _run_page(nb, pages[:idx], page.name,
                           Script(page.script.source, tuple(statements)),
                           page.accepted_rewrites)
    return _recompute_from(nb, branch, idx + 1, pages)


def replace_script(nb: Notebook, page_name: str, script: Script,
                   branch: str = MAIN, note: Optional[str] = None) -> Notebook:
    """Swap a page's whole script (accepted rewrite suggestions land here)."""
    pages = list(nb.pages(branch))
    idx = nb.page_index(page_name, branch)
    accepted = pages[idx].accepted_rewrites + ((note,) if note else ())
    pages[idx] = _run_page(nb, pages[:idx], page_name, script, accepted)
    return _recompute_from(nb, branch, idx + 1, pages)


def branch(nb: Notebook, page_name: str, statement_index: int, name: str,
           from_branch: str = MAIN) -> Notebook:
    """Fork a new branch holding the prefix up to (page, statement_index);
    later edits to either branch are independent."""
    if name in nb.branches:
        raise DuplicateBranchError(f"branch {name!r} already exists")
    pages = list(nb.pages(from_branch))
    idx = nb.page_index(page_name, from_branch)
    page = pages[idx]
    if not (0 <= statement_index <= len(page.script.statements)):
        raise NotebookError(f"statement index {statement_index} out of range",
                            code="BAD_INDEX")
    prefix = pages[:idx]
    truncated = Script(page.script.source,
                       page.script.statements[:statement_index])
    forked = prefix + [_run_page(nb, prefix, page.name, truncated)]
    branches = dict(nb.branches)
    branches[name] = tuple(forked)
    return replace(nb, branches=branches)


def flatten_script(nb: Notebook, page_name: str, branch: str = MAIN) -> Script:
    """Inline page references so the script stands alone over file LOADs
    (what the SQL compiler consumes)."""
    page = nb.page(page_name, branch)
    script = page.script
    statements: tuple[Statement, ...] = script.statements
    source = script.source
    seen = {page_name}
    while isinstance(source, PageRef):
        if source.page in seen:
            raise NotebookError("page references cycle", code="PAGE_CYCLE")
        seen.add(source.page)
        upstream = nb.page(source.page, branch)
        statements = upstream.script.statements + statements
        source = upstream.script.source
    return Script(source, statements)


def verify(nb: Notebook) -> list[str]:
    """Replay every page of every branch from the fixture registry and
    report any page whose cached output hash does not reproduce, plus any
    page whose output fails the validity judgment."""
    problems = []
    for branch_name, pages in sorted(nb.branches.items()):
        rebuilt: list[Page] = []
        for page in pages:
            fresh = _run_page(nb, rebuilt, page.name, page.script,
                              page.accepted_rewrites)
            if fresh.output_hash != page.output_hash:
                problems.append(
                    f"{branch_name}/{page.name}: cached {page.output_hash[:12]} "
                    f"!= replayed {fresh.output_hash[:12]}")
            if validate_state(fresh.output):
                problems.append(f"{branch_name}/{page.name}: output state invalid")
            rebuilt.append(fresh)
    return problems


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def to_json(nb: Notebook) -> str:
    doc = {
        "format": FORMAT,
        "fixtures": {
            path: {"sha256": fx.sha256, "text": fx.text}
            for path, fx in sorted(nb.fixtures.items())
        },
        "branches": {
            branch_name: [
                {
                    "name": page.name,
                    "script": [render_statement_with_group(s)
                               for s in page.script.statements],
                    "source": lang.render_statement(page.script.source),
                    "output_hash": page.output_hash,
                    "script_hash": script_hash(page.script),
                    "accepted_rewrites": list(page.accepted_rewrites),
                }
                for page in pages
            ]
            for branch_name, pages in sorted(nb.branches.items())
        },
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def render_statement_with_group(stmt: Statement) -> dict:
    return {"text": lang.render_statement(stmt),
            "gesture_group": stmt.gesture_group}


def save(nb: Notebook, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_json(nb))


def from_json(text: str) -> Notebook:
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise NotebookError(f"unsupported container format {doc.get('format')!r}",
                            code="BAD_FORMAT")
    fixtures = {path: Fixture(path, item["text"], item["sha256"])
                for path, item in doc["fixtures"].items()}
    for fx in fixtures.values():
        if hashlib.sha256(fx.text.encode("utf-8")).hexdigest() != fx.sha256:
            raise NotebookError(f"fixture {fx.path!r} content hash mismatch",
                                code="FIXTURE_HASH")
    nb = Notebook(branches={}, fixtures=fixtures)
    branches: dict[str, tuple[Page, ...]] = {}
    for branch_name, pages_doc in doc["branches"].items():
        pages: list[Page] = []
        for page_doc in pages_doc:
            source = _parse_source(page_doc["source"])
            statements = []
            for item in page_doc["script"]:
                stmt = lang.parse_statement(item["text"])
                statements.append(replace(stmt, gesture_group=item["gesture_group"]))
            script = Script(source, tuple(statements))
            page = _run_page(nb, pages, page_doc["name"], script,
                             tuple(page_doc.get("accepted_rewrites", ())))
            if page.output_hash != page_doc["output_hash"]:
                raise NotebookError(
                    f"page {page_doc['name']!r} does not replay to its recorded "
                    f"output hash", code="REPLAY_MISMATCH")
            pages.append(page)
        branches[branch_name] = tuple(pages)
    return replace(nb, branches=branches)


def _parse_source(text: str) -> lang.Source:
    ts = lang.TokenStream(lang.tokenize(text))
    source = lang._StatementParser(ts).source()
    return source


def load(path: str) -> Notebook:
    with open(path, "r", encoding="utf-8") as fh:
        return from_json(fh.read())
