"""HTTP/JSON facade over notebooks for the UI and scripted clients.

Design constraints the routes enforce:

  * the bi-directional mapping is server-authoritative: every mutation
    response echoes exactly the statements appended, and the script hash,
    so a client pane can mirror the notebook and prove it;
  * windowed reads are the only sheet read path (grids paginate);
  * reads never mutate; mutations run under a per-notebook lock in strict
    arrival order and publish immutable snapshots.

Wire field names are fixed in docs/service-schema.json, which ships with
the repo; the TypeScript client consumes the same file.
"""

from __future__ import annotations

import dataclasses
import itertools
import threading
import uuid
from dataclasses import dataclass, field
from typing import Optional

from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse

from . import executor, lang, notebook as nbmod, rewriter, sqlcompile
from .formula import render_formula
from .lang import parse_region, render_statement, script_hash
from .model import ErrorValue, SheetState, Value, VizualError
from .rewriter import RewriteSuggestion
from .values import render_scalar


@dataclass
class _Entry:
    notebook: nbmod.Notebook
    seq: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class NotebookStore:
    """In-memory notebook registry with per-notebook mutation locks."""

    def __init__(self):
        self._entries: dict[str, _Entry] = {}
        self._guard = threading.Lock()
        self._ids = itertools.count(1)

    def create(self, nb: nbmod.Notebook, notebook_id: Optional[str] = None) -> str:
        with self._guard:
            nid = notebook_id or f"nb-{next(self._ids)}-{uuid.uuid4().hex[:8]}"
            self._entries[nid] = _Entry(nb)
            return nid

    def ids(self) -> list[str]:
        with self._guard:
            return sorted(self._entries.keys())

    def entry(self, notebook_id: str) -> _Entry:
        with self._guard:
            entry = self._entries.get(notebook_id)
        if entry is None:
            raise HTTPException(404, detail={"code": "UNKNOWN_NOTEBOOK",
                                             "message": notebook_id})
        return entry

    def snapshot(self, notebook_id: str) -> tuple[nbmod.Notebook, int]:
        entry = self.entry(notebook_id)
        with entry.lock:
            return entry.notebook, entry.seq

    def mutate(self, notebook_id: str, fn) -> tuple[nbmod.Notebook, int]:
        """Run fn(notebook) -> notebook under the mutation lock; the new
        snapshot is published atomically."""
        entry = self.entry(notebook_id)
        with entry.lock:
            entry.notebook = fn(entry.notebook)
            entry.seq += 1
            return entry.notebook, entry.seq


# ---------------------------------------------------------------------------
# JSON payload helpers
# ---------------------------------------------------------------------------


def value_json(v: Value) -> dict:
    if v is None:
        return {"type": "null", "value": None, "display": ""}
    if isinstance(v, bool):
        return {"type": "bool", "value": v, "display": "TRUE" if v else "FALSE"}
    if isinstance(v, ErrorValue):
        return {"type": "error", "value": v.kind.value, "display": f"#{v.kind.value}"}
    if isinstance(v, int):
        return {"type": "int", "value": v, "display": str(v)}
    if isinstance(v, float):
        return {"type": "float", "value": v, "display": render_scalar(v)}
    return {"type": "string", "value": v, "display": v}


def window_json(state: SheetState, col_range: tuple[int, int],
                row_range: tuple[int, int], seq: int) -> dict:
    coords = state.coords
    c0 = max(0, min(col_range[0], coords.n_cols))
    c1 = max(c0, min(col_range[1], coords.n_cols))
    r0 = max(0, min(row_range[0], coords.n_rows))
    r1 = max(r0, min(row_range[1], coords.n_rows))
    columns = [{"name": coords.columns[ci][1], "col_id": coords.columns[ci][0].n,
                "index": ci} for ci in range(c0, c1)]
    rows = [{"row_id": coords.rows[ri].n, "index": ri} for ri in range(r0, r1)]
    cells = []
    for ri in range(r0, r1):
        row_cells = []
        for ci in range(c0, c1):
            cell = state.cell_at(ci, ri)
            assert cell is not None
            payload = value_json(cell.value)
            payload["formula"] = render_formula(cell.formula, host=(ci, ri),
                                                coords=coords)
            payload["cell_id"] = cell.id.n
            row_cells.append(payload)
        cells.append(row_cells)
    return {
        "columns": columns, "rows": rows, "cells": cells,
        "total_cols": coords.n_cols, "total_rows": coords.n_rows,
        "col_start": c0, "row_start": r0, "seq": seq,
    }


def script_json(page: nbmod.Page, seq: int) -> dict:
    return {
        "source": render_statement(page.script.source),
        "statements": [
            {"index": i, "text": render_statement(s), "gesture_group": s.gesture_group}
            for i, s in enumerate(page.script.statements)
        ],
        "script_hash": script_hash(page.script),
        "output_hash": page.output_hash,
        "seq": seq,
    }


def suggestion_json(s: RewriteSuggestion) -> dict:
    return {
        "id": s.suggestion_id,
        "kind": s.kind.value,
        "indices": list(s.indices),
        "replacement": [render_statement(st) for st in s.replacement],
        "verified": s.verified,
        "evidence": dict(s.evidence),
    }


def parse_gesture(doc: dict) -> executor.Gesture:
    kind = doc.get("kind")
    try:
        if kind == "edit_cell":
            return executor.EditCell(int(doc["col"]), int(doc["row"]), str(doc["text"]))
        if kind == "typecast":
            return executor.TypecastRegion(parse_region(doc["region"]), doc["type"])
        if kind == "copy_paste":
            return executor.CopyPaste(executor.Rect(*doc["src"]), executor.Rect(*doc["dst"]))
        if kind == "fill":
            return executor.FillRange(executor.Rect(*doc["src"]), executor.Rect(*doc["dst"]))
        if kind == "cut_paste":
            return executor.CutPasteGesture(executor.Rect(*doc["src"]), tuple(doc["to"]))
        if kind == "drag_rows":
            return executor.DragRows(tuple(doc["row_ids"]), int(doc["to_index"]))
        if kind == "drag_columns":
            return executor.DragColumns(tuple(doc["names"]), int(doc["to_index"]))
        if kind == "insert_row":
            return executor.InsertRowAt(int(doc["index"]), bool(doc.get("before", True)))
        if kind == "insert_column":
            return executor.InsertColumnAt(int(doc["index"]),
                                           bool(doc.get("before", True)),
                                           doc.get("name"))
        if kind == "delete_rows":
            return executor.DeleteRows(tuple(doc["row_ids"]))
        if kind == "sort":
            return executor.SortGesture(tuple(
                lang.SortKey(k["column"], bool(k.get("desc", False)))
                for k in doc["keys"]))
        if kind == "filter":
            return executor.FilterGesture(str(doc["predicate"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise HTTPException(422, detail={"code": "BAD_GESTURE", "message": str(exc)})
    raise HTTPException(422, detail={"code": "BAD_GESTURE",
                                     "message": f"unknown gesture kind {kind!r}"})


def _parse_ranges(cols: Optional[str], rows: Optional[str],
                  state: SheetState) -> tuple[tuple[int, int], tuple[int, int]]:
    def parse_one(text: Optional[str], total: int) -> tuple[int, int]:
        if text is None or text == "":
            return 0, total
        try:
            a, b = text.split(":")
            lo, hi = int(a), int(b)
        except ValueError:
            raise HTTPException(422, detail={"code": "BAD_RANGE", "message": text})
        if lo < 0 or hi < 0:
            raise HTTPException(422, detail={"code": "BAD_RANGE", "message": text})
        return lo, hi

    return (parse_one(cols, state.coords.n_cols),
            parse_one(rows, state.coords.n_rows))


# ---------------------------------------------------------------------------
# App factory
# ---------------------------------------------------------------------------


def create_app(store: Optional[NotebookStore] = None,
               ui_dir: Optional[str] = None) -> FastAPI:
    store = store or NotebookStore()
    app = FastAPI(title="vizual", docs_url=None, redoc_url=None)
    app.state.store = store

    @app.exception_handler(VizualError)
    async def _vizual_error(_request, exc: VizualError):
        from .formula import ParseError
        status = 422 if isinstance(exc, ParseError) else 409
        return JSONResponse(status_code=status,
                            content={"code": exc.code, "message": str(exc)})

    def get_page(notebook_id: str, page: str, branch: str) -> tuple[nbmod.Notebook, nbmod.Page, int]:
        nb, seq = store.snapshot(notebook_id)
        try:
            return nb, nb.page(page, branch), seq
        except nbmod.UnknownPageError as exc:
            raise HTTPException(404, detail={"code": exc.code, "message": str(exc)})

    @app.post("/notebooks")
    def create_notebook(payload: dict = Body(default={})):
        fixtures = payload.get("fixtures") or {}
        if not isinstance(fixtures, dict):
            raise HTTPException(422, detail={"code": "BAD_PAYLOAD",
                                             "message": "fixtures must map path to text"})
        nb = nbmod.new_notebook(fixtures)
        nid = store.create(nb, payload.get("notebook_id"))
        return {"notebook_id": nid, "branches": [nbmod.MAIN]}

    @app.get("/notebooks")
    def list_notebooks():
        return {"notebooks": store.ids()}

    @app.post("/notebooks/{notebook_id}/pages")
    def add_page(notebook_id: str, payload: dict = Body(...)):
        name = payload.get("name")
        source_text = payload.get("source")
        branch = payload.get("branch", nbmod.MAIN)
        if not name or not source_text:
            raise HTTPException(422, detail={"code": "BAD_PAYLOAD",
                                             "message": "name and source required"})
        source = nbmod._parse_source(source_text)
        nb, seq = store.mutate(notebook_id,
                               lambda nb: nbmod.add_page(nb, name, source, branch))
        return script_json(nb.page(name, branch), seq)

    @app.get("/notebooks/{notebook_id}/pages/{page}/script")
    def get_script(notebook_id: str, page: str, branch: str = Query(nbmod.MAIN)):
        _, p, seq = get_page(notebook_id, page, branch)
        return script_json(p, seq)

    @app.get("/notebooks/{notebook_id}/pages/{page}/statements")
    def get_statements(notebook_id: str, page: str, branch: str = Query(nbmod.MAIN)):
        _, p, seq = get_page(notebook_id, page, branch)
        body = script_json(p, seq)
        return {"statements": body["statements"],
                "script_hash": body["script_hash"], "seq": seq}

    @app.post("/notebooks/{notebook_id}/pages/{page}/statements")
    def post_statement(notebook_id: str, page: str, payload: dict = Body(...),
                       branch: str = Query(nbmod.MAIN)):
        text = payload.get("text")
        if not isinstance(text, str):
            raise HTTPException(422, detail={"code": "BAD_PAYLOAD",
                                             "message": "text required"})
        stmt = lang.parse_statement(text)
        group = executor.next_gesture_group()
        stmt = dataclasses.replace(stmt, gesture_group=group)
        before: list[int] = []

        def mutate(nb: nbmod.Notebook) -> nbmod.Notebook:
            before.append(len(nb.page(page, branch).script.statements))
            return nbmod.append_statement(nb, page, stmt, branch)

        nb, seq = store.mutate(notebook_id, mutate)
        return _mutation_response(nb.page(page, branch), before[0], seq)

    @app.post("/notebooks/{notebook_id}/pages/{page}/gestures")
    def post_gesture(notebook_id: str, page: str, payload: dict = Body(...),
                     branch: str = Query(nbmod.MAIN)):
        gesture = parse_gesture(payload)
        group = executor.next_gesture_group()
        before: list[int] = []

        def mutate(nb: nbmod.Notebook) -> nbmod.Notebook:
            current = nb.page(page, branch)
            before.append(len(current.script.statements))
            stmts = executor.gesture_to_statements(gesture, current.output, group)
            for stmt in stmts:
                nb = nbmod.append_statement(nb, page, stmt, branch)
            return nb

        nb, seq = store.mutate(notebook_id, mutate)
        return _mutation_response(nb.page(page, branch), before[0], seq)

    @app.get("/notebooks/{notebook_id}/pages/{page}/window")
    def get_window(notebook_id: str, page: str, cols: Optional[str] = None,
                   rows: Optional[str] = None, branch: str = Query(nbmod.MAIN)):
        _, p, seq = get_page(notebook_id, page, branch)
        col_range, row_range = _parse_ranges(cols, rows, p.output)
        return window_json(p.output, col_range, row_range, seq)

    @app.get("/notebooks/{notebook_id}/pages/{page}/sql")
    def get_sql(notebook_id: str, page: str, branch: str = Query(nbmod.MAIN),
                positional: bool = Query(False)):
        nb, _, seq = get_page(notebook_id, page, branch)
        flat = nbmod.flatten_script(nb, page, branch)
        compile_fn = (sqlcompile.compile_positional if positional
                      else sqlcompile.compile_script)
        query = compile_fn(flat, fixtures=nb.fixture_texts())
        return {"sql": query.text,
                "manifest": [{"path": s.path, "header": s.header,
                              "infer_types": s.infer_types} for s in query.manifest],
                "seq": seq}

    @app.get("/notebooks/{notebook_id}/pages/{page}/suggestions")
    def get_suggestions(notebook_id: str, page: str, branch: str = Query(nbmod.MAIN)):
        nb, p, seq = get_page(notebook_id, page, branch)
        suggestions = rewriter.suggest_rewrites(
            p.script, fixtures=nb.fixture_texts(), state=p.output)
        return {"suggestions": [suggestion_json(s) for s in suggestions],
                "script_hash": script_hash(p.script), "seq": seq}

    @app.post("/notebooks/{notebook_id}/pages/{page}/suggestions")
    def accept_suggestion(notebook_id: str, page: str, payload: dict = Body(...),
                          branch: str = Query(nbmod.MAIN)):
        wanted = payload.get("id")

        def mutate(nb: nbmod.Notebook) -> nbmod.Notebook:
            p = nb.page(page, branch)
            suggestions = rewriter.suggest_rewrites(
                p.script, fixtures=nb.fixture_texts(), state=p.output)
            match = next((s for s in suggestions if s.suggestion_id == wanted), None)
            if match is None:
                raise HTTPException(409, detail={
                    "code": "STALE_SUGGESTION",
                    "message": "suggestion no longer applies; refetch"})
            new_script = rewriter.apply_suggestion(p.script, match)
            note = f"{match.kind.value}:{match.suggestion_id}"
            return nbmod.replace_script(nb, page, new_script, branch, note=note)

        nb, seq = store.mutate(notebook_id, mutate)
        return script_json(nb.page(page, branch), seq)

    @app.get("/notebooks/{notebook_id}/branches")
    def list_branches(notebook_id: str):
        nb, seq = store.snapshot(notebook_id)
        return {"branches": sorted(nb.branches.keys()), "seq": seq}

    @app.post("/notebooks/{notebook_id}/branches")
    def create_branch(notebook_id: str, payload: dict = Body(...)):
        name = payload.get("name")
        page = payload.get("page")
        index = payload.get("statement_index")
        from_branch = payload.get("from_branch", nbmod.MAIN)
        if not name or page is None or index is None:
            raise HTTPException(422, detail={
                "code": "BAD_PAYLOAD",
                "message": "name, page, and statement_index required"})
        nb, seq = store.mutate(
            notebook_id,
            lambda nb: nbmod.branch(nb, page, int(index), name, from_branch))
        return {"branches": sorted(nb.branches.keys()), "seq": seq}

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _mutation_response(page: nbmod.Page, statements_before: int, seq: int) -> dict:
    tail = page.script.statements[statements_before:]
    return {
        "statements": [
            {"index": statements_before + i, "text": render_statement(s),
             "gesture_group": s.gesture_group}
            for i, s in enumerate(tail)
        ],
        "script_hash": script_hash(page.script),
        "output_hash": page.output_hash,
        "diagnostics": [],
        "seq": seq,
    }
