from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from vizual.service import NotebookStore, create_app


@pytest.fixture
def client() -> TestClient:
    return TestClient(create_app(NotebookStore()))


def make_notebook(client: TestClient, fixtures: dict[str, str],
                  page: str = "p1", load: str | None = None) -> str:
    r = client.post("/notebooks", json={"fixtures": fixtures})
    assert r.status_code == 200
    nid = r.json()["notebook_id"]
    path = load or next(iter(fixtures))
    r = client.post(f"/notebooks/{nid}/pages",
                    json={"name": page, "source": f"LOAD '{path}'"})
    assert r.status_code == 200
    return nid


@pytest.fixture
def fig6a_notebook(client, people_fixtures):
    nid = make_notebook(client, people_fixtures)
    client.post(f"/notebooks/{nid}/pages/p1/statements", json={"text": "ADD COLUMN C"})
    for cell, text in (("C1", "B1"), ("C2", "B2+C1"), ("C3", "B3+C2"), ("C4", "B4+C3")):
        r = client.post(f"/notebooks/{nid}/pages/p1/statements",
                        json={"text": f"UPDATE [{cell}] = {text}"})
        assert r.status_code == 200
    return nid


class TestMutate:
    def test_edit_cell_echoes_the_singleton_statement(self, client, lineitem_fixtures,
                                                      fig2_script_text):
        nid = make_notebook(client, lineitem_fixtures)
        for text in ["ADD COLUMN total", "UPDATE total = price * (1 - discount)"]:
            client.post(f"/notebooks/{nid}/pages/p1/statements", json={"text": text})
        r = client.post(f"/notebooks/{nid}/pages/p1/gestures",
                        json={"kind": "edit_cell", "col": 4, "row": 1, "text": "1020"})
        assert r.status_code == 200
        body = r.json()
        assert [s["text"] for s in body["statements"]] == \
            ["UPDATE total = 1020 WHERE ROWID = 2"]
        assert len({s["gesture_group"] for s in body["statements"]}) == 1

    def test_script_tail_equals_script_difference(self, client, people_fixtures):
        nid = make_notebook(client, people_fixtures)
        before = client.get(f"/notebooks/{nid}/pages/p1/script").json()
        r = client.post(f"/notebooks/{nid}/pages/p1/gestures",
                        json={"kind": "insert_row", "index": 1, "before": False})
        tail = r.json()["statements"]
        after = client.get(f"/notebooks/{nid}/pages/p1/script").json()
        assert [s["text"] for s in after["statements"]] == \
            [s["text"] for s in before["statements"]] + [s["text"] for s in tail]
        assert after["script_hash"] == r.json()["script_hash"]

    def test_paste_emits_one_group(self, client, fig6a_notebook):
        nid = fig6a_notebook
        r = client.post(f"/notebooks/{nid}/pages/p1/gestures",
                        json={"kind": "copy_paste", "src": [2, 1, 2, 1],
                              "dst": [2, 2, 2, 3]})
        body = r.json()
        assert len(body["statements"]) == 2
        assert len({s["gesture_group"] for s in body["statements"]}) == 1

    def test_noop_gesture_appends_nothing(self, client, people_fixtures):
        # dragging a row onto its own position realizes as zero statements
        nid = make_notebook(client, people_fixtures)
        before = client.get(f"/notebooks/{nid}/pages/p1/script").json()["script_hash"]
        w = client.get(f"/notebooks/{nid}/pages/p1/window").json()
        r = client.post(f"/notebooks/{nid}/pages/p1/gestures",
                        json={"kind": "drag_rows",
                              "row_ids": [w["rows"][0]["row_id"]], "to_index": 0})
        assert r.status_code == 200
        assert r.json()["statements"] == []
        assert r.json()["script_hash"] == before

    def test_statements_route_mirrors_script(self, client, people_fixtures):
        nid = make_notebook(client, people_fixtures)
        client.post(f"/notebooks/{nid}/pages/p1/statements",
                    json={"text": "ADD COLUMN C"})
        script = client.get(f"/notebooks/{nid}/pages/p1/script").json()
        stmts = client.get(f"/notebooks/{nid}/pages/p1/statements").json()
        assert stmts["statements"] == script["statements"]
        assert stmts["script_hash"] == script["script_hash"]

    def test_invalid_gesture_422(self, client, people_fixtures):
        nid = make_notebook(client, people_fixtures)
        r = client.post(f"/notebooks/{nid}/pages/p1/gestures",
                        json={"kind": "no_such"})
        assert r.status_code == 422

    def test_executor_error_409_with_code(self, client, people_fixtures):
        nid = make_notebook(client, people_fixtures)
        r = client.post(f"/notebooks/{nid}/pages/p1/statements",
                        json={"text": "UPDATE missing = 1"})
        assert r.status_code == 409
        assert r.json()["code"] == "UNKNOWN_COLUMN"

    def test_unknown_notebook_and_page_404(self, client, people_fixtures):
        assert client.get("/notebooks/nope/pages/p/script").status_code == 404
        nid = make_notebook(client, people_fixtures)
        assert client.get(f"/notebooks/{nid}/pages/nope/script").status_code == 404


class TestWindow:
    def test_full_window_matches_running_total_sheet(self, client, fig6a_notebook):
        r = client.get(f"/notebooks/{fig6a_notebook}/pages/p1/window")
        w = r.json()
        assert (w["total_cols"], w["total_rows"]) == (3, 4)
        assert [c["name"] for c in w["columns"]] == ["A", "B", "C"]
        c_col = [row[2] for row in w["cells"]]
        assert [c["value"] for c in c_col] == [10, 14, 22, 31]
        assert [c["formula"] for c in c_col] == \
            ["=B1", "=B2+C1", "=B3+C2", "=B4+C3"]

    def test_zero_width_window_headers_only(self, client, fig6a_notebook):
        r = client.get(f"/notebooks/{fig6a_notebook}/pages/p1/window",
                       params={"cols": "0:3", "rows": "0:0"})
        w = r.json()
        assert w["cells"] == []
        assert len(w["columns"]) == 3

    def test_out_of_range_clamped(self, client, fig6a_notebook):
        r = client.get(f"/notebooks/{fig6a_notebook}/pages/p1/window",
                       params={"cols": "2:99", "rows": "3:99"})
        w = r.json()
        assert w["col_start"] == 2 and w["row_start"] == 3
        assert len(w["columns"]) == 1 and len(w["rows"]) == 1

    def test_windows_tile_without_gaps_or_overlaps(self, client, fig6a_notebook):
        seen: dict[tuple[int, int], int] = {}
        for c0, c1 in ((0, 2), (2, 3)):
            for r0, r1 in ((0, 1), (1, 4)):
                w = client.get(f"/notebooks/{fig6a_notebook}/pages/p1/window",
                               params={"cols": f"{c0}:{c1}",
                                       "rows": f"{r0}:{r1}"}).json()
                for i, row in enumerate(w["rows"]):
                    for j, col in enumerate(w["columns"]):
                        key = (col["index"], row["index"])
                        seen[key] = seen.get(key, 0) + 1
                        assert w["cells"][i][j]["cell_id"] > 0
        assert set(seen.keys()) == {(c, r) for c in range(3) for r in range(4)}
        assert all(n == 1 for n in seen.values())

    def test_reads_do_not_mutate(self, client, fig6a_notebook):
        h0 = client.get(f"/notebooks/{fig6a_notebook}/pages/p1/script").json()
        client.get(f"/notebooks/{fig6a_notebook}/pages/p1/window")
        client.get(f"/notebooks/{fig6a_notebook}/pages/p1/suggestions")
        h1 = client.get(f"/notebooks/{fig6a_notebook}/pages/p1/script").json()
        assert (h0["script_hash"], h0["output_hash"], h0["seq"]) == \
            (h1["script_hash"], h1["output_hash"], h1["seq"])

    def test_window_formulas_round_trip_through_the_parser(self, client,
                                                           fig6a_notebook):
        from vizual.formula import parse_formula, render_formula
        w = client.get(f"/notebooks/{fig6a_notebook}/pages/p1/window").json()
        for ri, row in enumerate(w["cells"]):
            for ci, cell in enumerate(row):
                host = (w["col_start"] + ci, w["row_start"] + ri)
                ast = parse_formula(cell["formula"], host=host)
                assert render_formula(ast, host=host) == cell["formula"]


class TestSuggestionsAndSql:
    def test_reroll_suggestion_accept_idempotent(self, client):
        fixtures = {"t.csv": "A,B\n" + "".join(f"x{i},{i}\n" for i in range(12))}
        nid = make_notebook(client, fixtures)
        for i in range(1, 11):
            client.post(f"/notebooks/{nid}/pages/p1/statements",
                        json={"text": f"UPDATE A = 3 WHERE ROWID = {i}"})
        r = client.get(f"/notebooks/{nid}/pages/p1/suggestions")
        suggestions = r.json()["suggestions"]
        rerolls = [s for s in suggestions if s["kind"] == "REROLL"]
        assert len(rerolls) == 1
        assert rerolls[0]["verified"] is True
        assert rerolls[0]["replacement"] == ["UPDATE A = 3 WHERE ROWID BETWEEN 1 AND 10"]
        r = client.post(f"/notebooks/{nid}/pages/p1/suggestions",
                        json={"id": rerolls[0]["id"]})
        assert r.status_code == 200
        assert len(r.json()["statements"]) == 1
        again = client.get(f"/notebooks/{nid}/pages/p1/suggestions").json()
        assert [s for s in again["suggestions"] if s["kind"] == "REROLL"] == []

    def test_stale_suggestion_conflicts(self, client):
        fixtures = {"t.csv": "A,B\n" + "".join(f"x{i},{i}\n" for i in range(12))}
        nid = make_notebook(client, fixtures)
        for i in range(1, 4):
            client.post(f"/notebooks/{nid}/pages/p1/statements",
                        json={"text": f"UPDATE A = 3 WHERE ROWID = {i}"})
        suggestion = client.get(
            f"/notebooks/{nid}/pages/p1/suggestions").json()["suggestions"][0]
        # extending the run changes the collapsed form, retiring the old id
        client.post(f"/notebooks/{nid}/pages/p1/statements",
                    json={"text": "UPDATE A = 3 WHERE ROWID = 4"})
        r = client.post(f"/notebooks/{nid}/pages/p1/suggestions",
                        json={"id": suggestion["id"]})
        assert r.status_code == 409
        assert r.json()["detail"]["code"] == "STALE_SUGGESTION"

    def test_export_sql_matches_compiled_listing(self, client, lineitem_fixtures,
                                                 fig2_script_text):
        nid = make_notebook(client, lineitem_fixtures)
        for text in ["ADD COLUMN total", "UPDATE total = price * (1 - discount)",
                     "UPDATE total = 1020 WHERE ID = 90",
                     "INSERT ROW (name = 'table', price = 10, discount = 0.05, total = 9.5)"]:
            r = client.post(f"/notebooks/{nid}/pages/p1/statements", json={"text": text})
            assert r.status_code == 200
        r = client.get(f"/notebooks/{nid}/pages/p1/sql")
        assert r.status_code == 200
        assert "CASE WHEN ID = 90 THEN 1020 ELSE" in r.json()["sql"]
        assert r.json()["manifest"][0]["path"] == "lineitem.csv"


class TestBranches:
    def test_branch_flow(self, client, people_fixtures):
        nid = make_notebook(client, people_fixtures)
        client.post(f"/notebooks/{nid}/pages/p1/statements",
                    json={"text": "ADD COLUMN C"})
        r = client.post(f"/notebooks/{nid}/branches",
                        json={"name": "fork", "page": "p1", "statement_index": 0})
        assert r.status_code == 200
        assert sorted(r.json()["branches"]) == ["fork", "main"]
        w = client.get(f"/notebooks/{nid}/pages/p1/window",
                       params={"branch": "fork"}).json()
        assert w["total_cols"] == 2  # fork predates the ADD COLUMN
        r = client.post(f"/notebooks/{nid}/branches",
                        json={"name": "fork", "page": "p1", "statement_index": 0})
        assert r.status_code == 409
