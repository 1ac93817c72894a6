from __future__ import annotations

import random
from dataclasses import replace

import pytest

from oracles import (
    full_substitution_check,
    random_dag_sheet,
    sheet_from_grid,
    substitution_value,
    values_agree,
)
from vizual.engine import StabilityMode, validate_state
from vizual.executor import (
    CopyPaste,
    DeleteRows,
    DragRows,
    EditCell,
    FillRange,
    FilterGesture,
    InsertColumnAt,
    InsertRowAt,
    Rect,
    TypecastRegion,
    apply,
    apply_script,
    apply_transform,
    cut_paste,
    gesture_to_statements,
    load_csv,
    permuted_rows_coords,
)
from vizual.formula import render_formula
from vizual.lang import parse_region, parse_script, parse_statement, render_statement
from vizual.model import Diagnostic, ErrorKind, ErrorValue, UnknownColumnError, UnknownRowError


def formulas_at(state, col):
    return [render_formula(state.cell_at(col, r).formula, host=(col, r),
                           coords=state.coords)
            for r in range(state.coords.n_rows)]


def column_values(state, col):
    return [state.value_at(col, r) for r in range(state.coords.n_rows)]


class TestLoadCsv:
    def test_small_file(self):
        fx = {"f.csv": "name,qty\napple,3\npear,5\nfig,1\nplum,2\n"}
        state = load_csv("f.csv", fixtures=fx)
        assert state.column_names == ["name", "qty"]
        assert state.coords.n_rows == 4
        assert validate_state(state) == []
        assert all(state.cells[c].formula == replace(
            state.cells[c].formula, value=state.cells[c].value)
            for c in state.cells)  # literal formulas carry their own value

    def test_type_inference(self):
        fx = {"f.csv": "price,flag,label,empty\n10,true,x1,\n2.5,false,07,\n"}
        state = load_csv("f.csv", fixtures=fx)
        assert column_values(state, 0) == [10, 2.5]
        assert column_values(state, 1) == [True, False]
        assert column_values(state, 2) == ["x1", 7]
        assert column_values(state, 3) == [None, None]

    def test_inference_off_keeps_text(self):
        fx = {"f.csv": "a\n10\n"}
        state = load_csv("f.csv", fixtures=fx, infer_types=False)
        assert column_values(state, 0) == ["10"]

    def test_no_header_names_positional(self):
        fx = {"f.csv": "1,2\n3,4\n"}
        state = load_csv("f.csv", fixtures=fx, header=False)
        assert state.column_names == ["A", "B"]
        assert state.coords.n_rows == 2

    def test_ragged_rows_padded_with_diagnostic(self):
        fx = {"f.csv": "a,b,c\n1,2\n4,5,6,7\n"}
        diagnostics: list[Diagnostic] = []
        state = load_csv("f.csv", fixtures=fx, diagnostics=diagnostics)
        assert state.value_at(2, 0) is None
        assert state.value_at(2, 1) == 6
        assert len(diagnostics) == 2
        assert all("RAGGED_ROW" in d.message for d in diagnostics)

    def test_row_tags_start_at_one(self):
        fx = {"f.csv": "a\n1\n2\n3\n"}
        state = load_csv("f.csv", fixtures=fx)
        assert [r.n for r in state.coords.rows] == [1, 2, 3]

    def test_quoted_fields_with_commas_and_newlines(self):
        fx = {"f.csv": 'name,note\n"Smith, Jane","line one\nline two"\nplain,"say ""hi"""\n'}
        state = load_csv("f.csv", fixtures=fx)
        assert column_values(state, 0) == ["Smith, Jane", "plain"]
        assert column_values(state, 1) == ["line one\nline two", 'say "hi"']


class TestFig2Replay:
    def test_totals_and_inserted_row(self, lineitem_fixtures, fig2_script_text):
        script = parse_script(fig2_script_text)
        state = apply_script(script, fixtures=lineitem_fixtures)
        assert state.column_names == ["ID", "name", "price", "discount", "total"]
        totals = column_values(state, 4)
        assert totals == [90.0, 1020, 40.0, 9.5]
        assert state.value_at(0, 3) is None  # inserted row has no ID
        assert state.value_at(1, 3) == "table"
        assert validate_state(state) == []

    def test_singleton_update_formula_is_literal(self, lineitem_fixtures, fig2_script_text):
        state = apply_script(parse_script(fig2_script_text), fixtures=lineitem_fixtures)
        cell = state.cell_at(4, 1)
        assert render_formula(cell.formula) == "1020"

    def test_replay_determinism(self, lineitem_fixtures, fig2_script_text):
        from vizual.notebook import state_hash
        script = parse_script(fig2_script_text)
        h1 = state_hash(apply_script(script, fixtures=lineitem_fixtures))
        h2 = state_hash(apply_script(script, fixtures=lineitem_fixtures))
        assert h1 == h2


class TestStructuralStatements:
    def test_swap_rows_matches_figure(self, fig6a_state):
        rows = fig6a_state.coords.rows
        state = apply(fig6a_state, parse_statement(f"REORDER ROWS ({rows[2].n}, {rows[1].n})"))
        assert column_values(state, 0) == ["Alice", "Carol", "Bob", "Dave"]
        assert column_values(state, 2) == [10, 22, 14, 31]
        assert formulas_at(state, 2) == ["=B1", "=B2+C3", "=B3+C1", "=B4+C2"]
        assert validate_state(state) == []

    def test_sort_desc_matches_figure(self, fig6a_state):
        state = apply(fig6a_state, parse_statement("SORT ROWS B DESC"))
        assert column_values(state, 0) == ["Alice", "Dave", "Carol", "Bob"]
        assert column_values(state, 2) == [10, 19, 27, 31]
        assert formulas_at(state, 2) == ["=B1", "=B2+C1", "=B3+C2", "=B4+C3"]
        assert validate_state(state) == []

    def test_sort_is_stable_within_ties_and_orders_classes(self):
        fx = {"f.csv": "k,tag\n2,a\n1,b\nx,c\n1,d\n,e\n2,f\n"}
        state = load_csv("f.csv", fixtures=fx)
        out = apply(state, parse_statement("SORT ROWS k"))
        # numbers first (ties in file order), strings next, nulls last
        assert column_values(out, 1) == ["b", "d", "a", "f", "c", "e"]
        out = apply(state, parse_statement("SORT ROWS k DESC"))
        # descending flips within classes only; nulls still last
        assert column_values(out, 1) == ["a", "f", "b", "d", "c", "e"]

    def test_insert_row_at_value_stable(self, fig6a_state):
        state = apply(fig6a_state, parse_statement("INSERT ROW (A = 'Eve', B = 2) AT 1"))
        assert column_values(state, 0) == ["Alice", "Eve", "Bob", "Carol", "Dave"]
        # every pre-existing cell keeps its value
        for cid, cell in fig6a_state.cells.items():
            assert values_agree(state.cells[cid].value, cell.value)
        # the chain formulas skip over the inserted row
        assert formulas_at(state, 2) == ["=B1", None, "=B3+C1", "=B4+C3", "=B5+C4"][0:1] \
            + [render_formula(state.cell_at(2, 1).formula, host=(2, 1), coords=state.coords)] \
            + ["=B3+C1", "=B4+C3", "=B5+C4"]
        assert validate_state(state) == []

    def test_delete_row_dangles_references(self, fig6a_state):
        rows = fig6a_state.coords.rows
        state = apply(fig6a_state, parse_statement(f"DELETE WHERE ROWID = {rows[0].n}"))
        assert column_values(state, 0) == ["Bob", "Carol", "Dave"]
        v = state.value_at(2, 0)  # Bob's C referenced Alice's C
        assert isinstance(v, ErrorValue) and v.kind == ErrorKind.REF_DANGLING
        assert render_formula(state.cell_at(2, 0).formula, host=(2, 0),
                              coords=state.coords) == "=B1+#REF!"
        assert validate_state(state) == []

    def test_add_remove_column(self, fig6a_state):
        state = apply(fig6a_state, parse_statement("ADD COLUMN note AT 0"))
        assert state.column_names == ["note", "A", "B", "C"]
        # C formulas re-rendered one column to the right, values unchanged
        assert formulas_at(state, 3) == ["=C1", "=C2+D1", "=C3+D2", "=C4+D3"]
        assert column_values(state, 3) == [10, 14, 22, 31]
        state = apply(state, parse_statement("REMOVE COLUMN note"))
        assert state.column_names == ["A", "B", "C"]
        assert formulas_at(state, 2) == ["=B1", "=B2+C1", "=B3+C2", "=B4+C3"]
        assert validate_state(state) == []

    def test_remove_referenced_column_dangles(self, fig6a_state):
        state = apply(fig6a_state, parse_statement("REMOVE COLUMN B"))
        for r in range(4):
            v = state.value_at(1, r)
            assert isinstance(v, ErrorValue) and v.kind == ErrorKind.REF_DANGLING
        assert validate_state(state) == []

    def test_reorder_columns(self, fig6a_state):
        state = apply(fig6a_state, parse_statement("REORDER COLUMNS (C, A, B)"))
        assert state.column_names == ["C", "A", "B"]
        assert column_values(state, 0) == [10, 14, 22, 31]
        assert formulas_at(state, 0) == ["=C1", "=C2+A1", "=C3+A2", "=C4+A3"]
        assert validate_state(state) == []

    def test_update_with_where(self, fig6a_state):
        state = apply(fig6a_state, parse_statement("UPDATE B = 100 WHERE A = 'Bob'"))
        assert column_values(state, 1) == [10, 100, 8, 9]
        assert column_values(state, 2) == [10, 110, 118, 127]
        assert validate_state(state) == []

    def test_region_update_with_cast(self, fig6a_state):
        state = apply(fig6a_state, parse_statement("UPDATE [B1:B4] = CAST(VALUE, string)"))
        assert column_values(state, 1) == ["10", "4", "8", "9"]
        # C1 is a bare reference (now a string); the summing cells error
        assert state.value_at(2, 0) == "10"
        assert all(isinstance(v, ErrorValue) and v.kind == ErrorKind.TYPE
                   for v in column_values(state, 2)[1:])
        # the cast wraps the prior formula, so provenance stays live
        assert render_formula(state.cell_at(1, 0).formula) == "=CAST(10, string)"
        assert validate_state(state) == []

    def test_region_update_with_predicate_and_where(self, fig6a_state):
        # region predicate picks B cells over 5; WHERE then drops Dave's row
        state = apply(fig6a_state, parse_statement(
            "UPDATE [B1:B4 WHERE VALUE > 5] = 0 WHERE A <> 'Dave'"))
        assert column_values(state, 1) == [0, 4, 0, 9]
        assert validate_state(state) == []

    def test_delete_every_row(self, fig6a_state):
        state = apply(fig6a_state, parse_statement("DELETE WHERE TRUE"))
        assert state.coords.n_rows == 0
        assert state.column_names == ["A", "B", "C"]
        assert validate_state(state) == []

    def test_unknown_column_and_rowid_errors(self, fig6a_state):
        with pytest.raises(UnknownColumnError):
            apply(fig6a_state, parse_statement("UPDATE nope = 1"))
        with pytest.raises(UnknownRowError):
            apply(fig6a_state, parse_statement("REORDER ROWS (999)"))

    def test_cycle_statements_keep_state_representable(self):
        state = sheet_from_grid(["A", "B"], [["1", "2"]])
        state = apply(state, parse_statement("UPDATE [A1] = B1"))
        state = apply(state, parse_statement("UPDATE [B1] = A1"))
        from vizual.engine import detect_cycles
        assert len(detect_cycles(state)) == 1
        assert all(isinstance(c.value, ErrorValue) and c.value.kind == ErrorKind.CYCLE
                   for c in state.cells.values())
        assert validate_state(state) == []


class TestApplyTransform:
    def test_identity_noop(self, fig6a_state):
        for mode in StabilityMode:
            out = apply_transform(fig6a_state, fig6a_state.coords, mode)
            assert {c: out.cells[c].value for c in out.cells} == \
                {c: fig6a_state.cells[c].value for c in fig6a_state.cells}

    def test_random_row_permutations_value_stable(self):
        rng = random.Random(5)
        for _ in range(30):
            state = random_dag_sheet(rng, 5, 5)
            rows = list(state.coords.rows)
            rng.shuffle(rows)
            out = apply_transform(state, permuted_rows_coords(state.coords, rows),
                                  StabilityMode.VALUE_STABLE)
            for cid, cell in state.cells.items():
                assert values_agree(out.cells[cid].value, cell.value)
            assert validate_state(out) == []

    def test_random_row_permutations_formula_stable(self):
        rng = random.Random(6)
        for _ in range(30):
            state = random_dag_sheet(rng, 5, 5)
            rows = list(state.coords.rows)
            rng.shuffle(rows)
            out = apply_transform(state, permuted_rows_coords(state.coords, rows),
                                  StabilityMode.FORMULA_STABLE)
            from vizual.formula import relative_normal_form
            for cid, cell in state.cells.items():
                assert relative_normal_form(out.cells[cid].formula) == \
                    relative_normal_form(cell.formula)
            # values equal a fresh evaluation via the substitution oracle
            assert full_substitution_check(out) == []


class TestCutPaste:
    def test_value_stable_move_keeps_values_by_identity(self, fig6a_state):
        # move B1:B2 onto B3:B4; moved cells keep their values
        moved = [fig6a_state.coords.cell_at(1, 0), fig6a_state.coords.cell_at(1, 1)]
        out = cut_paste(fig6a_state, Rect(1, 0, 1, 1), (1, 2))
        assert [out.cells[c].value for c in moved] == [10, 4]
        assert out.coords.position_of(moved[0]) == (1, 2)
        # vacated source positions hold fresh empty cells
        assert out.value_at(1, 0) is None
        assert validate_state(out) == []

    def test_formula_stable_mode_reinterprets(self, fig6a_state):
        # Numbers-style policy: moved formulas re-read relative to the target
        out = cut_paste(fig6a_state, Rect(2, 1, 2, 1), (2, 3),
                        mode=StabilityMode.FORMULA_STABLE)
        moved = fig6a_state.coords.cell_at(2, 1)
        assert render_formula(out.cells[moved].formula, host=(2, 3),
                              coords=out.coords) == "=B4+C3"
        assert validate_state(out) == []


class TestGestures:
    def test_edit_cell_emits_rowid_singleton(self, lineitem_fixtures, fig2_script_text):
        state = apply_script(parse_script(fig2_script_text), fixtures=lineitem_fixtures)
        stmts = gesture_to_statements(EditCell(4, 1, "1020"), state)
        assert len(stmts) == 1
        assert render_statement(stmts[0]) == "UPDATE total = 1020 WHERE ROWID = 2"

    def test_paste_single_over_column_matches_figure(self, fig6a_state):
        stmts = gesture_to_statements(
            CopyPaste(Rect(2, 1, 2, 1), Rect(2, 1, 2, 3)), fig6a_state)
        assert [render_statement(s) for s in stmts] == [
            "UPDATE [C2] = B2+C1",
            "UPDATE [C3] = B3+C2",
            "UPDATE [C4] = B4+C3",
        ]
        groups = {s.gesture_group for s in stmts}
        assert len(groups) == 1 and None not in groups

    def test_tiling_matches_per_cell_oracle(self):
        state = sheet_from_grid(
            ["A", "B"], [["1", "=A1*2"], ["2", "=A2*3"], ["3", ""],
                         ["4", ""], ["5", ""], ["6", ""]])
        # 1x2 source tiled over 1x6 target: sources repeat three times
        stmts = gesture_to_statements(
            FillRange(Rect(1, 0, 1, 1), Rect(1, 0, 1, 5)), state)
        assert len(stmts) == 6
        out = state
        for s in stmts:
            out = apply(out, s)
        for j in range(6):
            src_row = j % 2
            src = state.cell_at(1, src_row)
            expected = substitution_value(out, out.coords.cell_at(1, j))
            assert values_agree(out.value_at(1, j), expected)
            from vizual.formula import relative_normal_form
            assert relative_normal_form(out.cell_at(1, j).formula) == \
                relative_normal_form(src.formula)

    def test_typecast_gesture(self, fig6a_state):
        stmts = gesture_to_statements(
            TypecastRegion(parse_region("[B1:B4]"), "float"), fig6a_state)
        assert render_statement(stmts[0]) == "UPDATE [B1:B4] = CAST(VALUE, float)"
        out = apply(fig6a_state, stmts[0])
        assert column_values(out, 1) == [10.0, 4.0, 8.0, 9.0]

    def test_drag_rows_minimal_list(self, fig6a_state):
        rows = fig6a_state.coords.rows
        stmts = gesture_to_statements(DragRows((rows[2].n,), 1), fig6a_state)
        assert render_statement(stmts[0]) == f"REORDER ROWS ({rows[2].n}, {rows[1].n})"
        out = apply(fig6a_state, stmts[0])
        assert column_values(out, 0) == ["Alice", "Carol", "Bob", "Dave"]

    def test_insert_gestures(self, fig6a_state):
        stmts = gesture_to_statements(InsertRowAt(1, before=False), fig6a_state)
        assert render_statement(stmts[0]) == "INSERT ROW () AT 2"
        stmts = gesture_to_statements(InsertColumnAt(2, before=True), fig6a_state)
        assert render_statement(stmts[0]) == "ADD COLUMN D AT 2"

    def test_filter_gesture_emits_delete_not(self, fig6a_state):
        stmts = gesture_to_statements(FilterGesture("B > 5"), fig6a_state)
        assert render_statement(stmts[0]) == "DELETE WHERE NOT B > 5"
        out = apply(fig6a_state, stmts[0])
        assert column_values(out, 0) == ["Alice", "Carol", "Dave"]

    def test_delete_rows_gesture(self, fig6a_state):
        rows = fig6a_state.coords.rows
        stmts = gesture_to_statements(DeleteRows((rows[1].n, rows[2].n)), fig6a_state)
        assert render_statement(stmts[0]) == \
            f"DELETE WHERE ROWID IN ({rows[1].n}, {rows[2].n})"

    def test_empty_target_raises(self, fig6a_state):
        from vizual.executor import EmptyTargetError
        with pytest.raises(EmptyTargetError):
            gesture_to_statements(EditCell(99, 99, "1"), fig6a_state)


class TestSingletonPersistence:
    def test_update_keeps_targeting_row_through_structure(self):
        fx = {"f.csv": "name,qty\na,1\nb,2\nc,3\nd,4\ne,5\n"}
        state = load_csv("f.csv", fixtures=fx)
        target_tag = state.coords.rows[3].n
        script_text = (
            "LOAD 'f.csv';\n"
            f"UPDATE qty = 99 WHERE ROWID = {target_tag};\n"
            "INSERT ROW (name = 'x', qty = 0) AT 2;\n"
            "SORT ROWS qty DESC;"
        )
        for _ in range(3):
            out = apply_script(parse_script(script_text), fixtures=fx)
            anchor = None
            for (col_id, row_id), cid in out.coords.grid.items():
                if row_id.n == target_tag and out.coords.col_name(col_id) == "qty":
                    anchor = cid
            assert anchor is not None
            assert out.cells[anchor].value == 99
