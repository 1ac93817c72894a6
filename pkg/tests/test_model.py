from __future__ import annotations

import random

import pytest

from oracles import random_dag_sheet, sheet_from_grid, values_agree
from vizual.engine import evaluate, region_resolve, validate_state
from vizual.formula import parse_expression
from vizual.model import (
    CoordinateSystem,
    DuplicateColumnError,
    ErrorKind,
    IdAllocator,
    ModelError,
    Region,
    new_sheet,
    column_letter,
    letter_to_index,
)
from vizual.values import is_true


class TestNewSheet:
    def test_two_columns_zero_rows(self):
        state = new_sheet(["name", "price"])
        assert state.column_names == ["name", "price"]
        assert state.coords.n_rows == 0
        assert validate_state(state) == []

    def test_empty_sheet_is_valid(self):
        state = new_sheet([])
        assert state.column_names == []
        assert validate_state(state) == []

    def test_duplicate_column_rejected(self):
        with pytest.raises(DuplicateColumnError):
            new_sheet(["a", "a"])


class TestIdentifiers:
    def test_allocation_strictly_increases(self):
        alloc = IdAllocator()
        tags = [alloc.cell().n, alloc.row().n, alloc.col().n, alloc.cell().n]
        assert tags == sorted(tags)
        assert len(set(tags)) == len(tags)

    def test_column_letters(self):
        assert [column_letter(i) for i in (0, 1, 25, 26, 27, 701, 702)] == \
            ["A", "B", "Z", "AA", "AB", "ZZ", "AAA"]
        for i in range(0, 800, 7):
            assert letter_to_index(column_letter(i)) == i


class TestCoordinateSystem:
    def test_one_to_one_enforced(self, fig6a_state):
        coords = fig6a_state.coords
        cid = coords.cell_at(0, 0)
        grid = dict(coords.grid)
        # anchor the same cell at a second position
        grid[(coords.columns[1][0], coords.rows[1])] = cid
        with pytest.raises(ModelError):
            CoordinateSystem(columns=coords.columns, rows=coords.rows, grid=grid)

    def test_positions_round_trip(self, fig6a_state):
        coords = fig6a_state.coords
        for ci in range(coords.n_cols):
            for ri in range(coords.n_rows):
                cid = coords.cell_at(ci, ri)
                assert cid is not None
                assert coords.position_of(cid) == (ci, ri)

    def test_bijection_over_random_sheets(self):
        rng = random.Random(7)
        for _ in range(25):
            state = random_dag_sheet(rng, 5, 5)
            positions = [state.coords.position_of(cid) for cid in state.cells]
            assert len(set(positions)) == len(positions)
            assert None not in positions


class TestRegionResolve:
    def test_universal_region(self):
        state = sheet_from_grid(["A", "B"], [["1", "2"], ["3", "4"]])
        assert region_resolve(state, Region()) == set(state.cells.keys())

    def test_value_predicate_on_fig6a(self, fig6a_state):
        # B column, all four rows, values above 8: only 10 and 9 qualify
        coords = fig6a_state.coords
        region = Region(
            columns=frozenset({coords.columns[1][0]}),
            rows=frozenset(coords.rows),
            predicate=parse_expression("VALUE > 8", allow_unbound=True))
        got = region_resolve(fig6a_state, region)
        values = sorted(fig6a_state.cells[c].value for c in got)
        assert values == [9, 10]
        assert {coords.position_of(c) for c in got} == {(1, 0), (1, 3)}

    def test_matches_brute_force_on_random_sheets(self):
        rng = random.Random(11)
        for _ in range(20):
            state = random_dag_sheet(rng, 5, 5)
            coords = state.coords
            cols = frozenset(rng.sample([c for c, _ in coords.columns],
                                        rng.randint(1, coords.n_cols)))
            rows = frozenset(rng.sample(list(coords.rows),
                                        rng.randint(1, coords.n_rows)))
            predicate = parse_expression(
                rng.choice(["VALUE > 0", "VALUE <> NULL", "VALUE < 10",
                            "VALUE = 3", "NOT (VALUE < 0)"]),
                allow_unbound=True)
            region = Region(cols, rows, predicate)
            got = region_resolve(state, region)
            expected = set()
            for (col_id, row_id), cid in coords.grid.items():
                if col_id in cols and row_id in rows and is_true(
                        evaluate(predicate, state, coords.position_of(cid))):
                    expected.add(cid)
            assert got == expected

    def test_predicate_error_excludes_cell(self):
        state = sheet_from_grid(["A"], [["'text'"], ["3"]])
        region = Region(predicate=parse_expression("VALUE > 0", allow_unbound=True))
        diagnostics = []
        got = region_resolve(state, region, diagnostics)
        assert len(got) == 1  # the text cell errors out of the region
        assert len(diagnostics) == 1


class TestValidateState:
    def test_fig6a_valid(self, fig6a_state):
        assert validate_state(fig6a_state) == []

    def test_tampered_value_reported(self, fig6a_state):
        from dataclasses import replace
        coords = fig6a_state.coords
        cid = coords.cell_at(2, 1)  # the 14 cell
        cells = dict(fig6a_state.cells)
        cells[cid] = replace(cells[cid], value=0)
        bad = replace(fig6a_state, cells=cells)
        violations = validate_state(bad)
        assert len(violations) == 1
        assert violations[0].cell == cid
        assert violations[0].expected == 14
        assert violations[0].stored == 0

    def test_self_reference_is_cycle_violation(self):
        state = sheet_from_grid(["A"], [["5"]])
        from dataclasses import replace
        from vizual.formula import parse_formula
        cid = state.coords.cell_at(0, 0)
        cells = dict(state.cells)
        cells[cid] = replace(cells[cid], formula=parse_formula("=A1", host=(0, 0)))
        bad = replace(state, cells=cells)
        violations = validate_state(bad)
        assert len(violations) == 1
        assert violations[0].expected.kind == ErrorKind.CYCLE


def test_values_agree_helper_distinguishes_bool_from_int():
    assert values_agree(1, 1.0)
    assert not values_agree(True, 1)
    assert not values_agree(False, 0)
