"""Hypothesis property tests for the invariants that hold for *all*
inputs rather than chosen examples: scalar semantics, ordering, casts,
and the coordinate bijection under arbitrary permutations."""

from __future__ import annotations

import functools

from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import sheet_from_grid
from vizual import values
from vizual.engine import StabilityMode, validate_state
from vizual.executor import apply_transform, permuted_grid, permuted_rows_coords
from vizual.model import ErrorKind, ErrorValue

scalars = st.one_of(
    st.none(),
    st.integers(min_value=-10**6, max_value=10**6),
    st.floats(allow_nan=False, allow_infinity=False, width=32),
    st.text(max_size=8),
    st.booleans(),
)

errors = st.builds(ErrorValue, st.sampled_from(list(ErrorKind)))
anything = st.one_of(scalars, errors)


class TestValueSemantics:
    @given(anything, anything, st.sampled_from(["+", "-", "*", "/"]))
    def test_errors_propagate_first_wins(self, a, b, op):
        out = values.arith(op, a, b)
        if isinstance(a, ErrorValue):
            assert out == a
        elif isinstance(b, ErrorValue):
            assert out == b

    @given(scalars, scalars, st.sampled_from(["+", "-", "*"]))
    def test_null_propagates_through_arithmetic(self, a, b, op):
        if a is None or b is None:
            assert values.arith(op, a, b) is None

    @given(st.integers(-100, 100), st.integers(-100, 100))
    def test_integer_arithmetic_is_exact(self, a, b):
        assert values.arith("+", a, b) == a + b
        assert values.arith("*", a, b) == a * b

    @given(anything, anything)
    def test_equality_comparison_never_raises(self, a, b):
        out = values.compare("=", a, b)
        assert out in (True, False) or out is None or isinstance(out, ErrorValue)

    @given(scalars)
    def test_cast_to_string_round_trips_numbers(self, v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return
        text = values.cast(v, "string")
        back = values.cast(text, "float")
        assert back == float(v)


class TestOrdering:
    @given(st.lists(anything, min_size=2, max_size=6))
    def test_order_cmp_is_a_total_preorder(self, vals):
        cmp = values.order_cmp
        for a in vals:
            assert cmp(a, a) == 0
            for b in vals:
                assert cmp(a, b) == -cmp(b, a)
                for c in vals:
                    if cmp(a, b) <= 0 and cmp(b, c) <= 0:
                        assert cmp(a, c) <= 0 or (cmp(a, b) == 0 and cmp(b, c) == 0)

    @given(st.lists(anything, min_size=1, max_size=8))
    def test_nulls_and_errors_sort_last_both_directions(self, vals):
        for desc in (False, True):
            ordered = sorted(vals, key=functools.cmp_to_key(
                lambda a, b: values.order_cmp(a, b, desc)))
            seen_terminal = False
            for v in ordered:
                is_terminal = v is None or isinstance(v, ErrorValue)
                if seen_terminal:
                    assert is_terminal
                seen_terminal = seen_terminal or is_terminal


class TestCoordinateBijection:
    @given(st.permutations(list(range(4))), st.permutations(list(range(3))))
    @settings(max_examples=25, deadline=None)
    def test_arbitrary_grid_permutations_stay_bijective_and_valid(
            self, row_perm, col_perm):
        state = sheet_from_grid(
            ["p", "q", "r"],
            [["1", "=A1+1", "3"],
             ["=B1", "5", "=A2"],
             ["7", "=C2", "9"],
             ["=A3", "11", "=B4"]])
        mapping = {}
        for c in range(3):
            for r in range(4):
                mapping[(c, r)] = (col_perm[c], row_perm[r])
        coords = permuted_grid(state.coords, mapping)
        out = apply_transform(state, coords, StabilityMode.VALUE_STABLE)
        positions = [out.coords.position_of(cid) for cid in out.cells]
        assert len(set(positions)) == len(positions)
        assert validate_state(out) == []
        for cid, cell in state.cells.items():
            from oracles import values_agree
            assert values_agree(out.cells[cid].value, cell.value)

    @given(st.permutations(list(range(4))))
    @settings(max_examples=25, deadline=None)
    def test_row_permutations_formula_stable_recompute_valid(self, row_perm):
        state = sheet_from_grid(
            ["a", "b"],
            [["1", "=A1*2"], ["2", "=A2+B1"], ["3", "=B2"], ["4", "=A4"]])
        rows = [state.coords.rows[i] for i in row_perm]
        coords = permuted_rows_coords(state.coords, rows)
        out = apply_transform(state, coords, StabilityMode.FORMULA_STABLE)
        assert validate_state(out) == []
        for cid, cell in state.cells.items():
            assert out.cells[cid].formula == cell.formula
