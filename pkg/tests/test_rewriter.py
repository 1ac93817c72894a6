from __future__ import annotations

import random

import pytest

from vizual import executor, lang
from vizual.formula import Binary, ColumnRef, If, InList, Lit
from vizual.lang import AddColumn, parse_script, render_statement
from vizual.rewriter import (
    NoCandidateError,
    RewriteKind,
    Verdict,
    apply_suggestion,
    equivalence_check,
    fuse,
    generalize,
    readability_cost,
    reroll,
    suggest_rewrites,
)


def ten_updates_script(n: int = 10, value: str = "3") -> lang.Script:
    text = "LOAD 't.csv';\n" + "".join(
        f"UPDATE A = {value} WHERE ROWID = {i};\n" for i in range(1, n + 1))
    return parse_script(text)


@pytest.fixture
def twelve_row_fixture() -> dict[str, str]:
    return {"t.csv": "A,B\n" + "".join(f"x{i},{i * 2}\n" for i in range(12))}


class TestReroll:
    def test_ten_updates_collapse_to_between(self, twelve_row_fixture):
        script = ten_updates_script()
        suggestions = reroll(script)
        assert len(suggestions) == 1
        s = suggestions[0]
        assert s.kind == RewriteKind.REROLL
        assert s.indices == tuple(range(10))
        assert render_statement(s.replacement[0]) == \
            "UPDATE A = 3 WHERE ROWID BETWEEN 1 AND 10"
        rewritten = apply_suggestion(script, s)
        assert len(rewritten.statements) == 1
        assert equivalence_check(script, rewritten,
                                 twelve_row_fixture).verdict == Verdict.EQUIVALENT

    def test_single_statement_no_suggestion(self):
        assert reroll(ten_updates_script(1)) == []

    def test_non_contiguous_ids_collapse_to_in(self):
        text = ("LOAD 't.csv';\n"
                "UPDATE A = 3 WHERE ROWID = 2;\n"
                "UPDATE A = 3 WHERE ROWID = 5;\n"
                "UPDATE A = 3 WHERE ROWID = 9;\n")
        s = reroll(parse_script(text))[0]
        assert isinstance(s.replacement[0].where, InList)

    def test_differing_formulas_not_collapsed(self):
        text = ("LOAD 't.csv';\n"
                "UPDATE A = 3 WHERE ROWID = 1;\n"
                "UPDATE A = 4 WHERE ROWID = 2;\n")
        assert reroll(parse_script(text)) == []

    def test_interleaved_families_collapse_per_run(self, twelve_row_fixture):
        rng = random.Random(3)
        for _ in range(20):
            stmts = []
            for _ in range(rng.randint(4, 10)):
                fam = rng.choice([("A", "3"), ("B", "7")])
                stmts.append(f"UPDATE {fam[0]} = {fam[1]} WHERE ROWID = {rng.randint(1, 9)}")
            script = parse_script("LOAD 't.csv';\n" + ";\n".join(stmts) + ";")
            for s in reroll(script):
                rewritten = apply_suggestion(script, s)
                assert len(rewritten.statements) < len(script.statements)
                verdict = equivalence_check(script, rewritten, twelve_row_fixture)
                assert verdict.verdict == Verdict.EQUIVALENT, verdict.detail

    def test_idempotent(self, twelve_row_fixture):
        script = ten_updates_script()
        rewritten = apply_suggestion(script, reroll(script)[0])
        assert reroll(rewritten) == []

    def test_gesture_grouped_runs_prioritized(self):
        import dataclasses
        script = ten_updates_script(4)
        grouped = lang.Script(script.source, tuple(
            dataclasses.replace(s, gesture_group=9) for s in script.statements))
        s = reroll(grouped)[0]
        assert s.evidence["shared_gesture"] is True


class TestFuse:
    def test_fig2_lines_fuse_to_derived_column(self, lineitem_fixtures, fig2_script_text):
        script = parse_script(fig2_script_text)
        suggestions = fuse(script)
        assert len(suggestions) == 1
        s = suggestions[0]
        assert s.kind == RewriteKind.FUSE
        assert s.indices == (0, 1, 2)  # ADD COLUMN + both updates
        fused = s.replacement[0]
        assert isinstance(fused, AddColumn)
        assert fused.derive == If(Binary("=", ColumnRef("ID"), Lit(90)), Lit(1020),
                                  Binary("*", ColumnRef("price"),
                                         Binary("-", Lit(1), ColumnRef("discount"))))
        rewritten = apply_suggestion(script, s)
        assert equivalence_check(script, rewritten,
                                 lineitem_fixtures).verdict == Verdict.EQUIVALENT

    def test_no_adjacency_no_suggestion(self):
        script = parse_script(
            "LOAD 't.csv'; ADD COLUMN x; DELETE WHERE A = 1; UPDATE x = 2;")
        assert fuse(script) == []

    def test_guarded_updates_fuse_with_self_default(self, twelve_row_fixture):
        script = parse_script(
            "LOAD 't.csv';\n"
            "UPDATE B = 0 WHERE B > 10;\n"
            "UPDATE B = 1 WHERE A = 'x3';\n")
        s = fuse(script)[0]
        rewritten = apply_suggestion(script, s)
        assert len(rewritten.statements) == 1
        assert equivalence_check(script, rewritten,
                                 twelve_row_fixture).verdict == Verdict.EQUIVALENT

    def test_self_referencing_formulas_not_fused(self):
        # UPDATE B = B + 1 stores a self-cycle on the sheet; fusing would
        # substitute the cycle away and change meaning
        script = parse_script(
            "LOAD 't.csv';\nUPDATE B = 1 WHERE B > 6;\nUPDATE B = B + 1 WHERE A = 'x2';")
        assert fuse(script) == []

    def test_chain_reading_later_rewritten_column_not_fused(self):
        # fusing would store the B-guard inside A's formula, which would
        # re-derive when B changes below; the original pinned its decision
        script = parse_script(
            "LOAD 't.csv';\n"
            "UPDATE A = 1 WHERE B > 6;\nUPDATE A = 2 WHERE B > 8;\n"
            "UPDATE B = 0;")
        assert fuse(script) == []
        # without the later rewrite the same chain fuses
        safe = parse_script(
            "LOAD 't.csv';\n"
            "UPDATE A = 1 WHERE B > 6;\nUPDATE A = 2 WHERE B > 8;")
        assert len(fuse(safe)) == 1

    def test_value_in_follow_up_reads_the_prior_definition(self, twelve_row_fixture):
        script = parse_script(
            "LOAD 't.csv';\n"
            "ADD COLUMN t = B * 2;\n"
            "UPDATE t = CAST(VALUE, string) WHERE ROWID = 3;")
        s = fuse(script)[0]
        rewritten = apply_suggestion(script, s)
        assert equivalence_check(script, rewritten,
                                 twelve_row_fixture).verdict == Verdict.EQUIVALENT

    def test_random_fusable_scripts_stay_equivalent(self, twelve_row_fixture):
        rng = random.Random(13)
        exprs = ["B * 2", "1", "B + 1", "IF(B > 6, 1, 0)"]
        conds = ["B > 4", "A = 'x2'", "ROWID BETWEEN 2 AND 5"]
        for _ in range(20):
            stmts = [f"ADD COLUMN t = {rng.choice(exprs)}"]
            for _ in range(rng.randint(1, 3)):
                stmts.append(f"UPDATE t = {rng.choice(exprs)} WHERE {rng.choice(conds)}")
            script = parse_script("LOAD 't.csv';\n" + ";\n".join(stmts) + ";")
            for s in fuse(script):
                rewritten = apply_suggestion(script, s)
                verdict = equivalence_check(script, rewritten, twelve_row_fixture)
                assert verdict.verdict == Verdict.EQUIVALENT, verdict.detail
                assert readability_cost(rewritten)[0] < readability_cost(script)[0]


class TestGeneralize:
    @pytest.fixture
    def price_fixture(self):
        return {"l.csv": "ID,price\n1,100\n2,1200\n3,40\n4,1200\n"}

    def test_shared_value_yields_attribute_predicate(self, price_fixture):
        script = parse_script(
            "LOAD 'l.csv';\nADD COLUMN total;\nUPDATE total = price * 2;\n"
            "UPDATE total = 1020 WHERE ROWID = 2;\n"
            "UPDATE total = 1020 WHERE ROWID = 4;")
        state = executor.apply_script(script, fixtures=price_fixture)
        suggestions = generalize(script, state)
        assert len(suggestions) == 1
        s = suggestions[0]
        assert s.kind == RewriteKind.GENERALIZE
        assert s.verified is False
        assert render_statement(s.replacement[0]) == \
            "UPDATE total = 1020 WHERE price = 1200"
        assert s.evidence["rows_matched"] == [2, 4]

    def test_one_singleton_is_below_threshold(self, price_fixture):
        script = parse_script(
            "LOAD 'l.csv';\nADD COLUMN total;\n"
            "UPDATE total = 1020 WHERE ROWID = 2;")
        state = executor.apply_script(script, fixtures=price_fixture)
        assert generalize(script, state) == []

    def test_affine_fit_when_constants_differ(self, price_fixture):
        script = parse_script(
            "LOAD 'l.csv';\nADD COLUMN total;\n"
            "UPDATE total = 85 WHERE ROWID = 1;\n"
            "UPDATE total = 1020 WHERE ROWID = 2;\n"
            "UPDATE total = 34 WHERE ROWID = 3;")
        state = executor.apply_script(script, fixtures=price_fixture)
        s = generalize(script, state)[0]
        assert s.evidence["fit_a"] == "17/20"  # 0.85 exactly
        assert s.evidence["fit_b"] == "0"
        assert render_statement(s.replacement[0]).startswith("UPDATE total = 0.85*price")

    def test_candidates_match_targets_exactly(self, price_fixture):
        # rows 2 and 4 share price=1200 with no others: predicate is exact
        script = parse_script(
            "LOAD 'l.csv';\nADD COLUMN total;\n"
            "UPDATE total = 7 WHERE ROWID = 2;\n"
            "UPDATE total = 7 WHERE ROWID = 4;")
        state = executor.apply_script(script, fixtures=price_fixture)
        from vizual.engine import evaluate
        from vizual.values import is_true
        s = generalize(script, state)[0]
        predicate = s.replacement[0].where
        matched = {state.coords.rows[ri].n
                   for ri in range(state.coords.n_rows)
                   if is_true(evaluate(predicate, state, (0, ri)))}
        assert matched == {2, 4}

    def test_no_candidate_raises(self):
        # three identical rows, two targeted: nothing separates them
        fx = {"l.csv": "ID,price\n7,5\n7,5\n7,5\n"}
        script = parse_script(
            "LOAD 'l.csv';\nADD COLUMN total;\n"
            "UPDATE total = 1 WHERE ROWID = 1;\n"
            "UPDATE total = 1 WHERE ROWID = 2;")
        state = executor.apply_script(script, fixtures=fx)
        with pytest.raises(NoCandidateError):
            generalize(script, state)


class TestEquivalenceCheck:
    def test_script_vs_itself(self, twelve_row_fixture):
        script = ten_updates_script()
        assert equivalence_check(script, script,
                                 twelve_row_fixture).verdict == Verdict.EQUIVALENT

    def test_different_scripts_flagged(self, twelve_row_fixture):
        a = parse_script("LOAD 't.csv'; UPDATE A = 1;")
        b = parse_script("LOAD 't.csv'; UPDATE A = 2;")
        assert equivalence_check(a, b, twelve_row_fixture).verdict == Verdict.DIFFERENT

    def test_replay_failure_incomparable(self, twelve_row_fixture):
        a = parse_script("LOAD 't.csv'; UPDATE nope = 1;")
        b = parse_script("LOAD 't.csv';")
        result = equivalence_check(a, b, twelve_row_fixture)
        assert result.verdict == Verdict.INCOMPARABLE
        assert "original" in result.detail

    def test_random_rerolls_equivalent_hundred_times(self, twelve_row_fixture):
        rng = random.Random(77)
        checked = 0
        while checked < 100:
            n = rng.randint(2, 8)
            ids = rng.sample(range(1, 12), n)
            value = rng.choice(["3", "'done'", "B + 1"])
            text = "LOAD 't.csv';\n" + "".join(
                f"UPDATE A = {value} WHERE ROWID = {i};\n" for i in ids)
            script = parse_script(text)
            for s in reroll(script):
                rewritten = apply_suggestion(script, s)
                verdict = equivalence_check(script, rewritten, twelve_row_fixture)
                assert verdict.verdict == Verdict.EQUIVALENT, verdict.detail
                checked += 1


class TestSuggestRewrites:
    def test_only_verified_readability_suggestions_surface(self, twelve_row_fixture):
        script = ten_updates_script()
        suggestions = suggest_rewrites(script, twelve_row_fixture)
        rerolls = [s for s in suggestions if s.kind == RewriteKind.REROLL]
        assert len(rerolls) == 1 and rerolls[0].verified

    def test_generalize_marked_data_dependent(self):
        fx = {"l.csv": "ID,price\n1,100\n2,1200\n3,40\n4,1200\n"}
        script = parse_script(
            "LOAD 'l.csv';\nADD COLUMN total;\n"
            "UPDATE total = 7 WHERE ROWID = 2;\nUPDATE total = 7 WHERE ROWID = 4;")
        suggestions = suggest_rewrites(script, fx)
        gen = [s for s in suggestions if s.kind == RewriteKind.GENERALIZE]
        assert gen and all(not s.verified for s in gen)
