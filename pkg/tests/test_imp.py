"""Source language: parsing, printing, evaluation, small-step semantics."""

import random

import pytest

from costlift import imp
from costlift.core import FuelExhausted, Label, Store
from costlift.imp import (
    Add,
    Assign,
    Const,
    If,
    ImpConfig,
    Labelled,
    Less,
    Program,
    ReservedIdentifierError,
    Seq,
    Skip,
    Var,
    While,
    ImpSyntaxError,
    TerminalConfiguration,
    erase_imp,
    eval_bool,
    eval_expr,
    is_terminal,
    parse_imp,
    print_imp,
    run_imp,
    step_imp,
)
from costlift.selftest import generate_any_stmt


class TestParse:
    def test_smallest_program(self):
        assert parse_imp("prog skip") == Program(Skip())

    def test_assignment(self):
        assert parse_imp("prog x := x + 1") == Program(
            Assign("x", Add(Var("x"), Const(1)))
        )

    def test_labelled_while(self):
        got = parse_imp("prog _l1: while 0 < x do { x := x + 1 }")
        want = Program(
            Labelled(
                Label(1),
                While(Less(Const(0), Var("x")), Assign("x", Add(Var("x"), Const(1)))),
            )
        )
        assert got == want

    def test_seq_is_right_associative(self):
        got = parse_imp("prog skip; x := 1; skip")
        assert got == Program(Seq(Skip(), Seq(Assign("x", Const(1)), Skip())))

    def test_add_is_left_associative(self):
        got = parse_imp("prog x := 1 + 2 + 3")
        assert got.body.expr == Add(Add(Const(1), Const(2)), Const(3))

    def test_parenthesized_expression(self):
        got = parse_imp("prog x := 1 + (2 + 3)")
        assert got.body.expr == Add(Const(1), Add(Const(2), Const(3)))

    def test_negative_constants(self):
        assert parse_imp("prog x := -5").body == Assign("x", Const(-5))

    def test_label_binds_one_atom(self):
        got = parse_imp("prog _l0: skip; x := 1")
        assert got == Program(Seq(Labelled(Label(0), Skip()), Assign("x", Const(1))))

    def test_comments_and_whitespace(self):
        text = "prog  # comment\n  x := 1 ;\n  # another\n  skip"
        assert parse_imp(text) == Program(Seq(Assign("x", Const(1)), Skip()))

    def test_reserved_identifier_rejected(self):
        with pytest.raises(ReservedIdentifierError):
            parse_imp("prog cost := 1")
        with pytest.raises(ReservedIdentifierError):
            parse_imp("prog x := cost + 1")

    def test_reserved_identifier_allowed_for_annotated_sources(self):
        got = parse_imp("prog cost := cost + 4; x := x + 1", allow_cost=True)
        assert isinstance(got.body, Seq)

    def test_syntax_error_carries_position(self):
        with pytest.raises(ImpSyntaxError) as err:
            parse_imp("prog x :=\n  + 1")
        assert err.value.line == 2

    def test_label_like_identifier_is_longest_match(self):
        got = parse_imp("prog _l1x := 2")
        assert got.body == Assign("_l1x", Const(2))


class TestPrint:
    def test_skip(self):
        assert print_imp(Program(Skip())) == "prog skip"

    def test_labelled_skip(self):
        assert print_imp(Program(Labelled(Label(1), Skip()))) == "prog _l1: skip"

    def test_annotated_shape(self):
        p = Program(
            Seq(
                Assign("cost", Add(Var("cost"), Const(4))),
                Assign("x", Add(Var("x"), Const(1))),
            )
        )
        assert print_imp(p) == "prog cost := cost + 4; x := x + 1"

    def test_roundtrip_random_asts(self):
        rng = random.Random("imp-roundtrip")
        for _ in range(300):
            program = Program(generate_any_stmt(rng, rng.randint(1, 12)))
            text = print_imp(program)
            assert parse_imp(text, allow_cost=True) == program, text

    def test_print_parse_print_stable(self):
        rng = random.Random("imp-stability")
        for _ in range(100):
            program = Program(generate_any_stmt(rng, rng.randint(1, 10)))
            text = print_imp(program)
            assert print_imp(parse_imp(text, allow_cost=True)) == text


class TestEval:
    def test_const(self):
        assert eval_expr(Const(7), Store()) == 7

    def test_var(self):
        assert eval_expr(Var("x"), Store({"x": 3})) == 3

    def test_add(self):
        assert eval_expr(Add(Var("x"), Const(1)), Store({"x": 41})) == 42

    def test_unbound_reads_zero(self):
        assert eval_expr(Var("nowhere"), Store()) == 0

    def test_less_true(self):
        assert eval_bool(Less(Const(0), Const(1)), Store()) is True

    def test_less_irreflexive(self):
        assert eval_bool(Less(Var("x"), Var("x")), Store({"x": 9})) is False

    def test_less_on_sums(self):
        assert eval_bool(Less(Add(Var("x"), Const(1)), Var("x")), Store({"x": 5})) is False


class TestStep:
    def test_assign_updates_store(self):
        s = Store({"y": 1})
        (stmt, cont, store), lab = step_imp(ImpConfig(Assign("x", Const(2)), (), s))
        assert stmt == Skip() and cont == () and lab is None
        assert store == Store({"y": 1, "x": 2})

    def test_labelled_emits(self):
        config, lab = step_imp(ImpConfig(Labelled(Label(1), Skip()), (), Store()))
        assert lab == Label(1)
        assert config.stmt == Skip() and config.store == Store()

    def test_false_while_guard_exits(self):
        loop = While(Less(Var("x"), Var("x")), Skip())
        config, lab = step_imp(ImpConfig(loop, (), Store()))
        assert config.stmt == Skip() and config.cont == () and lab is None

    def test_true_while_guard_pushes_continuation(self):
        loop = While(Less(Const(0), Const(1)), Assign("x", Const(1)))
        config, _ = step_imp(ImpConfig(loop, (), Store()))
        assert config.stmt == Assign("x", Const(1)) and config.cont == (loop,)

    def test_terminal_configuration_raises(self):
        with pytest.raises(TerminalConfiguration):
            step_imp(ImpConfig(Skip(), (), Store()))
        assert is_terminal(ImpConfig(Skip(), (), Store()))

    def test_if_picks_branch(self):
        cond = Less(Const(0), Var("x"))
        branchy = If(cond, Assign("y", Const(1)), Assign("y", Const(2)))
        config, _ = step_imp(ImpConfig(branchy, (), Store({"x": 1})))
        assert config.stmt == Assign("y", Const(1))
        config, _ = step_imp(ImpConfig(branchy, (), Store()))
        assert config.stmt == Assign("y", Const(2))


class TestRun:
    def test_skip_is_identity(self):
        s = Store({"x": 5})
        assert run_imp(Program(Skip()), s, 10) == (s, ())

    def test_labelled_increment(self):
        p = parse_imp("prog _l1: x := x + 1")
        final, trace = run_imp(p, Store({"x": 0}), 10)
        assert final == Store({"x": 1})
        assert trace == (Label(1),)

    def test_divergent_loop_exhausts_fuel(self):
        p = parse_imp("prog _l1: while 0 < x do { x := x + 1 }")
        with pytest.raises(FuelExhausted):
            run_imp(p, Store({"x": 1}), 100)

    def test_terminating_loop(self):
        p = parse_imp("prog while x < 3 do { x := x + 1 }")
        final, trace = run_imp(p, Store(), 100)
        assert final == Store({"x": 3}) and trace == ()

    def test_fuel_must_be_positive(self):
        with pytest.raises(ValueError):
            run_imp(Program(Skip()), Store(), 0)


class TestErase:
    def test_erase_labelled_skip(self):
        assert erase_imp(parse_imp("prog _l1: skip")) == Program(Skip())

    def test_identity_on_unlabelled(self):
        p = parse_imp("prog if x < 1 then { x := 2 } else { while x < 9 do { x := x + 3 } }")
        assert erase_imp(p) == p

    def test_erasure_preserves_runs(self):
        p = parse_imp("prog _l0: { x := 1; _l1: { while x < 4 do { _l2: x := x + 1 } } }")
        s0 = Store()
        final_lab, trace = run_imp(p, s0, 200)
        final_plain, plain_trace = run_imp(erase_imp(p), s0, 200)
        assert trace and plain_trace == ()
        assert final_lab == final_plain
