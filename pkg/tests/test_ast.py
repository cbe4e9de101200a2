import pytest

from src.core.ast_nodes import (
    And,
    Binary,
    Const,
    Exists,
    Forall,
    Interval,
    Literal,
    Minus,
    Or,
    Plus,
    Pred,
    SignalAt,
    SignalDecl,
    Spec,
    Unary,
    Var,
    alpha_normalize,
    bound_vars,
    formula_size,
    free_time_vars,
    make_term,
    negate,
    shift_term,
    signals_of,
    term_offset,
    validate,
)
from src.core.errors import Condition1Violation, Condition2Violation, UndeclaredSignal


def closed(a, b):
    return Interval(Const(float(a)), Const(float(b)))


class TestTimeTerms:
    def test_make_term_picks_the_shape(self):
        assert make_term("t", 2) == Plus("t", 2.0)
        assert make_term("t", -2) == Minus("t", 2.0)
        assert make_term("t", 0) == Var("t")
        assert make_term(None, 3) == Const(3.0)

    def test_offsets(self):
        assert term_offset(Plus("t", 2)) == 2
        assert term_offset(Minus("t", 2)) == -2
        assert term_offset(Var("t")) == 0
        assert term_offset(Const(5)) == 5

    def test_shift_term_only_touches_its_variable(self):
        assert shift_term(Plus("t", 2), "t", 2) == Var("t")
        assert shift_term(Var("t"), "t", 3) == Minus("t", 3.0)
        assert shift_term(Var("u"), "t", 3) == Var("u")
        assert shift_term(Const(1), "t", 3) == Const(1)


class TestWellFormedness:
    def test_closed_formula_passes(self):
        phi = Forall("t", closed(0, 3), Pred(SignalAt("f", Var("t")), "<", 1.0))
        validate(phi, {"f"})
        assert free_time_vars(phi) == frozenset()

    def test_free_variable_is_condition1(self):
        phi = Pred(SignalAt("f", Var("t")), "<", 1.0)
        with pytest.raises(Condition1Violation):
            validate(phi)

    def test_two_free_variables_is_condition2(self):
        # f(t) − g(u) 同时依赖 t 和 u
        rho = Binary("sub", SignalAt("f", Var("t")), SignalAt("g", Var("u")))
        bad = Pred(rho, "<", 0.0)
        phi = Forall("t", closed(0, 1), Forall("u", closed(0, 1), bad))
        with pytest.raises(Condition2Violation) as info:
            validate(phi)
        assert info.value.subformula == bad

    def test_interval_bound_counts_as_free(self):
        inner = Forall("u", Interval(Var("t"), Plus("t", 1)), Pred(SignalAt("g", Var("v")), ">", 0.0))
        phi = Forall("t", closed(0, 1), Forall("v", closed(0, 1), inner))
        with pytest.raises(Condition2Violation):
            validate(phi)

    def test_undeclared_signal(self):
        phi = Forall("t", closed(0, 1), Pred(SignalAt("zz", Var("t")), "<", 1.0))
        with pytest.raises(UndeclaredSignal):
            validate(phi, {"f"})

    def test_reversed_constant_interval(self):
        phi = Forall("t", closed(3, 1), Pred(SignalAt("f", Var("t")), "<", 1.0))
        with pytest.raises(Condition1Violation):
            validate(phi)


class TestRewriting:
    def test_negate_flips_relations_and_quantifiers(self):
        p = Pred(SignalAt("f", Var("t")), "<", 1.0)
        phi = Forall("t", closed(0, 1), And(p, Pred(SignalAt("f", Var("t")), "=", 0.0)))
        neg = negate(phi)
        assert isinstance(neg, Exists)
        assert isinstance(neg.body, Or)
        assert neg.body.left.rel == ">="
        assert neg.body.right.rel == "!="
        assert negate(neg) == phi

    def test_alpha_normalize_renames_shadowed_variable(self):
        inner = Forall("t", Interval(Var("t"), Plus("t", 1)), Pred(SignalAt("f", Var("t")), "<", 1.0))
        phi = Exists("t", closed(0, 2), inner)
        out = alpha_normalize(phi)
        assert out.var == "t"
        assert out.body.var != "t"
        assert out.body.iv.lower == Var("t")
        assert out.body.body.rho.at == Var(out.body.var)

    def test_alpha_normalize_renames_siblings(self):
        body = Pred(SignalAt("f", Var("t")), "<", 1.0)
        phi = And(Forall("t", closed(0, 1), body), Exists("t", closed(2, 3), body))
        out = alpha_normalize(phi)
        assert out.left.var == "t"
        assert out.right.var != "t"
        assert out.right.body.rho.at == Var(out.right.var)
        assert alpha_normalize(out) == out

    def test_size_counts_operators(self):
        rho = Unary("abs", Binary("sub", SignalAt("f", Var("t")), Literal(1.0)))
        phi = Forall("t", closed(0, 1), Pred(rho, "<", 1.0))
        # ∀、谓词、abs、sub
        assert formula_size(phi) == 4

    def test_collectors(self):
        phi = Forall("t", closed(0, 1), Exists("u", Interval(Var("t"), Plus("t", 1)),
                                               Pred(SignalAt("g", Var("u")), ">", 0.0)))
        assert signals_of(phi) == {"g"}
        assert bound_vars(phi) == {"t", "u"}


class TestSpec:
    def test_vector_components(self):
        spec = Spec([SignalDecl("q", size=3), SignalDecl("sm")])
        assert spec.scalar_signals() == ["q[0]", "q[1]", "q[2]", "sm"]

    def test_missing_requirement(self):
        with pytest.raises(KeyError):
            Spec().requirement("R1")
