"""可构造函数：解析、求值、判等与求导"""

from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from core.errors import DomainError, GrammarError, SchemaError
from kernel.calculus import c1_zone, differentiate, gradient, kink_loci
from kernel.equality import Verdict, VerdictKind, equal, is_zero, worst
from kernel.evaluate import evaluate, evaluate_many, holds, holds_many
from kernel.expr import (
    ScalarExpr,
    Zone,
    coord,
    expr_from_json,
    expr_to_json,
    normal_token,
    normalize,
    parse_condition,
    parse_expr,
)

x1, x2 = coord(1), coord(2)

fractions = st.fractions(min_value=-10, max_value=10, max_denominator=60)


# ==================== 解析与文法 ====================

def test_coord_starts_at_one():
    assert coord(1) is coord(1)
    assert coord(1).is_real
    with pytest.raises(ValueError):
        coord(0)


@pytest.mark.parametrize("text", [
    "x1**2 + 3*x2",
    "sqrt(4 - x1**2)",
    "Max(0, x1)**2",
    "abs(x1) + min(x1, x2)",
    "log(x1)",
    "x1*log(x1)**2",
    "Piecewise((x1, x1 > 0), (0, True))",
    "root(x1, 3)",
])
def test_parse_accepts_grammar(text):
    e = parse_expr(text)
    assert isinstance(e, ScalarExpr)
    assert e.dimension >= 1


@pytest.mark.parametrize("text", [
    "sin(x1)",
    "y + 1",
    "Abs(log(x1))",
    "1/log(x1)",
    "sqrt(log(x1))",
    "x1 > 0",
])
def test_parse_rejects_outside_grammar(text):
    with pytest.raises(GrammarError):
        parse_expr(text)


def test_parse_bare_coordinate():
    assert parse_expr("x1") == ScalarExpr(x1)
    assert parse_expr("x2").dimension == 2
    assert parse_expr("-x1") == ScalarExpr(-x1)


def test_parse_condition_rejects_expression():
    assert parse_condition("x1 > 0") == sympy.Gt(x1, 0)
    with pytest.raises(GrammarError):
        parse_condition("x1 + 1")
    with pytest.raises(GrammarError):
        parse_condition("x1")


def test_log_gets_default_certificate():
    e = parse_expr("log(x1)")
    assert e.certificates == {x1: sympy.Gt(x1, 0)}
    assert not e.is_log_free
    assert parse_expr("x1 + 1").is_log_free


def test_divide_by_log_is_grammar_error():
    with pytest.raises(GrammarError):
        ScalarExpr.var(1) / parse_expr("log(x1)")


def test_pi_is_marked_irrational():
    assert parse_expr("2*pi").has_float
    assert not parse_expr("x1/2").has_float
    assert parse_expr("x1/(1 + x2**2)").is_rational
    assert not parse_expr("abs(x1)").is_rational


def test_substitute_and_shift():
    e = parse_expr("x1 + 2*x2")
    assert e.substitute({2: 1}) == parse_expr("x1 + 2")
    assert e.shifted(1) == parse_expr("x2 + 2*x3")


# ==================== 求值 ====================

def test_exact_evaluation_returns_fraction():
    e = parse_expr("x1**2 + 1")
    assert evaluate(e, [Fraction(1, 2)]) == Fraction(5, 4)
    assert evaluate(parse_expr("sqrt(x1)"), [4]) == Fraction(2)
    assert evaluate(parse_expr("log(x1)"), [1]) == Fraction(0)
    assert evaluate(parse_expr("Max(0, x1)**2"), [Fraction(-1, 2)]) == Fraction(0)


def test_irrational_value_falls_back_to_float():
    value = evaluate(parse_expr("sqrt(x1)"), [2])
    assert isinstance(value, float)
    assert value == pytest.approx(2 ** 0.5)
    assert evaluate(parse_expr("x1**2"), [0.5]) == pytest.approx(0.25)


@pytest.mark.parametrize("text, point", [
    ("1/x1", [0]),
    ("sqrt(x1)", [-1]),
    ("log(x1)", [0]),
    ("log(x1)", [-2]),
    ("x1*x2", [1]),
])
def test_domain_errors(text, point):
    with pytest.raises(DomainError) as info:
        evaluate(parse_expr(text), point)
    assert info.value.context["point"] == [str(v) for v in point]


def test_certificate_restricts_log_domain():
    e = parse_expr("log(x1)", certificates={"x1": "x1 > 1/2"})
    assert evaluate(e, [1]) == Fraction(0)
    with pytest.raises(DomainError):
        evaluate(e, [Fraction(1, 4)])


@settings(max_examples=60, deadline=None)
@given(fractions, fractions)
def test_exact_evaluation_matches_fraction_arithmetic(a, b):
    e = parse_expr("x1**2 - 3*x1*x2 + 1/2")
    assert evaluate(e, [a, b]) == a * a - 3 * a * b + Fraction(1, 2)


@settings(max_examples=40, deadline=None)
@given(fractions)
def test_abs_and_clamp_agree(a):
    lhs = evaluate(parse_expr("Max(0, x1) - Min(0, x1)"), [a])
    assert lhs == abs(a)


def test_vectorized_evaluation_marks_undefined_as_nan():
    pts = np.array([[1.0], [4.0], [-1.0]])
    values = evaluate_many(parse_expr("sqrt(x1)"), pts)
    assert values[:2] == pytest.approx([1.0, 2.0])
    assert np.isnan(values[2])


def test_vectorized_piecewise_with_default_branch():
    e = ScalarExpr(sympy.Piecewise((x1 * x2, x1 > 0), (0, True)))
    values = evaluate_many(e, np.array([[2.0, 3.0], [-1.0, 5.0], [0.5, -2.0]]))
    assert values.tolist() == pytest.approx([6.0, 0.0, -1.0])
    const = evaluate_many(ScalarExpr(sympy.Piecewise((1, x1 < 0), (2, True))), np.array([[-1.0], [1.0]]))
    assert const.tolist() == [1.0, 2.0]


def test_conditions():
    cond = parse_condition("(x1 > 0) & (x2 < 1)")
    assert holds(cond, [1, 0])
    assert not holds(cond, [-1, 0])
    mask = holds_many(cond, np.array([[1.0, 0.0], [1.0, 2.0]]))
    assert mask.tolist() == [True, False]


# ==================== 判等 ====================

def test_structural_equality_is_symbolic():
    v = equal(parse_expr("x1 + x2"), parse_expr("x2 + x1"))
    assert v.kind == VerdictKind.SYMBOLIC
    assert v.passed


def test_normal_form_equality_is_symbolic():
    v = equal(parse_expr("(x1 + 1)**2"), parse_expr("x1**2 + 2*x1 + 1"))
    assert v.kind == VerdictKind.SYMBOLIC


def test_marked_irrational_is_at_most_numeric():
    v = equal(parse_expr("pi*x1"), parse_expr("x1*pi"))
    assert v.kind == VerdictKind.NUMERIC
    assert v.passed
    assert v.to_dict()["samples"] > 0


def test_distinct_carries_witness():
    v = equal(parse_expr("x1"), parse_expr("x1 + 1"))
    assert v.kind == VerdictKind.DISTINCT
    assert not v.passed
    assert v.witness is not None and len(v.witness) == 1


def test_equality_is_symmetric():
    a, b = parse_expr("Max(x1, x2)"), parse_expr("(x1 + x2 + Abs(x1 - x2))/2")
    assert equal(a, b).passed
    assert equal(b, a).passed


def test_is_zero():
    assert is_zero(parse_expr("Max(0, x1) + Min(0, x1) - x1")).passed
    assert not is_zero(parse_expr("Max(0, x1)")).passed


def test_worst_prefers_distinct():
    d = Verdict(VerdictKind.DISTINCT, 1e-9, 4, (0.0,), 1.0)
    n = Verdict(VerdictKind.NUMERIC, 1e-9, 4, residual=1e-12)
    assert worst([Verdict.symbolic(), n, d]) is d
    assert worst([Verdict.symbolic(), n]) is n
    assert worst([]).kind == VerdictKind.SYMBOLIC


def test_normalize_is_idempotent():
    e = parse_expr("(x1 + 1)*(x1 - 1)")
    once = normalize(e)
    assert normalize(once) == once
    assert normal_token(e) == normal_token(parse_expr("x1**2 - 1"))


# ==================== JSON AST ====================

def test_const_json_uses_num_den_strings():
    assert expr_to_json(sympy.Rational(1, 2)) == {"kind": "const", "num": "1", "den": "2"}
    assert expr_to_json(x1) == {"kind": "var", "index": 1}


@pytest.mark.parametrize("text", [
    "x1**2 + 3*x2 - 1/2",
    "sqrt(1 + x1**2)",
    "Max(0, x1)**2",
    "x1*log(x2)",
    "Abs(x1 - x2)",
])
def test_json_round_trip(text):
    e = parse_expr(text)
    assert expr_from_json(e.to_json()) == e


def test_json_accepts_infix_and_div():
    doc = {"kind": "div", "num": "x1", "den": {"kind": "add", "args": [1, {"kind": "var", "index": 2}]}}
    assert expr_from_json(doc) == parse_expr("x1/(1 + x2)")


@pytest.mark.parametrize("doc, pointer", [
    ({"kind": "sine", "arg": 1}, "/kind"),
    ({"kind": "root", "arg": "x1", "degree": 1}, "/degree"),
    ({"kind": "pow", "exp": 2}, ""),
])
def test_json_errors_carry_pointer(doc, pointer):
    with pytest.raises(SchemaError) as info:
        expr_from_json(doc)
    assert info.value.pointer.endswith(pointer)


def test_json_grammar_error_becomes_schema_error():
    doc = {"kind": "abs", "arg": {"kind": "log", "arg": "x1"}}
    with pytest.raises(SchemaError):
        expr_from_json(doc)


# ==================== 求导与 zone ====================

def test_partial_derivatives():
    e = parse_expr("x1**2*x2 + x2")
    d1, zone = differentiate(e, 1)
    assert equal(d1, parse_expr("2*x1*x2")).kind == VerdictKind.SYMBOLIC
    assert zone.is_full
    grad = gradient(e, 2)
    assert equal(grad[1], parse_expr("x1**2 + 1")).passed


def test_clamp_power_keeps_compact_form():
    d, _ = differentiate(parse_expr("Max(0, x1)**2"), 1)
    assert d.expr.has(sympy.Max)
    assert evaluate(d, [Fraction(1, 2)]) == Fraction(1)
    assert evaluate(d, [Fraction(-1, 2)]) == Fraction(0)


def test_derivative_of_log():
    d, _ = differentiate(parse_expr("log(x1)"), 1)
    assert equal(d, parse_expr("1/x1")).passed


def test_kink_loci():
    assert kink_loci(parse_expr("Abs(x1)")) == [ScalarExpr(x1)]
    assert kink_loci(parse_expr("x1**3 + x2")) == []


def test_c1_zone():
    assert c1_zone(parse_expr("x1*x2")).is_full
    zone = c1_zone(parse_expr("Abs(x1)"))
    assert zone.condition == sympy.Ne(x1, 0)
    assert Zone.full(2).intersect(zone).condition == sympy.Ne(x1, 0)


def test_derivative_of_zero_extension_is_finite():
    e = ScalarExpr(sympy.Piecewise((x1**2 * x2, x1 > 0), (0, True)))
    d1, _ = differentiate(e, 1)
    d2, _ = differentiate(e, 2)
    assert not d1.expr.has(sympy.nan)
    pts = np.array([[0.5, 2.0], [-0.5, 2.0], [1.0, -1.0]])
    assert evaluate_many(d1, pts).tolist() == pytest.approx([2.0, 0.0, -2.0])
    assert evaluate_many(d2, pts).tolist() == pytest.approx([0.25, 0.0, 1.0])


def test_derivative_of_abs_product():
    d, _ = differentiate(parse_expr("abs(x1)*x1"), 1)
    assert not d.expr.has(sympy.nan)
    assert evaluate_many(d, np.array([[-1.0], [2.0]])).tolist() == pytest.approx([2.0, 4.0])
    m, _ = differentiate(parse_expr("min(x1, 1)"), 1)
    assert evaluate_many(m, np.array([[0.0], [2.0]])).tolist() == pytest.approx([1.0, 0.0])
