"""纤维分解、t 方向原函数与同伦算子"""

from fractions import Fraction

import pytest

from cli.corpus import forms
from core.errors import BoundsCrossing, UnsupportedIntegrand
from fiber.antiderivative import MAX_LOG_POWER, LogPolyIntegrand, integrate_t
from fiber.decompose import fiber_decompose, wedge_dt
from fiber.operator import (
    Q,
    Q_bounds,
    collect_seams,
    fiber_primitive,
    fiber_primitive_check,
    homotopy_identity_check,
    homotopy_invariance_check,
    projection_section_check,
    zero_section_round_trip,
)
from forms.derivative import raw_d
from forms.zoned_form import ZonedForm, compare_forms
from geometry.homotopy import contraction_homotopy
from geometry.region import Region, box, interval, ribbon
from kernel.calculus import differentiate
from kernel.equality import equal
from kernel.evaluate import evaluate
from kernel.expr import ScalarExpr, coord, parse_expr

x1, x2 = coord(1), coord(2)

CHAIN = {entry.id: entry for entry in forms("chain_identity").entries}


# ==================== 纤维分解 ====================

def test_fiber_decompose_splits_dt():
    w = ZonedForm.build(2, 1, {(1,): "x1*x2", (2,): "x1**2"})
    dec = fiber_decompose(w)
    assert dec.t_index == 2
    assert dec.prime.as_dict() == {(1,): parse_expr("x1*x2")}
    assert dec.dprime.k == 0
    assert dec.dprime.coeff(()) == parse_expr("x1**2")
    assert compare_forms(dec.reassemble(), w).passed


def test_wedge_dt_skips_dt_components():
    w = ZonedForm.build(3, 1, {(1,): "x2", (3,): "x1"})
    wd = wedge_dt(w)
    assert wd.k == 2
    assert wd.as_dict() == {(1, 3): parse_expr("x2")}


# ==================== t 方向原函数 ====================

def test_integrate_polynomial():
    G = integrate_t(parse_expr("x1**2"), 1)
    assert G == parse_expr("x1**3/3")


def test_integrate_reciprocal_uses_reference_sign():
    G = integrate_t(parse_expr("1/x1"), 1, reference={x1: 2})
    assert G == parse_expr("log(x1)")
    G_neg = integrate_t(parse_expr("1/x1"), 1, reference={x1: -2})
    assert evaluate(G_neg, [-1]) == Fraction(0)


def test_integrate_log_by_parts():
    G = integrate_t(parse_expr("log(x1)"), 1, reference={x1: 1})
    assert equal(G, parse_expr("x1*log(x1) - x1"), box([0], [2])).passed


def test_antiderivative_differentiates_back():
    f = parse_expr("x1*x2**2 + 1/(x2 + 2)")
    G = integrate_t(f, 2, reference={x1: 0, x2: 0})
    dG, _ = differentiate(G, 2)
    assert equal(dG, f, box([-1, -1], [1, 1])).passed
    assert evaluate(G, [1, 0]) == Fraction(0)


@pytest.mark.parametrize("text", [
    "Abs(x1)",
    "1/(x1**2 + 1)",
    "log(x1)**3",
    "log(x1)*log(x1 + 1)",
])
def test_unsupported_integrands(text):
    with pytest.raises(UnsupportedIntegrand):
        integrate_t(parse_expr(text), 1, reference={x1: 1})


def test_log_power_cap():
    assert MAX_LOG_POWER == 2
    F = LogPolyIntegrand.from_expr(parse_expr("x1*log(x1)**2 + 1"), 1)
    assert sorted(term.m for term in F.terms) == [0, 2]


# ==================== Q ====================

def test_Q_of_dt_is_t():
    dt = ZonedForm.build(2, 1, {(2,): 1})
    assert Q(dt).coeff(()) == ScalarExpr(x2)


def test_Q_moves_dt_to_front():
    w = ZonedForm.build(2, 2, {(2, 1): "x2"})
    assert Q(w).as_dict() == {(1,): parse_expr("-x2**2/2")}


def test_Q_without_dt_is_zero():
    assert Q(ZonedForm.build(2, 1, {(1,): "x1*x2"})).is_trivially_zero
    with pytest.raises(ValueError):
        Q(ZonedForm.function("x1", 2))


def test_Q_across_abs_seam():
    w = ZonedForm.build(2, 1, {(2,): "Abs(x2)"})
    assert collect_seams(parse_expr("Abs(x2)"), 2) == [0]
    q = Q(w).coeff(())
    assert evaluate(q, [0, -1]) == Fraction(-1, 2)
    assert evaluate(q, [0, 1]) == Fraction(1, 2)


def test_Q_rejects_nonlinear_seam():
    with pytest.raises(UnsupportedIntegrand):
        Q(ZonedForm.build(2, 1, {(2,): "Abs(x2**2 - x1)"}))


def test_Q_bounds():
    w = ZonedForm.build(2, 1, {(2,): "x1"})
    q = Q_bounds(w, 0, 1)
    assert q.n == 1 and q.k == 0
    assert equal(q.coeff(()), parse_expr("x1")).passed
    with pytest.raises(BoundsCrossing):
        Q_bounds(w, 1, 0)


def test_zero_section_round_trip_forgets_fiber():
    w = ZonedForm.build(2, 1, {(1,): "x1*x2 + x1", (2,): "x1"})
    back = zero_section_round_trip(w)
    assert compare_forms(back, ZonedForm.build(2, 1, {(1,): "x1"})).passed


# ==================== 链同伦恒等式 ====================

@pytest.mark.parametrize("form_id", ["t-dx", "x-dt", "mixed-1", "dt", "mixed-2", "area-1", "r3-mixed"])
def test_chain_homotopy_identity(form_id):
    report = homotopy_identity_check(CHAIN[form_id].form)
    assert report.passed, report.to_dict()
    assert report.sign == (-1) ** (CHAIN[form_id].form.k - 1)


def test_chain_homotopy_identity_on_functions():
    report = homotopy_identity_check(CHAIN["f-xt"].form)
    assert report.passed


@pytest.mark.parametrize("form_id", ["dt", "exact-dx", "r3-exact"])
def test_projection_section_on_closed_forms(form_id):
    assert projection_section_check(CHAIN[form_id].form).passed


def test_wrong_sign_is_distinct():
    w = CHAIN["dt"].form
    assert compare_forms(raw_d(Q(w)), w).passed
    assert not compare_forms(raw_d(Q(w)), w.scale(-1)).passed


def test_fiber_primitive_on_ribbon():
    rib = ribbon(interval(0, 1), 0, "1 + x1")
    w = ZonedForm.build(2, 1, {(1,): "x1*x2", (2,): "x1**2"}, region=Region(2, (rib,)))
    lam = fiber_primitive(w, rib)
    assert lam.k == 0
    assert fiber_primitive_check(w, rib).passed


def test_contraction_invariance_on_cell():
    entry = CHAIN["cell-exact"]
    cell = entry.form.region
    h = contraction_homotopy(cell, (Fraction(1, 2), Fraction(1, 2)))
    assert homotopy_invariance_check(h, entry.form).passed
