"""带 zone 的微分形式、外微分与拉回"""

import pytest
import sympy

from core.errors import NoExtension, SchemaError, UnsupportedRegularity
from forms.derivative import extended_D, raw_d, with_extended_derivative
from forms.maps import SmoothMap, from_components, identity, projection, pullback, section
from forms.zoned_form import (
    ZonedForm,
    angular_form,
    compare_forms,
    form_from_json,
    index_key,
    is_zero_form,
    multi_indices,
    parse_index_key,
    parse_regularity,
    sort_with_sign,
)
from geometry.region import box
from kernel.equality import VerdictKind
from kernel.expr import ScalarExpr, coord, parse_expr

x1, x2 = coord(1), coord(2)


# ==================== 多重指标 ====================

@pytest.mark.parametrize("indices, expected", [
    ((1, 2), ((1, 2), 1)),
    ((2, 1), ((1, 2), -1)),
    ((3, 1, 2), ((1, 2, 3), 1)),
    ((2, 2), (None, 0)),
    ((), ((), 1)),
])
def test_sort_with_sign(indices, expected):
    assert sort_with_sign(indices) == expected


def test_multi_indices_and_keys():
    assert multi_indices(3, 2) == [(1, 2), (1, 3), (2, 3)]
    assert multi_indices(2, 0) == [()]
    assert index_key((1, 2)) == "1,2"
    assert parse_index_key("") == ()
    assert parse_index_key("2, 3") == (2, 3)
    with pytest.raises(SchemaError):
        parse_index_key("a,b", "/coeffs")


# ==================== 构造与算术 ====================

def test_build_sorts_indices_with_sign():
    w = ZonedForm.build(2, 2, {(2, 1): "x1"})
    assert w.coeff((1, 2)) == parse_expr("-x1")
    assert ZonedForm.build(2, 2, {(1, 1): "x1"}).is_trivially_zero


def test_build_rejects_bad_index():
    with pytest.raises(ValueError):
        ZonedForm.build(2, 1, {(3,): 1})
    with pytest.raises(ValueError):
        ZonedForm.build(2, 1, {(1, 2): 1})


def test_arithmetic():
    a = ZonedForm.build(2, 1, {(1,): "x1", (2,): "x2"})
    b = ZonedForm.build(2, 1, {(1,): "-x1"})
    total = a + b
    assert total.as_dict() == {(2,): ScalarExpr(x2)}
    assert (a - a).is_trivially_zero
    assert a.scale(2).coeff((2,)) == parse_expr("2*x2")
    with pytest.raises(ValueError):
        a + ZonedForm.zero(2, 2)


def test_form_json_shape():
    w = ZonedForm.build(2, 1, {(1,): "x2"}, region=box([0, 0], [1, 1]))
    doc = w.to_json()
    assert doc["schema_version"] == 1
    assert (doc["n"], doc["k"], doc["q"]) == (2, 1, 1)
    assert set(doc["coeffs"]) == {"1"}
    assert "region" in doc
    assert "region" not in w.to_json(include_region=False)


def test_form_from_json():
    doc = {"n": 2, "k": 1, "q": 2, "coeffs": {"2": "x1"}, "region": {"box": {"lows": [0, 0], "highs": [1, 1]}}}
    w = form_from_json(doc)
    assert w.q == 2
    assert w.coeff((2,)) == ScalarExpr(x1)
    assert w.region is not None and w.region.n == 2


def test_build_accepts_bare_coordinate():
    w = ZonedForm.build(2, 1, {(2,): "x1"})
    assert w.coeff((2,)) == ScalarExpr(x1)
    assert compare_forms(raw_d(w), ZonedForm.build(2, 2, {(1, 2): 1})).passed


def test_form_from_json_accepts_matching_derivative():
    doc = {"n": 2, "k": 1, "coeffs": {"2": "2*x1"}, "derivative": {"n": 2, "k": 2, "coeffs": {"1,2": "2"}}}
    w = form_from_json(doc)
    assert w.derivative is not None
    assert w.derivative.coeff((1, 2)) == ScalarExpr(2)


@pytest.mark.parametrize("derivative", [
    {"n": 2, "k": 2, "coeffs": {"1,2": "5"}},
    {"n": 2, "k": 2, "coeffs": {}},
    {"n": 2, "k": 1, "coeffs": {"1": "2"}},
])
def test_form_from_json_rejects_wrong_derivative(derivative):
    doc = {"n": 2, "k": 1, "coeffs": {"2": "2*x1"}, "derivative": derivative}
    with pytest.raises(SchemaError) as info:
        form_from_json(doc)
    assert info.value.pointer == "/derivative"


@pytest.mark.parametrize("doc, pointer", [
    ({"n": 2, "k": 1}, "/"),
    ({"n": 2, "k": 1, "coeffs": {"1,2": "x1"}}, "/coeffs/1,2"),
    ({"n": 2, "k": 1, "coeffs": {"1": {"kind": "sine"}}}, "/coeffs/1/kind"),
    ({"n": 2, "k": 1, "q": -1, "coeffs": {}}, "/q"),
])
def test_form_from_json_errors(doc, pointer):
    with pytest.raises(SchemaError) as info:
        form_from_json(doc)
    assert info.value.pointer == pointer


@pytest.mark.parametrize("value", ["omega", "ω", "inf"])
def test_regularity_omega_rejected(value):
    with pytest.raises(UnsupportedRegularity):
        parse_regularity(value)


@pytest.mark.parametrize("value, expected", [(0, 0), ("3", 3), (1, 1)])
def test_regularity_finite(value, expected):
    assert parse_regularity(value) == expected


def test_regularity_invalid():
    with pytest.raises(SchemaError):
        parse_regularity("-2")
    with pytest.raises(SchemaError):
        parse_regularity("smooth")


# ==================== raw_d ====================

def test_raw_d_of_function_is_gradient():
    f = ZonedForm.function("x1**2*x2", 2, q=2)
    df = raw_d(f)
    assert df.k == 1 and df.q == 1
    assert compare_forms(df, ZonedForm.build(2, 1, {(1,): "2*x1*x2", (2,): "x1**2"})).passed


def test_raw_d_squared_is_zero():
    f = ZonedForm.function("x1**2*x2 + x2**3", 2)
    assert raw_d(raw_d(f)).is_trivially_zero


def test_raw_d_lowers_q_not_below_zero():
    f = ZonedForm.function("x1", 1, q=0)
    assert raw_d(f).q == 0


def test_raw_d_restricted_variables():
    w = ZonedForm.function("x1*x2", 2)
    dx = raw_d(w, variables=[1])
    assert dx.as_dict() == {(1,): ScalarExpr(x2)}


# ==================== extended_D ====================

def test_extended_D_polynomial_is_verified():
    w = ZonedForm.build(2, 1, {(1,): "x1*x2", (2,): "x1**2"}, region=box([-1, -1], [1, 1]))
    eta = extended_D(w, strict=True)
    assert eta.report.extension == "verified"
    assert eta.report.c0_ok and eta.report.cq_ok
    assert compare_forms(eta, ZonedForm.build(2, 2, {(1, 2): "x1"})).passed


def test_extended_D_jump_has_no_extension():
    w = ZonedForm.build(2, 1, {(2,): "Abs(x1)"}, region=box([-1, -1], [1, 1]))
    with pytest.raises(NoExtension):
        extended_D(w)


def test_clamp_square_is_closed_in_other_direction():
    region = box([-1, -1], [1, 1])
    w = ZonedForm.build(2, 1, {(1,): "Max(0, x1)**2"}, region=region)
    eta = extended_D(w)
    assert eta.is_trivially_zero
    assert eta.report.cq_ok


def test_clamp_square_derivative_is_only_continuous():
    region = box([-1, -1], [1, 1])
    w = ZonedForm.build(2, 1, {(2,): "Max(0, x1)**2"}, region=region)
    eta = extended_D(w)
    assert eta.report.c0_ok
    assert not eta.report.cq_ok
    assert eta.report.failed_order == 1
    assert not is_zero_form(eta, region).passed


def test_angular_form_is_closed():
    eta = extended_D(angular_form())
    assert is_zero_form(eta).passed


def test_with_extended_derivative_caches():
    w = ZonedForm.function("x1*x2", 2)
    cached = with_extended_derivative(w)
    assert cached.derivative is not None
    assert with_extended_derivative(cached) is cached
    assert extended_D(cached) is cached.derivative


# ==================== 映射与拉回 ====================

def test_smooth_map_checks_components():
    with pytest.raises(ValueError):
        SmoothMap(1, 2, (ScalarExpr(x1),))


def test_maps_evaluate_and_compose():
    f = from_components(["x1 + x2", "x1*x2"], 2)
    assert f((1, 2)) == (3, 2)
    assert f.jacobian[1] == (ScalarExpr(x2), ScalarExpr(x1))
    composed = projection(2).compose(section(0, 1))
    assert composed.components == identity(1).components


def test_pullback_of_dx():
    f = from_components(["x1**2"], 1)
    dx = ZonedForm.build(1, 1, {(1,): 1})
    assert pullback(f, dx).coeff((1,)) == parse_expr("2*x1")


def test_pullback_area_form_uses_determinant():
    f = from_components(["x1*x2", "x2"], 2)
    area = ZonedForm.build(2, 2, {(1, 2): 1})
    assert pullback(f, area).coeff((1, 2)) == ScalarExpr(x2)


def test_pullback_commutes_with_d():
    f = from_components(["x1 + x2", "x1*x2"], 2)
    w = ZonedForm.build(2, 1, {(1,): "x1*x2", (2,): "x1**2"})
    lhs = raw_d(pullback(f, w))
    rhs = pullback(f, raw_d(w))
    assert compare_forms(lhs, rhs).passed


def test_pullback_by_section_drops_fiber():
    w = ZonedForm.build(2, 1, {(1,): "x1*x2", (2,): "x1"})
    s = section(sympy.Rational(1, 2), 1)
    pulled = pullback(s, w)
    assert pulled.n == 1
    assert compare_forms(pulled, ZonedForm.build(1, 1, {(1,): "x1/2"})).kind == VerdictKind.SYMBOLIC


@pytest.mark.parametrize("outer, inner", [
    (["x1**2", "x1 - x2"], ["x1 + x2", "x1*x2"]),
    (["x2", "x1"], ["2*x1", "x2 + 1"]),
    (["x1*x2", "x2**2 + x1"], ["x1 - x2", "x2"]),
])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_pullback_of_composition(outer, inner, k):
    g = from_components(outer, 2)
    f = from_components(inner, 2)
    w = {
        0: ZonedForm.function("x1*x2 + 1", 2),
        1: ZonedForm.build(2, 1, {(1,): "x2", (2,): "x1**2"}),
        2: ZonedForm.build(2, 2, {(1, 2): "x1 + x2**2"}),
    }[k]
    direct = pullback(g.compose(f), w)
    stepwise = pullback(f, pullback(g, w))
    assert compare_forms(direct, stepwise).passed
    if k < 2:
        assert compare_forms(raw_d(direct), pullback(g.compose(f), raw_d(w))).passed
