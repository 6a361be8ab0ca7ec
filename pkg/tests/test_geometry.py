"""区域、区域运算与显式同伦"""

from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from cli.corpus import space
from core.errors import RibbonError, SamplingError, SchemaError, SectionNotInterior, TargetOutside
from core.sampling import make_rng
from geometry.homotopy import (
    T_INTERVAL,
    check_section,
    contraction_homotopy,
    ribbon_base_homotopy,
    sigma,
    sigma_values,
)
from geometry.operations import bounded_rescale, region_intersect, resolve_constraints, round_trip_error
from geometry.region import (
    Region,
    box,
    cylinder,
    empty,
    interval,
    point,
    region,
    region_from_json,
    ribbon,
    union,
)
from kernel.equality import VerdictKind
from kernel.evaluate import evaluate
from kernel.expr import ScalarExpr, parse_condition


def _bounds(reg: Region) -> list[tuple]:
    """一维区域的 (lo, hi) 列表，无穷记为 None"""
    out = []
    for rib in reg.ribbons:
        lo = None if rib.lower is None else sympy.nsimplify(rib.lower.expr)
        hi = None if rib.upper is None else sympy.nsimplify(rib.upper.expr)
        out.append((lo, hi))
    return out


# ==================== 构造与成员判定 ====================

def test_point_and_empty():
    assert point().is_point and point().n == 0
    assert not point().is_empty
    assert empty(2).is_empty
    with pytest.raises(SamplingError):
        empty(2).sample_points(4, make_rng("test"))


def test_interval_membership_is_open():
    I = interval(0, 1)
    assert I.contains([Fraction(1, 2)])
    assert not I.contains([0])
    assert not I.contains([1])
    with pytest.raises(ValueError):
        I.contains([0, 0])


def test_box_is_ribbon_tower():
    B = box([0, 0], [1, 2])
    assert B.n == 2
    assert B.contains([Fraction(1, 2), Fraction(3, 2)])
    assert not B.contains([Fraction(1, 2), Fraction(5, 2)])
    assert B.is_bounded()
    assert not cylinder(interval(0, 1)).is_bounded()


def test_ribbon_with_graph_bounds():
    disk_half = region(ribbon(interval(-1, 1), "-sqrt(1 - x1**2)", "sqrt(1 - x1**2)"))
    assert disk_half.contains([0, Fraction(1, 2)])
    assert not disk_half.contains([Fraction(9, 10), Fraction(9, 10)])


def test_inverted_bounds_raise():
    with pytest.raises(RibbonError):
        interval(1, 0)
    with pytest.raises(RibbonError):
        ribbon(interval(0, 1), "x1", "x1 - 1")
    with pytest.raises(RibbonError):
        region()


def test_union_dimension_mismatch():
    with pytest.raises(RibbonError):
        union(interval(0, 1), box([0, 0], [1, 1]))
    two = union(interval(0, 1), interval(2, 3))
    assert two.contains([Fraction(5, 2)])
    assert not two.contains([Fraction(3, 2)])


def test_sampling_is_seeded_and_inside():
    B = box([0, -1], [1, 1])
    p1 = B.sample_points(50, make_rng("geom"))
    p2 = B.sample_points(50, make_rng("geom"))
    assert p1.shape == (50, 2)
    assert np.array_equal(p1, p2)
    assert B.contains_array(p1).all()


def test_ribbon_section_defaults():
    base = interval(0, 1)
    assert ribbon(base, 0, 2).section() == ScalarExpr(1)
    assert ribbon(base, 0, None).section() == ScalarExpr(1)
    assert ribbon(base, None, 0).section() == ScalarExpr(-1)
    assert ribbon(base, None, None).section() == ScalarExpr(0)


def test_support_vanishes_outside():
    psi = interval(0, 1).support(1)
    assert evaluate(psi, [Fraction(1, 2)]) > 0
    assert evaluate(psi, [2]) == 0
    assert evaluate(psi, [-1]) == 0


def test_region_key_is_stable():
    assert box([0, 0], [1, 1]).key == box([0, 0], [1, 1]).key
    assert box([0, 0], [1, 1]).key != box([0, 0], [1, 2]).key


# ==================== JSON ====================

def test_region_from_json_forms():
    assert region_from_json("point").is_point
    B = region_from_json({"box": {"lows": [0, 0], "highs": [1, 1]}, "id": "sq"})
    assert B.label == "sq" and B.n == 2
    doc = {"n": 1, "ribbons": [{"base": "point", "lower": 0, "upper": "+inf"}]}
    half = region_from_json(doc)
    assert half.contains([10])
    assert not half.contains([-1])


def test_region_from_json_errors():
    with pytest.raises(SchemaError) as info:
        region_from_json({"n": 1})
    assert info.value.pointer == "/ribbons"
    bad = {"n": 1, "ribbons": [{"base": "point", "lower": 2, "upper": 1}]}
    with pytest.raises(RibbonError) as err:
        region_from_json(bad)
    assert err.value.context["pointer"] == "/ribbons/0"


def test_region_json_round_trip():
    B = box([0, "1/2"], [1, 2])
    again = region_from_json(B.to_json())
    assert again.key == B.key


# ==================== 交与约束消去 ====================

def test_interval_intersection():
    meet = region_intersect(interval(0, 2), interval(1, 3))
    assert _bounds(meet) == [(1, 2)]
    assert region_intersect(interval(0, 1), interval(2, 3)).is_empty


def test_box_intersection_contains_overlap():
    meet = region_intersect(box([0, 0], [2, 2]), box([1, 1], [3, 3]))
    assert meet.contains([Fraction(3, 2), Fraction(3, 2)])
    assert not meet.contains([Fraction(1, 2), Fraction(3, 2)])


def _graph_pair() -> tuple[Region, Region]:
    lower = region(ribbon(interval(-2, 2), "x1**2 - 1", "3"))
    upper = region(ribbon(interval(-2, 2), "-3", "1 - x1**2"))
    return lower, upper


@pytest.mark.parametrize("build, lows, highs", [
    (lambda: (box([0, 0], [2, 2]), box([1, -1], [3, 1])), [-1, -2], [4, 3]),
    (_graph_pair, [-3, -4], [3, 4]),
    (lambda: (space("punctured_plane").region, box([-1, -1], [1, 1])), [-2, -2], [2, 2]),
    (lambda: (space("two_punctures").region, box([0, -1], [1, 1])), [-1, -2], [2, 2]),
    (lambda: (space("axis_complement").region, box([-1, -1, -1], [1, 1, 1])), [-2, -2, -2], [2, 2, 2]),
])
def test_intersection_membership_matches_both(build, lows, highs):
    r1, r2 = build()
    meet = region_intersect(r1, r2)
    rng = make_rng("intersect-membership", r1.key, r2.key)
    pts = rng.uniform(lows, highs, size=(1000, len(lows)))
    inside = r1.contains_array(pts) & r2.contains_array(pts)
    assert inside.any()
    assert (meet.contains_array(pts) == inside).all()


def test_resolve_constraints_splits_line():
    reg = Region(1, cylinder(point()).ribbons, parse_condition("Ne(x1, 0)"))
    resolved = resolve_constraints(reg)
    assert not resolved.has_constraint
    assert _bounds(resolved) == [(None, 0), (0, None)]


def test_resolve_constraints_quadratic():
    reg = Region(1, interval(-3, 3).ribbons, parse_condition("x1**2 > 1"))
    resolved = resolve_constraints(reg)
    assert _bounds(resolved) == [(-3, -1), (1, 3)]


def test_bounded_rescale_maps_line_to_unit_interval():
    image, forward, inverse = bounded_rescale(cylinder(point()))
    assert _bounds(image) == [(-1, 1)]
    assert forward((0,)) == (0,)
    assert round_trip_error(cylinder(point())) < 1e-9


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=-50, max_value=50, allow_nan=False))
def test_rescale_inverse_on_line(x):
    _, forward, inverse = bounded_rescale(cylinder(point()))
    y = forward.evaluate_many(np.array([[x]]))
    assert -1 < y[0, 0] < 1
    assert inverse.evaluate_many(y)[0, 0] == pytest.approx(x, rel=1e-9, abs=1e-9)


# ==================== 同伦 ====================

def test_sigma_endpoints():
    assert sigma_values([0, 1, "1/2"]) == [Fraction(0), Fraction(1), Fraction(1, 2)]
    t = sympy.Symbol("t")
    ds = sympy.diff(sigma(t), t)
    assert ds.subs(t, 0) == 0 and ds.subs(t, 1) == 0
    assert T_INTERVAL == (sympy.Rational(-1, 2), sympy.Rational(3, 2))


def test_contraction_homotopy_endpoints():
    cell = box([0, 0], [1, 1])
    h = contraction_homotopy(cell, (Fraction(1, 2), Fraction(1, 2)))
    assert h.dim == 2
    assert h.check_endpoints().kind == VerdictKind.SYMBOLIC
    end = h.at(1)
    assert end((Fraction(1, 4), Fraction(3, 4))) == (Fraction(1, 2), Fraction(1, 2))


def test_contraction_target_outside():
    with pytest.raises(TargetOutside):
        contraction_homotopy(interval(0, 1), (2,))


def test_contraction_rejects_union():
    with pytest.raises(ValueError):
        contraction_homotopy(union(interval(0, 1), interval(2, 3)), (Fraction(1, 2),))


def test_ribbon_base_homotopy():
    rib = ribbon(interval(0, 1), 0, "1 + x1")
    pi, psi, h = ribbon_base_homotopy(rib)
    assert pi.n == 1 and psi.n == 2
    assert h.check_endpoints().passed
    assert psi((Fraction(1, 2),)) == (Fraction(1, 2), Fraction(3, 4))


def test_section_must_be_interior():
    rib = ribbon(interval(0, 1), 0, 1)
    with pytest.raises(SectionNotInterior):
        check_section(rib, ScalarExpr(2))
    with pytest.raises(SectionNotInterior):
        ribbon_base_homotopy(rib, 1)
