"""Poincaré 原函数、单位分解、Mayer–Vietoris 与上同调引擎"""

from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
import sympy

from cli.corpus import forms, space
from core.errors import GlueDiscontinuity, PartitionFailure, UnsupportedRegion, UnsupportedRegularity
from core.sampling import make_rng
from engine.cohomology import ANCHOR_AGREEMENT, ANCHOR_CYCLES, ANCHOR_PAIRING, CohomologyEngine, cohomology, open_betti
from engine.mayer_vietoris import differential, exactness_check, glue, mv_connecting, mv_split, split_check
from engine.partition import partition_of_unity
from engine.poincare import cell_center, is_cell, poincare_primitive
from forms.zoned_form import ZonedForm, compare_forms
from geometry.region import Region, box, cylinder, interval, point, union
from kernel.evaluate import evaluate, evaluate_many
from kernel.expr import ScalarExpr, coord, parse_condition
from oracle.homology import singular_homology

CHAIN = {entry.id: entry for entry in forms("chain_identity").entries}


# ==================== Poincaré ====================

def test_is_cell():
    assert is_cell(point())
    assert is_cell(interval(0, 1))
    assert is_cell(box([0, 0], [1, 1]))
    assert not is_cell(union(interval(0, 1), interval(2, 3)))


def test_cell_center_is_interior():
    cell = box([0, 0], [1, 2])
    center = cell_center(cell)
    assert center == (Fraction(1, 2), Fraction(1))
    assert cell.contains(list(center))


@pytest.mark.parametrize("method", ["ribbon", "contraction"])
def test_poincare_primitive_on_cell(method):
    omega = CHAIN["cell-exact"].form
    lam = poincare_primitive(omega, method=method)
    assert lam.k == 0
    assert compare_forms(differential(lam), omega, omega.region).passed


def test_poincare_primitive_of_area_form():
    cell = box([0, 0], [1, 1])
    omega = ZonedForm.build(2, 2, {(1, 2): "x1*x2 + 1"}, region=cell)
    lam = poincare_primitive(omega)
    assert lam.k == 1
    assert compare_forms(differential(lam), omega, cell).passed


def test_poincare_primitive_rejects_bad_input():
    omega = ZonedForm.build(1, 1, {(1,): 1}, region=union(interval(0, 1), interval(2, 3)))
    with pytest.raises(UnsupportedRegion):
        poincare_primitive(omega)
    with pytest.raises(ValueError):
        poincare_primitive(ZonedForm.function("x1", 1, interval(0, 1)))
    with pytest.raises(ValueError):
        poincare_primitive(ZonedForm.build(1, 1, {(1,): 1}, region=interval(0, 1)), method="spiral")


def test_primitive_of_zero_form_is_zero():
    omega = ZonedForm.zero(2, 1, box([0, 0], [1, 1]))
    assert poincare_primitive(omega).is_trivially_zero


# ==================== 单位分解 ====================

def test_partition_of_overlapping_intervals():
    cover = [interval(0, 2), interval(1, 3)]
    pou = partition_of_unity(cover, 1)
    assert len(pou) == 2
    assert pou.symbolic_sum_is_one()
    assert evaluate(pou.function(0), [Fraction(5, 2)]) == 0
    assert evaluate(pou.function(1), [Fraction(1, 2)]) == 0
    report = pou.check()
    assert report.passed, report.to_dict()


def test_single_set_partition_is_constant():
    pou = partition_of_unity([box([0, 0], [1, 1])], 2)
    assert pou.function(0).expr == 1


def test_partition_failures():
    with pytest.raises(PartitionFailure):
        partition_of_unity([], 1)
    with pytest.raises(PartitionFailure):
        partition_of_unity([interval(0, 1), interval(2, 3)], 1, union=interval(0, 3))
    with pytest.raises(ValueError):
        partition_of_unity([interval(0, 1)], -1)


# ==================== Mayer–Vietoris ====================

def test_exactness_in_the_middle():
    omega = ZonedForm.build(1, 1, {(1,): "x1**2"}, region=interval(0, 3))
    assert exactness_check(omega, interval(0, 2), interval(1, 3)).passed


def test_split_recovers_form_on_overlap():
    pou = partition_of_unity([interval(0, 2), interval(1, 3)], 1)
    eta = ZonedForm.build(1, 1, {(1,): "x1"}, region=interval(1, 2))
    eta1, eta2 = mv_split(eta, pou)
    assert eta1.region.key == interval(0, 2).key
    assert eta2.region.key == interval(1, 3).key
    assert split_check(eta, pou).passed


def test_glue_agreeing_functions():
    w1 = ZonedForm.function("x1", 1, interval(0, 2))
    w2 = ZonedForm.function("x1", 1, interval(1, 3))
    glued = glue(w1, w2)
    assert glued.coeff(()).expr == w1.coeff(()).expr
    assert glued.region.n == 1


def test_glue_detects_mismatch():
    w1 = ZonedForm.function("x1", 1, interval(0, 2))
    w2 = ZonedForm.function("x1 + 1", 1, interval(1, 3))
    with pytest.raises(GlueDiscontinuity):
        glue(w1, w2)


def test_connecting_map_of_constant():
    pou = partition_of_unity([interval(0, 2), interval(1, 3)], 1)
    one = ZonedForm.function(1, 1, interval(1, 2))
    delta = mv_connecting(one, pou)
    assert delta.k == 1
    assert delta.n == 1


def test_connecting_map_on_punctured_plane():
    region = space("punctured_plane").region
    split = CohomologyEngine(1).split(region)
    assert not split.overlap.is_empty
    # 交集在 x1 > 0 与 x1 < 0 两侧各有一个分支
    step = ScalarExpr(sympy.Piecewise((1, coord(1) > 0), (0, True)))
    gamma = ZonedForm.function(step, 2, split.overlap)
    delta = mv_connecting(gamma, split.partition)
    assert (delta.n, delta.k) == (2, 1)
    assert not delta.is_trivially_zero
    pts = region.sample_points(200, make_rng("connecting", "punctured_plane"))
    for _, coeff in delta.coeffs:
        assert not coeff.expr.has(sympy.nan)
        assert np.isfinite(evaluate_many(coeff, pts)).all()


@pytest.mark.parametrize("values, n, expected", [
    ([1], 0, [1]),
    ([1, 0], 1, [1]),
    ([1, 1, 0], 2, [1, 1]),
    ([1, 1], 3, [1, 1, 0]),
    ([2, 0, 0, 0], 3, [2, 0, 0]),
])
def test_open_betti(values, n, expected):
    assert open_betti(values, n) == expected


# ==================== 上同调引擎 ====================

@pytest.mark.parametrize("name, expected", [
    ("interval", [1]),
    ("two_intervals", [2]),
    ("square", [1, 0]),
    ("l_shape", [1, 0]),
])
def test_cohomology_of_fixtures(name, expected):
    fixture = space(name)
    basis = cohomology(fixture.region)
    assert basis.betti == expected
    assert basis.betti == fixture.expected_betti
    assert basis.perfect
    assert basis.passed
    anchors = {v["anchor"] for v in basis.verdicts}
    assert anchors == {ANCHOR_AGREEMENT, ANCHOR_CYCLES, ANCHOR_PAIRING}


def test_cycle_outside_region_fails_verdict(monkeypatch):
    def leaky(region, *args, **kwargs):
        return replace(singular_homology(region, *args, **kwargs), outside={0: [0.5]})

    monkeypatch.setattr("engine.cohomology.singular_homology", leaky)
    basis = CohomologyEngine(1).compute(space("interval").region)
    containment = next(v for v in basis.verdicts if v["anchor"] == ANCHOR_CYCLES)
    assert not containment["passed"]
    assert containment["detail"]["outside"] == {"0": [0.5]}
    assert basis.betti == [1]
    assert not basis.passed


def test_cohomology_report_shape():
    basis = cohomology(space("two_intervals").region)
    doc = basis.to_dict()
    assert doc["region_id"] == "two-intervals"
    assert doc["betti"] == [2]
    assert set(doc["representatives"]) == {"0"}
    assert len(doc["representatives"]["0"]) == 2
    assert doc["period_matrices"]["0"]["perfect"] is True


def test_engine_memoizes_results():
    engine = CohomologyEngine(1)
    region = space("interval").region
    assert engine.compute(region) is engine.compute(region)


def test_engine_rejects_omega_regularity():
    with pytest.raises(UnsupportedRegularity):
        CohomologyEngine("omega")


def test_constraint_in_the_plane_is_unsupported():
    B = box([0, 0], [1, 1])
    region = Region(2, B.ribbons, parse_condition("x1 > x2"))
    with pytest.raises(UnsupportedRegion):
        CohomologyEngine.normalize(region)


def test_engine_primitive_on_union():
    region = space("l_shape").region
    omega = ZonedForm.build(2, 1, {(1,): "2*x1", (2,): "1"}, region=region)
    lam = CohomologyEngine(1).primitive(omega, region)
    assert compare_forms(differential(lam), omega, region).passed


@pytest.mark.slow
def test_line_minus_origin():
    region = Region(1, cylinder(point()).ribbons, parse_condition("Ne(x1, 0)"))
    basis = cohomology(region)
    assert basis.betti == [2]
    assert basis.perfect


@pytest.mark.slow
@pytest.mark.parametrize("name", ["punctured_plane", "annulus"])
def test_cohomology_of_circle_like_spaces(name):
    fixture = space(name)
    basis = cohomology(fixture.region)
    assert basis.betti == fixture.expected_betti == [1, 1]
    assert basis.perfect


@pytest.mark.slow
@pytest.mark.parametrize("name, expected", [
    ("two_punctures", [1, 2]),
    ("axis_complement", [1, 1, 0]),
])
def test_cohomology_of_punctured_spaces(name, expected):
    fixture = space(name)
    basis = cohomology(fixture.region)
    assert basis.betti == fixture.expected_betti == expected
    assert basis.perfect
    assert basis.passed
