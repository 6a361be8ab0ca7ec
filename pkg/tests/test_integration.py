"""单形求积、Stokes 残差与周期矩阵"""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cli.corpus import forms
from core.errors import RankAmbiguous
from forms.zoned_form import ZonedForm, angular_form
from integration.periods import (
    exact_rank,
    normalized_det,
    numeric_rank,
    period_matrix,
    period_values,
    winding_number,
)
from integration.quadrature import (
    QuadratureSpec,
    SimplexMap,
    chain_from_cycle,
    integrate_chain,
    integrate_simplex,
    orient,
    richardson,
    simplex_rule,
    stokes_residual,
)
from oracle.homology import Cycle

STOKES = {entry.id: entry for entry in forms("stokes").entries}

TRIANGLE = [[0, 0], [1, 0], [0, 1]]


def _square_loop() -> Cycle:
    """绕原点逆时针的正方形 1-循环"""
    corners = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    verts = [tuple(Fraction(c) for c in p) for p in corners]
    edges = tuple((Fraction(1), (verts[i], verts[(i + 1) % 4])) for i in range(4))
    return Cycle(1, edges)


# ==================== 规则 ====================

@pytest.mark.parametrize("k, volume", [(0, 1.0), (1, 1.0), (2, 0.5), (3, 1 / 6)])
def test_simplex_rule_weights_sum_to_volume(k, volume):
    U, W = simplex_rule(k, 6)
    assert W.sum() == pytest.approx(volume)
    if k:
        assert (U >= 0).all()
        assert (U.sum(axis=1) <= 1 + 1e-12).all()


@pytest.mark.parametrize("kwargs", [
    {"order": 1},
    {"epsilons": (0.3, 0.1, 0.05)},
    {"epsilons": (0.1, 0.05)},
])
def test_quadrature_spec_validation(kwargs):
    with pytest.raises(ValueError):
        QuadratureSpec(**kwargs)


def test_quadrature_spec_from_config(monkeypatch):
    from core.config import reset_config

    monkeypatch.setenv("RIBBON_DERHAM_QUAD_ORDER", "8")
    monkeypatch.setenv("RIBBON_DERHAM_EPSILON", "3..5")
    reset_config()
    spec = QuadratureSpec.from_config()
    assert spec.order == 8
    assert spec.epsilons == (0.125, 0.0625, 0.03125)
    assert spec.doubled().order == 16


def test_richardson_removes_linear_error():
    value, spread = richardson([3.0 + 1.0, 3.0 + 0.5, 3.0 + 0.25])
    assert value == pytest.approx(3.0)
    assert spread == pytest.approx(0.0, abs=1e-12)


# ==================== 单形映射 ====================

def test_affine_simplex_faces_alternate_sign():
    sigma = SimplexMap.affine(TRIANGLE)
    faces = sigma.faces()
    assert [f.sign for f in faces] == [1, -1, 1]
    assert all(f.k == 1 for f in faces)
    assert np.allclose(faces[0].vertices(), [[1, 0], [0, 1]])


def test_orient_flips_sign():
    sigma = SimplexMap.affine(TRIANGLE)
    assert orient(sigma, -1).sign == -1
    assert orient(orient(sigma, -1), -1).sign == 1


# ==================== 积分 ====================

def test_polynomial_area_integral_is_exact():
    w = ZonedForm.build(2, 2, {(1, 2): "x1*x2"})
    result = integrate_simplex(w, SimplexMap.affine(TRIANGLE))
    assert result.value == pytest.approx(1 / 24, abs=1e-10)
    assert result.direct == pytest.approx(1 / 24, abs=1e-10)
    flipped = integrate_simplex(w, SimplexMap.affine(TRIANGLE, sign=-1))
    assert flipped.value == pytest.approx(-1 / 24, abs=1e-10)


def test_line_integral_and_point_evaluation():
    w = ZonedForm.build(1, 1, {(1,): "x1"})
    assert integrate_simplex(w, SimplexMap.affine([[0], [1]])).value == pytest.approx(0.5)
    f = ZonedForm.function("x1**2", 1)
    assert integrate_simplex(f, SimplexMap.affine([[2]])).value == pytest.approx(4.0)


def test_degree_mismatch_raises():
    w = ZonedForm.build(2, 1, {(1,): "x1"})
    with pytest.raises(ValueError):
        integrate_simplex(w, SimplexMap.affine(TRIANGLE))


def test_kink_triggers_subdivision():
    w = ZonedForm.build(1, 1, {(1,): "Abs(x1)"})
    result = integrate_simplex(w, SimplexMap.affine([[-1], [1]]))
    assert result.value == pytest.approx(1.0, abs=1e-9)
    assert result.pieces > 1


def test_reciprocal_integral_is_log():
    w = ZonedForm.build(1, 1, {(1,): "1/x1"})
    result = integrate_simplex(w, SimplexMap.affine([["1/4"], ["1/2"]]))
    assert result.value == pytest.approx(math.log(2), abs=1e-8)
    assert len(result.eps_trace) == 6


@settings(max_examples=25, deadline=None)
@given(st.integers(-3, 3), st.integers(-3, 3), st.integers(1, 3))
def test_affine_function_line_integral(a, b, L):
    w = ZonedForm.build(1, 1, {(1,): f"{a}*x1 + {b}"})
    value = integrate_simplex(w, SimplexMap.affine([[0], [L]])).value
    assert value == pytest.approx(a * L * L / 2 + b * L, abs=1e-9)


def test_empty_chain_is_zero():
    w = ZonedForm.build(2, 1, {(1,): "x1"})
    assert integrate_chain(w, []).value == 0.0


def test_chain_weights_scale():
    w = ZonedForm.build(1, 1, {(1,): 1})
    seg = SimplexMap.affine([[0], [1]])
    total = integrate_chain(w, [(Fraction(1, 2), seg), (Fraction(3), seg)])
    assert total.value == pytest.approx(3.5)


# ==================== Stokes ====================

@pytest.mark.parametrize("form_id", ["poly-1", "poly-2", "poly-3", "closed-poly", "function-plane", "space-1form"])
def test_stokes_on_smooth_forms(form_id):
    entry = STOKES[form_id]
    for _, sigma in entry.simplices:
        report = stokes_residual(entry.form, sigma)
        assert report.passed, report.to_dict()


def test_stokes_across_seam_at_midpoint():
    entry = STOKES["function-kink"]
    _, sigma = entry.simplices[0]
    report = stokes_residual(entry.form, sigma)
    assert report.passed
    assert report.interior.value == pytest.approx(1.0, abs=1e-9)


@pytest.mark.slow
@pytest.mark.parametrize("form_id", ["seam-triangle", "seam-cross"])
def test_stokes_across_seams(form_id):
    entry = STOKES[form_id]
    for _, sigma in entry.simplices:
        assert stokes_residual(entry.form, sigma).passed


def test_stokes_requires_matching_dimensions():
    w = ZonedForm.build(2, 1, {(1,): "x1"})
    with pytest.raises(ValueError):
        stokes_residual(w, SimplexMap.affine([[0, 0], [1, 0]]))


# ==================== 周期 ====================

def test_normalized_det():
    assert normalized_det(np.array([[2.0, 0.0], [0.0, 4.0]])) == pytest.approx(1.0)
    assert normalized_det(np.array([[1.0, 2.0], [0.0, 0.0]])) == 0.0
    assert normalized_det(np.zeros((0, 0))) == 1.0
    assert normalized_det(np.ones((1, 2))) is None


def test_numeric_rank_gap_rule():
    rank, s = numeric_rank(np.diag([1.0, 1e-9]))
    assert rank == 1
    assert s[0] == pytest.approx(1.0)
    with pytest.raises(RankAmbiguous):
        numeric_rank(np.diag([1.0, 1e-5]))


def test_exact_rank():
    rows = [[Fraction(1), Fraction(2)], [Fraction(1, 2), Fraction(1)]]
    assert exact_rank(rows) == 1
    assert exact_rank([]) == 0


def test_point_periods_are_exact():
    f = ZonedForm.function("x1", 1)
    cycle = Cycle(0, ((Fraction(1), ((Fraction(1, 2),),)),))
    matrix, errors, exact = period_values([f], [cycle])
    assert exact == [[Fraction(1, 2)]]
    assert matrix[0, 0] == 0.5


def test_angular_period_is_two_pi():
    pm = period_matrix([angular_form()], [_square_loop()])
    assert pm.shape == (1, 1)
    assert pm.matrix[0, 0] == pytest.approx(2 * math.pi, abs=1e-6)
    assert pm.rank == 1
    assert pm.perfect
    assert pm.to_dict()["perfect"] is True


def test_exact_form_has_zero_period():
    closed = ZonedForm.build(2, 1, {(1,): "x2", (2,): "x1"})
    matrix, _, _ = period_values([closed], [_square_loop()])
    assert matrix[0, 0] == pytest.approx(0.0, abs=1e-9)


def test_winding_number():
    loop = _square_loop()
    assert winding_number(loop) == pytest.approx(1.0, abs=1e-6)
    assert winding_number(loop, (5, 5)) == pytest.approx(0.0, abs=1e-6)


def test_chain_from_cycle_keeps_weights():
    chain = chain_from_cycle(_square_loop())
    assert len(chain) == 4
    assert all(w == 1 and sigma.k == 1 for w, sigma in chain)
