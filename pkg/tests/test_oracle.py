"""立方 oracle：栅格化、坍缩、Betti 数与循环基"""

from fractions import Fraction

import pytest

from cli.corpus import space
from core.errors import EmptyRaster
from geometry.region import box, interval, union
from integration.periods import winding_number
from oracle.cubical import as_resolution, boundary, cell_boundary, cell_dim, collapse, raster_dump, rasterize
from oracle.homology import Cycle, betti, cycle_basis, kuhn_simplices, singular_homology


def _frame():
    """3×3 方框（中间挖去 [1,2]²），由四条长条拼成"""
    return union(
        box([0, 0], [3, 1]),
        box([0, 2], [3, 3]),
        box([0, 0], [1, 3]),
        box([2, 0], [3, 3]),
    )


# ==================== 单元与边界 ====================

def test_cell_boundary_of_edge():
    assert cell_boundary((1,)) == [((2,), 1), ((0,), -1)]
    assert cell_dim((1, 2)) == 1
    assert cell_dim((1, 3)) == 2


@pytest.mark.parametrize("cell", [(1, 1), (1, 1, 1), (3, 1, 5)])
def test_boundary_of_boundary_vanishes(cell):
    chain = boundary({cell: Fraction(1)})
    assert chain
    assert boundary(chain) == {}


@pytest.mark.parametrize("value, expected", [
    ("1/8", Fraction(1, 8)),
    (0.125, Fraction(1, 8)),
    (Fraction(1, 4), Fraction(1, 4)),
])
def test_as_resolution(value, expected):
    assert as_resolution(value) == expected


def test_resolution_must_be_positive():
    with pytest.raises(ValueError):
        as_resolution(0)
    with pytest.raises(ValueError):
        as_resolution("-1/8")


# ==================== 栅格化 ====================

def test_rasterize_interval():
    K = rasterize(interval(0, 1), "1/4")
    assert K.h == Fraction(1, 4)
    assert len(K.top) == 4
    assert betti(K) == [1, 0]


def test_rasterize_too_thin_is_empty():
    with pytest.raises(EmptyRaster):
        rasterize(interval(0, "1/10"), "1/8")


def test_collapse_square_to_point():
    K = rasterize(box([0, 0], [1, 1]), "1/4")
    L = collapse(K)
    assert L.size < K.size
    assert L.collapsed_from == K.size
    assert betti(L) == [1, 0, 0]


def test_raster_dump_lists_cubes():
    K = rasterize(interval(0, 1), "1/2")
    dump = raster_dump(K)
    assert dump["h"] == "1/2"
    assert dump["cubes"] == [[0], [1]]


@pytest.mark.parametrize("region, expected", [
    (interval(0, 1), [1, 0]),
    (union(interval(0, 1), interval(2, 3)), [2, 0]),
    (box([0, 0], [1, 1]), [1, 0, 0]),
])
def test_betti_numbers(region, expected):
    assert betti(rasterize(region, "1/4")) == expected


def test_frame_has_one_loop():
    K = rasterize(_frame(), "1/4")
    assert betti(K) == [1, 1, 0]


# ==================== 循环 ====================

def test_kuhn_simplices_of_square():
    simplices = kuhn_simplices((1, 1))
    assert sorted(sign for sign, _ in simplices) == [-1, 1]
    assert all(len(verts) == 3 for _, verts in simplices)


def test_cycle_basis_of_frame_is_closed_loop():
    K = rasterize(_frame(), "1/4").collapsed()
    cycles = cycle_basis(K, 1)
    assert len(cycles) == 1
    loop = cycles[0]
    assert loop.k == 1
    assert loop.boundary() == {}
    assert abs(winding_number(loop, (Fraction(3, 2), Fraction(3, 2)))) == pytest.approx(1.0, abs=1e-6)


def test_zero_cycles_one_per_component():
    K = rasterize(union(interval(0, 1), interval(2, 3)), "1/4").collapsed()
    cycles = cycle_basis(K, 0)
    assert len(cycles) == 2
    assert cycle_basis(K, 1) == []


def test_cycle_json_keeps_rational_weights():
    cycle = Cycle(1, ((Fraction(1, 2), ((Fraction(0),), (Fraction(1, 3),))),))
    doc = cycle.to_json()
    assert doc["simplices"][0]["weight"] == "1/2"
    assert Cycle.from_json(doc) == cycle


# ==================== singular_homology ====================

def test_singular_homology_of_interval_fixture():
    result = singular_homology(space("interval").region)
    assert result.betti == [1, 0]
    assert not result.rescaled
    assert len(result.cycles[0]) == 1
    assert result.outside == {0: [0.0]}
    assert result.cycles_inside


def test_singular_homology_uses_cache(isolated_env):
    first = singular_homology(box([0, 0], [1, 1]), "1/4", use_cache=True)
    second = singular_homology(box([0, 0], [1, 1]), "1/4", use_cache=True)
    assert not first.cached
    assert second.cached
    assert second.betti == first.betti == [1, 0, 0]
    assert isolated_env.get_oracle_result(first.region_key, "1/4") is not None


def test_singular_homology_without_cache():
    result = singular_homology(interval(0, 1), "1/4", use_cache=False)
    assert not result.cached
    assert result.h == Fraction(1, 4)


@pytest.mark.slow
def test_punctured_plane_is_rescaled():
    result = singular_homology(space("punctured_plane").region)
    assert result.rescaled
    assert result.betti == [1, 1, 0]
    assert len(result.cycles[1]) == 1
    assert result.cycles_inside
