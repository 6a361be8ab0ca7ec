"""
区域的立方栅格化
单元用加倍整数坐标表示：奇数分量为非退化方向，偶数分量为顶点坐标；
网格坐标与顶点均为精确有理数。
"""

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional, Sequence

import numpy as np
import sympy
from sympy.core.relational import Relational

from core.errors import DomainError, EmptyRaster
from core.logger import get_logger
from geometry.region import Region
from kernel.evaluate import evaluate_many
from kernel.expr import ScalarExpr

logger = get_logger("oracle")

Cell = tuple[int, ...]
Chain = dict[Cell, Fraction]

# 判定点距区域边界过近、改用精确求值的阈值
EXACT_MARGIN = 1e-9
# 包围盒边界上的顶点向内推移 NUDGE·h
NUDGE = Fraction(1, 10 ** 9)


def as_resolution(h: Any) -> Fraction:
    """把 0.125、"1/8" 之类统一为有理步长"""
    value = Fraction(str(h)) if isinstance(h, str) else Fraction(h)
    value = value.limit_denominator(10 ** 6)
    if value <= 0:
        raise ValueError(f"网格步长必须为正: {h}")
    return value


def cell_dim(cell: Cell) -> int:
    return sum(c & 1 for c in cell)


def cell_boundary(cell: Cell) -> list[tuple[Cell, int]]:
    """
    立方边界 ∂ = Σ_j (-1)^j (上面 - 下面)，j 为非退化方向的序号

    例：(1,) -> [((2,), +1), ((0,), -1)]，即 终点 - 起点。
    """
    faces = []
    j = 0
    for i, c in enumerate(cell):
        if not c & 1:
            continue
        sign = 1 if j % 2 == 0 else -1
        upper = cell[:i] + (c + 1,) + cell[i + 1:]
        lower = cell[:i] + (c - 1,) + cell[i + 1:]
        faces.append((upper, sign))
        faces.append((lower, -sign))
        j += 1
    return faces


def boundary(chain: Chain) -> Chain:
    """链的边界（系数为零的项删除）"""
    out: dict[Cell, Fraction] = {}
    for cell, coef in chain.items():
        for face, sign in cell_boundary(cell):
            out[face] = out.get(face, Fraction(0)) + sign * Fraction(coef)
    return {c: v for c, v in out.items() if v != 0}


@dataclass(frozen=True, eq=False)
class CubicalComplex:
    """
    立方复形

    lows 为网格原点，h 为步长，counts 为各轴格数；cells[d] 为排好序的 d 维单元。
    """
    lows: tuple[Fraction, ...]
    h: Fraction
    counts: tuple[int, ...]
    cells: dict[int, tuple[Cell, ...]]
    top: tuple[Cell, ...] = ()
    collapsed_from: Optional[int] = field(default=None, compare=False)
    nudge: bool = field(default=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.lows)

    @property
    def size(self) -> int:
        return sum(len(v) for v in self.cells.values())

    def index(self, d: int) -> dict[Cell, int]:
        return {c: i for i, c in enumerate(self.cells.get(d, ()))}

    def point(self, cell: Cell) -> tuple[Fraction, ...]:
        """
        顶点（偶数分量）的精确坐标；奇数分量给出中点

        nudge 时盒边界上的顶点取栅格化判定时的推移位置，循环因而落在区域内。
        """
        return tuple(
            _vertex_coordinate(lo, self.h, c // 2, count, self.nudge) if c % 2 == 0 else lo + Fraction(c, 2) * self.h
            for lo, c, count in zip(self.lows, cell, self.counts)
        )

    def boundary_matrix(self, d: int) -> dict[tuple[int, int], int]:
        """∂_d 的稀疏表示 {(行, 列): ±1}，行为 d-1 维单元，列为 d 维单元"""
        if d <= 0:
            return {}
        rows = self.index(d - 1)
        entries: dict[tuple[int, int], int] = {}
        for col, cell in enumerate(self.cells.get(d, ())):
            for face, sign in cell_boundary(cell):
                row = rows.get(face)
                if row is not None:
                    entries[(row, col)] = entries.get((row, col), 0) + sign
        return {k: v for k, v in entries.items() if v != 0}

    def collapsed(self) -> "CubicalComplex":
        """初等坍缩后的子复形（同伦等价）"""
        return collapse(self)

    def __repr__(self) -> str:
        dims = {d: len(v) for d, v in sorted(self.cells.items())}
        return f"CubicalComplex(h={self.h}, cells={dims})"


# ==================== 栅格化 ====================

def _grid_box(region: Region, h: Fraction, box: Optional[tuple[Sequence[Any], Sequence[Any]]]):
    if box is not None:
        lows = [Fraction(sympy.nsimplify(v)) if not isinstance(v, (int, Fraction)) else Fraction(v) for v in box[0]]
        highs = [Fraction(sympy.nsimplify(v)) if not isinstance(v, (int, Fraction)) else Fraction(v) for v in box[1]]
    else:
        lo, hi = region.bounding_box()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError(f"区域 {region.label} 无界，栅格化前需 bounded_rescale")
        lows = [math.floor(Fraction(v).limit_denominator(10 ** 9) / h) * h for v in lo]
        highs = [math.ceil(Fraction(v).limit_denominator(10 ** 9) / h) * h for v in hi]
    counts = [max(int(math.ceil((b - a) / h)), 1) for a, b in zip(lows, highs)]
    return tuple(lows), tuple(counts)


def _relational_gaps(region: Region) -> list[ScalarExpr]:
    rels = region.membership_condition.atoms(Relational)
    return [ScalarExpr(r.lhs - r.rhs, validate=False) for r in sorted(rels, key=sympy.default_sort_key)]


def _exact_contains(region: Region, point: Sequence[Fraction]) -> bool:
    try:
        return region.contains(list(point))
    except DomainError:
        return False


def _membership(region: Region, exact_points: list[tuple[Fraction, ...]], gaps: list[ScalarExpr]) -> np.ndarray:
    """浮点过滤 + 近边界点精确复核"""
    pts = np.array([[float(v) for v in p] for p in exact_points], dtype=float)
    inside = region.contains_array(pts)
    near = np.zeros(len(pts), dtype=bool)
    for gap in gaps:
        values = evaluate_many(gap, pts)
        near |= np.abs(values) < EXACT_MARGIN
    for i in np.flatnonzero(near):
        inside[i] = _exact_contains(region, exact_points[i])
    if near.any():
        logger.debug(f"{int(near.sum())} 个点落在边界附近，已精确复核")
    return inside


def _vertex_coordinate(lo: Fraction, h: Fraction, i: int, count: int, nudge: bool) -> Fraction:
    x = lo + i * h
    if nudge and i == 0:
        return x + NUDGE * h
    if nudge and i == count:
        return x - NUDGE * h
    return x


def rasterize(region: Region, h: Any, *, box: Optional[tuple[Sequence[Any], Sequence[Any]]] = None,
              nudge_boundary: bool = True) -> CubicalComplex:
    """
    栅格化有界区域

    立方体入选当且仅当中心与全部角点都在区域内。包围盒边界上的角点先向内推移
    10⁻⁹·h 再判定；nudge_boundary=False 时这些角点按原位置判定（有界化后的区域
    在盒边界上无定义，因而贴边的立方体全部排除）。

    Args:
        region: 有界区域
        h: 网格步长
        box: 显式网格范围 (lows, highs)，缺省为包围盒向外取整到 h 的倍数
        nudge_boundary: 是否推移盒边界角点

    Raises:
        EmptyRaster: 没有任何立方体入选
    """
    h = as_resolution(h)
    if region.is_point:
        return CubicalComplex((), h, (), {0: ((),)}, ((),))
    if region.is_empty:
        raise EmptyRaster("空区域没有立方体", region=region.label)
    n = region.n
    lows, counts = _grid_box(region, h, box)
    gaps = _relational_gaps(region)

    axes = [
        [_vertex_coordinate(lows[a], h, i, counts[a], nudge_boundary) for i in range(counts[a] + 1)]
        for a in range(n)
    ]
    vertex_grid = list(itertools.product(*[range(c + 1) for c in counts]))
    vertex_in = _membership(region, [tuple(axes[a][i] for a, i in enumerate(v)) for v in vertex_grid], gaps)
    vertex_in = vertex_in.reshape(tuple(c + 1 for c in counts))

    cube_grid = list(itertools.product(*[range(c) for c in counts]))
    centers = [tuple(lows[a] + (Fraction(1, 2) + j) * h for a, j in enumerate(cube)) for cube in cube_grid]
    center_in = _membership(region, centers, gaps).reshape(tuple(counts))

    keep = center_in.copy()
    for corner in itertools.product((0, 1), repeat=n):
        sl = tuple(slice(c, c + counts[a]) for a, c in enumerate(corner))
        keep &= vertex_in[sl]

    top = tuple(sorted(tuple(2 * int(j) + 1 for j in idx) for idx in zip(*np.nonzero(keep))))
    if not top:
        raise EmptyRaster(f"区域 {region.label} 在 h={h} 下没有完整立方体", region=region.label, h=str(h))
    cells = _closure(top, n)
    complex_ = CubicalComplex(lows, h, counts, cells, top, nudge=nudge_boundary)
    logger.debug(f"栅格化 {region.label}: h={h} 顶层立方体 {len(top)} 个, {complex_}")
    return complex_


def _closure(top: Sequence[Cell], n: int) -> dict[int, tuple[Cell, ...]]:
    layers: dict[int, set] = {n: set(top)}
    for d in range(n, 0, -1):
        faces: set = set()
        for cell in layers[d]:
            faces.update(face for face, _ in cell_boundary(cell))
        layers[d - 1] = faces
    return {d: tuple(sorted(layers[d])) for d in range(n + 1)}


# ==================== 初等坍缩 ====================

def collapse(K: CubicalComplex) -> CubicalComplex:
    """
    反复删除自由面对 (τ, σ)：τ 恰为一个 σ 的余维 1 面

    立方复形中这样的 σ 必为极大单元，删除后得到同伦等价的子复形。
    """
    alive: set = set()
    cofaces: dict[Cell, set] = {}
    for d in range(K.n + 1):
        for cell in K.cells.get(d, ()):
            alive.add(cell)
            cofaces.setdefault(cell, set())
    for d in range(1, K.n + 1):
        for cell in K.cells.get(d, ()):
            for face, _ in cell_boundary(cell):
                cofaces[face].add(cell)

    queue = deque(sorted(c for c in alive if len(cofaces[c]) == 1))
    while queue:
        tau = queue.popleft()
        if tau not in alive or len(cofaces[tau]) != 1:
            continue
        sigma = next(iter(cofaces[tau]))
        for cell in (tau, sigma):
            alive.discard(cell)
            for face, _ in cell_boundary(cell):
                if face in alive:
                    cofaces[face].discard(cell)
                    if len(cofaces[face]) == 1:
                        queue.append(face)
        cofaces[tau].clear()

    cells = {d: tuple(c for c in K.cells.get(d, ()) if c in alive) for d in range(K.n + 1)}
    result = CubicalComplex(K.lows, K.h, K.counts, cells, K.top, K.size, K.nudge)
    logger.debug(f"坍缩: {K.size} -> {result.size} 个单元")
    return result


# ==================== 调试导出 ====================

def raster_dump(K: CubicalComplex) -> dict:
    """稀疏立方体列表 {h, box, cubes}，cubes 为各顶层立方体的下角格点下标"""
    highs = [lo + c * K.h for lo, c in zip(K.lows, K.counts)]
    return {
        "h": str(K.h),
        "box": [[str(lo), str(hi)] for lo, hi in zip(K.lows, highs)],
        "cubes": [[(c - 1) // 2 for c in cell] for cell in K.top],
    }
