"""
立方 oracle：有理系数同调
坍缩后的复形上做精确有理消元，给出 Betti 数与循环代表元（Kuhn 剖分成仿射单形）
"""

import itertools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Optional, Sequence

import numpy as np
from sympy.polys.domains import QQ
from sympy.polys.matrices import DomainMatrix
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from core.config import get_config
from core.database import get_database
from core.errors import UnstableResolution
from core.logger import get_logger
from core.sampling import make_rng
from geometry.operations import bounded_rescale
from geometry.region import Region
from oracle.cubical import Cell, Chain, CubicalComplex, as_resolution, rasterize

logger = get_logger("oracle")

Vertex = tuple[Fraction, ...]
Simplex = tuple[Vertex, ...]


# ==================== 精确线性代数 ====================

def _domain_matrix(entries: dict[tuple[int, int], int], shape: tuple[int, int]) -> DomainMatrix:
    rows: dict[int, dict[int, Any]] = {}
    for (i, j), v in entries.items():
        rows.setdefault(i, {})[j] = QQ(v)
    return DomainMatrix(rows, shape, QQ)


def _rank(entries: dict[tuple[int, int], int], shape: tuple[int, int]) -> int:
    if not entries or 0 in shape:
        return 0
    _, pivots = _domain_matrix(entries, shape).rref()
    return len(pivots)


def _nullspace(entries: dict[tuple[int, int], int], shape: tuple[int, int]) -> list[list[Fraction]]:
    """由 rref 读出零空间基（每个自由列一个向量）"""
    rows, cols = shape
    if cols == 0:
        return []
    if not entries or rows == 0:
        return [[Fraction(int(i == j)) for i in range(cols)] for j in range(cols)]
    reduced, pivots = _domain_matrix(entries, shape).rref()
    dense = reduced.to_Matrix()
    table = [[Fraction(int(dense[i, j].p), int(dense[i, j].q)) for j in range(cols)] for i in range(len(pivots))]
    pivot_set = set(pivots)
    basis = []
    for free in range(cols):
        if free in pivot_set:
            continue
        vec = [Fraction(0)] * cols
        vec[free] = Fraction(1)
        for r, p in enumerate(pivots):
            vec[p] = -table[r][free]
        basis.append(vec)
    return basis


def _chain_sizes(K: CubicalComplex) -> list[int]:
    return [len(K.cells.get(d, ())) for d in range(K.n + 1)]


def betti(K: CubicalComplex) -> list[int]:
    """
    b_k = dim ker ∂_k - rank ∂_{k+1}

    先做初等坍缩，再对稀疏 ∂ 做精确有理消元。
    """
    L = K.collapsed() if K.collapsed_from is None else K
    sizes = _chain_sizes(L)
    ranks = [0] * (L.n + 2)
    for d in range(1, L.n + 1):
        ranks[d] = _rank(L.boundary_matrix(d), (sizes[d - 1], sizes[d]))
    return [sizes[k] - ranks[k] - ranks[k + 1] for k in range(L.n + 1)]


# ==================== 循环 ====================

def _permutation_sign(perm: Sequence[int]) -> int:
    sign = 1
    seen = list(perm)
    for i in range(len(seen)):
        for j in range(i + 1, len(seen)):
            if seen[i] > seen[j]:
                sign = -sign
    return sign


def kuhn_simplices(cell: Cell) -> list[tuple[int, tuple[Cell, ...]]]:
    """
    立方体的 Kuhn 剖分

    每个非退化方向的排列 π 给出单形 v, v+e_{π1}, v+e_{π1}+e_{π2}, ...，
    取向符号为 sign(π)（加倍坐标下每步 +2）。
    """
    axes = [i for i, c in enumerate(cell) if c & 1]
    base = tuple(c - 1 if c & 1 else c for c in cell)
    out = []
    for perm in itertools.permutations(range(len(axes))):
        current = list(base)
        verts = [tuple(current)]
        for p in perm:
            current[axes[p]] += 2
            verts.append(tuple(current))
        out.append((_permutation_sign(perm), tuple(verts)))
    return out


def _sorted_face(face: Simplex) -> tuple[Simplex, int]:
    order = sorted(range(len(face)), key=lambda i: face[i])
    return tuple(face[i] for i in order), _permutation_sign(order)


@dataclass(frozen=True)
class Cycle:
    """
    有理系数的仿射奇异单形组合

    simplices 为 (权重, 顶点组) 对；rescaled 表示顶点位于有界化后的坐标中。
    """
    k: int
    simplices: tuple[tuple[Fraction, Simplex], ...]
    rescaled: bool = False

    def boundary(self) -> dict[Simplex, Fraction]:
        """交错面和；闭链返回空字典"""
        out: dict[Simplex, Fraction] = {}
        if self.k == 0:
            return out
        for weight, verts in self.simplices:
            for i in range(len(verts)):
                face, sign = _sorted_face(verts[:i] + verts[i + 1:])
                coef = weight * (1 if i % 2 == 0 else -1) * sign
                out[face] = out.get(face, Fraction(0)) + coef
        return {f: v for f, v in out.items() if v != 0}

    def vertices(self) -> list[Vertex]:
        return [v for _, verts in self.simplices for v in verts]

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "rescaled": self.rescaled,
            "simplices": [
                {"weight": str(w), "vertices": [[str(x) for x in v] for v in verts]}
                for w, verts in self.simplices
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Cycle":
        simplices = tuple(
            (Fraction(s["weight"]), tuple(tuple(Fraction(x) for x in v) for v in s["vertices"]))
            for s in doc["simplices"]
        )
        return cls(int(doc["k"]), simplices, bool(doc.get("rescaled", False)))


def cycle_export(cycle: Cycle) -> dict:
    """循环导出为 JSON 顶点表（权重为有理数字符串）"""
    return cycle.to_json()


def _integral_chain(vec: Sequence[Fraction]) -> list[Fraction]:
    """缩放为互素整数系数"""
    nonzero = [v for v in vec if v != 0]
    if not nonzero:
        return list(vec)
    lcm = 1
    for v in nonzero:
        lcm = lcm * v.denominator // math.gcd(lcm, v.denominator)
    ints = [int(v * lcm) for v in vec]
    g = 0
    for v in ints:
        g = math.gcd(g, abs(v))
    sign = 1 if next(v for v in ints if v != 0) > 0 else -1
    return [Fraction(sign * v, g) for v in ints]


def chain_to_cycle(K: CubicalComplex, k: int, chain: Chain, rescaled: bool = False) -> Cycle:
    """立方链 -> Kuhn 剖分后的仿射单形链"""
    simplices = []
    for cell in sorted(chain):
        coef = chain[cell]
        if coef == 0:
            continue
        for sign, verts in kuhn_simplices(cell):
            simplices.append((coef * sign, tuple(K.point(v) for v in verts)))
    return Cycle(k, tuple(simplices), rescaled)


def cycle_basis(K: CubicalComplex, k: int, *, rescaled: bool = False) -> list[Cycle]:
    """
    H_k 的循环基

    ker ∂_k 的基向量接在 im ∂_{k+1} 的列之后做 rref，主元落在核部分的列
    即为模边界独立的循环。

    Returns:
        b_k 个 Cycle；k 超出维数或 b_k = 0 时为空列表
    """
    L = K.collapsed() if K.collapsed_from is None else K
    if k < 0 or k > L.n:
        return []
    sizes = _chain_sizes(L)
    if sizes[k] == 0:
        return []
    if k == 0:
        cycles_vecs = [[Fraction(int(i == j)) for i in range(sizes[0])] for j in range(sizes[0])]
    else:
        cycles_vecs = _nullspace(L.boundary_matrix(k), (sizes[k - 1], sizes[k]))
    if not cycles_vecs:
        return []
    bounds = L.boundary_matrix(k + 1) if k < L.n else {}
    n_bound = sizes[k + 1] if k < L.n else 0
    entries = dict(bounds)
    for j, vec in enumerate(cycles_vecs):
        for i, v in enumerate(vec):
            if v != 0:
                entries[(i, n_bound + j)] = v
    rows: dict[int, dict[int, Any]] = {}
    for (i, j), v in entries.items():
        rows.setdefault(i, {})[j] = QQ(v.numerator, v.denominator) if isinstance(v, Fraction) else QQ(v)
    _, pivots = DomainMatrix(rows, (sizes[k], n_bound + len(cycles_vecs)), QQ).rref()

    cells = L.cells[k]
    result = []
    for p in pivots:
        if p < n_bound:
            continue
        vec = _integral_chain(cycles_vecs[p - n_bound])
        chain = {cells[i]: v for i, v in enumerate(vec) if v != 0}
        result.append(chain_to_cycle(L, k, chain, rescaled))
    return result


def _barycentric(rng: np.random.Generator, k: int, count: int) -> np.ndarray:
    if k == 0:
        return np.ones((1, 1))
    return rng.dirichlet(np.ones(k + 1), size=count)


def cycle_outside_fraction(cycle: Cycle, region: Region, per_simplex: int = 100) -> float:
    """每个单形采样 per_simplex 个点，返回落在区域外的比例"""
    if region.is_point or not cycle.simplices:
        return 0.0
    rng = make_rng("cycle-check", region.key, str(cycle.k))
    total = 0
    outside = 0
    for _, verts in cycle.simplices:
        V = np.array([[float(x) for x in v] for v in verts], dtype=float)
        pts = _barycentric(rng, cycle.k, per_simplex) @ V
        inside = region.contains_array(pts)
        total += len(pts)
        outside += int((~inside).sum())
    return outside / total if total else 0.0


# ==================== oracle 入口 ====================

@dataclass
class OracleResult:
    """一个区域在给定步长下的 oracle 结果"""
    region_key: str
    h: Fraction
    betti: list[int]
    cycles: dict[int, list[Cycle]] = field(default_factory=dict)
    rescaled: bool = False
    cached: bool = False
    # 每个循环（按维数）在区域外的采样比例
    outside: dict[int, list[float]] = field(default_factory=dict)

    @property
    def cycles_inside(self) -> bool:
        return all(f == 0 for fractions in self.outside.values() for f in fractions)

    def to_dict(self) -> dict:
        return {
            "region_key": self.region_key,
            "h": str(self.h),
            "betti": list(self.betti),
            "rescaled": self.rescaled,
            "outside": {str(k): list(v) for k, v in sorted(self.outside.items())},
            "cycles": {str(k): [c.to_json() for c in v] for k, v in sorted(self.cycles.items())},
        }


def raster_frame(region: Region) -> tuple[Region, Optional[tuple], bool]:
    """无界区域先有界化：返回 (栅格化对象, 网格范围, 是否推移盒边界)"""
    if region.is_point or region.is_bounded():
        return region, None, True
    image, _, _ = bounded_rescale(region)
    box = ([-1] * region.n, [1] * region.n)
    return image, box, False


def _compute(region: Region, h: Fraction, use_cache: bool) -> OracleResult:
    target, box, nudge = raster_frame(region)
    rescaled = target is not region
    key = target.key
    if use_cache:
        hit = get_database().get_oracle_result(key, str(h))
        if hit is not None:
            betti_numbers, cycles_doc = hit
            cycles = {int(k): [Cycle.from_json(c) for c in v] for k, v in cycles_doc}
            logger.debug(f"oracle 缓存命中: {region.label} h={h}")
            return OracleResult(key, h, betti_numbers, cycles, rescaled, cached=True)
    K = rasterize(target, h, box=box, nudge_boundary=nudge).collapsed()
    numbers = betti(K)
    cycles = {k: cycle_basis(K, k, rescaled=rescaled) for k in range(len(numbers)) if numbers[k] > 0}
    if use_cache:
        get_database().save_oracle_result(
            key, str(h), numbers, [[k, [c.to_json() for c in v]] for k, v in sorted(cycles.items())]
        )
    return OracleResult(key, h, numbers, cycles, rescaled)


def singular_homology(region: Region, h: Any = None, *, use_cache: Optional[bool] = None,
                      max_halvings: Optional[int] = None) -> OracleResult:
    """
    区域的 Betti 数与循环基（稳定性规则：h 与 h/2 的 Betti 数必须一致）

    不一致时 h 减半重试，至多 max_halvings 次。

    Raises:
        EmptyRaster: 栅格为空
        UnstableResolution: 重试后仍不稳定
    """
    config = get_config().oracle
    h0 = as_resolution(h if h is not None else config.resolution)
    use_cache = config.use_cache if use_cache is None else use_cache
    halvings = config.max_halvings if max_halvings is None else max_halvings
    if region.is_empty:
        return OracleResult(region.key, h0, [0] * (region.n + 1))
    if region.is_point:
        point_cycle = Cycle(0, ((Fraction(1), ((),)),))
        return OracleResult(region.key, h0, [1], {0: [point_cycle]})

    result: Optional[OracleResult] = None
    for attempt in Retrying(stop=stop_after_attempt(halvings + 1),
                            retry=retry_if_exception_type(UnstableResolution), reraise=True):
        with attempt:
            h_cur = h0 / 2 ** (attempt.retry_state.attempt_number - 1)
            coarse = _compute(region, h_cur, use_cache)
            fine = _compute(region, h_cur / 2, use_cache)
            if coarse.betti != fine.betti:
                logger.warning(f"{region.label}: h={h_cur} 得 {coarse.betti}，h={h_cur / 2} 得 {fine.betti}，步长减半")
                raise UnstableResolution(
                    f"区域 {region.label} 的 Betti 数在 h 与 h/2 下不一致",
                    h=str(h_cur), coarse=coarse.betti, fine=fine.betti,
                )
            result = coarse

    frame, _, _ = raster_frame(region)
    outside = {}
    for k, cycles in sorted(result.cycles.items()):
        outside[k] = [cycle_outside_fraction(cycle, frame) for cycle in cycles]
        for bad in outside[k]:
            if bad > 0:
                logger.warning(f"{region.label}: {k} 维循环有 {bad:.1%} 的采样点落在区域外")
    result = replace(result, outside=outside)
    logger.info(f"oracle {region.label}: h={result.h} b={result.betti}")
    return result
