"""
判等与采样探测
先比较规范形，再在区域的种子采样点上做数值比较；
同时提供 zone 稠密性抽查与条件边界点定位
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional

import numpy as np
import sympy

from core.config import get_config
from core.errors import SamplingError
from core.logger import get_logger
from core.sampling import make_rng, unit_directions
from kernel.evaluate import evaluate_many, holds_many
from kernel.expr import ScalarExpr, Zone, normal_token, normalize

logger = get_logger("kernel")


class VerdictKind(str, Enum):
    SYMBOLIC = "SymbolicEqual"
    NUMERIC = "NumericEqual"
    DISTINCT = "Distinct"


_RANK = {VerdictKind.SYMBOLIC: 0, VerdictKind.NUMERIC: 1, VerdictKind.DISTINCT: 2}


@dataclass(frozen=True)
class Verdict:
    """判等结论"""
    kind: VerdictKind
    tolerance: Optional[float] = None
    samples: int = 0
    witness: Optional[tuple] = None
    residual: float = 0.0

    @property
    def passed(self) -> bool:
        return self.kind != VerdictKind.DISTINCT

    def to_dict(self) -> dict:
        data = {"kind": self.kind.value, "residual": float(self.residual)}
        if self.tolerance is not None:
            data["tolerance"] = self.tolerance
            data["samples"] = self.samples
        if self.witness is not None:
            data["witness"] = [float(v) for v in self.witness]
        return data

    @classmethod
    def symbolic(cls) -> "Verdict":
        return cls(VerdictKind.SYMBOLIC)


def worst(verdicts: Iterable[Verdict]) -> Verdict:
    """取最差的结论（Distinct > NumericEqual > SymbolicEqual）"""
    result = Verdict.symbolic()
    for v in verdicts:
        if _RANK[v.kind] > _RANK[result.kind]:
            result = v
        elif v.kind == result.kind and v.residual > result.residual:
            result = v
    return result


def _symbolic_equal(e1: ScalarExpr, e2: ScalarExpr) -> bool:
    if e1.has_float or e2.has_float:
        return False
    if e1.expr == e2.expr:
        return True
    if normal_token(e1) == normal_token(e2):
        return True
    return normalize(e1 - e2).expr == 0


def sample_region(region: Any, count: int, rng: np.random.Generator, n: int) -> np.ndarray:
    """区域采样；region 为 None 时在 [-1, 1]^n 内均匀采样"""
    if region is None:
        return rng.uniform(-1.0, 1.0, size=(count, n))
    return region.sample_points(count, rng)


def compare_values(v1: np.ndarray, v2: np.ndarray, points: np.ndarray, tol: float) -> Verdict:
    """两组数值的比较（只看两者都有定义的点）"""
    mask = np.isfinite(v1) & np.isfinite(v2)
    if not mask.any():
        raise SamplingError("采样点上两侧均无定义")
    scale = np.maximum(1.0, np.maximum(np.abs(v1[mask]), np.abs(v2[mask])))
    rel = np.abs(v1[mask] - v2[mask]) / scale
    residual = float(rel.max())
    if residual <= tol:
        return Verdict(VerdictKind.NUMERIC, tol, int(mask.sum()), residual=residual)
    worst_at = int(np.argmax(rel))
    witness = tuple(float(v) for v in points[mask][worst_at])
    return Verdict(VerdictKind.DISTINCT, tol, int(mask.sum()), witness=witness, residual=residual)


def equal(
    e1: ScalarExpr,
    e2: ScalarExpr,
    region: Any = None,
    *,
    tol: Optional[float] = None,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Verdict:
    """
    半判定判等

    Args:
        e1, e2: 待比较的表达式
        region: 采样区域（需提供 sample_points 与 n）
        tol: 数值容差，默认取配置（1e-9）
        samples: 采样点数，默认取配置（64）
        rng: 随机源，默认由种子与两侧规范形派生

    Returns:
        SymbolicEqual / NumericEqual(tol, N) / Distinct(witness)
    """
    cfg = get_config().kernel
    tol = cfg.tolerance if tol is None else tol
    samples = cfg.sample_count if samples is None else samples
    e1, e2 = ScalarExpr.lift(e1), ScalarExpr.lift(e2)
    if _symbolic_equal(e1, e2):
        return Verdict.symbolic()
    n = region.n if region is not None else max(e1.dimension, e2.dimension, 1)
    if rng is None:
        # 盐值与参数顺序无关，保证判等对称
        salt = sorted([str(e1.expr), str(e2.expr)])
        rng = make_rng("equal", *salt)
    points = sample_region(region, samples, rng, n)
    if len(points) == 0:
        raise SamplingError("区域中没有采样点")
    return compare_values(evaluate_many(e1, points), evaluate_many(e2, points), points, tol)


def is_zero(e: ScalarExpr, region: Any = None, **kwargs: Any) -> Verdict:
    """e 是否恒为零"""
    return equal(e, ScalarExpr(sympy.Integer(0)), region, **kwargs)


# ============================================================
# 稠密性抽查与边界点
# ============================================================

@dataclass
class DensityReport:
    balls: int
    hits: int
    radius: float
    misses: list = field(default_factory=list)

    @property
    def dense(self) -> bool:
        return self.hits == self.balls


def check_density(zone: Zone, region: Any, *, count: int = 32, per_ball: int = 16,
                  rng: Optional[np.random.Generator] = None) -> DensityReport:
    """
    抽查 zone 在区域中的稠密性

    以区域中的采样点为球心、半径 density_radius 的球内取点，
    每个球都至少要有一个点落在 zone 内。
    """
    radius = get_config().kernel.density_radius
    rng = rng or make_rng("density", str(zone.condition))
    centers = region.sample_points(count, rng)
    hits = 0
    misses = []
    for center in centers:
        dirs = unit_directions(rng, region.n, per_ball)
        radii = radius * rng.uniform(0, 1, size=(per_ball, 1)) ** (1.0 / max(region.n, 1))
        ball = np.vstack([center[None, :], center + dirs * radii])
        if holds_many(zone.condition, ball).any():
            hits += 1
        else:
            misses.append(tuple(float(v) for v in center))
    if misses:
        logger.warning(f"zone 稠密性抽查有 {len(misses)} 个球未命中: {zone.condition}")
    return DensityReport(len(centers), hits, radius, misses)


def boundary_points(cond: sympy.Basic, region: Any, count: int,
                    rng: Optional[np.random.Generator] = None, *, iterations: int = 48) -> np.ndarray:
    """
    在区域内定位条件集合的边界点

    采样后分出条件成立与不成立的两组点，对每个成立点与最近的不成立点做二分，
    保留落在区域内的边界点。条件在采样上恒真或恒假时返回空数组。
    """
    rng = rng or make_rng("boundary", str(cond))
    pool = region.sample_points(max(8 * count, 64), rng)
    inside = holds_many(cond, pool)
    a, b = pool[inside], pool[~inside]
    if len(a) == 0 or len(b) == 0:
        return np.zeros((0, region.n))
    result = []
    order = rng.permutation(len(a))
    for idx in order:
        p = a[idx]
        q = b[int(np.argmin(np.linalg.norm(b - p, axis=1)))]
        lo, hi = p.copy(), q.copy()
        for _ in range(iterations):
            mid = (lo + hi) / 2
            if holds_many(cond, mid[None, :])[0]:
                lo = mid
            else:
                hi = mid
        point = (lo + hi) / 2
        if region.contains_array(point[None, :])[0]:
            result.append(point)
        if len(result) >= count:
            break
    if not result:
        return np.zeros((0, region.n))
    return np.array(result)
