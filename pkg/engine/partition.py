"""
单位分解
ψ_i 取各区域的支撑函数（钳位松弛积的 p+1 次幂），f_i = ψ_i / Σψ_j
"""

from dataclasses import dataclass, field
from math import comb
from typing import Optional, Sequence

import numpy as np
import sympy
from sympy.logic.boolalg import Boolean

from core.config import get_config
from core.errors import PartitionFailure
from core.logger import get_logger
from core.sampling import make_rng, unit_directions
from geometry.region import Region
from kernel.equality import boundary_points
from kernel.evaluate import evaluate_many
from kernel.expr import ScalarExpr

logger = get_logger("engine")


@dataclass
class PartitionReport:
    """单位分解的不变量检查结果"""
    sum_to_one: bool
    nonnegative: bool
    vanishing: bool
    smooth: bool
    orders: int = 0
    samples: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.sum_to_one and self.nonnegative and self.vanishing and self.smooth

    def to_dict(self) -> dict:
        return {
            "sum_to_one": self.sum_to_one,
            "nonnegative": self.nonnegative,
            "vanishing": self.vanishing,
            "smooth": self.smooth,
            "orders": self.orders,
            "samples": self.samples,
            "failures": self.failures,
            "passed": self.passed,
        }


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """
    从属于覆盖 {U_i} 的 C^p 单位分解

    supports[i] 为 f_i 的支撑条件：在 U 中该条件不成立处 f_i 恒为零。
    """
    cover: tuple[Region, ...]
    union: Region
    functions: tuple[ScalarExpr, ...]
    bumps: tuple[ScalarExpr, ...]
    order: int
    supports: tuple[Boolean, ...]

    def __len__(self) -> int:
        return len(self.functions)

    def function(self, i: int) -> ScalarExpr:
        return self.functions[i]

    def symbolic_sum_is_one(self) -> bool:
        total = sympy.Add(*[f.expr for f in self.functions])
        if sympy.factor_terms(total) == 1:
            return True
        try:
            return sympy.cancel(sympy.together(total)) == 1
        except (TypeError, ValueError, sympy.PolynomialError):
            return False

    def check(self, *, samples: Optional[int] = None, boundary: int = 8) -> PartitionReport:
        """
        采样检查 Σf = 1、f ≥ 0、支撑外为零，以及在粘合轨迹上 min(p,2) 阶以内的光滑性
        """
        samples = samples or get_config().kernel.sample_count
        rng = make_rng("partition-check", self.union.key, self.order)
        pts = self.union.sample_points(samples, rng)
        failures: list = []
        nonnegative = True
        vanishing = True
        for i, (f, cover) in enumerate(zip(self.functions, self.cover)):
            values = evaluate_many(f, pts)
            if np.any(values < -1e-12) or not np.all(np.isfinite(values)):
                nonnegative = False
                failures.append({"check": "nonnegative", "index": i})
            outside = ~cover.contains_array(pts)
            if outside.any() and np.any(np.abs(values[outside]) > 1e-12):
                vanishing = False
                failures.append({"check": "vanishing", "index": i})
        smooth = True
        orders = min(self.order, 2)
        for i, cover in enumerate(self.cover):
            seam = boundary_points(cover.membership_condition, self.union, boundary,
                                   make_rng("partition-seam", self.union.key, i))
            for m in range(1, orders + 1):
                bad = _derivative_jumps(self.functions[i], seam, self.union, m, rng)
                if bad:
                    smooth = False
                    failures.append({"check": f"C^{m}", "index": i, "witness": bad})
                    break
        report = PartitionReport(self.symbolic_sum_is_one(), nonnegative, vanishing, smooth,
                                 orders, len(pts), failures)
        if not report.passed:
            logger.warning(f"单位分解检查未通过: {failures}")
        return report


# ==================== 有限差分 ====================

def _one_sided(f: ScalarExpr, x0: np.ndarray, u: np.ndarray, m: int, h: float) -> tuple[float, float]:
    """x0 处沿 ±u 的 m 阶单侧差商"""
    steps = np.arange(m + 1)
    weights = np.array([(-1) ** (m - i) * comb(m, i) for i in steps], dtype=float)
    forward = evaluate_many(f, x0[None, :] + h * steps[:, None] * u[None, :])
    backward = evaluate_many(f, x0[None, :] - h * steps[::-1, None] * u[None, :])
    return float(weights @ forward) / h ** m, float(weights @ backward) / h ** m


def _derivative_jumps(f: ScalarExpr, seam: np.ndarray, union: Region, m: int,
                      rng: np.random.Generator) -> Optional[list[float]]:
    """
    m 阶导数在接缝点处的跳跃

    比较前后单侧差商之差 J(h) 与 J(h/2)：导数连续时 J 随 h 线性衰减。
    返回第一个跳跃点，全部通过时返回 None。
    """
    h = get_config().engine.partition_step
    for x0 in seam:
        for u in unit_directions(rng, union.n, 2):
            probe = np.vstack([x0 + s * h * m * u for s in (-1, 1)])
            if not union.contains_array(probe).all():
                continue
            jumps = []
            for step in (h, h / 2):
                fwd, bwd = _one_sided(f, x0, u, m, step)
                jumps.append((abs(fwd - bwd), max(1.0, abs(fwd), abs(bwd))))
            (j1, scale), (j2, _) = jumps
            if not np.isfinite(j1) or not np.isfinite(j2):
                continue
            if j2 > 1e-6 * scale and j2 > 0.75 * j1:
                return [float(v) for v in x0]
    return None


# ==================== 构造 ====================

def _default_union(cover: Sequence[Region]) -> Region:
    ribbons = []
    for reg in cover:
        ribbons.extend(r for r in reg.ribbons if r not in ribbons)
    return Region(cover[0].n, tuple(ribbons))


def partition_of_unity(cover: Sequence[Region], p: int, *, union: Optional[Region] = None,
                       bumps: Optional[Sequence[ScalarExpr]] = None) -> PartitionOfUnity:
    """
    构造从属于 cover 的 C^p 单位分解

    Args:
        cover: 开覆盖（并为 union）
        p: 光滑阶数
        union: 覆盖的并，缺省为各 ribbon 的并
        bumps: 用户给出的 ψ_i，给出时替代默认的支撑函数

    Raises:
        PartitionFailure: Σψ 在 union 的某个采样点处为零（覆盖不全或松弛函数退化）
    """
    if not cover:
        raise PartitionFailure("覆盖为空")
    if p < 0:
        raise ValueError(f"单位分解阶数必须非负: {p}")
    union = union or _default_union(cover)
    if bumps is not None:
        if len(bumps) != len(cover):
            raise PartitionFailure(f"ψ 个数 {len(bumps)} 与覆盖个数 {len(cover)} 不一致")
        psi = [ScalarExpr.lift(b) for b in bumps]
    else:
        psi = [reg.support(p) for reg in cover]

    pts = union.sample_points(get_config().kernel.sample_count, make_rng("partition", union.key, p))
    total = np.zeros(len(pts))
    for b in psi:
        total += evaluate_many(b, pts)
    bad = ~(total > 0)
    if bad.any():
        witness = [float(v) for v in pts[int(np.argmax(bad))]]
        logger.error(f"Σψ 在采样点 {witness} 处为零")
        raise PartitionFailure("Σψ 在覆盖的并中出现零点：覆盖不全或松弛函数退化", witness=witness)

    if len(psi) == 1:
        functions = (ScalarExpr(sympy.Integer(1)),)
    else:
        denominator = sympy.Pow(sympy.Add(*[b.expr for b in psi]), -1)
        certs: dict = {}
        for b in psi:
            certs.update(b.certificates)
        functions = tuple(ScalarExpr(sympy.Mul(b.expr, denominator), certs) for b in psi)
    supports = tuple(reg.membership_condition for reg in cover)
    logger.debug(f"单位分解: {len(cover)} 个开集, p={p}")
    return PartitionOfUnity(tuple(cover), union, functions, tuple(psi), p, supports)
