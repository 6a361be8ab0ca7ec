"""
周期矩阵与环绕数
周期 ∫_z ω 排成矩阵（行：形式，列：循环），秩用奇异值间隔规则判定
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional, Sequence

import numpy as np
import sympy
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from core.config import get_config
from core.errors import DomainError, RankAmbiguous
from core.logger import get_logger
from forms.maps import SmoothMap
from forms.zoned_form import ZonedForm, angular_form
from integration.quadrature import QuadratureSpec, chain_from_cycle, integrate_chain
from kernel.evaluate import evaluate

logger = get_logger("integration")


@dataclass
class PeriodMatrix:
    """周期矩阵及其秩判定"""
    matrix: np.ndarray
    errors: np.ndarray
    rank: int
    singular_values: list[float] = field(default_factory=list)
    det: Optional[float] = None
    exact: bool = False
    order: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.matrix.shape)

    @property
    def is_square(self) -> bool:
        return self.matrix.shape[0] == self.matrix.shape[1]

    @property
    def perfect(self) -> bool:
        """方阵且非奇异（行归一化后 |det| 不低于下限）"""
        if not self.is_square:
            return False
        if self.matrix.shape[0] == 0:
            return True
        floor = get_config().engine.det_floor
        return self.rank == self.matrix.shape[0] and self.det is not None and abs(self.det) >= floor

    def to_dict(self) -> dict:
        return {
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "errors": [[float(v) for v in row] for row in self.errors],
            "rank": self.rank,
            "singular_values": self.singular_values,
            "det": self.det,
            "exact": self.exact,
            "perfect": self.perfect,
            "order": self.order,
        }


def normalized_det(matrix: np.ndarray) -> Optional[float]:
    """每行除以该行最大绝对值后的行列式（零行给 0）"""
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        return None
    if matrix.shape[0] == 0:
        return 1.0
    scale = np.abs(matrix).max(axis=1)
    if np.any(scale == 0):
        return 0.0
    return float(np.linalg.det(matrix / scale[:, None]))


def numeric_rank(matrix: np.ndarray, *, gap: Optional[float] = None, zero: Optional[float] = None) -> tuple[int, list[float]]:
    """
    奇异值间隔规则

    相对最大奇异值（至少 1）的尺度，小于 zero 的归为 "零"，不小于 zero·gap 的
    归为 "非零"，两者之间视为模糊。

    Raises:
        RankAmbiguous: 有奇异值落在模糊带内
    """
    cfg = get_config().engine
    gap = cfg.gap_ratio if gap is None else gap
    zero = cfg.zero_tolerance if zero is None else zero
    if matrix.size == 0:
        return 0, []
    s = np.linalg.svd(matrix, compute_uv=False)
    scale = max(1.0, float(s.max()))
    lo, hi = zero * scale, zero * gap * scale
    ambiguous = [float(v) for v in s if lo <= v < hi]
    if ambiguous:
        logger.error(f"奇异值 {ambiguous} 落在模糊带 [{lo:.1e}, {hi:.1e})")
        raise RankAmbiguous(
            "奇异值落在零附近的模糊带内，需要更高的求积阶数",
            singular_values=[float(v) for v in s], band=[lo, hi],
        )
    return int((s >= hi).sum()), [float(v) for v in s]


def exact_rank(rows: Sequence[Sequence[Fraction]]) -> int:
    """有理矩阵的精确秩"""
    if not rows or not rows[0]:
        return 0
    M = sympy.Matrix([[sympy.Rational(v.numerator, v.denominator) for v in row] for row in rows])
    return M.rank()


def _exact_point_periods(forms: Sequence[ZonedForm], cycles: Sequence[Any]) -> Optional[list[list[Fraction]]]:
    """0 次周期在有理点上精确求值；任何一项不是有理数时返回 None"""
    table = []
    for form in forms:
        row = []
        for cycle in cycles:
            if getattr(cycle, "rescaled", False):
                return None
            total = Fraction(0)
            for weight, verts in cycle.simplices:
                for _, coeff in form.coeffs:
                    try:
                        value = evaluate(coeff, list(verts[0]))
                    except DomainError:
                        return None
                    if not isinstance(value, Fraction):
                        return None
                    total += Fraction(weight) * value
            row.append(total)
        table.append(row)
    return table


def period_values(forms: Sequence[ZonedForm], cycles: Sequence[Any], *, outer: Optional[SmoothMap] = None,
                  spec: Optional[QuadratureSpec] = None) -> tuple[np.ndarray, np.ndarray, Optional[list[list[Fraction]]]]:
    """
    周期表（不做秩判定）

    Returns:
        (数值矩阵, 误差估计, 精确有理矩阵或 None)
    """
    spec = spec or QuadratureSpec.from_config()
    k = forms[0].k if forms else (cycles[0].k if cycles else 0)
    if k == 0 and forms and cycles:
        exact = _exact_point_periods(forms, cycles)
        if exact is not None:
            matrix = np.array([[float(v) for v in row] for row in exact], dtype=float)
            return matrix, np.zeros_like(matrix), exact

    matrix = np.zeros((len(forms), len(cycles)))
    errors = np.zeros_like(matrix)
    for i, form in enumerate(forms):
        for j, cycle in enumerate(cycles):
            result = integrate_chain(form, chain_from_cycle(cycle, outer), spec)
            matrix[i, j] = result.value
            errors[i, j] = result.error
    return matrix, errors, None


def _compute(forms: Sequence[ZonedForm], cycles: Sequence[Any], outer: Optional[SmoothMap],
             spec: QuadratureSpec) -> PeriodMatrix:
    matrix, errors, exact = period_values(forms, cycles, outer=outer, spec=spec)
    if exact is not None:
        s = [float(v) for v in np.linalg.svd(matrix, compute_uv=False)] if matrix.size else []
        return PeriodMatrix(matrix, errors, exact_rank(exact), s, normalized_det(matrix), True, spec.order)
    rank, s = numeric_rank(matrix)
    return PeriodMatrix(matrix, errors, rank, s, normalized_det(matrix), False, spec.order)


def period_matrix(forms: Sequence[ZonedForm], cycles: Sequence[Any], *, outer: Optional[SmoothMap] = None,
                  spec: Optional[QuadratureSpec] = None, max_doublings: Optional[int] = None) -> PeriodMatrix:
    """
    周期矩阵 P[i][j] = ∫_{z_j} ω_i

    0 次且点有理时精确计算；否则数值积分，RankAmbiguous 时 Gauss 阶数翻倍重试。

    Args:
        forms: 闭形式
        cycles: oracle 循环
        outer: 循环顶点所在坐标到形式坐标的映射（有界化时为 ρ⁻¹）
        spec: 积分参数
        max_doublings: 阶数翻倍次数上限，缺省取配置

    Raises:
        RankAmbiguous: 翻倍后仍落在模糊带内
    """
    spec = spec or QuadratureSpec.from_config()
    doublings = get_config().quadrature.max_doublings if max_doublings is None else max_doublings
    result: Optional[PeriodMatrix] = None
    for attempt in Retrying(stop=stop_after_attempt(doublings + 1),
                            retry=retry_if_exception_type(RankAmbiguous), reraise=True):
        with attempt:
            number = attempt.retry_state.attempt_number
            current = QuadratureSpec(spec.order * 2 ** (number - 1), spec.epsilons, spec.tolerance, spec.max_depth)
            if number > 1:
                logger.warning(f"秩判定模糊，Gauss 阶数提高到 {current.order}")
            result = _compute(forms, cycles, outer, current)
    logger.debug(f"周期矩阵 {result.shape}: rank={result.rank} det={result.det}")
    return result


def winding_number(cycle: Any, center: Sequence[Any] = (0, 0), *, outer: Optional[SmoothMap] = None,
                   spec: Optional[QuadratureSpec] = None) -> float:
    """1-循环绕 center 的环绕数 = 角形式周期 / 2π（只看前两个坐标）"""
    n = len(cycle.simplices[0][1][0]) if cycle.simplices else 2
    theta = angular_form(tuple(center), n)
    value = integrate_chain(theta, chain_from_cycle(cycle, outer), spec).value
    return value / (2 * math.pi)
