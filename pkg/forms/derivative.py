"""
外微分
raw_d 在 C^1-zone 上逐系数求导；extended_D 再寻找连续延拓并给出正则性报告
"""

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
import sympy
from sympy import Piecewise
from sympy.core.relational import Relational

from core.config import get_config
from core.errors import NoExtension, RegularityFailure, UnverifiedExtension
from core.logger import get_logger
from core.sampling import make_rng, unit_directions
from forms.zoned_form import ZonedForm, sort_with_sign
from geometry.region import Region, box
from kernel.calculus import differentiate, kink_loci, zone_of_forms
from kernel.equality import boundary_points
from kernel.evaluate import evaluate_many
from kernel.expr import ScalarExpr, normalize

logger = get_logger("forms")

# 趋近半径序列（几何递减）
_RADII = 1e-4 * 0.5 ** np.arange(7)


@dataclass
class RegularityReport:
    """extended_D 的正则性报告"""
    extension: str = "verified"       # verified | sampled | none
    c0_ok: bool = True
    cq_ok: bool = True
    failed_order: Optional[int] = None
    boundary_points: int = 0
    directions: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "extension": self.extension,
            "c0_ok": self.c0_ok,
            "cq_ok": self.cq_ok,
            "failed_order": self.failed_order,
            "boundary_points": self.boundary_points,
            "directions": self.directions,
            "notes": list(self.notes),
        }


# ==================== raw_d ====================

def raw_d(omega: ZonedForm, variables: Optional[Iterable[int]] = None) -> ZonedForm:
    """
    分量外微分 Σ ∂a_J/∂x_i dx_i∧dx^J

    variables 给定时只对这些坐标求导（纤维分解里的 d_x / d_t）。

    结果的 zone 为各系数 C^1-zone 与原 zone 之交；q 降一阶（不低于 0）。
    """
    n, k = omega.n, omega.k
    table: dict[tuple, ScalarExpr] = {}
    chosen = set(variables) if variables is not None else None
    if k < n:
        for J, a in omega.coeffs:
            for i in range(1, n + 1):
                if i in J or (chosen is not None and i not in chosen):
                    continue
                d, _ = differentiate(a, i)
                if d.is_zero:
                    continue
                K, sign = sort_with_sign((i,) + J)
                table[K] = table.get(K, ScalarExpr(0)) + (d if sign > 0 else -d)
    zone = zone_of_forms(omega.expressions(), n, omega.region)
    if omega.zone is not None:
        zone = zone.intersect(omega.zone)
    return ZonedForm.build(n, k + 1, table, omega.region, max(omega.q - 1, 0), zone)


# ==================== 极限检查 ====================

def _directional_limits(expr: ScalarExpr, center: np.ndarray, dirs: np.ndarray,
                        region: Region, tol: float) -> tuple[list[float], bool]:
    """
    沿各方向趋近 center 的单侧极限

    Returns:
        (各方向的外推极限, 是否全部收敛)；落在区域外或无定义的方向跳过
    """
    limits = []
    converged = True
    for u in dirs:
        pts = center[None, :] + _RADII[:, None] * u[None, :]
        inside = region.contains_array(pts)
        if not inside.all():
            continue
        vals = evaluate_many(expr, pts)
        if not np.isfinite(vals).all():
            continue
        diffs = np.abs(np.diff(vals))
        scale = max(1.0, float(np.abs(vals).max()))
        # 差分几何递减或已低于容差视为收敛
        if diffs[-1] > tol * scale and diffs[-1] > 0.75 * diffs[-2] + tol * scale:
            converged = False
            continue
        limits.append(float(2 * vals[-1] - vals[-2]))
    return limits, converged


def continuity_at(expr: ScalarExpr, points: np.ndarray, region: Region, *,
                  directions: Optional[int] = None, tol: Optional[float] = None,
                  salt: str = "") -> tuple[bool, int]:
    """
    在一批点处做多方向极限一致性检查

    Returns:
        (是否连续, 实际使用的方向数)
    """
    cfg = get_config().derivative
    directions = directions or cfg.directions
    tol = tol if tol is not None else cfg.tolerance
    rng = make_rng("limits", salt, str(expr.expr))
    used = 0
    for p in points:
        dirs = unit_directions(rng, region.n, directions)
        limits, converged = _directional_limits(expr, p, dirs, region, tol)
        used += len(limits)
        if not converged:
            return False, used
        if len(limits) >= 2:
            spread = max(limits) - min(limits)
            if spread > max(tol, 1e-5) * max(1.0, max(abs(v) for v in limits)):
                return False, used
    return True, used


def _seam_matches(node: Piecewise) -> bool:
    """两支分段在分界面上是否一致（一元线性分界时符号化检查）"""
    pieces = list(node.args)
    if len(pieces) != 2 or pieces[1][1] is not sympy.true:
        return False
    (v1, cond), (v2, _) = pieces
    if not isinstance(cond, Relational):
        return False
    diff = cond.lhs - cond.rhs
    for sym in sorted(diff.free_symbols, key=sympy.default_sort_key):
        if not diff.is_polynomial(sym) or sympy.degree(diff, sym) != 1:
            continue
        sol = sympy.solve(diff, sym)
        if len(sol) != 1:
            continue
        gap = (v1 - v2).xreplace({sym: sol[0]})
        try:
            return sympy.simplify(gap) == 0
        except (TypeError, ValueError):
            return False
    return False


def _symbolically_continuous(expr: ScalarExpr) -> bool:
    """没有分母、对数与失配分段时，表达式由连续运算复合而成"""
    e = expr.expr
    for node in sympy.preorder_traversal(e):
        if isinstance(node, sympy.log):
            return False
        if isinstance(node, sympy.Pow) and node.exp.is_Rational and node.exp < 0:
            return False
        if isinstance(node, Piecewise) and not _seam_matches(node):
            return False
    return True


def _kink_points(exprs: list[ScalarExpr], region: Region, count: int, salt: str) -> np.ndarray:
    """区域内所有系数奇异轨迹上的点"""
    found = []
    for e in exprs:
        for locus in kink_loci(e):
            rng = make_rng("kinks", salt, str(locus.expr))
            pts = boundary_points(sympy.Gt(locus.expr, 0), region, max(count // 2, 4), rng)
            if len(pts):
                found.append(pts)
    if not found:
        return np.zeros((0, region.n))
    pts = np.vstack(found)
    return pts[:count]


# ==================== extended_D ====================

def _default_region(omega: ZonedForm) -> Region:
    if omega.region is not None:
        return omega.region
    return box([-1] * omega.n, [1] * omega.n)


def extended_D(omega: ZonedForm, *, strict: bool = False, check_regularity: bool = True) -> ZonedForm:
    """
    扩展导数 D

    先在 C^1-zone 上求 raw_d 并规范化系数，再检查 zone 边界处的连续延拓：
    分段接缝符号化吻合且没有分母 / 对数时判为 verified；否则在边界采样点上
    沿多方向求极限（32 点、8 方向、tol 1e-7），一致则为 sampled，不一致抛 NoExtension。
    q ≥ 1 时再检查 η 的 C^q 性（最多二阶偏导），失败记为 cq_ok = False。

    Args:
        omega: 连续形式
        strict: True 时 sampled 抛 UnverifiedExtension，C^q 失败抛 RegularityFailure
        check_regularity: 是否做 C^q 检查

    Returns:
        η = Dω（附带 RegularityReport，且 η 与 ω 的兼容性已缓存在 ω.with_derivative 中可取）
    """
    if omega.derivative is not None and omega.derivative.report is not None:
        return omega.derivative
    cfg = get_config().derivative
    region = _default_region(omega)
    raw = raw_d(omega)
    eta = raw.map_coeffs(normalize).with_zone(raw.zone)
    report = RegularityReport()
    salt = f"{omega.n}:{omega.k}:{omega!r}"

    exprs = eta.expressions() + omega.expressions()
    if all(_symbolically_continuous(e) for e in eta.expressions()):
        report.extension = "verified"
    else:
        points = _kink_points(exprs, region, cfg.boundary_points, salt)
        report.boundary_points = len(points)
        for e in eta.expressions():
            ok, used = continuity_at(e, points, region, salt=salt)
            report.directions += used
            if not ok:
                report.extension = "none"
                report.c0_ok = False
                logger.error(f"扩展导数在 zone 边界不连续: {e}")
                raise NoExtension(f"zone 导数在边界处无连续延拓: {e}", form=repr(omega))
        report.extension = "sampled"
        report.notes.append("延拓连续性仅通过采样验证")

    if check_regularity and omega.q >= 1 and eta.coeffs:
        order_cap = min(omega.q, 2)
        points = _kink_points(exprs, region, cfg.boundary_points, salt + ":cq")
        current = eta.expressions()
        for order in range(1, order_cap + 1):
            nxt = []
            for e in current:
                for i in range(1, omega.n + 1):
                    nxt.append(differentiate(e, i)[0])
            current = nxt
            for e in current:
                if e.is_zero or _symbolically_continuous(e):
                    continue
                ok, _ = continuity_at(e, points, region, salt=f"{salt}:{order}")
                if not ok:
                    report.cq_ok = False
                    report.failed_order = order
                    report.notes.append(f"η 为 C^0 但在 {order} 阶偏导处不连续，不属于 C^{omega.q}")
                    break
            if not report.cq_ok:
                break

    if report.extension == "sampled":
        logger.warning(f"UnverifiedExtension: {omega!r}")
        if strict:
            raise UnverifiedExtension("扩展导数只通过采样验证", form=repr(omega))
    if not report.cq_ok:
        logger.warning(f"正则性不足: {report.notes[-1]}")
        if strict:
            raise RegularityFailure(report.notes[-1], form=repr(omega), order=report.failed_order)
    return eta.with_report(report)


def with_extended_derivative(omega: ZonedForm, **kwargs) -> ZonedForm:
    """返回缓存了 Dω 的 ω"""
    if omega.derivative is not None:
        return omega
    return omega.with_derivative(extended_D(omega, **kwargs))
