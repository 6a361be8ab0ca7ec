"""
区域运算
ribbon 交、区域交、一维约束的精确消去、有界化重标度
"""

from typing import Optional

import numpy as np
import sympy
from sympy import Piecewise
from sympy.core.relational import Relational

from core.errors import SamplingError, UnsupportedRegion
from core.logger import get_logger
from core.sampling import make_rng
from forms.maps import SmoothMap
from geometry.region import Region, Ribbon, point
from kernel.calculus import to_piecewise
from kernel.evaluate import holds
from kernel.expr import ScalarExpr, coord

logger = get_logger("geometry")


# ==================== 一维约束消去 ====================

def _roots(value: sympy.Basic, x: sympy.Symbol) -> set:
    out: set = set()
    num, den = sympy.fraction(sympy.together(value))
    for part in (num, den):
        if not part.has(x):
            continue
        for node in part.atoms(sympy.Pow):
            if node.exp.is_Rational and not node.exp.is_Integer:
                out |= _roots(node.base, x)
        sol = sympy.solveset(part, x, sympy.Reals)
        if sol is sympy.S.EmptySet:
            continue
        if isinstance(sol, sympy.FiniteSet):
            out |= set(sol)
            continue
        raise UnsupportedRegion(f"无法求出约束的临界点: {part}", node=str(part))
    return out


def critical_points(expr: sympy.Basic, x: sympy.Symbol) -> set:
    """一元表达式所有可能改变符号的点（各分支的零点、分界点、分母零点）"""
    pw = sympy.piecewise_fold(to_piecewise(expr))
    pieces = pw.args if isinstance(pw, Piecewise) else ((pw, sympy.true),)
    out: set = set()
    for value, cond in pieces:
        for rel in cond.atoms(Relational):
            out |= critical_points(rel.lhs - rel.rhs, x)
        out |= _roots(value, x)
    return out


def _rational_between(lo: Optional[sympy.Basic], hi: Optional[sympy.Basic]) -> sympy.Rational:
    if lo is None and hi is None:
        return sympy.Integer(0)
    if lo is None:
        return sympy.floor(hi) - 1
    if hi is None:
        return sympy.ceiling(lo) + 1
    if lo.is_Rational and hi.is_Rational:
        return (lo + hi) / 2
    return sympy.Rational((float(lo) + float(hi)) / 2)


def resolve_constraints(region: Region) -> Region:
    """
    一维带约束区域 -> 开区间的有限并（约束被精确消去）

    临界点来自各约束条件的实根，在相邻临界点之间的精确有理中点上判定成员关系。
    """
    if region.n != 1 or not region.has_constraint:
        return region
    x = coord(1)
    breaks: set = set()
    for rib in region.ribbons:
        for bound in (rib.lower, rib.upper):
            if bound is not None:
                breaks.add(sympy.nsimplify(bound.expr))
    for rel in region.constraint.atoms(Relational):
        breaks |= critical_points(rel.lhs - rel.rhs, x)
    ordered = sorted((b for b in breaks if b.is_real and b.is_finite), key=lambda b: float(b))
    # 去掉数值相同的重复点
    pts: list = []
    for b in ordered:
        if not pts or sympy.simplify(b - pts[-1]) != 0:
            pts.append(b)
    cells = [None] + pts + [None]
    intervals: list[list] = []
    for lo, hi in zip(cells[:-1], cells[1:]):
        mid = _rational_between(lo, hi)
        if not holds(region.membership_condition, (mid,)):
            continue
        if intervals and intervals[-1][1] is lo and lo is not None and holds(region.membership_condition, (float(lo),)):
            intervals[-1][1] = hi
        else:
            intervals.append([lo, hi])
    ribbons = tuple(
        Ribbon(1, point(), None if lo is None else ScalarExpr(lo), None if hi is None else ScalarExpr(hi))
        for lo, hi in intervals
    )
    logger.debug(f"一维约束消去: {region.constraint} -> {len(ribbons)} 个区间")
    return Region(1, ribbons, sympy.true, False, region.rid)


# ==================== 交 ====================

def _max_bound(b1: Optional[ScalarExpr], b2: Optional[ScalarExpr]) -> Optional[ScalarExpr]:
    if b1 is None:
        return b2
    if b2 is None:
        return b1
    return ScalarExpr(sympy.Max(b1.expr, b2.expr), {**b1.certificates, **b2.certificates})


def _min_bound(b1: Optional[ScalarExpr], b2: Optional[ScalarExpr]) -> Optional[ScalarExpr]:
    if b1 is None:
        return b2
    if b2 is None:
        return b1
    return ScalarExpr(sympy.Min(b1.expr, b2.expr), {**b1.certificates, **b2.certificates})


def _flatten_meet(rib: Ribbon) -> tuple[Ribbon, ...]:
    return rib.meet if rib.meet else (rib,)


def ribbon_intersect(v1: Ribbon, v2: Ribbon) -> Optional[Ribbon]:
    """
    两个 ribbon 的交

    base 为两个 base 的交再加上 max(a1,a2) < min(b1,b2)，界为 max / min；
    返回 None 表示空。n = 2 时 base 的约束被精确消去，更高维时对空集的判定是采样启发式。
    """
    if v1.n != v2.n:
        raise ValueError(f"ribbon 维数不一致: {v1.n} / {v2.n}")
    if v1 == v2:
        return v1
    base = region_intersect(v1.base, v2.base)
    if base.is_empty:
        return None
    a = _max_bound(v1.lower, v2.lower)
    b = _min_bound(v1.upper, v2.upper)
    implied = (
        a is None
        or b is None
        or (a == v1.lower and b == v1.upper)
        or (a == v2.lower and b == v2.upper)
    )
    if a is not None and b is not None and not a.expr.free_symbols and not b.expr.free_symbols:
        if not bool(a.expr < b.expr):
            return None
        implied = True
    if not implied:
        constrained = Region(base.n, base.ribbons, sympy.And(base.constraint, sympy.Lt(a.expr, b.expr)),
                             base.is_point)
        if constrained.n == 1:
            base = resolve_constraints(constrained)
            if base.is_empty:
                return None
        else:
            try:
                constrained.sample_points(4, make_rng("intersect", constrained.key))
            except SamplingError:
                logger.warning("交集 base 采样为空，按空集处理（启发式）")
                return None
            base = constrained
    meet = _flatten_meet(v1) + tuple(r for r in _flatten_meet(v2) if r not in _flatten_meet(v1))
    return Ribbon(v1.n, base, a, b, None, meet, None)


def region_intersect(r1: Region, r2: Region) -> Region:
    """区域交：对并集逐对做 ribbon 交，丢掉空集"""
    if r1.n != r2.n:
        raise ValueError(f"区域维数不一致: {r1.n} / {r2.n}")
    if r1.is_point and r2.is_point:
        return point()
    if r1.is_empty or r2.is_empty:
        return Region(r1.n, ())
    ribbons: list[Ribbon] = []
    for a in r1.ribbons:
        for b in r2.ribbons:
            meet = ribbon_intersect(a, b)
            if meet is not None and meet not in ribbons:
                ribbons.append(meet)
    constraint = sympy.And(r1.constraint, r2.constraint)
    result = Region(r1.n, tuple(ribbons), constraint)
    if result.n == 1 and result.has_constraint:
        result = resolve_constraints(result)
    return result


# ==================== 有界化 ====================

def _rho(e: sympy.Basic) -> sympy.Basic:
    return e / sympy.sqrt(1 + e ** 2)


def _rho_inv(e: sympy.Basic) -> sympy.Basic:
    return e / sympy.sqrt(1 - e ** 2)


def _rescale_bound(bound: Optional[ScalarExpr], sign: int, table: dict) -> ScalarExpr:
    if bound is None:
        return ScalarExpr(sympy.Integer(sign))
    return ScalarExpr(_rho(bound.expr.xreplace(table)))


def _rescale_ribbon(rib: Ribbon) -> Ribbon:
    base = _rescale_region(rib.base)
    table = {coord(i): _rho_inv(coord(i)) for i in range(1, rib.n)}
    lower = _rescale_bound(rib.lower, -1, table)
    upper = _rescale_bound(rib.upper, 1, table)
    slack = None
    if rib.slack is not None:
        full = {coord(i): _rho_inv(coord(i)) for i in range(1, rib.n + 1)}
        slack = ScalarExpr(rib.slack.expr.xreplace(full))
    meet = tuple(_rescale_ribbon(r) for r in rib.meet)
    return Ribbon(rib.n, base, lower, upper, slack, meet, rib.regularity)


def _rescale_region(reg: Region) -> Region:
    if reg.is_point:
        return reg
    table = {coord(i): _rho_inv(coord(i)) for i in range(1, reg.n + 1)}
    constraint = reg.constraint.xreplace(table) if reg.has_constraint else sympy.true
    ribbons = tuple(_rescale_ribbon(r) for r in reg.ribbons)
    return Region(reg.n, ribbons, constraint, False, f"{reg.rid}~" if reg.rid else "")


def bounded_rescale(reg: Region) -> tuple[Region, SmoothMap, SmoothMap]:
    """
    坐标逐个做 x ↦ x/√(1+x²) 的有界化

    Returns:
        (像区域, 映射 ρ, 逆映射 ρ⁻¹)；±∞ 界变为 ∓1 / +1
    """
    image = _rescale_region(reg)
    n = reg.n
    forward = SmoothMap(n, n, tuple(ScalarExpr(_rho(coord(i))) for i in range(1, n + 1)), reg, None, "ρ")
    inverse = SmoothMap(n, n, tuple(ScalarExpr(_rho_inv(coord(i))) for i in range(1, n + 1)), image, None, "ρ⁻¹")
    return image, forward, inverse


def round_trip_error(reg: Region, count: int = 64) -> float:
    """ρ⁻¹∘ρ 在采样点上的最大偏差"""
    if reg.is_point or reg.is_empty:
        return 0.0
    _, forward, inverse = bounded_rescale(reg)
    pts = reg.sample_points(count, make_rng("rescale", reg.key))
    back = inverse.evaluate_many(forward.evaluate_many(pts))
    return float(np.abs(back - pts).max())
