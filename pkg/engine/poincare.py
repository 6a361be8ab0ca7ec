"""
Poincaré 引理
胞腔（ribbon 塔）上闭形式的原函数，两种构造：纤维积分递归与 σ-收缩
"""

from fractions import Fraction
from typing import Optional

from core.errors import DomainError, UnsupportedIntegrand, UnsupportedRegion
from core.logger import get_logger
from engine.mayer_vietoris import differential
from fiber.operator import Q_bounds, fiber_primitive
from forms.maps import projection, pullback, section
from forms.zoned_form import ZonedForm, compare_forms
from geometry.homotopy import contraction_homotopy
from geometry.region import Region
from kernel.evaluate import evaluate

logger = get_logger("engine")

METHODS = ("ribbon", "contraction")


def is_cell(region: Region) -> bool:
    """单点，或 base 为胞腔的单个 ribbon（无约束）"""
    if region.is_point:
        return True
    if len(region.ribbons) != 1 or region.has_constraint:
        return False
    return is_cell(region.ribbons[0].base)


def cell_center(cell: Region) -> tuple:
    """沿 ribbon 塔逐层取默认截面得到的内点"""
    if cell.is_point:
        return ()
    rib = cell.ribbons[0]
    base = cell_center(rib.base)
    value = evaluate(rib.section(), list(base))
    if isinstance(value, float):
        value = Fraction(value).limit_denominator(10 ** 6)
    return base + (value,)


def _ribbon_primitive(omega: ZonedForm, cell: Region) -> ZonedForm:
    """
    λ = (-1)^{k-1} Λ + π*μ

    Λ 为从默认截面开始的纤维积分，μ 为 ψ*ω 在 base 上的原函数；
    ω 闭时 dΛ = (-1)^{k-1}(ω - π*ψ*ω)，于是 dλ = ω。
    """
    n, k = omega.n, omega.k
    rib = cell.ribbons[0]
    lam = fiber_primitive(omega, rib).scale((-1) ** (k - 1))
    if k > n - 1:
        return lam
    psi = section(rib.section(), n - 1, rib.base, "ψ")
    base_form = pullback(psi, omega, verify=False)
    if base_form.is_trivially_zero:
        return lam
    mu = _ribbon_primitive(base_form, rib.base)
    lifted = pullback(projection(n, cell), mu, verify=False, source=cell)
    return lam + lifted


def _contraction_primitive(omega: ZonedForm, cell: Region) -> ZonedForm:
    """λ = (-1)^k Q_0^1(h*ω)，h 为向胞腔中心的 σ-收缩"""
    h = contraction_homotopy(cell, cell_center(cell))
    theta = pullback(h.h, omega, verify=False, source=h.source)
    return Q_bounds(theta, 0, 1, cell).scale((-1) ** omega.k)


def poincare_primitive(omega: ZonedForm, cell: Optional[Region] = None, *, method: str = "ribbon",
                       verify: bool = True) -> ZonedForm:
    """
    胞腔上闭形式 ω（k ≥ 1）的原函数 λ，Dλ = ω

    Args:
        omega: 闭形式
        cell: ribbon 塔表示的胞腔，缺省取 ω 的区域
        method: "ribbon"（纤维积分递归）或 "contraction"（σ-收缩后做 Q_0^1）
        verify: 是否检查 Dλ = ω

    Raises:
        UnsupportedRegion: 区域不是 ribbon 塔
        UnsupportedIntegrand: 纤维积分离开可积文法，或 Dλ 与 ω 不一致
    """
    cell = cell if cell is not None else omega.region
    if cell is None or not is_cell(cell):
        raise UnsupportedRegion("poincare_primitive 只接受 ribbon 塔表示的胞腔")
    if omega.k < 1:
        raise ValueError("原函数只对次数 ≥ 1 的形式有定义")
    if method not in METHODS:
        raise ValueError(f"未知方法 {method!r}，可选 {METHODS}")
    if omega.is_trivially_zero:
        return ZonedForm.zero(omega.n, omega.k - 1, cell, omega.q)
    try:
        if method == "ribbon":
            lam = _ribbon_primitive(omega, cell)
        else:
            lam = _contraction_primitive(omega, cell)
    except DomainError as e:
        raise UnsupportedIntegrand(f"构造原函数时求值失败: {e.message}") from e
    lam = lam.with_region(cell)
    if verify:
        verdict = compare_forms(differential(lam), omega, cell)
        if not verdict.passed:
            logger.error(f"Dλ ≠ ω ({method}): {verdict.to_dict()}")
            raise UnsupportedIntegrand("原函数验证失败：Dλ 与 ω 不一致", method=method, verdict=verdict.to_dict())
        logger.debug(f"原函数 ({method}) 验证通过: {verdict.kind.value}")
    return lam
