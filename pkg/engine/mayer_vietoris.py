"""
Mayer–Vietoris 机制
Φ(ω) = (ω|U₁, ω|U₂)，Ψ(ω₁, ω₂) = ω₂ - ω₁（在 U₁∩U₂ 上），
由单位分解给出 Ψ 的显式分裂与连接同态 δ
"""

from typing import Optional

import sympy

from core.errors import GlueDiscontinuity
from core.logger import get_logger
from core.sampling import make_rng
from engine.partition import PartitionOfUnity
from forms.derivative import continuity_at, extended_D
from forms.zoned_form import ZonedForm, compare_forms, restrict
from geometry.operations import region_intersect
from geometry.region import Region
from kernel.equality import Verdict, boundary_points
from kernel.expr import ScalarExpr

logger = get_logger("engine")

# 粘合连续性检查的边界点数
SEAM_POINTS = 8


def differential(omega: ZonedForm) -> ZonedForm:
    """扩展导数 D（次数已满时为零）"""
    if omega.k >= omega.n:
        return ZonedForm.zero(omega.n, omega.k + 1, omega.region, omega.q)
    if omega.derivative is not None:
        return omega.derivative
    return extended_D(omega, check_regularity=False)


# ==================== Φ 与 Ψ ====================

def mv_phi(omega: ZonedForm, u1: Region, u2: Region) -> tuple[ZonedForm, ZonedForm]:
    """Φ(ω) = (ω|U₁, ω|U₂)"""
    return restrict(omega, u1, check=False), restrict(omega, u2, check=False)


def mv_psi(w1: ZonedForm, w2: ZonedForm, overlap: Optional[Region] = None) -> ZonedForm:
    """Ψ(ω₁, ω₂) = ω₂|₁₂ - ω₁|₁₂"""
    if overlap is None:
        overlap = region_intersect(w1.region, w2.region)
    return restrict(w2, overlap, check=False) - restrict(w1, overlap, check=False)


def exactness_check(omega: ZonedForm, u1: Region, u2: Region) -> Verdict:
    """中间一项的正合性：Ψ∘Φ = 0"""
    overlap = region_intersect(u1, u2)
    w1, w2 = mv_phi(omega, u1, u2)
    residual = mv_psi(w1, w2, overlap)
    if overlap.is_empty:
        return Verdict.symbolic()
    return compare_forms(residual, ZonedForm.zero(omega.n, omega.k, overlap), overlap)


# ==================== 零延拓与粘合 ====================

def _zero_extend(eta: ZonedForm, factor: ScalarExpr, condition: sympy.Basic, target: Region) -> ZonedForm:
    """factor·η 在 condition 成立处，其余补零，作为 target 上的形式"""
    table = {}
    for J, a in eta.coeffs:
        product = factor * a
        table[J] = ScalarExpr(sympy.Piecewise((product.expr, condition), (0, True)), product.certificates)
    return ZonedForm.build(eta.n, eta.k, table, target, eta.q)


def _check_seam(form: ZonedForm, condition: sympy.Basic, home: Region, salt: str) -> None:
    """零延拓接缝两侧的极限必须一致"""
    if form.is_trivially_zero:
        return
    pts = boundary_points(condition, home, SEAM_POINTS, make_rng("mv-seam", salt, home.key))
    if len(pts) == 0:
        return
    for J, a in form.coeffs:
        ok, _ = continuity_at(a, pts, home, salt=salt)
        if not ok:
            logger.error(f"零延拓在接缝处不连续: 系数 {J}")
            raise GlueDiscontinuity(f"零延拓在 {home.label} 的接缝处不连续", index=list(J))


def mv_split(eta: ZonedForm, partition: PartitionOfUnity, *, verify: bool = True) -> tuple[ZonedForm, ZonedForm]:
    """
    Ψ 的分裂：η₁ = f₂η（U₁ 上，U₂ 外补零），η₂ = f₁η（U₂ 上，U₁ 外补零）

    于是 Ψ(-η₁, η₂) = η₁ + η₂ = η。

    Raises:
        GlueDiscontinuity: 采样发现零延拓接缝两侧极限不一致
    """
    if len(partition) != 2:
        raise ValueError("mv_split 需要两集合覆盖的单位分解")
    u1, u2 = partition.cover
    f1, f2 = partition.functions
    if eta.is_trivially_zero:
        return ZonedForm.zero(eta.n, eta.k, u1, eta.q), ZonedForm.zero(eta.n, eta.k, u2, eta.q)
    eta1 = _zero_extend(eta, f2, u2.membership_condition, u1)
    eta2 = _zero_extend(eta, f1, u1.membership_condition, u2)
    if verify:
        _check_seam(eta1, u2.membership_condition, u1, "eta1")
        _check_seam(eta2, u1.membership_condition, u2, "eta2")
        overlap = eta.region if eta.region is not None else region_intersect(u1, u2)
        verdict = compare_forms(mv_psi(-eta1, eta2, overlap), eta, overlap)
        if not verdict.passed:
            logger.error(f"Ψ(-η₁, η₂) ≠ η: {verdict.to_dict()}")
            raise GlueDiscontinuity("分裂后 Ψ(-η₁, η₂) 与 η 不一致", verdict=verdict.to_dict())
    return eta1, eta2


def glue(w1: ZonedForm, w2: ZonedForm, union: Optional[Region] = None, *, verify: bool = True) -> ZonedForm:
    """
    在 U₁ 上取 ω₁、其余取 ω₂ 的分段形式

    Raises:
        GlueDiscontinuity: ω₁ 与 ω₂ 在 U₁∩U₂ 上不一致
    """
    u1, u2 = w1.region, w2.region
    if (w1.n, w1.k) != (w2.n, w2.k):
        raise ValueError(f"粘合的形式不兼容: (n={w1.n},k={w1.k}) vs (n={w2.n},k={w2.k})")
    if union is None:
        union = Region(u1.n, u1.ribbons + tuple(r for r in u2.ribbons if r not in u1.ribbons))
    if verify:
        overlap = region_intersect(u1, u2)
        if not overlap.is_empty:
            verdict = compare_forms(restrict(w1, overlap, check=False), restrict(w2, overlap, check=False), overlap)
            if not verdict.passed:
                logger.error(f"粘合失败: 两侧在交集上不一致 {verdict.to_dict()}")
                raise GlueDiscontinuity("两侧形式在交集上不一致", verdict=verdict.to_dict())
    condition = u1.membership_condition
    table = {}
    keys = sorted(set(J for J, _ in w1.coeffs) | set(J for J, _ in w2.coeffs))
    for J in keys:
        a1, a2 = w1.coeff(J), w2.coeff(J)
        if a1 == a2:
            table[J] = a1
            continue
        certs = {**a1.certificates, **a2.certificates}
        table[J] = ScalarExpr(sympy.Piecewise((a1.expr, condition), (a2.expr, True)), certs)
    return ZonedForm.build(w1.n, w1.k, table, union, min(w1.q, w2.q))


# ==================== 连接同态 ====================

def mv_connecting(eta: ZonedForm, partition: PartitionOfUnity) -> ZonedForm:
    """
    δ[η]：U₁ 上取 -D(η₁)，U₂ 上取 D(η₂)

    η 闭时两者在 U₁∩U₂ 上都等于 -D(f₂η) = D(f₁η)，粘合后得到 U₁∪U₂ 上的闭形式。
    """
    eta1, eta2 = mv_split(eta, partition)
    left = -differential(eta1)
    right = differential(eta2)
    result = glue(left, right, partition.union)
    logger.debug(f"连接同态: {eta.k} 次 -> {result.k} 次")
    return result


def split_check(eta: ZonedForm, partition: PartitionOfUnity) -> Verdict:
    """Ψ 的满射性：Ψ(mv_split(η)) = η"""
    eta1, eta2 = mv_split(eta, partition, verify=False)
    overlap = eta.region if eta.region is not None else region_intersect(*partition.cover)
    return compare_forms(mv_psi(-eta1, eta2, overlap), eta, overlap)
