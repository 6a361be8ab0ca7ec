"""
同伦算子
Q(ω) = ∫₀ᵗ ω″、Q_a^b(ω) = ∫_a^b ω″，以及链同伦恒等式的残差检查
"""

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
import sympy
from sympy import Piecewise
from sympy.core.relational import Relational

from core.config import get_config
from core.errors import BoundsCrossing, UnsupportedIntegrand
from core.logger import get_logger
from core.sampling import make_rng
from fiber.antiderivative import integrate_t
from fiber.decompose import fiber_decompose, wedge_dt
from forms.derivative import extended_D, raw_d
from forms.maps import projection, pullback, section
from forms.zoned_form import ZonedForm, compare_forms
from geometry.homotopy import Homotopy, check_section
from geometry.region import Region, Ribbon, box
from kernel.calculus import to_piecewise, zone_of_forms
from kernel.equality import Verdict
from kernel.evaluate import evaluate_many
from kernel.expr import ScalarExpr, coord

logger = get_logger("fiber")


# ==================== 接缝 ====================

def _linear_seam(locus: sympy.Basic, t: sympy.Symbol) -> sympy.Basic:
    """locus = α(x)(t - c(x)) -> c(x)"""
    alpha = sympy.diff(locus, t)
    if alpha == 0 or alpha.has(t):
        raise UnsupportedIntegrand(f"接缝关于 t 不是线性的: {locus} = 0", node=str(locus))
    beta = locus.xreplace({t: sympy.Integer(0)})
    return sympy.cancel(-beta / alpha)


def collect_seams(f: ScalarExpr, t_index: int, extra: Sequence[Any] = ()) -> list[sympy.Basic]:
    """
    t 方向的接缝图 t = c_i(x)

    来自 |·|、min/max、分段条件中含 t 的比较式；extra 为用户给出的接缝。
    """
    t = coord(t_index)
    pw = sympy.piecewise_fold(to_piecewise(f.expr))
    seams: list[sympy.Basic] = []
    for rel in sorted(pw.atoms(Relational), key=sympy.default_sort_key):
        if not rel.has(t):
            continue
        c = _linear_seam(sympy.expand(rel.lhs - rel.rhs), t)
        if c not in seams:
            seams.append(c)
    for value in extra:
        c = ScalarExpr.lift(value).expr
        if c not in seams:
            logger.warning(f"使用用户给出的接缝 t = {c}（未经分层构造验证）")
            seams.append(c)
    return seams


def _order_seams(seams: list[sympy.Basic], base_points: np.ndarray) -> list[sympy.Basic]:
    """按第一个底点排序，并要求在全部底点上保持同一顺序"""
    if len(seams) <= 1:
        return seams
    values = np.vstack([evaluate_many(ScalarExpr(c, validate=False), base_points) for c in seams])
    if not np.isfinite(values).all():
        raise UnsupportedIntegrand("接缝在底空间采样点上无定义", seams=[str(c) for c in seams])
    order = np.argsort(values[:, 0], kind="stable")
    ranked = values[order]
    if (np.diff(ranked, axis=0) <= 0).any():
        raise UnsupportedIntegrand("接缝的先后顺序随底点变化或发生重合", seams=[str(c) for c in seams])
    return [seams[i] for i in order]


def _resolve_piece(expr: sympy.Basic, t: sympy.Symbol, reference: dict) -> sympy.Basic:
    """把含 t 的比较式在代表点上的真值代入，消去 t 方向的分段"""
    table = {}
    for rel in expr.atoms(Relational):
        if not rel.has(t):
            continue
        diff = (rel.lhs - rel.rhs).xreplace(reference)
        table[rel] = type(rel)(sympy.Float(float(sympy.N(diff))), 0)
    return expr.xreplace(table)


def _base_points(region: Optional[Region], n: int, salt: str) -> tuple[np.ndarray, np.ndarray]:
    """区域采样点及其底空间投影"""
    region = region if region is not None else box([-1] * n, [1] * n)
    count = max(get_config().kernel.sample_count // 4, 8)
    pts = region.sample_points(count, make_rng("fiber-base", salt))
    return pts, pts[:, : n - 1]


def _piece_reps(seams: list[sympy.Basic], x0: np.ndarray) -> list[float]:
    """每个区间的代表 t 值"""
    if not seams:
        return [0.5]
    cs = [float(evaluate_many(ScalarExpr(c, validate=False), x0[None, :])[0]) for c in seams]
    reps = [cs[0] - 1.0]
    reps += [(a + b) / 2 for a, b in zip(cs[:-1], cs[1:])]
    reps.append(cs[-1] + 1.0)
    return reps


def cumulative(f: ScalarExpr, t_index: int, base_points: np.ndarray,
               extra_seams: Sequence[Any] = ()) -> ScalarExpr:
    """
    连续的 t-原函数 C(t)：在每段上积分，再用接缝处的跳跃补偿常数拼接

    ∫_a^b f dt = C(b) - C(a)。

    Raises:
        UnsupportedIntegrand: 接缝非线性 / 顺序不定，或某段原函数不可计算
    """
    t = coord(t_index)
    seams = _order_seams(collect_seams(f, t_index, extra_seams), base_points)
    body = sympy.piecewise_fold(to_piecewise(f.expr))
    x0 = base_points[0]
    base_ref = {coord(i + 1): sympy.nsimplify(float(v)) for i, v in enumerate(x0)}
    antiderivatives: list[ScalarExpr] = []
    for t0 in _piece_reps(seams, x0):
        reference = {**base_ref, t: sympy.nsimplify(t0)}
        piece = _resolve_piece(body, t, reference)
        antiderivatives.append(_integrate_piece(piece, f.certificates, t_index, reference))
    if not seams:
        return antiderivatives[0]
    offset = ScalarExpr(sympy.Integer(0))
    branches = [(antiderivatives[0], sympy.Lt(t, seams[0]))]
    for j in range(1, len(antiderivatives)):
        c = seams[j - 1]
        left = antiderivatives[j - 1].substitute({t_index: c})
        right = antiderivatives[j].substitute({t_index: c})
        if _undefined(left.expr) or _undefined(right.expr):
            raise UnsupportedIntegrand(f"原函数在接缝 t = {c} 处无定义", seam=str(c))
        offset = offset + left - right
        cond = sympy.Lt(t, seams[j]) if j < len(seams) else sympy.true
        branches.append((antiderivatives[j] + offset, cond))
    certs: dict = {}
    for g, _ in branches:
        certs.update(g.certificates)
    return ScalarExpr(Piecewise(*[(g.expr, cond) for g, cond in branches]), certs)


def _integrate_piece(expr: sympy.Basic, certs: dict, t_index: int, reference: dict) -> ScalarExpr:
    """t 方向的分段已消去；剩下只依赖底变量的分段逐支积分"""
    t = coord(t_index)
    if not (isinstance(expr, Piecewise) and expr.has(t)):
        return integrate_t(ScalarExpr(expr, certs, validate=False), t_index, reference, normalize_at_zero=False)
    branches = []
    merged: dict = {}
    for value, cond in expr.args:
        active = bool(cond.xreplace(reference)) if cond is not sympy.true else True
        g = integrate_t(ScalarExpr(value, certs, validate=False), t_index,
                        reference if active else None, normalize_at_zero=False)
        merged.update(g.certificates)
        branches.append((g.expr, cond))
    return ScalarExpr(Piecewise(*branches), merged)


def _undefined(value: sympy.Basic) -> bool:
    return value.has(sympy.zoo, sympy.nan, sympy.oo, -sympy.oo)


def _check_segments(f: ScalarExpr, lower: np.ndarray, upper: np.ndarray,
                    base_points: np.ndarray) -> None:
    """纤维区间内部的被积函数必须处处有限（没有落在区间内的极点）"""
    fractions = (np.arange(16) + 0.5) / 16
    for s in fractions:
        t = lower + s * (upper - lower)
        values = evaluate_many(f, np.column_stack([base_points, t]))
        if not np.isfinite(values).all():
            bad = int(np.argmax(~np.isfinite(values)))
            raise UnsupportedIntegrand(
                f"被积函数在纤维区间内奇异: {f}",
                witness=[float(v) for v in base_points[bad]] + [float(t[bad])],
            )


# ==================== Q ====================

def Q(omega: ZonedForm, *, seams: Sequence[Any] = ()) -> ZonedForm:
    """
    Q(ω) = ∫₀ᵗ ω″，X×ℝ 上的 (k-1)-形式

    例：Q(dt) = t；Q(t dt∧dx1) = -(t²/2)dx1。

    Raises:
        UnsupportedIntegrand: ω″ 的系数不在可积文法内
    """
    n, k = omega.n, omega.k
    if k < 1:
        raise ValueError("Q 只作用于次数 ≥ 1 的形式")
    dec = fiber_decompose(omega)
    if dec.dprime.is_trivially_zero:
        return ZonedForm.zero(n, k - 1, omega.region, omega.q)
    pts, base = _base_points(omega.region, n, f"Q:{omega!r}")
    table = {}
    for J, a in dec.dprime.coeffs:
        _check_segments(a, np.zeros(len(pts)), pts[:, -1], base)
        C = cumulative(a, n, base, seams)
        at_zero = C.substitute({n: 0})
        if _undefined(at_zero.expr):
            raise UnsupportedIntegrand(f"∫₀ᵗ 在 t = 0 处发散: {a}", node=str(a.expr))
        table[J] = C - at_zero
    result = ZonedForm.build(n, k - 1, table, omega.region, omega.q)
    zone = zone_of_forms(result.expressions(), n, omega.region)
    if omega.zone is not None:
        zone = zone.intersect(omega.zone)
    return result.with_zone(zone)


def Q_bounds(omega: ZonedForm, a: Any, b: Any, base_region: Optional[Region] = None, *,
             seams: Sequence[Any] = ()) -> ZonedForm:
    """
    Q_a^b(ω) = ∫_{a(x)}^{b(x)} ω″，X 上的 (k-1)-形式

    Raises:
        BoundsCrossing: 采样发现 a ≥ b
        UnsupportedIntegrand: 被积函数不可积或区间内有极点
    """
    n, k = omega.n, omega.k
    if k < 1:
        raise ValueError("Q_a^b 只作用于次数 ≥ 1 的形式")
    a, b = ScalarExpr.lift(a), ScalarExpr.lift(b)
    if base_region is None:
        base_region = box([-1] * (n - 1), [1] * (n - 1)) if n > 1 else None
    if base_region is not None and not base_region.is_point:
        base = base_region.sample_points(max(get_config().kernel.sample_count // 4, 8),
                                         make_rng("Q-bounds", str(a.expr), str(b.expr)))
    else:
        base = np.zeros((1, n - 1))
    lo, hi = evaluate_many(a, base), evaluate_many(b, base)
    if not (lo < hi).all():
        bad = int(np.argmax(~(lo < hi)))
        logger.error(f"Q_a^b 的上下界交叉: a={a}, b={b}")
        raise BoundsCrossing(f"上下界交叉: a={a}, b={b}", witness=[float(v) for v in base[bad]])
    dec = fiber_decompose(omega)
    table = {}
    for J, coef in dec.dprime.coeffs:
        _check_segments(coef, lo, hi, base)
        C = cumulative(coef, n, base, seams)
        upper = C.substitute({n: b})
        lower = C.substitute({n: a})
        if _undefined(upper.expr) or _undefined(lower.expr):
            raise UnsupportedIntegrand(f"∫_a^b 在端点处发散: {coef}", node=str(coef.expr))
        table[J] = upper - lower
    result = ZonedForm.build(n - 1, k - 1, table, base_region, omega.q)
    return result.with_zone(zone_of_forms(result.expressions(), n - 1, base_region))


# ==================== 截面与纤维原函数 ====================

def section_pullback(omega: ZonedForm, c: Any = 0, base_region: Optional[Region] = None) -> ZonedForm:
    """s_c*ω，s_c(x) = (x, c(x))"""
    s = section(c, omega.n - 1, base_region, "s")
    return pullback(s, omega, verify=False)


def zero_section_round_trip(omega: ZonedForm) -> ZonedForm:
    """π*s*ω（s 为零截面）"""
    pulled = section_pullback(omega, 0)
    pi = projection(omega.n, omega.region)
    return pullback(pi, pulled, verify=False, source=omega.region)


def fiber_primitive(omega: ZonedForm, rib: Ribbon, c: Any = None, *,
                    seams: Sequence[Any] = ()) -> ZonedForm:
    """
    Λ = ∫_{c(x')}^{x_n} ω″，ribbon V 上的 (k-1)-形式

    满足 dΛ - Λ(dω) = (-1)^{k-1}(ω - π*ψ*ω)，ψ(x') = (x', c(x'))。
    """
    n, k = omega.n, omega.k
    if k < 1:
        raise ValueError("纤维原函数只对次数 ≥ 1 的形式有定义")
    c_expr = ScalarExpr.lift(c) if c is not None else rib.section()
    check_section(rib, c_expr)
    home = Region(n, (rib,))
    dec = fiber_decompose(omega)
    if dec.dprime.is_trivially_zero:
        return ZonedForm.zero(n, k - 1, home, omega.q)
    pts, base = _base_points(home, n, f"Λ:{omega!r}:{c_expr}")
    start = evaluate_many(c_expr, base)
    table = {}
    for J, coef in dec.dprime.coeffs:
        _check_segments(coef, start, pts[:, -1], base)
        C = cumulative(coef, n, base, seams)
        at_section = C.substitute({n: c_expr})
        if _undefined(at_section.expr):
            raise UnsupportedIntegrand(f"纤维原函数在截面处发散: {coef}", node=str(coef.expr))
        table[J] = C - at_section
    result = ZonedForm.build(n, k - 1, table, home, omega.q)
    return result.with_zone(zone_of_forms(result.expressions(), n, home))


# ==================== 恒等式检查 ====================

@dataclass
class IdentityReport:
    """链同伦恒等式：总残差与三个子恒等式"""
    verdict: Verdict
    parts: dict[str, Verdict] = field(default_factory=dict)
    sign: int = 1

    @property
    def passed(self) -> bool:
        return self.verdict.passed and all(v.passed for v in self.parts.values())

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.to_dict(),
            "parts": {name: v.to_dict() for name, v in self.parts.items()},
            "sign": self.sign,
        }


def _D(omega: ZonedForm) -> ZonedForm:
    if omega.k >= omega.n:
        return ZonedForm.zero(omega.n, omega.k + 1, omega.region, omega.q)
    return extended_D(omega, check_regularity=False)


def homotopy_identity_check(omega: ZonedForm) -> IdentityReport:
    """
    DQ(ω) - Q(Dω) = (-1)^{k-1}(ω - π*s*ω)

    同时检查纤维分解后的三个子恒等式：
    -Q(d_t ω′) = (-1)^{k-1}(ω′ - π*s*ω′)，d_t Q(ω″∧dt) = (-1)^{k-1} ω″∧dt，
    d_x Q(ω″∧dt) - Q(d_x(ω″∧dt)) = 0。
    """
    n, k = omega.n, omega.k
    region = omega.region if omega.region is not None else box([-1] * n, [1] * n)
    sign = (-1) ** (k - 1)

    if k >= 1:
        dq = _D(Q(omega))
    else:
        dq = ZonedForm.zero(n, k, region)
    qd = Q(_D(omega)) if k + 1 <= n else ZonedForm.zero(n, k, region)
    rhs = (omega - zero_section_round_trip(omega)).scale(sign)
    verdict = compare_forms(dq - qd, rhs, region)

    dec = fiber_decompose(omega)
    base_vars = range(1, n)
    parts: dict[str, Verdict] = {}
    w1 = dec.prime
    if k + 1 <= n:
        lhs_a = -Q(raw_d(w1, [n]))
    else:
        lhs_a = ZonedForm.zero(n, k, region)
    parts["d_t_prime"] = compare_forms(lhs_a, (w1 - zero_section_round_trip(w1)).scale(sign), region)
    if k >= 1:
        w2 = wedge_dt(dec.dprime)
        q2 = Q(w2)
        parts["d_t_dprime"] = compare_forms(raw_d(q2, [n]), w2.scale(sign), region)
        dx_w2 = raw_d(w2, base_vars)
        q_dx = Q(dx_w2) if not dx_w2.is_trivially_zero else ZonedForm.zero(n, k, region)
        parts["d_x_dprime"] = compare_forms(raw_d(q2, base_vars), q_dx, region)
    summary = ", ".join(f"{name}={v.kind.value}" for name, v in parts.items())
    logger.info(f"链同伦检查 k={k}: {verdict.kind.value} ({summary})")
    return IdentityReport(verdict, parts, sign)


def projection_section_check(omega: ZonedForm) -> Verdict:
    """闭形式 ω：ω - π*s*ω = (-1)^{k-1} D(Qω)"""
    n, k = omega.n, omega.k
    region = omega.region if omega.region is not None else box([-1] * n, [1] * n)
    lhs = omega - zero_section_round_trip(omega)
    if k < 1:
        return compare_forms(lhs, ZonedForm.zero(n, 0, region), region)
    rhs = _D(Q(omega)).scale((-1) ** (k - 1))
    return compare_forms(lhs, rhs, region)


def homotopy_invariance_check(h: Homotopy, omega: ZonedForm) -> Verdict:
    """
    同伦映射的拉回相差恰当形式

    θ = h*ω 在 X×(-1/2, 3/2) 上；检查 D(Q_0^1 θ) - Q_0^1(Dθ) = (-1)^k(h₀*ω - h₁*ω)。
    ω 闭时第二项为零，于是 h₀*ω 与 h₁*ω 同调。
    """
    k = omega.k
    base = h.base
    m = h.dim
    theta = pullback(h.h, omega, verify=False, source=h.source)
    h0 = pullback(h.start, omega, verify=False, source=base)
    h1 = pullback(h.end, omega, verify=False, source=base)
    rhs = (h0 - h1).scale((-1) ** k)
    if k >= 1:
        lhs = _D(Q_bounds(theta, 0, 1, base))
    else:
        lhs = ZonedForm.zero(m, 0, base)
    if k + 1 <= m:
        d_theta = _D(theta)
        correction = Q_bounds(d_theta, 0, 1, base)
        lhs = lhs - correction
    return compare_forms(lhs, rhs, base)


def fiber_primitive_check(omega: ZonedForm, rib: Ribbon, c: Any = None) -> Verdict:
    """dΛ - Λ(dω) = (-1)^{k-1}(ω - π*ψ*ω)"""
    n, k = omega.n, omega.k
    c_expr = ScalarExpr.lift(c) if c is not None else rib.section()
    home = Region(n, (rib,))
    lam = fiber_primitive(omega, rib, c_expr)
    lhs = _D(lam)
    if k + 1 <= n:
        lhs = lhs - fiber_primitive(_D(omega), rib, c_expr)
    psi = section(c_expr, n - 1, rib.base, "ψ")
    pi = projection(n, home)
    back = pullback(pi, pullback(psi, omega, verify=False), verify=False, source=home)
    rhs = (omega - back).scale((-1) ** (k - 1))
    return compare_forms(lhs, rhs, home)
