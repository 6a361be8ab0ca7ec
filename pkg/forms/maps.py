"""
光滑映射与拉回
f*ω = Σ_J (a_J∘f) Σ_I det(∂f_J/∂x_I) dx_I
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Any, Optional, Sequence

import numpy as np
import sympy

from core.errors import GrammarError, GrammarOverflow
from core.logger import get_logger
from core.sampling import make_rng
from forms.derivative import raw_d
from forms.zoned_form import ZonedForm, compare_forms, multi_indices
from geometry.region import Region
from kernel.calculus import differentiate, zone_of_forms
from kernel.evaluate import evaluate, evaluate_many
from kernel.expr import ScalarExpr, Zone, coord, parse_expr

logger = get_logger("forms")


@dataclass(frozen=True, eq=False)
class SmoothMap:
    """
    定义在 source ⊆ ℝ^m 上的映射 ℝ^m -> ℝ^n

    components[i] 为第 i 个分量 f_{i+1}，变量 x_1..x_m。
    """
    m: int
    n: int
    components: tuple[ScalarExpr, ...]
    source: Optional[Region] = None
    regularity: Optional[int] = None
    name: str = field(default="")

    def __post_init__(self):
        if len(self.components) != self.n:
            raise ValueError(f"分量个数 {len(self.components)} 与目标维数 {self.n} 不一致")

    # ---------- 求值 ----------

    def __call__(self, point: Sequence[Any]) -> tuple:
        return tuple(evaluate(c, point) for c in self.components)

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.n == 0:
            return np.zeros((pts.shape[0], 0))
        return np.column_stack([evaluate_many(c, pts) for c in self.components])

    # ---------- 微分 ----------

    @cached_property
    def jacobian(self) -> tuple[tuple[ScalarExpr, ...], ...]:
        """jacobian[j][i] = ∂f_{j+1}/∂x_{i+1}"""
        return tuple(
            tuple(differentiate(c, i)[0] for i in range(1, self.m + 1)) for c in self.components
        )

    @cached_property
    def zone(self) -> Zone:
        return zone_of_forms(list(self.components), self.m, self.source)

    # ---------- 复合 ----------

    def compose(self, inner: "SmoothMap") -> "SmoothMap":
        """self ∘ inner"""
        if inner.n != self.m:
            raise ValueError(f"无法复合: 内映射目标维数 {inner.n} ≠ 外映射源维数 {self.m}")
        mapping = {i + 1: c for i, c in enumerate(inner.components)}
        comps = tuple(c.substitute(mapping) for c in self.components)
        name = f"{self.name}∘{inner.name}" if self.name and inner.name else ""
        return SmoothMap(inner.m, self.n, comps, inner.source, _min_reg(self.regularity, inner.regularity), name)

    def __repr__(self) -> str:
        body = ", ".join(str(c) for c in self.components)
        return f"SmoothMap({self.name or 'f'}: ℝ^{self.m}->ℝ^{self.n}; ({body}))"


def _min_reg(p1: Optional[int], p2: Optional[int]) -> Optional[int]:
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    return min(p1, p2)


# ==================== 常用映射 ====================

def identity(n: int, source: Optional[Region] = None) -> SmoothMap:
    return SmoothMap(n, n, tuple(ScalarExpr(coord(i)) for i in range(1, n + 1)), source, None, "id")


def projection(n: int, source: Optional[Region] = None) -> SmoothMap:
    """π: ℝ^n -> ℝ^{n-1}，去掉最后一个坐标"""
    return SmoothMap(n, n - 1, tuple(ScalarExpr(coord(i)) for i in range(1, n)), source, None, "π")


def section(c: Any, base_dim: int, source: Optional[Region] = None, name: str = "s") -> SmoothMap:
    """s_c: x' ↦ (x', c(x'))"""
    comps = tuple(ScalarExpr(coord(i)) for i in range(1, base_dim + 1)) + (ScalarExpr.lift(c),)
    return SmoothMap(base_dim, base_dim + 1, comps, source, None, name)


def from_components(components: Sequence[Any], m: int, source: Optional[Region] = None,
                    name: str = "") -> SmoothMap:
    comps = tuple(ScalarExpr.lift(c) if not isinstance(c, str) else parse_expr(c) for c in components)
    return SmoothMap(m, len(comps), comps, source, None, name)


# ==================== 拉回 ====================

def _minor_det(rows: list[list[sympy.Basic]]) -> sympy.Basic:
    if not rows:
        return sympy.Integer(1)
    if len(rows) == 1:
        return rows[0][0]
    return sympy.Matrix(rows).det(method="berkowitz")


def _check_log_positivity(expr: ScalarExpr, source: Optional[Region], salt: str) -> None:
    """代换后每个对数参数在源区域采样上仍须为正"""
    if source is None or source.is_empty or not expr.certificates:
        return
    pts = source.sample_points(32, make_rng("pullback-log", salt))
    for arg in expr.certificates:
        values = evaluate_many(ScalarExpr(arg, validate=False), pts)
        finite = np.isfinite(values)
        if finite.any() and (values[finite] <= 0).any():
            raise GrammarOverflow(f"拉回后对数参数不再恒正: log({arg})", node=str(arg))


def pullback(f: SmoothMap, omega: ZonedForm, *, verify: bool = True,
             source: Optional[Region] = None) -> ZonedForm:
    """
    拉回 f*ω

    Args:
        f: 映射，目标维数须等于 ω 的维数
        omega: 形式
        verify: 若 ω 缓存了 η，检查 raw_d(f*ω) 与 f*η 是否一致后再缓存
        source: 拉回形式的区域（默认 f.source）

    Raises:
        GrammarOverflow: 代换后离开支持的文法
    """
    if f.n != omega.n:
        raise ValueError(f"映射目标维数 {f.n} ≠ 形式维数 {omega.n}")
    source = source if source is not None else f.source
    mapping = {i + 1: c for i, c in enumerate(f.components)}
    k, m = omega.k, f.m
    table: dict[tuple, ScalarExpr] = {}
    jac = f.jacobian if k > 0 else ()
    targets = [tuple(I) for I in combinations(range(1, m + 1), k)]
    for J, a in omega.coeffs:
        try:
            a_f = a.substitute(mapping)
        except GrammarError as e:
            raise GrammarOverflow(f"拉回后离开文法: {e.message}", node=str(a)) from e
        _check_log_positivity(a_f, source, f"{f!r}:{J}")
        for I in targets:
            rows = [[jac[j - 1][i - 1].expr for i in I] for j in J]
            det = _minor_det(rows)
            if det == 0:
                continue
            term = a_f * ScalarExpr(det)
            table[I] = table.get(I, ScalarExpr(0)) + term
    zone = f.zone
    if omega.zone is not None and not omega.zone.is_full:
        table_sub = {coord(i + 1): c.expr for i, c in enumerate(f.components)}
        zone = zone.intersect(Zone(m, omega.zone.condition.xreplace(table_sub), source))
    result = ZonedForm.build(m, k, table, source, omega.q, zone.with_reference(source))
    if omega.derivative is not None:
        eta = pullback(f, omega.derivative, verify=False, source=source)
        if verify and source is not None and not source.is_empty and k + 1 <= m:
            verdict = compare_forms(raw_d(result), eta, source)
            if not verdict.passed:
                logger.warning(f"拉回后 D 兼容性检查失败，丢弃缓存导数: {verdict.to_dict()}")
                return result
        result = result.with_derivative(eta)
    return result


# ==================== 边界一致性 ====================

def boundary_consistency(omega: ZonedForm, eta: ZonedForm, graph: Any, base: Region, *,
                         count: int = 16, step: float = 1e-5) -> float:
    """
    边界限制一致性：d(ι*ω) 与 ι*η 在图 ι(x') = (x', g(x')) 上的比较

    d(ι*ω) 用中心差分计算，返回采样点上的最大偏差。
    """
    iota = section(graph, omega.n - 1, base, "ι")
    pulled = pullback(iota, omega, verify=False)
    target = pullback(iota, eta, verify=False)
    pts = base.sample_points(count, make_rng("boundary-consistency", repr(omega)))
    m = omega.n - 1
    worst = 0.0
    for I in multi_indices(m, omega.k + 1):
        t_coef = target.coeff(I)
        fd = np.zeros(len(pts))
        for pos, i in enumerate(I):
            J = tuple(j for j in I if j != i)
            coef = pulled.coeff(J)
            if coef.is_zero:
                continue
            e_i = np.zeros(m)
            e_i[i - 1] = step
            deriv = (evaluate_many(coef, pts + e_i) - evaluate_many(coef, pts - e_i)) / (2 * step)
            fd += (-1) ** pos * deriv
        exact = evaluate_many(t_coef, pts)
        mask = np.isfinite(fd) & np.isfinite(exact)
        if mask.any():
            worst = max(worst, float(np.abs(fd[mask] - exact[mask]).max()))
    return worst
