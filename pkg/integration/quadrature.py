"""
单形上的数值积分
张量 Gauss-Legendre 规则经 Duffy 映射到标准单形；ε-收缩后做 Richardson 外推，
系数的扭结轨迹穿过子单形时沿最长边二分。
"""

from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from core.config import get_config
from core.errors import QuadratureDiverged
from core.logger import get_logger
from forms.derivative import extended_D
from forms.maps import SmoothMap
from forms.zoned_form import ZonedForm
from kernel.calculus import kink_loci
from kernel.evaluate import evaluate_many

logger = get_logger("integration")


# ==================== 规则与参数 ====================

@dataclass(frozen=True)
class QuadratureSpec:
    """
    积分参数

    order 为每轴 Gauss 点数；epsilons 为收缩参数序列（几何减半）。
    """
    order: int = 12
    epsilons: tuple[float, ...] = tuple(2.0 ** -j for j in range(3, 9))
    tolerance: float = 1e-6
    max_depth: int = 10

    def __post_init__(self):
        if self.order < 2:
            raise ValueError(f"Gauss 阶数至少为 2: {self.order}")
        if any(not (0 <= e < 0.25) for e in self.epsilons):
            raise ValueError(f"ε 必须落在 [0, 1/4): {self.epsilons}")
        if len(self.epsilons) and len(self.epsilons) < 3:
            raise ValueError("ε 序列至少需要 3 项")

    @classmethod
    def from_config(cls) -> "QuadratureSpec":
        q = get_config().quadrature
        return cls(q.order, tuple(2.0 ** -j for j in q.epsilon_exponents), q.tolerance, q.max_depth)

    def doubled(self) -> "QuadratureSpec":
        return replace(self, order=2 * self.order)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "epsilons": list(self.epsilons),
            "tolerance": self.tolerance,
            "max_depth": self.max_depth,
        }


@lru_cache(maxsize=64)
def simplex_rule(k: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """
    标准 k-单形 {u ≥ 0, Σu ≤ 1} 上的求积点与权重

    立方体 [0,1]^k 上的张量 Gauss 规则经 u_j = s_j·Π_{i<j}(1-s_i) 映射过去，
    权重乘以 Jacobian Π_j Π_{i<j}(1-s_i)。
    """
    if k == 0:
        return np.zeros((1, 0)), np.ones(1)
    x, w = np.polynomial.legendre.leggauss(order)
    s1 = (x + 1) / 2
    w1 = w / 2
    grids = np.meshgrid(*([s1] * k), indexing="ij")
    S = np.column_stack([g.ravel() for g in grids])
    W = np.ones(S.shape[0])
    for wg in np.meshgrid(*([w1] * k), indexing="ij"):
        W = W * wg.ravel()
    U = np.empty_like(S)
    scale = np.ones(S.shape[0])
    jac = np.ones(S.shape[0])
    for j in range(k):
        U[:, j] = S[:, j] * scale
        jac = jac * scale
        scale = scale * (1 - S[:, j])
    return U, W * jac


# ==================== 单形映射 ====================

@dataclass(frozen=True, eq=False)
class SimplexMap:
    """
    σ: Δ^k -> ℝ^n

    仿射部分 u ↦ origin + edges·u（ℝ^k -> ℝ^m），outer 为可选的光滑外映射 ℝ^m -> ℝ^n；
    sign 为取向。
    """
    k: int
    origin: np.ndarray
    edges: np.ndarray
    outer: Optional[SmoothMap] = None
    sign: int = 1

    @classmethod
    def affine(cls, vertices: Sequence[Sequence[Any]], sign: int = 1, outer: Optional[SmoothMap] = None) -> "SimplexMap":
        """顶点 v_0..v_k 给出的仿射单形"""
        V = np.array([[float(x) for x in v] for v in vertices], dtype=float)
        if V.ndim != 2:
            V = V.reshape(len(vertices), -1)
        origin = V[0]
        edges = (V[1:] - V[0]).T if len(V) > 1 else np.zeros((V.shape[1], 0))
        return cls(len(V) - 1, origin, edges, outer, sign)

    @classmethod
    def standard(cls, f: SmoothMap, sign: int = 1) -> "SimplexMap":
        """标准单形上的光滑映射 f: Δ^k -> ℝ^n"""
        k = f.m
        return cls(k, np.zeros(k), np.eye(k), f, sign)

    @property
    def n(self) -> int:
        return self.outer.n if self.outer is not None else len(self.origin)

    @property
    def is_affine(self) -> bool:
        return self.outer is None

    def vertices(self) -> np.ndarray:
        """仿射部分的顶点 (k+1, m)"""
        return np.vstack([self.origin] + [self.origin + self.edges[:, j] for j in range(self.k)])

    def inner(self, u: np.ndarray) -> np.ndarray:
        return self.origin[None, :] + np.atleast_2d(u) @ self.edges.T

    def evaluate(self, u: np.ndarray) -> np.ndarray:
        y = self.inner(u)
        return self.outer.evaluate_many(y) if self.outer is not None else y

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        """(N, n, k)"""
        N = np.atleast_2d(u).shape[0]
        if self.outer is None:
            return np.broadcast_to(self.edges, (N,) + self.edges.shape)
        y = self.inner(u)
        Jo = np.stack(
            [np.column_stack([evaluate_many(e, y) for e in row]) for row in self.outer.jacobian], axis=1
        )
        return Jo @ self.edges

    def faces(self) -> list["SimplexMap"]:
        """交错面：第 i 个面去掉顶点 i，取向乘 (-1)^i"""
        V = self.vertices()
        out = []
        for i in range(self.k + 1):
            rest = np.delete(V, i, axis=0)
            sign = self.sign * (1 if i % 2 == 0 else -1)
            origin = rest[0]
            edges = (rest[1:] - rest[0]).T if len(rest) > 1 else np.zeros((V.shape[1], 0))
            out.append(SimplexMap(self.k - 1, origin, edges, self.outer, sign))
        return out


def orient(sigma: SimplexMap, sign: int) -> SimplexMap:
    """改变取向（sign = ±1）"""
    return replace(sigma, sign=sigma.sign * (1 if sign > 0 else -1))


# ==================== 积分 ====================

@dataclass
class IntegralResult:
    """积分值、误差估计、ε 轨迹与 ε=0 直接积分值"""
    value: float
    error: float
    direct: float
    eps_trace: list[tuple[float, float]] = field(default_factory=list)
    pieces: int = 1

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "error": self.error,
            "direct": self.direct,
            "eps_trace": [[e, v] for e, v in self.eps_trace],
            "pieces": self.pieces,
        }

    def __add__(self, other: "IntegralResult") -> "IntegralResult":
        return IntegralResult(
            self.value + other.value, self.error + other.error, self.direct + other.direct,
            [], self.pieces + other.pieces,
        )

    def scaled(self, c: float) -> "IntegralResult":
        return IntegralResult(
            c * self.value, abs(c) * self.error, c * self.direct,
            [(e, c * v) for e, v in self.eps_trace], self.pieces,
        )


def _density(omega: ZonedForm, sigma: SimplexMap, u: np.ndarray) -> np.ndarray:
    """σ*ω 在标准单形坐标下的系数"""
    x = sigma.evaluate(u)
    N = x.shape[0]
    total = np.zeros(N)
    if sigma.k == 0:
        for _, coeff in omega.coeffs:
            total += evaluate_many(coeff, x)
        return sigma.sign * total
    Jac = sigma.jacobian(u)
    for J, coeff in omega.coeffs:
        rows = [j - 1 for j in J]
        minor = np.linalg.det(Jac[:, rows, :])
        total += evaluate_many(coeff, x) * minor
    return sigma.sign * total


def _kink_function(omega: ZonedForm, sigma: SimplexMap) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    loci = []
    for _, coeff in omega.coeffs:
        loci.extend(kink_loci(coeff))
    if not loci:
        return None

    def values(u: np.ndarray) -> np.ndarray:
        x = sigma.evaluate(u)
        return np.column_stack([evaluate_many(e, x) for e in loci])

    return values


def _crosses(values: np.ndarray) -> bool:
    nan = np.isnan(values)
    if (nan.any(axis=0) & ~nan.all(axis=0)).any():
        return True
    values = np.where(nan, 0.0, values)
    return bool(((values.min(axis=0) < 0) & (values.max(axis=0) > 0)).any())


def _integrate_piece(f: Callable[[np.ndarray], np.ndarray], P: np.ndarray, rule: tuple[np.ndarray, np.ndarray],
                     kinks: Optional[Callable[[np.ndarray], np.ndarray]], depth: int, max_depth: int) -> tuple[float, int]:
    """子单形 P（(k+1, k) 顶点）上的积分，扭结穿过时沿最长边二分"""
    U, W = rule
    E = (P[1:] - P[0]).T
    pts = P[0][None, :] + U @ E.T
    if kinks is not None and len(P) > 1 and depth < max_depth and _crosses(kinks(np.vstack([P, pts]))):
        lengths = [(np.linalg.norm(P[i] - P[j]), i, j) for i in range(len(P)) for j in range(i + 1, len(P))]
        _, i, j = max(lengths)
        mid = (P[i] + P[j]) / 2
        left = P.copy()
        left[j] = mid
        right = P.copy()
        right[i] = mid
        v1, c1 = _integrate_piece(f, left, rule, kinks, depth + 1, max_depth)
        v2, c2 = _integrate_piece(f, right, rule, kinks, depth + 1, max_depth)
        return v1 + v2, c1 + c2
    vol = abs(np.linalg.det(E)) if E.size else 1.0
    return float(vol * np.dot(W, f(pts))), 1


def _shrunk_integral(omega: ZonedForm, sigma: SimplexMap, eps: float, spec: QuadratureSpec,
                     kinks_of: Optional[Callable[[np.ndarray], np.ndarray]]) -> tuple[float, int]:
    """ε-收缩单形上的积分：u = ε + (1-(k+1)ε)·w"""
    k = sigma.k
    scale = 1 - (k + 1) * eps

    def to_u(w: np.ndarray) -> np.ndarray:
        return eps + scale * w

    def f(w: np.ndarray) -> np.ndarray:
        return _density(omega, sigma, to_u(w)) * scale ** k

    kinks = (lambda w: kinks_of(to_u(w))) if kinks_of is not None else None
    P = np.vstack([np.zeros(k), np.eye(k)])
    return _integrate_piece(f, P, simplex_rule(k, spec.order), kinks, 0, spec.max_depth)


def richardson(values: Sequence[float], ratio: float = 2.0) -> tuple[float, float]:
    """
    几何减半 ε 序列的 Richardson 外推

    Returns:
        (外推值, 对角线最后两项之差)
    """
    table = [list(values)]
    for m in range(1, len(values)):
        prev = table[-1]
        factor = ratio ** m - 1
        table.append([prev[j] + (prev[j] - prev[j - 1]) / factor for j in range(1, len(prev))])
    diagonal = [row[-1] for row in table]
    return diagonal[-1], abs(diagonal[-1] - diagonal[-2]) if len(diagonal) > 1 else 0.0


def integrate_simplex(omega: ZonedForm, sigma: SimplexMap, spec: Optional[QuadratureSpec] = None, *,
                      shrink: bool = True) -> IntegralResult:
    """
    ∫_σ ω

    Args:
        omega: k-形式
        sigma: k-单形映射
        spec: 积分参数，缺省取配置
        shrink: False 时只做 ε=0 直接积分

    Raises:
        ValueError: 次数不一致
        QuadratureDiverged: ε→0 外推不满足 Cauchy 判据
    """
    if omega.k != sigma.k:
        raise ValueError(f"形式次数 {omega.k} 与单形维数 {sigma.k} 不一致")
    spec = spec or QuadratureSpec.from_config()
    if omega.is_trivially_zero:
        return IntegralResult(0.0, 0.0, 0.0)
    kinks_of = _kink_function(omega, sigma)
    direct, pieces = _shrunk_integral(omega, sigma, 0.0, spec, kinks_of)
    if sigma.k == 0 or not shrink or not spec.epsilons:
        return IntegralResult(direct, 0.0, direct, [], pieces)

    trace = []
    for eps in spec.epsilons:
        value, count = _shrunk_integral(omega, sigma, eps, spec, kinks_of)
        trace.append((eps, value))
        pieces = max(pieces, count)
    value, spread = richardson([v for _, v in trace])
    limit = spec.tolerance * max(1.0, abs(value))
    if not np.isfinite(value) or spread > limit:
        logger.error(f"ε 外推不收敛: 差 {spread:.3e} > {limit:.1e}")
        raise QuadratureDiverged(
            f"ε→0 外推不满足 Cauchy 判据 (差 {spread:.3e})",
            trace=[[e, v] for e, v in trace], spread=spread,
        )
    return IntegralResult(value, spread, direct, trace, pieces)


ChainLike = Sequence[tuple[Union[Fraction, float, int], SimplexMap]]


def integrate_chain(omega: ZonedForm, chain: ChainLike, spec: Optional[QuadratureSpec] = None, *,
                    shrink: bool = True) -> IntegralResult:
    """有理加权单形链上的积分；空链为 0"""
    spec = spec or QuadratureSpec.from_config()
    total = IntegralResult(0.0, 0.0, 0.0, [], 0)
    for weight, sigma in chain:
        if weight == 0:
            continue
        total = total + integrate_simplex(omega, sigma, spec, shrink=shrink).scaled(float(weight))
    return total


def chain_from_cycle(cycle: Any, outer: Optional[SmoothMap] = None) -> list[tuple[Fraction, SimplexMap]]:
    """oracle 循环 -> (权重, 单形) 链；outer 为外复合映射（如 ρ⁻¹）"""
    return [(weight, SimplexMap.affine(verts, 1, outer)) for weight, verts in cycle.simplices]


# ==================== Stokes ====================

@dataclass
class StokesReport:
    """|∫_σ Dω - ∫_∂σ ω| 及其 ε=0 直接版本"""
    residual: float
    direct_residual: float
    interior: IntegralResult
    boundary: IntegralResult
    threshold: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.threshold

    def to_dict(self) -> dict:
        return {
            "residual": self.residual,
            "direct_residual": self.direct_residual,
            "threshold": self.threshold,
            "passed": self.passed,
            "interior": self.interior.to_dict(),
            "boundary": self.boundary.to_dict(),
        }


def stokes_residual(omega: ZonedForm, sigma: SimplexMap, spec: Optional[QuadratureSpec] = None) -> StokesReport:
    """
    Stokes 残差 |∫_σ Dω - Σ_i (-1)^i ∫_{σ∘F_i} ω|

    Dω 取 omega 携带的导数，否则现算 extended_D。
    通过阈值为 max(1e-6, 10·误差估计)。
    """
    if sigma.k != omega.k + 1:
        raise ValueError(f"Stokes 需要 (k-1)-形式与 k-单形: 形式 {omega.k} 次, 单形 {sigma.k} 维")
    spec = spec or QuadratureSpec.from_config()
    D = omega.derivative if omega.derivative is not None else extended_D(omega)
    interior = integrate_simplex(D, sigma, spec)
    boundary_total = IntegralResult(0.0, 0.0, 0.0, [], 0)
    for face in sigma.faces():
        boundary_total = boundary_total + integrate_simplex(omega, face, spec)
    residual = abs(interior.value - boundary_total.value)
    direct = abs(interior.direct - boundary_total.direct)
    threshold = max(1e-6, 10 * (interior.error + boundary_total.error))
    report = StokesReport(residual, direct, interior, boundary_total, threshold)
    logger.debug(f"Stokes 残差 {residual:.3e}（直接 {direct:.3e}）阈值 {threshold:.1e}")
    return report
