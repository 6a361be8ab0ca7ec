"""
上同调引擎
按 ribbon 个数归纳：单点给出常函数 1；单个 ribbon 沿 π 拉回 base 的基；
ribbon 并取 A = 前 s-1 个、B = 最后一个，由 Mayer–Vietoris 长正合列拼出 A∪B 的基。
限制映射的秩用交集的周期配对判定，并始终与立方 oracle 对照。
"""

from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd, lcm
from typing import Any, Optional, Sequence

import numpy as np
import sympy

from core.config import get_config
from core.errors import GlueDiscontinuity, OracleMismatch, UnsupportedIntegrand, UnsupportedRegion
from core.logger import get_logger
from engine.mayer_vietoris import differential, glue, mv_connecting, mv_psi, mv_split
from engine.partition import PartitionOfUnity, partition_of_unity
from engine.poincare import is_cell, poincare_primitive
from fiber.operator import fiber_primitive
from forms.maps import SmoothMap, projection, pullback, section
from forms.zoned_form import ZonedForm, compare_forms, is_zero_form, parse_regularity, restrict
from geometry.operations import bounded_rescale, region_intersect, resolve_constraints
from geometry.region import Region
from integration.periods import PeriodMatrix, numeric_rank, period_matrix, period_values
from integration.quadrature import QuadratureSpec
from oracle.homology import Cycle, OracleResult, singular_homology

logger = get_logger("engine")

ANCHOR_AGREEMENT = "de Rham and singular Betti numbers agree"
ANCHOR_PAIRING = "the period pairing is perfect"
ANCHOR_CYCLES = "oracle cycles lie in the region"


# ==================== 数据结构 ====================

@dataclass
class NodeBasis:
    """递归中一个区域的上同调代表元"""
    region: Region
    representatives: dict[int, list[ZonedForm]] = field(default_factory=dict)

    def forms(self, k: int) -> list[ZonedForm]:
        return self.representatives.get(k, [])

    def betti(self) -> list[int]:
        return [len(self.forms(k)) for k in range(self.region.n + 1)]


@dataclass
class Split:
    """并集 U = A ∪ B 的 Mayer–Vietoris 数据"""
    region: Region
    first: Region
    second: Region
    overlap: Region
    partition: PartitionOfUnity


@dataclass
class RestrictionMap:
    """
    r_k: H^k(A) ⊕ H^k(B) -> H^k(A∩B)，(α, β) ↦ β|C - α|C

    列依次为 A 的代表元、B 的代表元，行为 C 的代表元坐标。
    """
    matrix: np.ndarray
    exact: Optional[list[list[Fraction]]]
    first: int
    second: int

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]


@dataclass
class CohomologyBasis:
    """区域的 Betti 数、闭形式代表元、oracle 循环基与周期配对"""
    region: Region
    q: int
    betti: list[int]
    representatives: dict[int, list[ZonedForm]]
    cycles: dict[int, list[Cycle]]
    pairings: dict[int, PeriodMatrix]
    oracle: OracleResult
    outer: Optional[SmoothMap] = None
    verdicts: list[dict] = field(default_factory=list)

    @property
    def perfect(self) -> bool:
        return all(pm.perfect for pm in self.pairings.values())

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts)

    def rescaled_representatives(self, k: int) -> list[ZonedForm]:
        """代表元拉回到有界化坐标（有界区域原样返回）"""
        reps = self.representatives.get(k, [])
        if self.outer is None:
            return reps
        return [pullback(self.outer, f, verify=False) for f in reps]

    def to_dict(self) -> dict:
        return {
            "region_id": self.region.label,
            "q": self.q,
            "betti": list(self.betti),
            "representatives": {
                str(k): [f.to_json(include_region=False) for f in forms]
                for k, forms in sorted(self.representatives.items())
            },
            "cycles": {str(k): [c.to_json() for c in v] for k, v in sorted(self.cycles.items())},
            "period_matrices": {str(k): pm.to_dict() for k, pm in sorted(self.pairings.items())},
            "oracle": {"h": str(self.oracle.h), "betti": list(self.oracle.betti), "rescaled": self.oracle.rescaled},
            "verdicts": self.verdicts,
        }


# ==================== 有理化与线性代数 ====================

def _rationalize(matrix: np.ndarray, tol: float = 1e-5) -> Optional[list[list[Fraction]]]:
    """所有元素都接近小分母有理数时返回有理矩阵"""
    max_den = get_config().engine.max_denominator
    rows = []
    for row in np.atleast_2d(matrix):
        out = []
        for v in row:
            if not np.isfinite(v):
                return None
            f = Fraction(float(v)).limit_denominator(max_den)
            if abs(float(f) - v) > tol * max(1.0, abs(v)):
                return None
            out.append(f)
        rows.append(out)
    return rows


def _integral(vec: Sequence[Fraction]) -> list[Fraction]:
    """缩放为互素整数"""
    vec = [Fraction(v) for v in vec]
    den = lcm(*[v.denominator for v in vec]) if vec else 1
    ints = [int(v * den) for v in vec]
    g = 0
    for v in ints:
        g = gcd(g, abs(v))
    g = g or 1
    return [Fraction(v // g) for v in ints]


def _rank(matrix: np.ndarray, exact: Optional[list[list[Fraction]]]) -> int:
    if matrix.size == 0:
        return 0
    if exact is not None:
        return sympy.Matrix(exact).rank()
    rank, _ = numeric_rank(matrix)
    return rank


def _kernel_basis(rmap: RestrictionMap) -> list[list[Fraction]]:
    """ker r_k 的基（有理向量）"""
    cols = rmap.first + rmap.second
    if cols == 0:
        return []
    if rmap.rows == 0:
        return [[Fraction(int(i == j)) for i in range(cols)] for j in range(cols)]
    if rmap.exact is not None:
        M = sympy.Matrix([[sympy.Rational(v.numerator, v.denominator) for v in row] for row in rmap.exact])
        return [_integral([Fraction(int(x.p), int(x.q)) for x in vec]) for vec in M.nullspace()]
    rank, _ = numeric_rank(rmap.matrix)
    _, _, vt = np.linalg.svd(rmap.matrix)
    basis = []
    for vec in vt[rank:]:
        vec = vec / np.abs(vec).max()
        basis.append(_integral([Fraction(float(v)).limit_denominator(10 ** 6) for v in vec]))
    return basis


def _complement(rmap: RestrictionMap) -> list[int]:
    """贪心选出补全 r_k 列空间的 H^k(C) 基向量下标（即 coker 的代表）"""
    rows = rmap.rows
    if rows == 0:
        return []
    current = rmap.matrix
    exact = rmap.exact
    rank = _rank(current, exact)
    chosen = []
    for j in range(rows):
        if rank == rows:
            break
        e = np.zeros((rows, 1))
        e[j, 0] = 1.0
        trial = np.hstack([current, e])
        trial_exact = None
        if exact is not None:
            trial_exact = [row + [Fraction(int(i == j))] for i, row in enumerate(exact)]
        trial_rank = _rank(trial, trial_exact)
        if trial_rank > rank:
            chosen.append(j)
            current, exact, rank = trial, trial_exact, trial_rank
    return chosen


# ==================== 引擎 ====================

class CohomologyEngine:
    """
    常构 de Rham 上同调引擎

    结果按区域键缓存；同一个引擎实例内 A、B、A∩B 的子问题只计算一次。
    """

    def __init__(self, q: Any = 1, *, resolution: Any = None, spec: Optional[QuadratureSpec] = None,
                 use_cache: Optional[bool] = None, order: Optional[int] = None):
        self.q = parse_regularity(q)
        self.order = self.q + 1 if order is None else order
        self.resolution = resolution
        self.spec = spec or QuadratureSpec.from_config()
        self.use_cache = use_cache
        self._nodes: dict[str, NodeBasis] = {}
        self._splits: dict[str, Split] = {}
        self._oracles: dict[str, tuple[OracleResult, Optional[SmoothMap]]] = {}
        self._pairings: dict[tuple[str, int], PeriodMatrix] = {}
        self._restrictions: dict[tuple[str, int], RestrictionMap] = {}
        self._results: dict[str, CohomologyBasis] = {}

    # ---------- 区域 ----------

    @staticmethod
    def normalize(region: Region) -> Region:
        """
        消去约束

        Raises:
            UnsupportedRegion: n ≥ 2 的区域带有 ribbon 无法表达的约束
        """
        if not region.has_constraint:
            return region
        if region.n == 1:
            return resolve_constraints(region)
        raise UnsupportedRegion(f"区域 {region.label} 的约束无法化为 ribbon 并集 (n={region.n})",
                                region=region.label)

    def split(self, region: Region) -> Split:
        """A = 前 s-1 个 ribbon，B = 最后一个，C = A∩B"""
        region = self.normalize(region)
        if region.key in self._splits:
            return self._splits[region.key]
        n = region.n
        first = Region(n, region.ribbons[:-1])
        second = Region(n, region.ribbons[-1:])
        overlap = region_intersect(first, second)
        partition = partition_of_unity([first, second], self.order, union=region)
        result = Split(region, first, second, overlap, partition)
        self._splits[region.key] = result
        return result

    # ---------- oracle 与配对 ----------

    def oracle(self, region: Region) -> tuple[OracleResult, Optional[SmoothMap]]:
        """oracle 结果与循环坐标到区域坐标的映射（有界化时为 ρ⁻¹）"""
        if region.key not in self._oracles:
            result = singular_homology(region, self.resolution, use_cache=self.use_cache)
            outer = bounded_rescale(region)[2] if result.rescaled else None
            self._oracles[region.key] = (result, outer)
        return self._oracles[region.key]

    def check_oracle(self, node: NodeBasis) -> OracleResult:
        """
        Raises:
            OracleMismatch: 引擎 Betti 数与 oracle 不一致
        """
        result, _ = self.oracle(node.region)
        engine, brute = _trim(node.betti()), _trim(result.betti)
        if engine != brute:
            logger.error(f"{node.region.label}: 引擎 b={engine}，oracle b={brute}")
            raise OracleMismatch(
                f"区域 {node.region.label} 的引擎 Betti 数与立方 oracle 不一致",
                engine=engine, oracle=brute, h=str(result.h),
            )
        return result

    def pairing(self, node: NodeBasis, k: int) -> PeriodMatrix:
        """
        node 的 k 次代表元与 oracle 循环的周期矩阵

        Raises:
            OracleMismatch: 代表元与循环个数不同，或配对退化
        """
        key = (node.region.key, k)
        if key in self._pairings:
            return self._pairings[key]
        result = self.check_oracle(node)
        _, outer = self.oracle(node.region)
        pm = period_matrix(node.forms(k), result.cycles.get(k, []), outer=outer, spec=self.spec)
        if not pm.perfect:
            logger.error(f"{node.region.label}: H^{k} 的周期配对退化 det={pm.det} rank={pm.rank}")
            raise OracleMismatch(f"区域 {node.region.label} 的 H^{k} 代表元与 oracle 循环配对退化",
                                 det=pm.det, rank=pm.rank, k=k)
        self._pairings[key] = pm
        return pm

    def coordinates(self, node: NodeBasis, forms: Sequence[ZonedForm], k: int) -> np.ndarray:
        """闭形式在 node 的 H^k 基下的坐标（行：形式）"""
        b = len(node.forms(k))
        if not forms or b == 0:
            return np.zeros((len(forms), b))
        pm = self.pairing(node, k)
        result, outer = self.oracle(node.region)
        values, _, _ = period_values(list(forms), result.cycles.get(k, []), outer=outer, spec=self.spec)
        return values @ np.linalg.inv(pm.matrix)

    def restriction(self, split: Split, k: int) -> RestrictionMap:
        key = (split.region.key, k)
        if key in self._restrictions:
            return self._restrictions[key]
        alphas = self.node(split.first).forms(k)
        betas = self.node(split.second).forms(k)
        overlap = self.node(split.overlap)
        rows = len(overlap.forms(k))
        if rows == 0 or not (alphas or betas):
            matrix = np.zeros((rows, len(alphas) + len(betas)))
        else:
            coords_a = self.coordinates(overlap, [restrict(a, overlap.region, check=False) for a in alphas], k)
            coords_b = self.coordinates(overlap, [restrict(b, overlap.region, check=False) for b in betas], k)
            matrix = np.hstack([-coords_a.T, coords_b.T]).reshape(rows, len(alphas) + len(betas))
        rmap = RestrictionMap(matrix, _rationalize(matrix), len(alphas), len(betas))
        logger.debug(f"r_{k} on {split.region.label}: {matrix.shape} exact={rmap.exact is not None}")
        self._restrictions[key] = rmap
        return rmap

    # ---------- 递归 ----------

    def node(self, region: Region) -> NodeBasis:
        region = self.normalize(region)
        key = region.key
        if key in self._nodes:
            return self._nodes[key]
        if region.is_empty:
            node = NodeBasis(region)
        elif region.is_point:
            node = NodeBasis(region, {0: [ZonedForm.function(1, 0, region, self.q)]})
        elif len(region.ribbons) == 1:
            node = NodeBasis(region, self._ribbon_representatives(region))
        else:
            node = NodeBasis(region, self._union_representatives(region))
        logger.debug(f"节点 {region.label}: b={node.betti()}")
        self._nodes[key] = node
        return node

    def _ribbon_representatives(self, region: Region) -> dict[int, list[ZonedForm]]:
        """ribbon 与其 base 同伦等价：沿 π 拉回 base 的代表元"""
        rib = region.ribbons[0]
        base = self.node(rib.base)
        pi = projection(region.n, region)
        return {
            k: [pullback(pi, f, verify=False, source=region) for f in forms]
            for k, forms in base.representatives.items() if forms
        }

    def _union_representatives(self, region: Region) -> dict[int, list[ZonedForm]]:
        """
        H^k(U) ≅ ker r_k ⊕ coker r_{k-1}

        ker r_k 的元素 (α, β) 修正到在交集上逐点一致后粘合；
        coker r_{k-1} 由 H^{k-1}(C) 中补全列空间的代表元经 δ 给出。
        """
        split = self.split(region)
        maps = {k: self.restriction(split, k) for k in range(region.n + 1)}
        reps: dict[int, list[ZonedForm]] = {}
        for k in range(region.n + 1):
            forms = self._kernel_classes(split, k, maps[k])
            if k >= 1:
                forms += self._connecting_classes(split, k - 1, maps[k - 1])
            if forms:
                reps[k] = forms
        return reps

    def _combine(self, forms: Sequence[ZonedForm], coeffs: Sequence[Fraction], home: Region, k: int) -> ZonedForm:
        total = ZonedForm.zero(home.n, k, home, self.q)
        for form, c in zip(forms, coeffs):
            if c == 0:
                continue
            term = form if c == 1 else form.scale(sympy.Rational(c.numerator, c.denominator))
            total = total + restrict(term, home, check=False)
        return total.with_region(home)

    def _kernel_classes(self, split: Split, k: int, rmap: RestrictionMap) -> list[ZonedForm]:
        alphas = self.node(split.first).forms(k)
        betas = self.node(split.second).forms(k)
        a = len(alphas)
        out = []
        for vec in _kernel_basis(rmap):
            alpha = self._combine(alphas, vec[:a], split.first, k)
            beta = self._combine(betas, vec[a:], split.second, k)
            out.append(self._lift_pair(split, alpha, beta))
        return out

    def _lift_pair(self, split: Split, alpha: ZonedForm, beta: ZonedForm) -> ZonedForm:
        """
        把 r(α, β) = 0 的一对修正为在 C 上逐点一致并粘合

        β|C - α|C = Dλ 时取 λ 的分裂 (λ₁, λ₂)，用 α + Dλ₁、β - Dλ₂ 替换。
        """
        overlap = split.overlap
        if overlap.is_empty:
            return glue(alpha, beta, split.region, verify=False)
        diff = mv_psi(alpha, beta, overlap)
        if not diff.is_trivially_zero and not is_zero_form(diff, overlap).passed:
            if diff.k == 0:
                raise GlueDiscontinuity("H^0 核中的一对函数在交集上不一致", region=split.region.label)
            lam = self.primitive(diff, overlap)
            lam1, lam2 = mv_split(lam, split.partition)
            alpha = alpha + differential(lam1)
            beta = beta - differential(lam2)
        return glue(alpha, beta, split.region)

    def _connecting_classes(self, split: Split, j: int, rmap: RestrictionMap) -> list[ZonedForm]:
        gammas = self.node(split.overlap).forms(j)
        if not gammas:
            return []
        return [mv_connecting(gammas[i], split.partition) for i in _complement(rmap)]

    # ---------- 原函数 ----------

    def primitive(self, omega: ZonedForm, region: Optional[Region] = None) -> ZonedForm:
        """
        恰当形式在 ribbon 并上的原函数

        胞腔走 poincare_primitive；单个 ribbon 用纤维原函数加 base 上的原函数；
        并集分别求 A、B 上的原函数，用闭代表元修正差的类后分裂、粘合。

        Raises:
            UnsupportedIntegrand: ω 不恰当，或纤维积分超出可积文法
        """
        region = self.normalize(region if region is not None else omega.region)
        n, k = omega.n, omega.k
        if k < 1:
            raise ValueError("原函数只对次数 ≥ 1 的形式有定义")
        if omega.is_trivially_zero or region.is_empty:
            return ZonedForm.zero(n, k - 1, region, self.q)
        if is_cell(region):
            return poincare_primitive(omega, region)
        if len(region.ribbons) == 1:
            lam = self._ribbon_primitive(omega, region)
        else:
            lam = self._union_primitive(omega, region)
        verdict = compare_forms(differential(lam), omega, region)
        if not verdict.passed:
            logger.error(f"{region.label}: Dλ ≠ ω {verdict.to_dict()}")
            raise UnsupportedIntegrand("原函数验证失败：Dλ 与 ω 不一致", region=region.label,
                                       verdict=verdict.to_dict())
        return lam

    def _ribbon_primitive(self, omega: ZonedForm, region: Region) -> ZonedForm:
        n, k = omega.n, omega.k
        rib = region.ribbons[0]
        lam = fiber_primitive(omega, rib).scale((-1) ** (k - 1))
        if k <= n - 1:
            psi = section(rib.section(), n - 1, rib.base, "ψ")
            base_form = pullback(psi, omega, verify=False)
            if not base_form.is_trivially_zero:
                mu = self.primitive(base_form, rib.base)
                lam = lam + pullback(projection(n, region), mu, verify=False, source=region)
        return lam.with_region(region)

    def _union_primitive(self, omega: ZonedForm, region: Region) -> ZonedForm:
        split = self.split(region)
        k = omega.k
        lam_a = self.primitive(restrict(omega, split.first, check=False), split.first)
        lam_b = self.primitive(restrict(omega, split.second, check=False), split.second)
        overlap = split.overlap
        if overlap.is_empty:
            return glue(lam_a, lam_b, region, verify=False)
        node_c = self.node(overlap)
        diff = mv_psi(lam_a, lam_b, overlap)
        if node_c.forms(k - 1) and not diff.is_trivially_zero:
            coords = self.coordinates(node_c, [diff], k - 1)[0]
            rmap = self.restriction(split, k - 1)
            x, *_ = np.linalg.lstsq(rmap.matrix, coords, rcond=None)
            if np.abs(rmap.matrix @ x - coords).max(initial=0.0) > 1e-6 * max(1.0, np.abs(coords).max(initial=0.0)):
                raise UnsupportedIntegrand("形式不恰当：原函数之差的类不在限制映射的像中", region=region.label)
            exact = _rationalize(x[None, :])
            x = exact[0] if exact is not None else [Fraction(float(v)).limit_denominator(10 ** 6) for v in x]
            a = rmap.first
            lam_a = lam_a - self._combine(self.node(split.first).forms(k - 1), x[:a], split.first, k - 1)
            lam_b = lam_b - self._combine(self.node(split.second).forms(k - 1), x[a:], split.second, k - 1)
            diff = mv_psi(lam_a, lam_b, overlap)
        if not diff.is_trivially_zero and not is_zero_form(diff, overlap).passed:
            if k - 1 == 0:
                raise UnsupportedIntegrand("原函数之差在交集上不是零函数", region=region.label)
            mu = self.primitive(diff, overlap)
            mu1, mu2 = mv_split(mu, split.partition)
            lam_a = lam_a + differential(mu1)
            lam_b = lam_b - differential(mu2)
        return glue(lam_a, lam_b, region)

    # ---------- 入口 ----------

    def compute(self, region: Region) -> CohomologyBasis:
        """
        区域的上同调基

        Raises:
            OracleMismatch: 引擎与 oracle 的 Betti 数不一致（从不吞掉）
            RankAmbiguous: 周期矩阵奇异值落在模糊带内
            UnsupportedRegion / UnsupportedIntegrand: 见各步骤
        """
        region = self.normalize(region)
        if region.key in self._results:
            return self._results[region.key]
        node = self.node(region)
        result, outer = self.oracle(region)
        engine_betti = open_betti(node.betti(), region.n)
        agree = _trim(engine_betti) == _trim(result.betti)
        verdicts = [{
            "check": "engine-oracle agreement",
            "anchor": ANCHOR_AGREEMENT,
            "passed": agree,
            "detail": {"engine": engine_betti, "oracle": list(result.betti), "h": str(result.h)},
        }]
        verdicts.append({
            "check": "cycle containment",
            "anchor": ANCHOR_CYCLES,
            "passed": result.cycles_inside,
            "detail": {"outside": {str(k): v for k, v in sorted(result.outside.items())}},
        })
        self.check_oracle(node)
        pairings: dict[int, PeriodMatrix] = {}
        for k, forms in sorted(node.representatives.items()):
            pm = period_matrix(forms, result.cycles.get(k, []), outer=outer, spec=self.spec)
            pairings[k] = pm
            verdicts.append({
                "check": f"pairing H^{k}",
                "anchor": ANCHOR_PAIRING,
                "passed": pm.perfect,
                "detail": {"det": pm.det, "rank": pm.rank, "shape": list(pm.shape)},
            })
        basis = CohomologyBasis(region, self.q, engine_betti, dict(node.representatives),
                                dict(result.cycles), pairings, result, outer, verdicts)
        logger.info(f"上同调 {region.label}: b={engine_betti} perfect={basis.perfect}")
        self._results[region.key] = basis
        return basis


def open_betti(values: Sequence[int], n: int) -> list[int]:
    """
    ℝⁿ 中开集的 Betti 数 b₀..b_{n-1}（H^n 恒为零，不列出）；点与 n = 0 时为 [b₀]
    """
    width = max(n, 1)
    out = list(values[:width])
    return out + [0] * (width - len(out))


def _trim(values: Sequence[int]) -> list[int]:
    out = list(values)
    while out and out[-1] == 0:
        out.pop()
    return out


def cohomology(region: Region, q: Any = 1, **opts: Any) -> CohomologyBasis:
    """CohomologyEngine(q, **opts).compute(region)"""
    return CohomologyEngine(q, **opts).compute(region)
