"""
带 zone 的微分形式
系数表按严格递增多重指标存放；支持加减、数乘、限制、逐系数比较与 JSON 序列化
"""

from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Any, Iterable, Mapping, Optional, Union

import sympy

from core.errors import SchemaError, UnsupportedRegularity
from core.logger import get_logger
from core.sampling import make_rng
from kernel.equality import Verdict, equal, worst
from kernel.expr import (
    ScalarExpr,
    Zone,
    condition_from_json,
    condition_to_json,
    coord,
    expr_from_json,
    parse_expr,
)
from geometry.region import Region, region_from_json

logger = get_logger("forms")

MultiIndex = tuple[int, ...]
SCHEMA_VERSION = 1


# ==================== 多重指标 ====================

def sort_with_sign(indices: Iterable[int]) -> tuple[Optional[MultiIndex], int]:
    """
    把 dx_{i1}∧...∧dx_{ik} 排成递增顺序

    Returns:
        (递增指标, 置换符号)；有重复指标时为 (None, 0)
    """
    idx = list(indices)
    if len(set(idx)) != len(idx):
        return None, 0
    sign = 1
    # 冒泡计数逆序对
    for i in range(len(idx)):
        for j in range(len(idx) - 1 - i):
            if idx[j] > idx[j + 1]:
                idx[j], idx[j + 1] = idx[j + 1], idx[j]
                sign = -sign
    return tuple(idx), sign


def multi_indices(n: int, k: int) -> list[MultiIndex]:
    """所有长度为 k 的递增多重指标"""
    return [tuple(c) for c in combinations(range(1, n + 1), k)]


def index_key(J: MultiIndex) -> str:
    return ",".join(str(j) for j in J)


def parse_index_key(key: str, pointer: str = "") -> MultiIndex:
    key = key.strip()
    if not key:
        return ()
    try:
        return tuple(int(p) for p in key.split(","))
    except ValueError as e:
        raise SchemaError(f"非法多重指标 {key!r}", pointer) from e


# ==================== ZonedForm ====================

@dataclass(frozen=True, eq=False)
class ZonedForm:
    """
    k 次微分形式

    coeffs 为 (J, a_J) 的有序元组（J 严格递增、零系数已去掉）；
    derivative 为已验证的扩展导数 η（若有），report 为求导时的正则性报告。
    """
    n: int
    k: int
    q: int
    coeffs: tuple[tuple[MultiIndex, ScalarExpr], ...]
    region: Optional[Region] = None
    zone: Optional[Zone] = None
    derivative: Optional["ZonedForm"] = None
    report: Any = field(default=None)

    # ---------- 构造 ----------

    @classmethod
    def build(cls, n: int, k: int, coeffs: Mapping[MultiIndex, Any], region: Optional[Region] = None,
              q: int = 1, zone: Optional[Zone] = None) -> "ZonedForm":
        """
        从 {J: 系数} 构造；J 可以无序，自动排序并带上置换符号

        Raises:
            ValueError: 指标越界或长度不等于 k
        """
        if k < 0 or n < 0:
            raise ValueError(f"非法维数/次数: n={n}, k={k}")
        if region is not None and region.n != n:
            raise ValueError(f"区域维数 {region.n} 与形式维数 {n} 不一致")
        table: dict[MultiIndex, ScalarExpr] = {}
        for J, value in coeffs.items():
            J = tuple(J)
            if len(J) != k or any(j < 1 or j > n for j in J):
                raise ValueError(f"多重指标 {J} 不符合 n={n}, k={k}")
            sorted_J, sign = sort_with_sign(J)
            if sorted_J is None:
                continue
            expr = ScalarExpr.lift(value) if not isinstance(value, str) else parse_expr(value)
            table[sorted_J] = table.get(sorted_J, ScalarExpr(0)) + (expr if sign > 0 else -expr)
        items = tuple(sorted((J, e) for J, e in table.items() if not e.is_zero))
        return cls(n, k, q, items, region, zone)

    @classmethod
    def zero(cls, n: int, k: int, region: Optional[Region] = None, q: int = 1) -> "ZonedForm":
        return cls(n, k, q, (), region)

    @classmethod
    def function(cls, value: Any, n: int, region: Optional[Region] = None, q: int = 1) -> "ZonedForm":
        """0-形式"""
        return cls.build(n, 0, {(): value}, region, q)

    # ---------- 访问 ----------

    def coeff(self, J: MultiIndex) -> ScalarExpr:
        for key, value in self.coeffs:
            if key == J:
                return value
        return ScalarExpr(sympy.Integer(0))

    def as_dict(self) -> dict[MultiIndex, ScalarExpr]:
        return dict(self.coeffs)

    @property
    def is_trivially_zero(self) -> bool:
        return not self.coeffs

    @property
    def effective_zone(self) -> Zone:
        return self.zone if self.zone is not None else Zone.full(self.n, self.region)

    def expressions(self) -> list[ScalarExpr]:
        return [e for _, e in self.coeffs]

    def __repr__(self) -> str:
        body = " + ".join(f"({e})d{index_key(J) or '1'}" for J, e in self.coeffs) or "0"
        return f"ZonedForm(n={self.n}, k={self.k}, q={self.q}: {body})"

    # ---------- 算术 ----------

    def _check_compatible(self, other: "ZonedForm") -> None:
        if (self.n, self.k) != (other.n, other.k):
            raise ValueError(f"形式不兼容: (n={self.n},k={self.k}) vs (n={other.n},k={other.k})")

    def __add__(self, other: "ZonedForm") -> "ZonedForm":
        self._check_compatible(other)
        table = self.as_dict()
        for J, e in other.coeffs:
            table[J] = table.get(J, ScalarExpr(0)) + e
        zone = _meet_zones(self.zone, other.zone)
        result = ZonedForm.build(self.n, self.k, table, self.region or other.region, min(self.q, other.q), zone)
        if self.derivative is not None and other.derivative is not None:
            result = result.with_derivative(self.derivative + other.derivative)
        return result

    def __neg__(self) -> "ZonedForm":
        result = ZonedForm(self.n, self.k, self.q, tuple((J, -e) for J, e in self.coeffs),
                           self.region, self.zone)
        if self.derivative is not None:
            result = result.with_derivative(-self.derivative)
        return result

    def __sub__(self, other: "ZonedForm") -> "ZonedForm":
        return self + (-other)

    def scale(self, factor: Any) -> "ZonedForm":
        """数乘（常数因子保留缓存导数，函数因子丢弃）"""
        f = ScalarExpr.lift(factor)
        table = {J: f * e for J, e in self.coeffs}
        result = ZonedForm.build(self.n, self.k, table, self.region, self.q, self.zone)
        if self.derivative is not None and not f.expr.free_symbols:
            result = result.with_derivative(self.derivative.scale(f))
        return result

    def map_coeffs(self, fn) -> "ZonedForm":
        """逐系数变换（不保留导数缓存）"""
        return ZonedForm.build(self.n, self.k, {J: fn(e) for J, e in self.coeffs}, self.region, self.q, self.zone)

    # ---------- 派生值 ----------

    def with_derivative(self, eta: "ZonedForm") -> "ZonedForm":
        """返回缓存了导数 η 的新形式（调用方保证 η 在 zone 上等于 d(ω)，外部输入由 form_from_json 校验）"""
        if eta.k != self.k + 1 or eta.n != self.n:
            raise ValueError(f"导数次数不符: k={self.k} -> {eta.k}")
        return replace(self, derivative=eta)

    def with_region(self, region: Optional[Region]) -> "ZonedForm":
        return replace(self, region=region)

    def with_zone(self, zone: Optional[Zone]) -> "ZonedForm":
        return replace(self, zone=zone)

    def with_report(self, report: Any) -> "ZonedForm":
        return replace(self, report=report)

    # ---------- 序列化 ----------

    def to_json(self, include_region: bool = True) -> dict:
        data: dict = {
            "schema_version": SCHEMA_VERSION,
            "n": self.n,
            "k": self.k,
            "q": self.q,
            "coeffs": {index_key(J): e.to_json() for J, e in self.coeffs},
        }
        if include_region and self.region is not None:
            data["region"] = self.region.to_json(nested=True)
        if self.zone is not None and not self.zone.is_full:
            data["zone"] = condition_to_json(self.zone.condition)
        if self.derivative is not None:
            data["derivative"] = self.derivative.to_json(include_region=False)
        return data


def _meet_zones(z1: Optional[Zone], z2: Optional[Zone]) -> Optional[Zone]:
    if z1 is None:
        return z2
    return z1.intersect(z2)


# ==================== 限制与比较 ====================

def restrict(omega: ZonedForm, target: Region, *, check: bool = True) -> ZonedForm:
    """
    限制到子区域 R'

    系数不变，区域替换，zone 的参考区域换成 R'；缓存的导数一并限制。
    """
    if target.n != omega.n:
        raise ValueError(f"限制目标维数 {target.n} 与形式维数 {omega.n} 不一致")
    if check and omega.region is not None and not target.is_empty and target is not omega.region:
        rng = make_rng("restrict", target.key)
        pts = target.sample_points(32, rng)
        outside = ~omega.region.contains_array(pts)
        if outside.any():
            logger.warning(f"限制目标不在原区域内: {int(outside.sum())}/32 个采样点越界")
    zone = omega.zone.with_reference(target) if omega.zone is not None else None
    derivative = restrict(omega.derivative, target, check=False) if omega.derivative is not None else None
    return replace(omega, region=target, zone=zone, derivative=derivative)


def compare_forms(w1: ZonedForm, w2: ZonedForm, region: Optional[Region] = None, **kwargs: Any) -> Verdict:
    """逐系数 equal()，取最差结论"""
    if (w1.n, w1.k) != (w2.n, w2.k):
        raise ValueError(f"形式不兼容: (n={w1.n},k={w1.k}) vs (n={w2.n},k={w2.k})")
    region = region or w1.region or w2.region
    keys = sorted(set(J for J, _ in w1.coeffs) | set(J for J, _ in w2.coeffs))
    return worst(equal(w1.coeff(J), w2.coeff(J), region, **kwargs) for J in keys)


def is_zero_form(omega: ZonedForm, region: Optional[Region] = None, **kwargs: Any) -> Verdict:
    return compare_forms(omega, ZonedForm.zero(omega.n, omega.k, omega.region), region, **kwargs)


# ==================== 常用形式 ====================

def angular_form(center: tuple = (0, 0), n: int = 2, region: Optional[Region] = None) -> ZonedForm:
    """
    角形式 ((x1-c1)dx2 - (x2-c2)dx1) / |x-c|^2

    在 ℝ^2∖{c} 上闭而不恰当；n > 2 时只用前两个坐标。
    """
    c1, c2 = (sympy.nsimplify(c) for c in center)
    u = coord(1) - c1
    v = coord(2) - c2
    r2 = u ** 2 + v ** 2
    zone = Zone(n, sympy.Ne(r2, 0), region)
    return ZonedForm.build(n, 1, {(1,): -v / r2, (2,): u / r2}, region, q=1, zone=zone)


# ==================== JSON ====================

def form_from_json(doc: Any, pointer: str = "", region: Optional[Region] = None) -> ZonedForm:
    """
    形式 JSON -> ZonedForm

    {"n", "k", "q", "region"?, "coeffs": {"1,2": expr}, "zone"?, "derivative"?}
    """
    if not isinstance(doc, dict):
        raise SchemaError("形式必须是 JSON 对象", pointer)
    for key in ("n", "k", "coeffs"):
        if key not in doc:
            raise SchemaError(f"缺少字段 {key!r}", pointer)
    try:
        n, k = int(doc["n"]), int(doc["k"])
    except (TypeError, ValueError) as e:
        raise SchemaError("n/k 必须是整数", pointer) from e
    q = parse_regularity(doc.get("q", 1), f"{pointer}/q")
    if "region" in doc:
        region = region_from_json(doc["region"], f"{pointer}/region", n=n)
    coeffs_doc = doc["coeffs"]
    if not isinstance(coeffs_doc, dict):
        raise SchemaError("coeffs 必须是对象", f"{pointer}/coeffs")
    coeffs = {}
    for key, value in coeffs_doc.items():
        p = f"{pointer}/coeffs/{key}"
        J = parse_index_key(key, p)
        if len(J) != k or any(j < 1 or j > n for j in J):
            raise SchemaError(f"多重指标 {key!r} 不符合 n={n}, k={k}", p)
        coeffs[J] = expr_from_json(value, p)
    zone = None
    if "zone" in doc:
        zone = Zone(n, condition_from_json(doc["zone"], f"{pointer}/zone"), region)
    try:
        form = ZonedForm.build(n, k, coeffs, region, q, zone)
    except ValueError as e:
        raise SchemaError(str(e), pointer) from e
    if "derivative" in doc:
        from forms.derivative import raw_d

        p = f"{pointer}/derivative"
        eta = form_from_json(doc["derivative"], p, region)
        if (eta.n, eta.k) != (n, k + 1):
            raise SchemaError(f"导数应为 n={n}, k={k + 1} 的形式", p)
        # 缓存的 η 必须在 zone 上等于 d(ω)
        verdict = compare_forms(raw_d(form), eta, region)
        if not verdict.passed:
            logger.error(f"给定的导数与 d(ω) 不一致: {verdict.to_dict()}")
            raise SchemaError("给定的导数与 d(ω) 不一致", p, verdict=verdict.to_dict())
        form = form.with_derivative(eta)
    return form


def parse_regularity(value: Union[int, str], pointer: str = "/q") -> int:
    """q 为非负整数；"omega" / "ω" 抛 UnsupportedRegularity"""
    if isinstance(value, str) and value.strip().lower() in ("omega", "ω", "inf"):
        raise UnsupportedRegularity(
            "q = ω：非紧区域上 C^ω 版本的常构 de Rham 定理是否成立仍是未解决的问题，只接受有限的 q",
            pointer=pointer,
        )
    try:
        q = int(value)
    except (TypeError, ValueError) as e:
        raise SchemaError("q 必须是非负整数", pointer) from e
    if q < 0:
        raise SchemaError("q 必须是非负整数", pointer)
    return q
