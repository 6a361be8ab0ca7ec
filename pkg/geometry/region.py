"""
Ribbon 与 Region
开集表示为 ribbon 的有限并：V = {x' ∈ base, a(x') < x_n < b(x')}，base 递归为 n-1 维 Region
"""

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Optional, Sequence

import numpy as np
import sympy
from sympy.logic.boolalg import Boolean

from core.config import get_config
from core.errors import RibbonError, SamplingError, SchemaError
from core.logger import get_logger
from core.sampling import make_rng
from kernel.evaluate import evaluate_many, holds, holds_many
from kernel.expr import (
    ScalarExpr,
    condition_from_json,
    condition_to_json,
    coord,
    expr_from_json,
    parse_expr,
)

logger = get_logger("geometry")

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Ribbon:
    """
    ribbon：base 上两个界之间的开带

    lower / upper 为 None 表示 -∞ / +∞；slack 为用户给出的松弛函数（在 ribbon 内为正、边界上为零），
    meet 记录由交运算得到时的两个操作数。
    """
    n: int
    base: "Region"
    lower: Optional[ScalarExpr] = None
    upper: Optional[ScalarExpr] = None
    slack: Optional[ScalarExpr] = None
    meet: tuple["Ribbon", ...] = ()
    regularity: Optional[int] = None

    @property
    def t(self) -> sympy.Symbol:
        return coord(self.n)

    @cached_property
    def membership_condition(self) -> Boolean:
        parts = [self.base.membership_condition]
        if self.lower is not None:
            parts.append(sympy.Gt(self.t, self.lower.expr))
        if self.upper is not None:
            parts.append(sympy.Lt(self.t, self.upper.expr))
        return sympy.And(*parts)

    @property
    def is_cylinder(self) -> bool:
        return self.lower is None and self.upper is None

    def section(self) -> ScalarExpr:
        """默认截面：有限界取中点，单侧无穷取 a+1 / b-1，双侧无穷取 0"""
        if self.lower is not None and self.upper is not None:
            return (self.lower + self.upper) / 2
        if self.lower is not None:
            return self.lower + 1
        if self.upper is not None:
            return self.upper - 1
        return ScalarExpr(sympy.Integer(0))

    def sample_points(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """ribbon 内采样：先采 base，再沿纤维采样（无穷侧用指数 / 正态尾）"""
        base_pts = self.base.sample_points(count, rng)
        m = len(base_pts)
        a = evaluate_many(self.lower, base_pts) if self.lower is not None else np.full(m, -np.inf)
        b = evaluate_many(self.upper, base_pts) if self.upper is not None else np.full(m, np.inf)
        u = rng.uniform(0.0, 1.0, size=m) * 0.998 + 0.001
        with np.errstate(all="ignore"):
            fin_a, fin_b = np.isfinite(a), np.isfinite(b)
            t = np.where(fin_a & fin_b, a + (b - a) * u, 0.0)
            t = np.where(fin_a & ~fin_b, a + rng.exponential(1.0, size=m), t)
            t = np.where(~fin_a & fin_b, b - rng.exponential(1.0, size=m), t)
            t = np.where(~fin_a & ~fin_b, rng.normal(0.0, 2.0, size=m), t)
            valid = ~np.isnan(a) & ~np.isnan(b) & (a < b)
        return np.column_stack([base_pts, t])[valid]

    def support(self, p: int) -> ScalarExpr:
        """
        C^p 支撑函数 ψ：在 ribbon 内为正，外部恒为 0

        交集 ribbon 用两个操作数支撑之积；给了 slack 时用 max(0, s)^{p+1}，
        并在 ribbon 外补零（s 须在 ribbon 边界上取零）。
        """
        power = p + 1
        if self.slack is not None:
            inside = sympy.Max(0, self.slack.expr) ** power
            return ScalarExpr(sympy.Piecewise((inside, self.membership_condition), (0, True)),
                              self.slack.certificates)
        if self.meet:
            result = ScalarExpr(sympy.Integer(1))
            for operand in self.meet:
                result = result * operand.support(p)
            return result
        expr = self.base.support(p).expr
        if self.lower is not None:
            expr = expr * sympy.Max(0, self.t - self.lower.expr) ** power
        if self.upper is not None:
            expr = expr * sympy.Max(0, self.upper.expr - self.t) ** power
        return ScalarExpr(expr)

    def to_json(self) -> dict:
        data = {
            "base": self.base.to_json(nested=True),
            "lower": self.lower.to_json() if self.lower is not None else "-inf",
            "upper": self.upper.to_json() if self.upper is not None else "+inf",
        }
        if self.slack is not None:
            data["slack"] = self.slack.to_json()
        if self.meet:
            data["meet"] = [r.to_json() for r in self.meet]
        return data


@dataclass(frozen=True)
class Region:
    """
    ribbon 的有限并

    n = 0 且 is_point 为单点；ribbons 为空且非单点时为空集。
    constraint 为交运算留下的额外严格条件（n=1 时总会被精确消去）。
    """
    n: int
    ribbons: tuple[Ribbon, ...] = ()
    constraint: Boolean = sympy.true
    is_point: bool = False
    rid: str = field(default="", compare=False)

    def __post_init__(self):
        for rib in self.ribbons:
            if rib.n != self.n:
                raise RibbonError(f"ribbon 维数 {rib.n} 与区域维数 {self.n} 不一致")

    # ---------- 基本性质 ----------

    @property
    def is_empty(self) -> bool:
        return not self.is_point and not self.ribbons

    @property
    def has_constraint(self) -> bool:
        return self.constraint is not sympy.true

    @cached_property
    def membership_condition(self) -> Boolean:
        if self.is_point:
            return sympy.true
        if not self.ribbons:
            return sympy.false
        return sympy.And(sympy.Or(*[r.membership_condition for r in self.ribbons]), self.constraint)

    @cached_property
    def key(self) -> str:
        payload = json.dumps(self.to_json(nested=True), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @property
    def label(self) -> str:
        return self.rid or self.key[:10]

    def is_bounded(self) -> bool:
        if self.is_point or self.is_empty:
            return True
        return all(r.lower is not None and r.upper is not None and r.base.is_bounded() for r in self.ribbons)

    # ---------- 成员判定 ----------

    def contains(self, point: Sequence[Any]) -> bool:
        """精确判定（有理坐标走精确路径）"""
        if len(point) != self.n:
            raise ValueError(f"点维数 {len(point)} 与区域维数 {self.n} 不一致")
        return holds(self.membership_condition, point)

    def contains_array(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_point:
            return np.ones(pts.shape[0], dtype=bool)
        return holds_many(self.membership_condition, pts)

    # ---------- 采样 ----------

    def sample_points(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """
        种子采样

        Raises:
            SamplingError: 预算内得不到 count 个点（空集直接抛出）
        """
        if self.is_point:
            return np.zeros((count, 0))
        if self.is_empty:
            raise SamplingError(f"空区域无法采样 (n={self.n})")
        budget = get_config().kernel.sampling_budget
        batch = max(2 * count, 64)
        collected: list[np.ndarray] = []
        have = 0
        drawn = 0
        while have < count and drawn < budget:
            choice = rng.integers(0, len(self.ribbons), size=batch)
            for idx, rib in enumerate(self.ribbons):
                k = int((choice == idx).sum())
                if k == 0:
                    continue
                pts = rib.sample_points(k, rng)
                if self.has_constraint and len(pts):
                    pts = pts[holds_many(self.constraint, pts)]
                if len(pts):
                    collected.append(pts)
                    have += len(pts)
            drawn += batch
        if have < count:
            raise SamplingError(f"采样预算 {budget} 内只得到 {have}/{count} 个点", region=self.label)
        return np.vstack(collected)[:count]

    # ---------- 支撑函数 ----------

    def support(self, p: int) -> ScalarExpr:
        """区域支撑函数：各 ribbon 支撑之和（单点为 1）"""
        if self.is_point:
            return ScalarExpr(sympy.Integer(1))
        if self.is_empty:
            return ScalarExpr(sympy.Integer(0))
        total = sympy.Integer(0)
        for rib in self.ribbons:
            total = total + rib.support(p).expr
        return ScalarExpr(total)

    # ---------- 包围盒 ----------

    def bounding_box(self, rng: Optional[np.random.Generator] = None, samples: int = 512) -> tuple[np.ndarray, np.ndarray]:
        """
        包围盒（常数界精确，非常数界按采样估计）

        Returns:
            (lows, highs)，无界方向为 ±inf
        """
        if self.is_point:
            return np.zeros(0), np.zeros(0)
        if self.is_empty:
            raise SamplingError("空区域没有包围盒")
        rng = rng or make_rng("bbox", self.key)
        lows = np.full(self.n, np.inf)
        highs = np.full(self.n, -np.inf)
        for rib in self.ribbons:
            blo, bhi = rib.base.bounding_box(rng, samples)
            lo = _bound_extent(rib.lower, rib.base, rng, samples, lower=True)
            hi = _bound_extent(rib.upper, rib.base, rng, samples, lower=False)
            lows = np.minimum(lows, np.append(blo, lo))
            highs = np.maximum(highs, np.append(bhi, hi))
        return lows, highs

    # ---------- 序列化 ----------

    def to_json(self, nested: bool = False) -> Any:
        if self.is_point:
            return "point"
        data: dict = {"n": self.n, "ribbons": [r.to_json() for r in self.ribbons]}
        if self.has_constraint:
            data["constraint"] = condition_to_json(self.constraint)
        if not nested:
            data["schema_version"] = SCHEMA_VERSION
            if self.rid:
                data["id"] = self.rid
        return data

    def with_id(self, rid: str) -> "Region":
        return Region(self.n, self.ribbons, self.constraint, self.is_point, rid)

    def __repr__(self) -> str:
        if self.is_point:
            return "Region(point)"
        return f"Region(n={self.n}, ribbons={len(self.ribbons)}, id={self.label})"


def _bound_extent(bound: Optional[ScalarExpr], base: Region, rng: np.random.Generator,
                  samples: int, lower: bool) -> float:
    if bound is None:
        return -np.inf if lower else np.inf
    if not bound.expr.free_symbols:
        return float(bound.expr)
    values = evaluate_many(bound, base.sample_points(samples, rng))
    values = values[np.isfinite(values)]
    if len(values) == 0:
        return -np.inf if lower else np.inf
    return float(values.min() if lower else values.max())


# ============================================================
# 构造函数
# ============================================================

def point() -> Region:
    """0 维单点"""
    return Region(0, (), sympy.true, True)


def empty(n: int) -> Region:
    return Region(n, ())


def _lift_bound(value: Any) -> Optional[ScalarExpr]:
    if value is None:
        return None
    if isinstance(value, str) and value.strip() in ("-inf", "+inf", "inf", "-oo", "oo", "+oo"):
        return None
    if isinstance(value, str):
        return parse_expr(value)
    return ScalarExpr.lift(value)


def check_ribbon(rib: Ribbon, rng: Optional[np.random.Generator] = None) -> Ribbon:
    """
    采样检查 a < b

    Raises:
        RibbonError: 常数界 a ≥ b，或 base 的采样点上出现 a ≥ b
    """
    if rib.lower is None or rib.upper is None:
        return rib
    if not rib.lower.expr.free_symbols and not rib.upper.expr.free_symbols:
        if not bool(rib.lower.expr < rib.upper.expr):
            raise RibbonError(f"ribbon 下界 {rib.lower} 不小于上界 {rib.upper}")
        return rib
    rng = rng or make_rng("ribbon", str(rib.lower), str(rib.upper))
    pts = rib.base.sample_points(get_config().kernel.sample_count, rng)
    a = evaluate_many(rib.lower, pts)
    b = evaluate_many(rib.upper, pts)
    ok = np.isfinite(a) & np.isfinite(b)
    bad = ok & (a >= b)
    if bad.any() or not ok.any():
        witness = pts[int(np.argmax(bad))] if bad.any() else None
        raise RibbonError(
            f"ribbon 界在 base 上不满足 a < b: {rib.lower} / {rib.upper}",
            witness=None if witness is None else [float(v) for v in witness],
        )
    return rib


def ribbon(base: Region, lower: Any = None, upper: Any = None, *, slack: Any = None,
           regularity: Optional[int] = None, check: bool = True) -> Ribbon:
    """构造并检查一个 ribbon"""
    rib = Ribbon(
        base.n + 1,
        base,
        _lift_bound(lower),
        _lift_bound(upper),
        _lift_bound(slack) if slack is not None else None,
        (),
        regularity,
    )
    return check_ribbon(rib) if check else rib


def region(*ribbons: Ribbon, rid: str = "") -> Region:
    if not ribbons:
        raise RibbonError("至少需要一个 ribbon，空集请用 empty(n)")
    return Region(ribbons[0].n, tuple(ribbons), rid=rid)


def interval(lo: Any, hi: Any, rid: str = "") -> Region:
    """一维开区间"""
    return Region(1, (ribbon(point(), lo, hi),), rid=rid)


def box(lows: Sequence[Any], highs: Sequence[Any], rid: str = "") -> Region:
    """开盒 Π (lo_i, hi_i)，作为 ribbon 塔"""
    current = point()
    for lo, hi in zip(lows, highs):
        current = Region(current.n + 1, (ribbon(current, lo, hi),))
    return current.with_id(rid) if rid else current


def cylinder(base: Region) -> Region:
    """X × ℝ"""
    return Region(base.n + 1, (ribbon(base, None, None),))


def prism(base: Region, lo: Any, hi: Any) -> Region:
    """X × (lo, hi)"""
    return Region(base.n + 1, (ribbon(base, lo, hi),))


def union(first: Region, second: Region, rid: str = "") -> Region:
    """两区域的并（ribbon 列表拼接，按输入顺序）"""
    if first.n != second.n:
        raise RibbonError(f"维数不一致: {first.n} / {second.n}")
    if first.has_constraint or second.has_constraint:
        raise RibbonError("带约束的区域不能直接做并")
    return Region(first.n, first.ribbons + second.ribbons, rid=rid)


# ============================================================
# JSON
# ============================================================

def region_from_json(doc: Any, pointer: str = "", n: Optional[int] = None) -> Region:
    """
    Region JSON -> Region

    格式：{"n": 2, "ribbons": [{"base": Region|"point", "lower": expr|"-inf", "upper": expr|"+inf",
    "slack": expr?}], "constraint": cond?, "id": str?}
    """
    if doc == "point":
        return point()
    if not isinstance(doc, dict):
        raise SchemaError("区域必须是对象或 \"point\"", pointer)
    if "box" in doc:
        return _box_from_json(doc["box"], f"{pointer}/box", str(doc.get("id", "")))
    ribbons_doc = doc.get("ribbons")
    if not isinstance(ribbons_doc, list):
        raise SchemaError("缺少 ribbons 列表", f"{pointer}/ribbons")
    dim = doc.get("n", n)
    ribbons = []
    for i, rdoc in enumerate(ribbons_doc):
        p = f"{pointer}/ribbons/{i}"
        if not isinstance(rdoc, dict):
            raise SchemaError("ribbon 必须是对象", p)
        base = region_from_json(rdoc.get("base", "point"), f"{p}/base")
        lower = _bound_from_json(rdoc.get("lower", "-inf"), f"{p}/lower")
        upper = _bound_from_json(rdoc.get("upper", "+inf"), f"{p}/upper")
        slack = expr_from_json(rdoc["slack"], f"{p}/slack") if "slack" in rdoc else None
        rib = Ribbon(base.n + 1, base, lower, upper, slack, (), rdoc.get("regularity"))
        try:
            check_ribbon(rib)
        except RibbonError as e:
            raise RibbonError(f"{p}: {e.message}", pointer=p) from e
        ribbons.append(rib)
    if dim is None:
        if not ribbons:
            raise SchemaError("空区域必须给出 n", pointer)
        dim = ribbons[0].n
    constraint = sympy.true
    if "constraint" in doc:
        constraint = condition_from_json(doc["constraint"], f"{pointer}/constraint")
    try:
        return Region(int(dim), tuple(ribbons), constraint, False, str(doc.get("id", "")))
    except RibbonError as e:
        raise SchemaError(e.message, pointer) from e


def _box_from_json(doc: Any, pointer: str, rid: str) -> Region:
    """{"lows": [...], "highs": [...]} 简写"""
    if not isinstance(doc, dict) or "lows" not in doc or "highs" not in doc:
        raise SchemaError("box 需要 lows 与 highs", pointer)
    lows, highs = doc["lows"], doc["highs"]
    if not isinstance(lows, list) or not isinstance(highs, list) or len(lows) != len(highs) or not lows:
        raise SchemaError("lows 与 highs 必须是等长的非空列表", pointer)
    lo = [expr_from_json(v, f"{pointer}/lows/{i}") for i, v in enumerate(lows)]
    hi = [expr_from_json(v, f"{pointer}/highs/{i}") for i, v in enumerate(highs)]
    try:
        return box(lo, hi, rid)
    except RibbonError as e:
        raise RibbonError(f"{pointer}: {e.message}", pointer=pointer) from e


def _bound_from_json(doc: Any, pointer: str) -> Optional[ScalarExpr]:
    if isinstance(doc, str) and doc.strip() in ("-inf", "+inf", "inf", "-oo", "oo", "+oo"):
        return None
    return expr_from_json(doc, pointer)
