"""
显式同伦
σ(t) = 3t² - 2t³ 驱动的胞腔收缩，以及 ribbon 到 base 的纤维收缩
"""

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Optional, Sequence

import numpy as np
import sympy

from core.errors import SectionNotInterior, TargetOutside
from core.logger import get_logger
from core.sampling import make_rng
from forms.maps import SmoothMap, identity, projection, section
from geometry.region import Region, Ribbon, prism
from kernel.equality import Verdict, equal, worst
from kernel.evaluate import evaluate_many
from kernel.expr import ScalarExpr, coord

logger = get_logger("geometry")

# 同伦参数区间 (-ε, 1+ε)，取 ε = 1/2
T_INTERVAL = (sympy.Rational(-1, 2), sympy.Rational(3, 2))


def sigma(t: Any) -> Any:
    """σ(t) = 3t² - 2t³，σ(0)=0, σ(1)=1, σ'(0)=σ'(1)=0"""
    return 3 * t ** 2 - 2 * t ** 3


@dataclass(frozen=True, eq=False)
class Homotopy:
    """
    X × (-1/2, 3/2) 上的映射 h(x, t)，t 为最后一个坐标

    start / end 为声明的端点映射 h(·,0)、h(·,1)。
    """
    h: SmoothMap
    start: SmoothMap
    end: SmoothMap
    base: Region
    interval: tuple = T_INTERVAL

    @property
    def dim(self) -> int:
        return self.h.m - 1

    @property
    def source(self) -> Region:
        return prism(self.base, self.interval[0], self.interval[1])

    def at(self, t0: Any) -> SmoothMap:
        """h(·, t0)"""
        t = self.dim + 1
        comps = tuple(c.substitute({t: sympy.nsimplify(t0)}) for c in self.h.components)
        return SmoothMap(self.dim, self.h.n, comps, self.base, self.h.regularity, f"h(·,{t0})")

    def check_endpoints(self) -> Verdict:
        """h(·,0) = start 与 h(·,1) = end，分量逐个 equal()"""
        verdicts = []
        for t0, target in ((0, self.start), (1, self.end)):
            at = self.at(t0)
            for got, want in zip(at.components, target.components):
                verdicts.append(equal(got, want, self.base))
        return worst(verdicts)


def _is_box_like(reg: Region) -> bool:
    if reg.is_point:
        return True
    return len(reg.ribbons) == 1 and not reg.has_constraint and _is_box_like(reg.ribbons[0].base)


def contraction_homotopy(cell: Region, target: Sequence[Any]) -> Homotopy:
    """
    胞腔收缩 h(x,t) = (1-σ(t))x + σ(t)·target

    Raises:
        TargetOutside: 目标点不在胞腔内
        ValueError: 胞腔不是单 ribbon 塔
    """
    if not _is_box_like(cell):
        raise ValueError("contraction_homotopy 只接受单 ribbon 塔表示的胞腔")
    if not cell.contains(target):
        raise TargetOutside(f"收缩目标 {list(target)} 不在胞腔内", target=[str(v) for v in target])
    n = cell.n
    t = coord(n + 1)
    s = sigma(t)
    comps = tuple(
        ScalarExpr(sympy.expand((1 - s) * coord(i) + s * sympy.nsimplify(target[i - 1])))
        for i in range(1, n + 1)
    )
    h = SmoothMap(n + 1, n, comps, prism(cell, *T_INTERVAL), None, "h")
    start = identity(n, cell)
    end = SmoothMap(n, n, tuple(ScalarExpr(sympy.nsimplify(v)) for v in target), cell, None, "const")
    homotopy = Homotopy(h, start, end, cell)
    _check_image(homotopy, cell)
    return homotopy


def _check_image(homotopy: Homotopy, cell: Region, count: int = 64) -> None:
    pts = homotopy.source.sample_points(count, make_rng("homotopy-image", cell.key))
    image = homotopy.h.evaluate_many(pts)
    outside = ~cell.contains_array(image)
    if outside.any():
        logger.warning(f"同伦像有 {int(outside.sum())}/{count} 个采样点离开胞腔")


def ribbon_base_homotopy(rib: Ribbon, c: Optional[Any] = None) -> tuple[SmoothMap, SmoothMap, Homotopy]:
    """
    ribbon 到 base 的同伦等价

    π(x', x_n) = x'，ψ(x') = (x', c(x'))，h(x,t) = (x', (1-σ)x_n + σ c(x'))。
    c 缺省为中点（单侧无穷取 a+1 / b-1，双侧无穷取 0）。

    Raises:
        SectionNotInterior: 采样发现 c 不严格位于 a、b 之间
    """
    n = rib.n
    c_expr = ScalarExpr.lift(c) if c is not None else rib.section()
    check_section(rib, c_expr)
    home = Region(n, (rib,))
    pi = projection(n, home)
    psi = section(c_expr, n - 1, rib.base, "ψ")
    t = coord(n + 1)
    s = sigma(t)
    comps = tuple(ScalarExpr(coord(i)) for i in range(1, n)) + (
        ScalarExpr((1 - s) * coord(n) + s * c_expr.expr, c_expr.certificates),
    )
    h = SmoothMap(n + 1, n, comps, prism(home, *T_INTERVAL), None, "h")
    homotopy = Homotopy(h, identity(n, home), psi.compose(pi), home)
    return pi, psi, homotopy


def check_section(rib: Ribbon, c: ScalarExpr, count: int = 64) -> None:
    """采样检查 a < c < b"""
    if rib.base.is_empty:
        return
    pts = rib.base.sample_points(count, make_rng("section", str(c.expr), str(rib.lower), str(rib.upper)))
    cv = evaluate_many(c, pts)
    bad = ~np.isfinite(cv)
    if rib.lower is not None:
        bad |= ~(evaluate_many(rib.lower, pts) < cv)
    if rib.upper is not None:
        bad |= ~(cv < evaluate_many(rib.upper, pts))
    if bad.any():
        witness = [float(v) for v in pts[int(np.argmax(bad))]]
        raise SectionNotInterior(f"截面 {c} 不严格位于 ribbon 界之间", witness=witness)


def sigma_values(ts: Sequence[Any]) -> list[Fraction]:
    """σ 在有理点上的精确值"""
    return [Fraction(sigma(Fraction(t))) for t in ts]
