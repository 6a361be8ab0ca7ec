"""
偏导数与 C^1-zone
max(0,u)^m 保持紧凑形式求导，其余 |·|、min、max 改写为分段函数再交给 sympy；奇异位置由表达式树收集
"""

from typing import Any

import sympy
from sympy import Abs, Max, Min, Piecewise, log
from sympy.core.relational import Relational

from kernel.evaluate import numeric_form
from kernel.expr import ScalarExpr, Zone, coord, max_index


def _abs_piecewise(node: Abs) -> sympy.Basic:
    a = node.args[0]
    return Piecewise((a, a >= 0), (-a, True))


def to_piecewise(expr: sympy.Basic) -> sympy.Basic:
    """把 |·|、min、max 改写为分段表达式（实变量下的显式分支）"""
    expr = expr.replace(lambda n: isinstance(n, Abs), _abs_piecewise)
    return numeric_form(expr)


def differentiate(e: ScalarExpr, i: int, region: Any = None) -> tuple[ScalarExpr, Zone]:
    """
    偏导数 ∂e/∂x_i

    Args:
        e: 可构造函数
        i: 变量下标（从 1 开始）
        region: 参考区域（仅记录在返回的 zone 上）

    Returns:
        (导数, 导数有效的 C^1-zone)
    """
    x = coord(i)
    if x not in e.expr.free_symbols:
        derivative = ScalarExpr(sympy.Integer(0))
    else:
        derivative = ScalarExpr(_diff(e.expr, x), e.certificates)
    return derivative, c1_zone(e, region)


def _is_clamp(node: sympy.Basic) -> bool:
    """max(0, u)"""
    return isinstance(node, Max) and len(node.args) == 2 and sympy.S.Zero in node.args


def _diff(expr: sympy.Basic, x: sympy.Symbol) -> sympy.Basic:
    """
    求导时保留 max(0,u)^m (m ≥ 2) 的紧凑形式：d max(0,u)^m = m·max(0,u)^{m-1}·u'

    其余 |·|、min、max、分段节点退回分段展开后求导。
    """
    if not expr.has(x):
        return sympy.Integer(0)
    if expr == x:
        return sympy.Integer(1)
    if isinstance(expr, sympy.Add):
        return sympy.Add(*[_diff(a, x) for a in expr.args])
    if isinstance(expr, sympy.Mul):
        args = expr.args
        terms = []
        for j, a in enumerate(args):
            da = _diff(a, x)
            if da != 0:
                terms.append(sympy.Mul(*(args[:j] + (da,) + args[j + 1:])))
        return sympy.Add(*terms)
    if isinstance(expr, sympy.Pow) and expr.exp.is_Number:
        base, m = expr.base, expr.exp
        if _is_clamp(base) and m.is_Integer and m >= 2:
            u = base.args[1] if base.args[0] == 0 else base.args[0]
            return m * base ** (m - 1) * _diff(u, x)
        return m * base ** (m - 1) * _diff(base, x)
    if isinstance(expr, log):
        arg = expr.args[0]
        return _diff(arg, x) / arg
    if isinstance(expr, Piecewise):
        # 逐分支求导，接缝本身不在 C^1-zone 内
        return Piecewise(*[(_diff(value, x), cond) for value, cond in expr.args])
    if isinstance(expr, Abs):
        a = expr.args[0]
        da = _diff(a, x)
        return Piecewise((da, a >= 0), (-da, True))
    if isinstance(expr, (Min, Max)):
        return _diff(numeric_form(expr), x)
    return sympy.piecewise_fold(sympy.diff(to_piecewise(expr), x))


def gradient(e: ScalarExpr, n: int) -> list[ScalarExpr]:
    """全部 n 个偏导数"""
    return [differentiate(e, i)[0] for i in range(1, n + 1)]


# ============================================================
# 奇异位置
# ============================================================

def _oriented(locus: sympy.Basic) -> sympy.Basic:
    locus = sympy.expand(locus) if locus.is_polynomial() else locus
    if locus.could_extract_minus_sign():
        locus = -locus
    return locus


def _collect(node: sympy.Basic, out: list, certificates: dict) -> None:
    """收集 (轨迹, 条件) 对；条件描述该节点 C^1 的开集"""
    if isinstance(node, Abs):
        a = _oriented(node.args[0])
        out.append((a, sympy.Ne(a, 0)))
    elif isinstance(node, (Min, Max)):
        args = list(node.args)
        for p in range(len(args)):
            for q in range(p + 1, len(args)):
                diff = _oriented(args[p] - args[q])
                out.append((diff, sympy.Ne(diff, 0)))
    elif isinstance(node, Piecewise):
        for _, cond in node.args:
            for rel in cond.atoms(Relational):
                diff = _oriented(rel.lhs - rel.rhs)
                out.append((diff, sympy.Ne(diff, 0)))
    elif isinstance(node, sympy.Pow) and node.exp.is_Rational:
        if not node.exp.is_Integer:
            out.append((node.base, sympy.Gt(node.base, 0)))
        elif node.exp < 0:
            base = _oriented(node.base)
            out.append((base, sympy.Ne(base, 0)))
    elif isinstance(node, log):
        arg = node.args[0]
        out.append((arg, certificates.get(arg, sympy.Gt(arg, 0))))
    for arg in node.args:
        if isinstance(arg, sympy.Basic) and not isinstance(arg, Relational):
            _collect(arg, out, certificates)


def _loci_pairs(e: ScalarExpr) -> list[tuple[sympy.Basic, sympy.Basic]]:
    raw: list = []
    _collect(e.expr, raw, e.certificates)
    seen = {}
    for locus, cond in raw:
        if locus.is_Number or cond is sympy.true:
            continue
        seen.setdefault(cond, locus)
    pairs = [(locus, cond) for cond, locus in seen.items()]
    return sorted(pairs, key=lambda p: sympy.default_sort_key(p[1]))


def kink_loci(e: ScalarExpr) -> list[ScalarExpr]:
    """
    非 C^1 轨迹

    |·| 的参数、min/max 的两两差、分段条件的差、根号被开方式、分母、对数参数；
    返回的表达式零集（或对数/根号的非正集）覆盖 e 不可微的位置。
    """
    result = []
    seen = set()
    for locus, _ in _loci_pairs(e):
        if locus in seen:
            continue
        seen.add(locus)
        result.append(ScalarExpr(locus, validate=False))
    return result


def c1_zone(e: ScalarExpr, region: Any = None) -> Zone:
    """
    e 为 C^1 的 zone（各节点光滑条件的合取，保守）

    |x1| -> x1 ≠ 0；Max(0, x1)**2 同样给出 x1 ≠ 0；多项式 -> 全空间。
    """
    n = region.n if region is not None else max_index(e.expr)
    conds = [cond for _, cond in _loci_pairs(e)]
    return Zone(n, sympy.And(*conds), region)


def zone_of_forms(exprs: list[ScalarExpr], n: int, region: Any = None) -> Zone:
    """多个系数的 zone 交集"""
    conds = []
    for e in exprs:
        conds.extend(cond for _, cond in _loci_pairs(e))
    return Zone(n, sympy.And(*conds), region)

