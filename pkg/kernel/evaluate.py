"""
可构造函数求值
逐点检查求值（精确有理快速路径 + DomainError 定位）与基于 lambdify 的向量化求值
"""

import math
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np
import sympy
from sympy import Abs, Max, Min, Piecewise, log
from sympy.core.relational import Relational
from sympy.logic.boolalg import Boolean, BooleanFalse, BooleanTrue
from sympy.printing.numpy import NumPyPrinter

from core.errors import DomainError
from kernel.expr import ScalarExpr, coord, coord_index, max_index

Number = Union[Fraction, float]


# ============================================================
# 逐点求值
# ============================================================

def _is_rational_point(point: Sequence[Any]) -> bool:
    for v in point:
        if isinstance(v, bool):
            return False
        if isinstance(v, (int, Fraction)):
            continue
        if isinstance(v, sympy.Basic) and v.is_Rational:
            continue
        return False
    return True


def _to_exact(v: Any) -> sympy.Rational:
    if isinstance(v, Fraction):
        return sympy.Rational(v.numerator, v.denominator)
    return sympy.Rational(v)


class _Evaluator:
    """
    对 sympy 表达式树做递归求值

    exact=True 时叶子为 sympy 精确数，运算沿用 sympy 数的算术；
    否则全部为 Python float。两种模式共享同一套定义域检查。
    """

    def __init__(self, env: dict, certificates: dict, exact: bool, point: Sequence[Any]):
        self.env = env
        self.certificates = certificates
        self.exact = exact
        self.point = [str(v) for v in point]

    def fail(self, message: str, node: sympy.Basic):
        raise DomainError(f"{message}: {node}", node=str(node), point=self.point)

    def value(self, node: sympy.Basic):
        if node.is_Number or isinstance(node, sympy.NumberSymbol):
            if self.exact and node.is_Rational:
                return node
            return float(node)
        if isinstance(node, sympy.Symbol):
            try:
                return self.env[node]
            except KeyError:
                self.fail("点的维数不足", node)
        if isinstance(node, sympy.Add):
            total = self.value(node.args[0])
            for arg in node.args[1:]:
                total = total + self.value(arg)
            return total
        if isinstance(node, sympy.Mul):
            prod = self.value(node.args[0])
            for arg in node.args[1:]:
                prod = prod * self.value(arg)
            return prod
        if isinstance(node, sympy.Pow):
            return self._pow(node)
        if isinstance(node, Abs):
            return abs(self.value(node.args[0]))
        if isinstance(node, Min):
            return min(self.value(a) for a in node.args)
        if isinstance(node, Max):
            return max(self.value(a) for a in node.args)
        if isinstance(node, log):
            return self._log(node)
        if isinstance(node, Piecewise):
            for value, cond in node.args:
                if self.holds(cond):
                    return self.value(value)
            self.fail("分段函数在该点没有成立的分支", node)
        self.fail("无法求值的节点", node)

    def _pow(self, node: sympy.Pow):
        base = self.value(node.base)
        exp = node.exp
        if exp.is_Integer:
            if base == 0 and exp < 0:
                self.fail("除以零", node)
            if self.exact:
                return base ** exp
            return base ** int(exp)
        # 分数次幂：非负数的主根
        if base < 0:
            self.fail("负数开方", node)
        if base == 0 and exp < 0:
            self.fail("除以零", node)
        if self.exact:
            result = base ** exp
            return result if result.is_Rational else float(result)
        return math.pow(float(base), float(exp))

    def _log(self, node: log):
        arg = node.args[0]
        cert = self.certificates.get(arg)
        if cert is not None and cert is not sympy.true and not self.holds(cert):
            self.fail("对数参数超出正性证书区域", node)
        value = self.value(arg)
        if value <= 0:
            self.fail("对数参数非正", node)
        if self.exact and value == 1:
            return sympy.Integer(0)
        return math.log(float(value))

    def holds(self, cond: Boolean) -> bool:
        if isinstance(cond, BooleanTrue) or cond is True:
            return True
        if isinstance(cond, BooleanFalse) or cond is False:
            return False
        if isinstance(cond, Relational):
            diff = self.value(cond.lhs) - self.value(cond.rhs)
            op = cond.rel_op
            if op == ">":
                return bool(diff > 0)
            if op == ">=":
                return bool(diff >= 0)
            if op == "<":
                return bool(diff < 0)
            if op == "<=":
                return bool(diff <= 0)
            if op == "==":
                return bool(diff == 0)
            if op == "!=":
                return bool(diff != 0)
        if isinstance(cond, sympy.And):
            return all(self.holds(a) for a in cond.args)
        if isinstance(cond, sympy.Or):
            return any(self.holds(a) for a in cond.args)
        if isinstance(cond, sympy.Not):
            return not self.holds(cond.args[0])
        self.fail("无法判定的条件", cond)


def _make_evaluator(point: Sequence[Any], certificates: dict, exact: Optional[bool], has_float: bool) -> _Evaluator:
    use_exact = exact is not False and _is_rational_point(point) and not has_float
    if use_exact:
        env = {coord(i + 1): _to_exact(v) for i, v in enumerate(point)}
    else:
        env = {coord(i + 1): float(v) for i, v in enumerate(point)}
    return _Evaluator(env, certificates, use_exact, point)


def evaluate(e: ScalarExpr, point: Sequence[Any], *, exact: Optional[bool] = None) -> Number:
    """
    在点 x 处求值

    Args:
        e: 表达式
        point: 坐标序列（int / Fraction / sympy 有理数走精确路径）
        exact: False 时强制浮点

    Returns:
        精确结果为有理数时返回 Fraction，否则 float

    Raises:
        DomainError: 对数非正、除零、负数开方，携带出错节点
    """
    ev = _make_evaluator(point, e.certificates, exact, e.has_float)
    result = ev.value(e.expr)
    if ev.exact and isinstance(result, sympy.Basic):
        if result.is_Rational:
            return Fraction(int(result.p), int(result.q))
        return float(result)
    return float(result)


def holds(cond: Boolean, point: Sequence[Any], *, exact: Optional[bool] = None) -> bool:
    """判定条件在点处是否成立（定义域错误照常抛出）"""
    has_float = bool(getattr(cond, "atoms", lambda *_: set())(sympy.Float))
    ev = _make_evaluator(point, {}, exact, has_float)
    return ev.holds(cond)


# ============================================================
# 向量化求值
# ============================================================

def _minmax_piecewise(node: sympy.Basic) -> sympy.Basic:
    args = list(node.args)
    result = args[0]
    for arg in args[1:]:
        if isinstance(node, Max):
            result = Piecewise((result, result >= arg), (arg, True))
        else:
            result = Piecewise((result, result <= arg), (arg, True))
    return result


def numeric_form(expr: sympy.Basic) -> sympy.Basic:
    """把 Min/Max 展开为 Piecewise，便于 numpy 打印"""
    return expr.replace(lambda n: isinstance(n, (Min, Max)), _minmax_piecewise)


def _piecewise_select(conds: list, values: list) -> np.ndarray:
    """numpy.select 的广播版本：常量条件（True/False）扩展为与变量同形的数组"""
    shape = np.broadcast_shapes(*[np.shape(c) for c in conds], *[np.shape(v) for v in values])
    condlist = [np.broadcast_to(np.asarray(c, dtype=bool), shape) for c in conds]
    choices = [np.broadcast_to(np.asarray(v, dtype=float), shape) for v in values]
    return np.select(condlist, choices, default=np.nan)


class _SelectPrinter(NumPyPrinter):
    """Piecewise 打印为 _piecewise_select，避免 numpy.select 拒绝标量条件"""

    def _print_Piecewise(self, expr: Piecewise) -> str:
        conds = ", ".join(self._print(arg.cond) for arg in expr.args)
        values = ", ".join(self._print(arg.expr) for arg in expr.args)
        return f"_piecewise_select([{conds}], [{values}])"


def _lambdify(syms: list, expr: sympy.Basic) -> Callable:
    printer = _SelectPrinter({"fully_qualified_modules": False, "inline": True,
                              "allow_unknown_functions": True, "user_functions": {}})
    return sympy.lambdify(syms, numeric_form(expr), modules=[{"_piecewise_select": _piecewise_select}, "numpy"],
                          printer=printer)


def _compile(expr: sympy.Basic) -> Callable[[np.ndarray], np.ndarray]:
    m = max_index(expr)
    syms = [coord(i) for i in range(1, m + 1)]
    fn = _lambdify(syms, expr)

    def run(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] < m:
            raise DomainError(f"点维数 {pts.shape[1]} 小于表达式维数 {m}", node=str(expr))
        with np.errstate(all="ignore"):
            out = fn(*[pts[:, i] for i in range(m)])
        return np.broadcast_to(np.asarray(out, dtype=float), (pts.shape[0],)).copy()

    return run


def compile_numeric(e: ScalarExpr) -> Callable[[np.ndarray], np.ndarray]:
    """
    向量化求值器（写一次缓存）

    输入形状 (N, n) 的点阵，输出 (N,)；定义域之外的点为 nan 或 inf。
    """
    if e._numeric is None:
        e._numeric = _compile(e.expr)
    return e._numeric


def evaluate_many(e: ScalarExpr, points: np.ndarray) -> np.ndarray:
    """批量求值，非有限值统一为 nan"""
    values = compile_numeric(e)(points)
    values[~np.isfinite(values)] = np.nan
    return values


@lru_cache(maxsize=4096)
def _compile_condition(cond: Boolean) -> Callable[[np.ndarray], np.ndarray]:
    m = max_index(cond) if cond.free_symbols else 0
    syms = [coord(i) for i in range(1, m + 1)]
    fn = _lambdify(syms, cond)

    def run(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        with np.errstate(all="ignore"):
            out = fn(*[pts[:, i] for i in range(m)])
        return np.broadcast_to(np.asarray(out, dtype=bool), (pts.shape[0],)).copy()

    return run


def holds_many(cond: Boolean, points: np.ndarray) -> np.ndarray:
    """批量判定条件，返回布尔数组"""
    if cond is sympy.true:
        return np.ones(np.atleast_2d(points).shape[0], dtype=bool)
    if cond is sympy.false:
        return np.zeros(np.atleast_2d(points).shape[0], dtype=bool)
    return _compile_condition(cond)(points)


def condition_indices(cond: Boolean) -> list[int]:
    """条件中出现的坐标下标"""
    return sorted(coord_index(s) for s in cond.free_symbols)
