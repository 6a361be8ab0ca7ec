"""
纤维方向的符号原函数
被积函数限制为 Σ r(t)·log(s(t))^m：r、s 为 t 的有理函数（系数可含底空间变量），m ≤ 2；
有理部分走部分分式，分母只接受关于 t 的一次因子，对数部分分部积分。
"""

from dataclasses import dataclass
from typing import Any, Mapping, Optional

import sympy
from sympy import Abs, Max, Min, Piecewise, log

from core.errors import UnsupportedIntegrand
from core.logger import get_logger
from kernel.expr import ScalarExpr, coord

logger = get_logger("fiber")

MAX_LOG_POWER = 2

# 不含 t 时整体冻结为哑元的节点类型（部分分式只需把它们当作常数）
_FREEZE_TYPES = (Abs, Min, Max, Piecewise, log, sympy.Pow)


@dataclass(frozen=True)
class LogPolyTerm:
    """r·log(s)^m；m = 0 时 s 无意义"""
    r: sympy.Basic
    s: sympy.Basic = sympy.Integer(1)
    m: int = 0

    def expr(self) -> sympy.Basic:
        if self.m == 0:
            return self.r
        return self.r * log(self.s) ** self.m


@dataclass(frozen=True, eq=False)
class LogPolyIntegrand:
    """
    t 方向的 log-有理被积函数

    terms 中不含 t 的超越子式已替换为哑元，frozen 记录哑元到原子式的映射；
    certificates 为 (对数参数, 正性条件) 对。
    """
    t_index: int
    terms: tuple[LogPolyTerm, ...]
    frozen: tuple[tuple[sympy.Dummy, sympy.Basic], ...] = ()
    certificates: tuple[tuple[sympy.Basic, Any], ...] = ()

    @property
    def t(self) -> sympy.Symbol:
        return coord(self.t_index)

    @property
    def thaw(self) -> dict:
        return dict(self.frozen)

    @classmethod
    def from_expr(cls, F: ScalarExpr, t_index: int) -> "LogPolyIntegrand":
        """
        拆成 r·log(s)^m 的和

        Raises:
            UnsupportedIntegrand: 含 t 的分段/绝对值、多个含 t 对数之积、m > 2、r 或 s 不是 t 的有理函数
        """
        t = coord(t_index)
        frozen: dict[sympy.Basic, sympy.Dummy] = {}
        body = _freeze(F.expr, t, frozen)
        for node in sympy.preorder_traversal(body):
            if isinstance(node, (Abs, Min, Max, Piecewise)):
                raise UnsupportedIntegrand(f"被积函数在 t 方向仍含分段: {node}", node=str(node))
        groups: dict[tuple, sympy.Basic] = {}
        for term in sympy.Add.make_args(sympy.expand(body, log=False)):
            s, m, r = _split_log(term, t)
            if not sympy.sympify(r).is_rational_function(t):
                raise UnsupportedIntegrand(f"系数不是 t 的有理函数: {r}", node=str(r))
            if m and not s.is_rational_function(t):
                raise UnsupportedIntegrand(f"对数参数不是 t 的有理函数: {s}", node=str(s))
            key = (s, m)
            groups[key] = groups.get(key, sympy.Integer(0)) + r
        terms = tuple(
            LogPolyTerm(r, s, m) for (s, m), r in sorted(groups.items(), key=lambda kv: sympy.default_sort_key(kv[0][0]))
            if r != 0
        )
        thaw = tuple((d, node) for node, d in frozen.items())
        return cls(t_index, terms, thaw, tuple(F.certificates.items()))

    def frozen_expr(self) -> sympy.Basic:
        return sympy.Add(*[term.expr() for term in self.terms])

    def to_expr(self) -> ScalarExpr:
        expr = self.frozen_expr().xreplace(self.thaw)
        certs = {arg.xreplace(self.thaw): cond for arg, cond in self.certificates}
        return ScalarExpr(expr, certs)


def _freeze(expr: sympy.Basic, t: sympy.Symbol, table: dict) -> sympy.Basic:
    """把不含 t 的超越子式换成哑元"""
    if not expr.args:
        return expr
    if not expr.has(t) and _is_transcendental(expr):
        if expr not in table:
            table[expr] = sympy.Dummy(f"c{len(table)}")
        return table[expr]
    return expr.func(*[_freeze(a, t, table) for a in expr.args])


def _is_transcendental(node: sympy.Basic) -> bool:
    if isinstance(node, sympy.Pow):
        return not node.exp.is_Integer
    return isinstance(node, _FREEZE_TYPES)


def _split_log(term: sympy.Basic, t: sympy.Symbol) -> tuple[sympy.Basic, int, sympy.Basic]:
    """单项 -> (s, m, r)"""
    s: Optional[sympy.Basic] = None
    m = 0
    rest = sympy.Integer(1)
    for factor in sympy.Mul.make_args(term):
        base, power = factor, sympy.Integer(1)
        if isinstance(factor, sympy.Pow) and isinstance(factor.base, log):
            base, power = factor.base, factor.exp
        if isinstance(base, log) and base.has(t):
            if not (power.is_Integer and power > 0):
                raise UnsupportedIntegrand(f"含 t 的对数不能出现在分母: {factor}", node=str(factor))
            arg = base.args[0]
            if s is not None and arg != s:
                raise UnsupportedIntegrand(f"含 t 的不同对数之积: log({s})·log({arg})", node=str(term))
            s = arg
            m += int(power)
            continue
        rest = rest * factor
    if m > MAX_LOG_POWER:
        raise UnsupportedIntegrand(f"对数幂次 {m} 超过 {MAX_LOG_POWER}", node=str(term))
    return (s if s is not None else sympy.Integer(1)), m, rest


# ==================== 有理部分 ====================

def _log_of_linear(L: sympy.Basic, sign: Optional[int]) -> tuple[sympy.Basic, sympy.Basic]:
    """log|L| 在已知符号时写成 log(±L)，返回 (对数参数, 证书)"""
    if sign is not None and sign > 0:
        return L, sympy.Gt(L, 0)
    if sign is not None and sign < 0:
        return -L, sympy.Gt(-L, 0)
    return Abs(L), sympy.Ne(L, 0)


def _integrate_rational(r: sympy.Basic, t: sympy.Symbol, sign_of, certs: dict) -> list[LogPolyTerm]:
    """∫ r dt，r 为 t 的有理函数"""
    r = sympy.cancel(r)
    if not r.has(t):
        return [LogPolyTerm(r * t)]
    out: list[LogPolyTerm] = []
    try:
        parts = sympy.apart(r, t)
    except (sympy.PolynomialError, NotImplementedError) as e:
        raise UnsupportedIntegrand(f"部分分式分解失败: {r}", node=str(r)) from e
    for part in sympy.Add.make_args(parts):
        num, den = part.as_numer_denom()
        if not den.has(t):
            out.append(LogPolyTerm(sympy.integrate(sympy.expand(num), t) / den))
            continue
        if num.has(t):
            raise UnsupportedIntegrand(f"部分分式无法化为线性分母: {part}", node=str(part))
        _, factors = sympy.factor_list(den)
        linear = [(f, mult) for f, mult in factors if f.has(t)]
        if len(linear) != 1 or sympy.degree(linear[0][0], t) != 1:
            raise UnsupportedIntegrand(f"分母有非有理根: {den}", node=str(den))
        L, j = linear[0]
        kappa = sympy.cancel(den / L ** j)
        alpha = sympy.Poly(L, t).LC()
        coef = num / (kappa * alpha)
        if j == 1:
            arg, cert = _log_of_linear(L, sign_of(L))
            certs[arg] = cert
            out.append(LogPolyTerm(coef, arg, 1))
        else:
            out.append(LogPolyTerm(coef * L ** (1 - j) / (1 - j)))
    return out


def _integrate_log(r: sympy.Basic, s: sympy.Basic, m: int, t: sympy.Symbol, sign_of,
                   certs: dict) -> list[LogPolyTerm]:
    """∫ r·log(s)^m dt：r = c·s'/s 时直接给出，否则分部积分降幂"""
    if m == 0:
        return _integrate_rational(r, t, sign_of, certs)
    ds = sympy.diff(s, t)
    if ds != 0:
        ratio = sympy.cancel(r * s / ds)
        if not ratio.has(t):
            return [LogPolyTerm(ratio / (m + 1), s, m + 1)]
    R_terms = _integrate_rational(r, t, sign_of, certs)
    if any(term.m for term in R_terms):
        raise UnsupportedIntegrand(f"分部积分产生对数之积: ∫({r})·log({s})^{m}", node=str(r))
    R = sympy.Add(*[term.r for term in R_terms])
    inner = sympy.cancel(R * m * ds / s)
    rest = _integrate_log(inner, s, m - 1, t, sign_of, certs)
    return [LogPolyTerm(R, s, m)] + [LogPolyTerm(-term.r, term.s, term.m) for term in rest]


# ==================== 原函数 ====================

def _sign_oracle(F: LogPolyIntegrand, reference: Optional[Mapping[sympy.Symbol, Any]]):
    """在参考点上判定一次因子的符号"""
    def sign_of(L: sympy.Basic) -> Optional[int]:
        if reference is None:
            return None
        value = L.xreplace(F.thaw).xreplace({k: sympy.nsimplify(v) for k, v in reference.items()})
        try:
            v = float(sympy.N(value))
        except (TypeError, ValueError):
            return None
        if v == 0:
            return None
        return 1 if v > 0 else -1
    return sign_of


def _undefined(value: sympy.Basic) -> bool:
    return value.has(sympy.zoo, sympy.nan, sympy.oo, -sympy.oo) or any(
        a.args[0] == 0 for a in value.atoms(log)
    )


def antiderivative_t(F: LogPolyIntegrand, reference: Optional[Mapping[sympy.Symbol, Any]] = None, *,
                     normalize_at_zero: bool = True) -> LogPolyIntegrand:
    """
    t 方向原函数 G，∂G/∂t = F

    Args:
        F: 被积函数
        reference: 代表点 {符号: 数值}，用于把 log|t-c| 写成 log(t-c) 或 log(c-t)
        normalize_at_zero: t = 0 处有定义时令 G(0) = 0

    Raises:
        UnsupportedIntegrand: 分母根非有理、m > 2 或产生 dilog 型积分
    """
    t = F.t
    sign_of = _sign_oracle(F, reference)
    certs = dict(F.certificates)
    terms: list[LogPolyTerm] = []
    for term in F.terms:
        terms.extend(_integrate_log(term.r, term.s, term.m, t, sign_of, certs))
    G = LogPolyIntegrand(F.t_index, tuple(terms), F.frozen, tuple(certs.items()))
    if normalize_at_zero:
        g0 = G.frozen_expr().xreplace({t: sympy.Integer(0)})
        if not _undefined(g0) and g0 != 0:
            G = LogPolyIntegrand(F.t_index, G.terms + (LogPolyTerm(-g0),), G.frozen, G.certificates)
    return G


def integrate_t(f: ScalarExpr, t_index: int, reference: Optional[Mapping[sympy.Symbol, Any]] = None, *,
                normalize_at_zero: bool = True) -> ScalarExpr:
    """ScalarExpr 版本的 antiderivative_t"""
    F = LogPolyIntegrand.from_expr(f, t_index)
    G = antiderivative_t(F, reference, normalize_at_zero=normalize_at_zero)
    result = G.to_expr()
    logger.debug(f"∫ {f} d x{t_index} = {result}")
    return result
