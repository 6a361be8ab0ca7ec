"""
可构造函数的符号表示
半代数核心表达式（有理运算、整数次方根、|·|、min、max、分段）与顶层对数因子，
以 sympy 表达式树承载；本模块负责文法校验、正性证书、规范形与 JSON AST 序列化
"""

import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Union

import sympy
from sympy import Abs, Max, Min, Piecewise, log
from sympy.core.relational import Relational
from sympy.logic.boolalg import Boolean, BooleanAtom, BooleanFalse, BooleanFunction, BooleanTrue
from sympy.parsing.sympy_parser import parse_expr as _sympy_parse, rationalize, standard_transformations

from core.errors import GrammarError, SchemaError

# 条件类型：符号条件的有限布尔组合
SemiCondition = Boolean

_VAR_PATTERN = re.compile(r"^x(\d+)$")

# 规范化时超过这个规模的表达式不做符号化简，直接交给数值判等
NORMALIZE_OPS_LIMIT = 600


# ============================================================
# 坐标变量
# ============================================================

_COORDS: dict[int, sympy.Symbol] = {}


def coord(i: int) -> sympy.Symbol:
    """第 i 个坐标变量 x_i（从 1 开始编号）"""
    if i < 1:
        raise ValueError(f"坐标下标从 1 开始: {i}")
    sym = _COORDS.get(i)
    if sym is None:
        sym = sympy.Symbol(f"x{i}", real=True)
        _COORDS[i] = sym
    return sym


def coords(n: int) -> tuple[sympy.Symbol, ...]:
    """x_1..x_n"""
    return tuple(coord(i) for i in range(1, n + 1))


def coord_index(sym: sympy.Symbol) -> int:
    """坐标变量的下标，非坐标变量抛出 GrammarError"""
    match = _VAR_PATTERN.match(sym.name)
    if not match or sym != coord(int(match.group(1))):
        raise GrammarError(f"未知变量: {sym}", node=str(sym))
    return int(match.group(1))


def max_index(expr: sympy.Basic) -> int:
    """表达式中出现的最大坐标下标（无变量时为 0）"""
    indices = [coord_index(s) for s in expr.free_symbols]
    return max(indices, default=0)


# ============================================================
# 文法校验
# ============================================================

def _is_log_free(expr: sympy.Basic) -> bool:
    return not expr.has(log)


def check_condition(cond: sympy.Basic) -> Boolean:
    """校验条件只由对无对数表达式的符号条件布尔组合而成"""
    if isinstance(cond, (BooleanTrue, BooleanFalse)):
        return cond
    if isinstance(cond, Relational):
        for side in (cond.lhs, cond.rhs):
            if not _is_log_free(side):
                raise GrammarError("条件中的表达式不能含对数", node=str(cond))
            _check_node(side, under_log_factor=False)
        return cond
    if isinstance(cond, (sympy.And, sympy.Or, sympy.Not)):
        for arg in cond.args:
            check_condition(arg)
        return cond
    raise GrammarError(f"不支持的条件节点: {type(cond).__name__}", node=str(cond))


def _check_node(node: sympy.Basic, under_log_factor: bool) -> None:
    """
    递归校验表达式节点

    under_log_factor=False 表示当前位置处于半代数核心（|·|、min/max、根号、分母、
    对数参数内部），这里不允许再出现对数。
    """
    if node.is_Number:
        if node in (sympy.oo, -sympy.oo, sympy.zoo, sympy.nan):
            raise GrammarError("表达式中不允许无穷或 nan", node=str(node))
        return
    if isinstance(node, sympy.NumberSymbol):
        # 标记的无理字面量（如 pi）
        return
    if isinstance(node, sympy.Symbol):
        coord_index(node)
        return
    if isinstance(node, (sympy.Add, sympy.Mul)):
        for arg in node.args:
            _check_node(arg, under_log_factor)
        return
    if isinstance(node, sympy.Pow):
        base, exp = node.args
        if not exp.is_Rational:
            raise GrammarError(f"指数必须是有理常数: {node}", node=str(node))
        if exp.is_Integer and exp > 0:
            _check_node(base, under_log_factor)
            return
        # 负整数次幂（商）与分数次幂（根）的底必须是半代数核心
        if not _is_log_free(base):
            raise GrammarError(f"对数不能出现在分母或根号内: {node}", node=str(node))
        _check_node(base, under_log_factor=False)
        return
    if isinstance(node, (Abs, Min, Max)):
        for arg in node.args:
            if not _is_log_free(arg):
                raise GrammarError(f"对数不能出现在 {type(node).__name__} 内", node=str(node))
            _check_node(arg, under_log_factor=False)
        return
    if isinstance(node, log):
        if not under_log_factor:
            raise GrammarError(f"对数只能作为顶层因子出现: {node}", node=str(node))
        arg = node.args[0]
        if not _is_log_free(arg):
            raise GrammarError(f"对数参数必须不含对数: {node}", node=str(node))
        _check_node(arg, under_log_factor=False)
        return
    if isinstance(node, Piecewise):
        for value, cond in node.args:
            _check_node(value, under_log_factor)
            check_condition(cond)
        return
    raise GrammarError(f"不支持的表达式节点: {type(node).__name__} ({node})", node=str(node))


def check_grammar(expr: sympy.Basic) -> sympy.Basic:
    """校验表达式属于支持的可构造函数文法，返回原表达式"""
    _check_node(expr, under_log_factor=True)
    return expr


# ============================================================
# ScalarExpr
# ============================================================

CertificateMap = Mapping[sympy.Basic, Boolean]


class ScalarExpr:
    """
    可构造函数

    expr 为 sympy 表达式；certificates 把每个对数参数映射到其正性证书条件
    （在该条件成立处断言参数 > 0，之外求值报 DomainError）。
    值对象：构造后不再修改，规范形与数值编译结果只写一次。
    """

    __slots__ = ("expr", "certificates", "_normal", "_numeric")

    def __init__(self, expr: Any, certificates: Optional[CertificateMap] = None, *, validate: bool = True):
        expr = sympy.sympify(expr)
        if validate:
            check_grammar(expr)
        certs: dict[sympy.Basic, Boolean] = {}
        given = dict(certificates or {})
        for node in sorted(expr.atoms(log), key=sympy.default_sort_key):
            arg = node.args[0]
            certs[arg] = given.get(arg, sympy.Gt(arg, 0))
        self.expr = expr
        self.certificates = certs
        self._normal: Optional["ScalarExpr"] = None
        self._numeric = None

    # ---------- 构造 ----------

    @classmethod
    def const(cls, value: Any) -> "ScalarExpr":
        return cls(sympy.nsimplify(value) if isinstance(value, str) else sympy.sympify(value))

    @classmethod
    def var(cls, i: int) -> "ScalarExpr":
        return cls(coord(i))

    @staticmethod
    def lift(value: Any) -> "ScalarExpr":
        """把数值、sympy 表达式或 ScalarExpr 统一为 ScalarExpr"""
        if isinstance(value, ScalarExpr):
            return value
        return ScalarExpr(value)

    # ---------- 基本属性 ----------

    @property
    def is_zero(self) -> bool:
        return self.expr == 0

    @property
    def is_log_free(self) -> bool:
        return _is_log_free(self.expr)

    @property
    def has_float(self) -> bool:
        """含标记无理字面量时，任何判定最多是 NumericEqual"""
        return bool(self.expr.atoms(sympy.Float)) or bool(self.expr.atoms(sympy.NumberSymbol))

    @property
    def is_rational(self) -> bool:
        syms = sorted(self.expr.free_symbols, key=sympy.default_sort_key)
        return bool(self.expr.is_rational_function(*syms)) and not self.expr.has(Abs, Min, Max, Piecewise)

    @property
    def dimension(self) -> int:
        return max_index(self.expr)

    # ---------- 算术 ----------

    def _merge(self, other: "ScalarExpr") -> dict:
        certs = dict(self.certificates)
        certs.update(other.certificates)
        return certs

    def __add__(self, other: Any) -> "ScalarExpr":
        other = ScalarExpr.lift(other)
        return ScalarExpr(self.expr + other.expr, self._merge(other), validate=False)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "ScalarExpr":
        other = ScalarExpr.lift(other)
        return ScalarExpr(self.expr - other.expr, self._merge(other), validate=False)

    def __rsub__(self, other: Any) -> "ScalarExpr":
        return ScalarExpr.lift(other) - self

    def __mul__(self, other: Any) -> "ScalarExpr":
        other = ScalarExpr.lift(other)
        return ScalarExpr(self.expr * other.expr, self._merge(other), validate=False)

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "ScalarExpr":
        other = ScalarExpr.lift(other)
        if not other.is_log_free:
            raise GrammarError("不能除以含对数的表达式", node=str(other.expr))
        return ScalarExpr(self.expr / other.expr, self._merge(other), validate=False)

    def __rtruediv__(self, other: Any) -> "ScalarExpr":
        return ScalarExpr.lift(other) / self

    def __neg__(self) -> "ScalarExpr":
        return ScalarExpr(-self.expr, self.certificates, validate=False)

    def __pow__(self, k: int) -> "ScalarExpr":
        if not isinstance(k, int):
            raise GrammarError(f"只支持整数次幂: {k}")
        return ScalarExpr(self.expr ** k, self.certificates)

    # ---------- 比较与哈希（结构相等） ----------

    def __eq__(self, other: object) -> bool:
        if isinstance(other, ScalarExpr):
            return self.expr == other.expr
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.expr)

    def __repr__(self) -> str:
        return f"ScalarExpr({self.expr})"

    def __str__(self) -> str:
        return str(self.expr)

    # ---------- 代换 ----------

    def substitute(self, mapping: Mapping[int, Any]) -> "ScalarExpr":
        """
        同时代换坐标变量

        Args:
            mapping: 下标 -> 表达式（ScalarExpr / sympy / 数值）

        Returns:
            代换后的 ScalarExpr，对数证书随之代换
        """
        table = {coord(i): ScalarExpr.lift(v).expr for i, v in mapping.items()}
        expr = self.expr.xreplace(table)
        certs = {arg.xreplace(table): cond.xreplace(table) for arg, cond in self.certificates.items()}
        for value in mapping.values():
            if isinstance(value, ScalarExpr):
                certs.update(value.certificates)
        return ScalarExpr(expr, certs)

    def shifted(self, offset: int) -> "ScalarExpr":
        """把 x_i 重命名为 x_{i+offset}"""
        idx = sorted(coord_index(s) for s in self.expr.free_symbols)
        return self.substitute({i: coord(i + offset) for i in idx})

    def to_json(self) -> dict:
        return expr_to_json(self.expr, self.certificates)


ExprLike = Union[ScalarExpr, sympy.Basic, int, str]


def as_expr(value: ExprLike) -> ScalarExpr:
    """字符串按中缀语法解析，其他类型直接包装"""
    if isinstance(value, str):
        return parse_expr(value)
    return ScalarExpr.lift(value)


# ============================================================
# 规范形
# ============================================================

def _certified_positive(factor: sympy.Basic, cert: Boolean) -> bool:
    """factor 是否由证书（或 sympy 的假设）保证为正"""
    if factor.is_positive:
        return True
    target = sympy.Gt(factor, 0)
    if target is sympy.true:
        return True
    if not isinstance(target, Relational):
        return False
    target = target.canonical
    for conj in sympy.And.make_args(cert):
        if isinstance(conj, Relational) and conj.canonical == target:
            return True
    return False


def _expand_logs(expr: sympy.Basic, certs: Mapping[sympy.Basic, Boolean]) -> tuple[sympy.Basic, dict]:
    """在证书允许处展开 log(ab) = log a + log b，log(b^k) = k log b"""
    new_certs: dict = dict(certs)
    table = {}
    for node in sorted(expr.atoms(log), key=sympy.default_sort_key):
        arg = node.args[0]
        cert = certs.get(arg, sympy.Gt(arg, 0))
        if isinstance(arg, sympy.Mul):
            factors = arg.args
        elif isinstance(arg, sympy.Pow) and arg.exp.is_Integer and arg.exp > 0:
            factors = (arg,)
        else:
            continue
        pieces = []
        ok = True
        for f in factors:
            base, k = (f.base, f.exp) if isinstance(f, sympy.Pow) and f.exp.is_Integer else (f, sympy.Integer(1))
            if not _certified_positive(base, cert):
                ok = False
                break
            pieces.append((base, k))
        if not ok:
            continue
        total = sympy.Integer(0)
        for base, k in pieces:
            if base.is_Number:
                total += k * log(base)
            else:
                total += k * log(base)
                new_certs[base] = sympy.Gt(base, 0)
        table[node] = total
    if table:
        expr = expr.xreplace(table)
    return expr, new_certs


def _canon(expr: sympy.Basic) -> sympy.Basic:
    if expr.count_ops() > NORMALIZE_OPS_LIMIT:
        return expr
    return sympy.cancel(sympy.together(expr))


def normalize(e: ScalarExpr) -> ScalarExpr:
    """
    规范形

    展平和与积、合并有理系数、单项式排序、在证书范围内展开对数积；
    分段表达式先折叠到顶层再逐支规范化。结果缓存，幂等。
    """
    if e._normal is not None:
        return e._normal
    expr, certs = _expand_logs(e.expr, e.certificates)
    expr = sympy.piecewise_fold(expr)
    if isinstance(expr, Piecewise):
        expr = Piecewise(*[(_canon(v), c) for v, c in expr.args])
    else:
        expr = _canon(expr)
    result = ScalarExpr(expr, certs, validate=False)
    result._normal = result
    e._normal = result
    return result


def normal_token(e: ScalarExpr) -> str:
    """规范形的字符串标记"""
    return sympy.srepr(normalize(e).expr)


# ============================================================
# 中缀解析
# ============================================================

_ALLOWED_FUNCS = {
    "sqrt": sympy.sqrt,
    "root": sympy.root,
    "Abs": Abs,
    "abs": Abs,
    "Min": Min,
    "Max": Max,
    "min": Min,
    "max": Max,
    "log": log,
    "Piecewise": Piecewise,
    "Rational": sympy.Rational,
    "pi": sympy.pi,
    "And": sympy.And,
    "Or": sympy.Or,
    "Not": sympy.Not,
    "Eq": sympy.Eq,
    "Ne": sympy.Ne,
    "Gt": sympy.Gt,
    "Ge": sympy.Ge,
    "Lt": sympy.Lt,
    "Le": sympy.Le,
}

_PARSER_GLOBALS = {
    "Integer": sympy.Integer,
    "Float": sympy.Float,
    "Rational": sympy.Rational,
    "Symbol": sympy.Symbol,
    "Function": sympy.Function,
}


def _parse_text(text: str) -> sympy.Basic:
    local = dict(_ALLOWED_FUNCS)
    local.update({f"x{i}": coord(i) for i in range(1, 10)})
    try:
        parsed = _sympy_parse(
            text,
            local_dict=local,
            global_dict=dict(_PARSER_GLOBALS),
            transformations=standard_transformations + (rationalize,),
            evaluate=True,
        )
    except (SyntaxError, TypeError, ValueError, AttributeError) as e:
        raise GrammarError(f"表达式解析失败: {text!r} ({e})", node=text) from e
    # 高下标变量由解析器生成为普通 Symbol，替换为实坐标
    table = {}
    for sym in parsed.free_symbols:
        match = _VAR_PATTERN.match(sym.name)
        if match:
            table[sym] = coord(int(match.group(1)))
    if table:
        parsed = parsed.xreplace(table)
    return parsed


def parse_expr(text: str, certificates: Optional[Mapping[str, str]] = None) -> ScalarExpr:
    """
    解析中缀字符串为 ScalarExpr

    Args:
        text: 如 "sqrt(4 - x1**2)"、"Max(0, x1)**2"、"log(x1)"
        certificates: 对数参数字符串 -> 正性证书条件字符串

    Returns:
        通过文法校验的 ScalarExpr
    """
    expr = _parse_text(text)
    # Symbol 同时是 Boolean 的子类，只能按 Expr 判断
    if not isinstance(expr, sympy.Expr):
        raise GrammarError(f"期望表达式而不是条件: {text!r}", node=text)
    certs = {}
    for arg_text, cond_text in (certificates or {}).items():
        certs[_parse_text(arg_text)] = parse_condition(cond_text)
    return ScalarExpr(expr, certs)


def parse_condition(text: str) -> Boolean:
    """解析条件字符串，如 "(x1 > 0) & (x2 < 1)"、"Ne(x1, 0)" """
    cond = _parse_text(text)
    if not isinstance(cond, (Relational, BooleanFunction, BooleanAtom)):
        raise GrammarError(f"期望条件: {text!r}", node=text)
    return check_condition(cond)


# ============================================================
# JSON AST
# ============================================================

_REL_KIND = {
    sympy.StrictGreaterThan: "gt",
    sympy.GreaterThan: "ge",
    sympy.StrictLessThan: "lt",
    sympy.LessThan: "le",
    sympy.Equality: "eq",
    sympy.Unequality: "ne",
}
_KIND_REL = {v: k for k, v in _REL_KIND.items()}


def expr_to_json(expr: sympy.Basic, certificates: Optional[CertificateMap] = None) -> dict:
    """表达式 -> JSON AST（有理常数以分子/分母字符串保存）"""
    certificates = certificates or {}
    if expr.is_Rational:
        return {"kind": "const", "num": str(expr.p), "den": str(expr.q)}
    if isinstance(expr, sympy.Float):
        return {"kind": "float", "value": repr(float(expr))}
    if expr is sympy.pi:
        return {"kind": "pi"}
    if isinstance(expr, sympy.NumberSymbol):
        return {"kind": "float", "value": repr(float(expr))}
    if isinstance(expr, sympy.Symbol):
        return {"kind": "var", "index": coord_index(expr)}
    if isinstance(expr, sympy.Add):
        return {"kind": "add", "args": [expr_to_json(a, certificates) for a in expr.args]}
    if isinstance(expr, sympy.Mul):
        return {"kind": "mul", "args": [expr_to_json(a, certificates) for a in expr.args]}
    if isinstance(expr, sympy.Pow):
        base, exp = expr.args
        if exp.is_Integer:
            return {"kind": "pow", "base": expr_to_json(base, certificates), "exp": int(exp)}
        root = {"kind": "root", "arg": expr_to_json(base, certificates), "degree": int(exp.q)}
        if exp.p == 1:
            return root
        return {"kind": "pow", "base": root, "exp": int(exp.p)}
    if isinstance(expr, Abs):
        return {"kind": "abs", "arg": expr_to_json(expr.args[0], certificates)}
    if isinstance(expr, (Min, Max)):
        kind = "min" if isinstance(expr, Min) else "max"
        args = sorted(expr.args, key=sympy.default_sort_key)
        return {"kind": kind, "args": [expr_to_json(a, certificates) for a in args]}
    if isinstance(expr, log):
        arg = expr.args[0]
        node = {"kind": "log", "arg": expr_to_json(arg, certificates)}
        cert = certificates.get(arg)
        if cert is not None and cert != sympy.Gt(arg, 0):
            node["certificate"] = condition_to_json(cert)
        return node
    if isinstance(expr, Piecewise):
        return {
            "kind": "piecewise",
            "pieces": [{"value": expr_to_json(v, certificates), "cond": condition_to_json(c)} for v, c in expr.args],
        }
    raise GrammarError(f"无法序列化节点: {type(expr).__name__}", node=str(expr))


def condition_to_json(cond: Boolean) -> dict:
    """条件 -> JSON"""
    if cond is sympy.true:
        return {"kind": "true"}
    if cond is sympy.false:
        return {"kind": "false"}
    if isinstance(cond, Relational):
        return {"kind": _REL_KIND[type(cond)], "lhs": expr_to_json(cond.lhs), "rhs": expr_to_json(cond.rhs)}
    if isinstance(cond, (sympy.And, sympy.Or)):
        kind = "and" if isinstance(cond, sympy.And) else "or"
        return {"kind": kind, "args": [condition_to_json(a) for a in cond.args]}
    if isinstance(cond, sympy.Not):
        return {"kind": "not", "arg": condition_to_json(cond.args[0])}
    raise GrammarError(f"无法序列化条件: {cond}", node=str(cond))


def _require(doc: Any, key: str, pointer: str) -> Any:
    if not isinstance(doc, dict):
        raise SchemaError("期望 JSON 对象", pointer)
    if key not in doc:
        raise SchemaError(f"缺少字段 {key!r}", pointer)
    return doc[key]


def _int_field(doc: dict, key: str, pointer: str) -> int:
    value = _require(doc, key, pointer)
    try:
        return int(value)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"字段 {key!r} 必须是整数", f"{pointer}/{key}") from e


def expr_from_json_node(doc: Any, pointer: str = "", certs: Optional[dict] = None) -> sympy.Basic:
    """JSON AST -> sympy 表达式；错误带 JSON pointer 位置"""
    if certs is None:
        certs = {}
    if isinstance(doc, str):
        try:
            return _parse_text(doc)
        except GrammarError as e:
            raise SchemaError(e.message, pointer) from e
    if isinstance(doc, (int,)) and not isinstance(doc, bool):
        return sympy.Integer(doc)
    kind = _require(doc, "kind", pointer)
    if kind == "const":
        try:
            return sympy.Rational(int(_require(doc, "num", pointer)), int(doc.get("den", "1")))
        except (TypeError, ValueError, ZeroDivisionError) as e:
            raise SchemaError(f"非法有理常数: {e}", pointer) from e
    if kind == "float":
        return sympy.Float(float(_require(doc, "value", pointer)))
    if kind == "pi":
        return sympy.pi
    if kind == "var":
        index = _int_field(doc, "index", pointer)
        if index < 1:
            raise SchemaError("变量下标从 1 开始", f"{pointer}/index")
        return coord(index)
    if kind in ("add", "mul", "min", "max"):
        args = _require(doc, "args", pointer)
        if not isinstance(args, list) or not args:
            raise SchemaError("args 必须是非空列表", f"{pointer}/args")
        parsed = [expr_from_json_node(a, f"{pointer}/args/{i}", certs) for i, a in enumerate(args)]
        op = {"add": sympy.Add, "mul": sympy.Mul, "min": Min, "max": Max}[kind]
        return op(*parsed)
    if kind == "div":
        num = expr_from_json_node(_require(doc, "num", pointer), f"{pointer}/num", certs)
        den = expr_from_json_node(_require(doc, "den", pointer), f"{pointer}/den", certs)
        return num / den
    if kind == "pow":
        base = expr_from_json_node(_require(doc, "base", pointer), f"{pointer}/base", certs)
        return base ** _int_field(doc, "exp", pointer)
    if kind == "root":
        arg = expr_from_json_node(_require(doc, "arg", pointer), f"{pointer}/arg", certs)
        degree = _int_field(doc, "degree", pointer)
        if degree < 2:
            raise SchemaError("根次数至少为 2", f"{pointer}/degree")
        return sympy.root(arg, degree)
    if kind == "abs":
        return Abs(expr_from_json_node(_require(doc, "arg", pointer), f"{pointer}/arg", certs))
    if kind == "log":
        arg = expr_from_json_node(_require(doc, "arg", pointer), f"{pointer}/arg", certs)
        if "certificate" in doc:
            certs[arg] = condition_from_json(doc["certificate"], f"{pointer}/certificate")
        return log(arg)
    if kind == "piecewise":
        pieces = _require(doc, "pieces", pointer)
        if not isinstance(pieces, list) or not pieces:
            raise SchemaError("pieces 必须是非空列表", f"{pointer}/pieces")
        parsed = []
        for i, piece in enumerate(pieces):
            p = f"{pointer}/pieces/{i}"
            value = expr_from_json_node(_require(piece, "value", p), f"{p}/value", certs)
            cond = condition_from_json(_require(piece, "cond", p), f"{p}/cond")
            parsed.append((value, cond))
        return Piecewise(*parsed)
    raise SchemaError(f"未知节点类型 {kind!r}", f"{pointer}/kind")


def condition_from_json(doc: Any, pointer: str = "") -> Boolean:
    """JSON -> 条件"""
    if isinstance(doc, str):
        try:
            return parse_condition(doc)
        except GrammarError as e:
            raise SchemaError(e.message, pointer) from e
    kind = _require(doc, "kind", pointer)
    if kind == "true":
        return sympy.true
    if kind == "false":
        return sympy.false
    if kind in _KIND_REL:
        lhs = expr_from_json_node(_require(doc, "lhs", pointer), f"{pointer}/lhs")
        rhs = expr_from_json_node(_require(doc, "rhs", pointer), f"{pointer}/rhs")
        return _KIND_REL[kind](lhs, rhs)
    if kind in ("and", "or"):
        args = _require(doc, "args", pointer)
        parsed = [condition_from_json(a, f"{pointer}/args/{i}") for i, a in enumerate(args)]
        return sympy.And(*parsed) if kind == "and" else sympy.Or(*parsed)
    if kind == "not":
        return sympy.Not(condition_from_json(_require(doc, "arg", pointer), f"{pointer}/arg"))
    raise SchemaError(f"未知条件类型 {kind!r}", f"{pointer}/kind")


def expr_from_json(doc: Any, pointer: str = "") -> ScalarExpr:
    """JSON AST（或中缀字符串）-> ScalarExpr"""
    certs: dict = {}
    expr = expr_from_json_node(doc, pointer, certs)
    try:
        return ScalarExpr(expr, certs)
    except GrammarError as e:
        raise SchemaError(e.message, pointer) from e


# ============================================================
# Zone
# ============================================================

@dataclass(frozen=True)
class Zone:
    """C^1-zone：n 维开集的条件描述，声明在 reference 区域中稠密"""
    n: int
    condition: Boolean = sympy.true
    reference: Any = field(default=None, compare=False)

    @classmethod
    def full(cls, n: int, reference: Any = None) -> "Zone":
        return cls(n, sympy.true, reference)

    @property
    def is_full(self) -> bool:
        return self.condition is sympy.true

    def intersect(self, other: Optional["Zone"]) -> "Zone":
        if other is None:
            return self
        return Zone(self.n, sympy.And(self.condition, other.condition), self.reference or other.reference)

    def with_reference(self, reference: Any) -> "Zone":
        return Zone(self.n, self.condition, reference)

    def to_json(self) -> dict:
        return {"n": self.n, "condition": condition_to_json(self.condition)}


def conjoin(conditions: Iterable[Boolean]) -> Boolean:
    """条件合取"""
    return sympy.And(*list(conditions))
