"""
ribbon-derham 异常定义
所有可预期的失败都从 DerhamError 派生，并携带结构化上下文供报告使用
"""

from typing import Any, Optional


class DerhamError(Exception):
    """项目异常基类"""

    # CLI 退出码（见 cli/jobs.py）：判定未通过为 3，计算过程失败默认 5
    exit_code: int = 5

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self) -> dict:
        """转换为报告中的 JSON 片段"""
        return {
            "error": type(self).__name__,
            "message": self.message,
            "context": {k: _jsonable(v) for k, v in self.context.items()},
        }


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return str(value)


# ==================== 解析与语法 ====================

class SchemaError(DerhamError):
    """输入文件不符合 JSON 格式约定"""
    exit_code = 2

    def __init__(self, message: str, pointer: str = "", **context: Any):
        super().__init__(f"{pointer or '/'}: {message}", pointer=pointer or "/", **context)
        self.pointer = pointer or "/"


class GrammarError(DerhamError):
    """表达式超出支持的可构造函数文法"""
    exit_code = 2


class GrammarOverflow(DerhamError):
    """代换（拉回）后表达式离开支持的文法"""


class DomainError(DerhamError):
    """在定义域之外求值（log 非正、除零、负数开方）"""

    def __init__(self, message: str, node: Optional[str] = None, point: Any = None):
        super().__init__(message, node=node, point=point)
        self.node = node


class SamplingError(DerhamError):
    """采样预算内找不到区域中的点"""


# ==================== 形式与导数 ====================

class NoExtension(DerhamError):
    """zone 导数在边界处没有连续延拓"""


class UnverifiedExtension(DerhamError):
    """延拓仅通过采样验证（strict 模式下抛出）"""


class RegularityFailure(DerhamError):
    """延拓导数连续但不是 C^q"""


# ==================== 几何 ====================

class RibbonError(DerhamError):
    """ribbon 上下界不满足 a < b"""


class TargetOutside(DerhamError):
    """收缩目标点不在胞腔内"""


class SectionNotInterior(DerhamError):
    """截面 c 不严格位于 a 与 b 之间"""


class UnsupportedRegion(DerhamError):
    """区域约束无法化为 ribbon 并集"""
    exit_code = 4


# ==================== 纤维积分 ====================

class UnsupportedIntegrand(DerhamError):
    """被积函数超出 log-多项式片段（无理根、m>2、非有理 s 等）"""
    exit_code = 4


class BoundsCrossing(DerhamError):
    """Q_a^b 的上下界在采样点处交叉"""


# ==================== 上同调引擎 ====================

class PartitionFailure(DerhamError):
    """单位分解构造失败"""


class GlueDiscontinuity(DerhamError):
    """零延拓接缝两侧极限不一致"""


class OracleMismatch(DerhamError):
    """引擎 Betti 数与立方 oracle 不一致"""
    exit_code = 4


class RankAmbiguous(DerhamError):
    """奇异值落在零附近的模糊带内"""


class UnsupportedRegularity(DerhamError):
    """q = ω 的非紧情形尚无定论"""
    exit_code = 2


# ==================== oracle 与积分 ====================

class EmptyRaster(DerhamError):
    """栅格化后没有任何立方体"""


class UnstableResolution(DerhamError):
    """h 与 h/2 的 Betti 数不一致"""


class QuadratureDiverged(DerhamError):
    """ε→0 外推不满足 Cauchy 判据"""


# ==================== 内部错误 ====================

class InternalError(DerhamError):
    """非预期异常（程序缺陷），包装后仍写出报告"""
    exit_code = 1

    @classmethod
    def wrap(cls, error: BaseException) -> "InternalError":
        return cls(f"{type(error).__name__}: {error}", exception=type(error).__name__)
