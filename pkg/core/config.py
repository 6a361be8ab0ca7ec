"""
ribbon-derham 配置加载器
从 .env 文件与环境变量加载所有数值容差、采样与求积配置
"""

import os
from dataclasses import dataclass, field
from typing import Optional
from dotenv import load_dotenv

# 加载 .env 文件
load_dotenv()


@dataclass
class KernelConfig:
    """符号核心配置"""
    seed: int = 20240601
    sample_count: int = 64           # equal() 数值采样点数
    tolerance: float = 1e-9          # equal() 数值容差
    sampling_budget: int = 4000      # 拒绝采样的最大尝试次数
    density_radius: float = 1e-3     # zone 稠密性抽查的球半径


@dataclass
class DerivativeConfig:
    """扩展导数 D 的连续性检查配置"""
    boundary_points: int = 32        # zone 边界采样点
    directions: int = 8              # 每个边界点的逼近方向
    tolerance: float = 1e-7          # 各方向极限一致的容差
    fd_step: float = 1e-5            # 有限差分步长
    fd_rtol: float = 1e-6            # 有限差分相对容差


@dataclass
class QuadratureConfig:
    """数值积分配置"""
    order: int = 12                                          # 每轴 Gauss 阶数
    epsilon_exponents: list[int] = field(default_factory=lambda: [3, 4, 5, 6, 7, 8])
    tolerance: float = 1e-6                                  # Richardson 外推 Cauchy 容差
    max_depth: int = 10                                      # 接缝自适应细分最大深度
    max_doublings: int = 2                                   # RankAmbiguous 后阶数翻倍次数


@dataclass
class OracleConfig:
    """立方同调 oracle 配置"""
    resolution: float = 0.125        # 初始网格步长 h
    max_halvings: int = 2            # 稳定性规则下 h 的最大减半次数
    use_cache: bool = True           # 是否使用 sqlite 缓存


@dataclass
class EngineConfig:
    """上同调引擎配置"""
    gap_ratio: float = 1e3           # 奇异值 "零/非零" 分组最小间隔
    det_floor: float = 1e-6          # 行归一化后周期矩阵 |det| 下限
    zero_tolerance: float = 1e-7     # 周期向量视为零的绝对阈值
    partition_step: float = 1e-3     # 单位分解 C^p 有限差分步长
    max_denominator: int = 12        # 限制映射坐标有理化的最大分母


@dataclass
class StorageConfig:
    """存储配置"""
    db_path: Optional[str] = None    # None 表示使用默认 data/ribbon_derham.db


@dataclass
class AppConfig:
    """应用总配置"""
    kernel: KernelConfig
    derivative: DerivativeConfig
    quadrature: QuadratureConfig
    oracle: OracleConfig
    engine: EngineConfig
    storage: StorageConfig
    log_level: str = "INFO"


def _parse_int(name: str, default: str) -> int:
    """解析整数环境变量"""
    raw = os.getenv(name, default)
    try:
        return int(raw)
    except ValueError as e:
        raise ValueError(f"环境变量 {name} 不是整数: {raw!r}") from e


def _parse_float(name: str, default: str) -> float:
    """解析浮点环境变量（支持 1/8 这样的有理写法）"""
    raw = os.getenv(name, default)
    try:
        return parse_number(raw)
    except ValueError as e:
        raise ValueError(f"环境变量 {name} 不是数值: {raw!r}") from e


def parse_number(text: str) -> float:
    """解析 "0.125" 或 "1/8" 形式的数值"""
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def parse_epsilon_schedule(text: str) -> list[int]:
    """
    解析 ε 序列指数

    接受 "3..8" 或 "3,4,5,6" 两种写法，对应 ε = 2^-j。
    """
    if not text:
        return [3, 4, 5, 6, 7, 8]
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            exponents = list(range(int(lo), int(hi) + 1))
        else:
            exponents = [int(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise ValueError(f"ε 序列格式错误: {text!r}") from e
    if len(exponents) < 3 or min(exponents) < 2:
        raise ValueError(f"ε 序列至少需要 3 项且 ε < 1/4: {text!r}")
    return exponents


def load_config() -> AppConfig:
    """加载配置"""
    # 符号核心
    kernel = KernelConfig(
        seed=_parse_int("RIBBON_DERHAM_SEED", "20240601"),
        sample_count=_parse_int("RIBBON_DERHAM_SAMPLES", "64"),
        tolerance=_parse_float("RIBBON_DERHAM_TOL", "1e-9"),
    )

    # 数值积分
    quadrature = QuadratureConfig(
        order=_parse_int("RIBBON_DERHAM_QUAD_ORDER", "12"),
        epsilon_exponents=parse_epsilon_schedule(os.getenv("RIBBON_DERHAM_EPSILON", "3..8")),
    )

    # oracle
    oracle = OracleConfig(
        resolution=_parse_float("RIBBON_DERHAM_RESOLUTION", "0.125"),
        max_halvings=_parse_int("RIBBON_DERHAM_MAX_HALVINGS", "2"),
        use_cache=os.getenv("RIBBON_DERHAM_CACHE", "1") not in ("0", "false", "no"),
    )

    storage = StorageConfig(db_path=os.getenv("RIBBON_DERHAM_DB") or None)

    return AppConfig(
        kernel=kernel,
        derivative=DerivativeConfig(),
        quadrature=quadrature,
        oracle=oracle,
        engine=EngineConfig(),
        storage=storage,
        log_level=os.getenv("RIBBON_DERHAM_LOG_LEVEL", "INFO"),
    )


# 全局配置实例（延迟加载）
_config: Optional[AppConfig] = None


def get_config() -> AppConfig:
    """获取配置单例"""
    global _config
    if _config is None:
        _config = load_config()
    return _config


def reset_config(config: Optional[AppConfig] = None) -> AppConfig:
    """替换（或重新加载）配置单例，CLI 覆盖参数与测试使用"""
    global _config
    _config = config if config is not None else load_config()
    return _config
