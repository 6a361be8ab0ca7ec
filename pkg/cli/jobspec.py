"""
作业描述
命令行参数 -> JobSpec，校验后把覆盖项写入配置单例
"""

import argparse
import os
from dataclasses import dataclass, field
from typing import Optional, Union

from core.config import AppConfig, load_config, parse_epsilon_schedule, parse_number, reset_config
from core.errors import SchemaError
from core.logger import get_logger
from forms.zoned_form import parse_regularity

logger = get_logger("cli")

COMMANDS = (
    "cohomology",
    "verify-stokes",
    "verify-homotopy",
    "verify-derham",
    "integrate",
    "differentiate",
)

# 各命令必需的输入
REQUIRED_INPUTS = {
    "cohomology": ("space",),
    "verify-stokes": ("forms",),
    "verify-homotopy": ("forms",),
    "verify-derham": (),
    "integrate": ("forms",),
    "differentiate": ("forms",),
}

# 需要有限 q 的命令
ENGINE_COMMANDS = ("cohomology", "verify-derham")


@dataclass
class JobSpec:
    """一次 CLI 作业"""
    command: str
    space: Optional[str] = None
    forms: Optional[str] = None
    q: Union[int, str] = 1
    seed: Optional[int] = None
    resolution: Optional[str] = None
    quad_order: Optional[int] = None
    epsilon_schedule: Optional[str] = None
    out: Optional[str] = None
    normalize_timings: bool = False
    notes: list[str] = field(default_factory=list)

    def validate(self) -> "JobSpec":
        """
        校验命令、输入、q 与种子（种子必须由 --seed 或 RIBBON_DERHAM_SEED 给出）

        Raises:
            SchemaError: 未知命令、缺少输入或种子、参数格式错误
            UnsupportedRegularity: 上同调类命令给出 q = ω
        """
        if self.command not in COMMANDS:
            raise SchemaError(f"未知命令 {self.command!r}，可选 {', '.join(COMMANDS)}", "/command")
        for name in REQUIRED_INPUTS[self.command]:
            if not getattr(self, name):
                raise SchemaError(f"命令 {self.command} 需要 --{name}", f"/{name}")
        if self.command in ENGINE_COMMANDS:
            self.q = parse_regularity(self.q, "/q")
        if self.seed is None:
            raw = os.getenv("RIBBON_DERHAM_SEED")
            if raw is not None:
                try:
                    self.seed = int(raw)
                except ValueError as e:
                    raise SchemaError(f"环境变量 RIBBON_DERHAM_SEED 不是整数: {raw!r}", "/seed") from e
            else:
                logger.error("未给出 --seed 或 RIBBON_DERHAM_SEED")
                raise SchemaError("缺少随机种子：请给出 --seed 或设置 RIBBON_DERHAM_SEED", "/seed")
        if self.quad_order is not None and self.quad_order < 2:
            raise SchemaError(f"Gauss 阶数至少为 2: {self.quad_order}", "/quad_order")
        if self.resolution is not None:
            try:
                if parse_number(str(self.resolution)) <= 0:
                    raise ValueError(self.resolution)
            except (ValueError, ZeroDivisionError) as e:
                raise SchemaError(f"网格步长必须是正数: {self.resolution!r}", "/resolution") from e
        if self.epsilon_schedule is not None:
            try:
                parse_epsilon_schedule(self.epsilon_schedule)
            except ValueError as e:
                raise SchemaError(str(e), "/epsilon_schedule") from e
        return self

    def configure(self) -> AppConfig:
        """按作业覆盖项重建配置单例"""
        config = load_config()
        config.kernel.seed = int(self.seed)
        if self.quad_order is not None:
            config.quadrature.order = int(self.quad_order)
        if self.epsilon_schedule is not None:
            config.quadrature.epsilon_exponents = parse_epsilon_schedule(self.epsilon_schedule)
        if self.resolution is not None:
            config.oracle.resolution = parse_number(str(self.resolution))
        return reset_config(config)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "space": self.space,
            "forms": self.forms,
            "q": self.q,
            "seed": self.seed,
            "resolution": self.resolution,
            "quad_order": self.quad_order,
            "epsilon_schedule": self.epsilon_schedule,
        }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ribbon-derham",
        description="常构 de Rham 演算：上同调、Stokes / 链同伦验证、积分与扩展导数",
    )
    parser.add_argument("--command", required=True, choices=COMMANDS, help="要执行的命令")
    parser.add_argument("--space", help="区域 JSON 文件")
    parser.add_argument("--forms", help="形式 JSON 文件")
    parser.add_argument("--q", default="1", help="正则性 q（非负整数；omega 会被拒绝）")
    parser.add_argument("--seed", type=int, help="随机种子（缺省读 RIBBON_DERHAM_SEED）")
    parser.add_argument("--resolution", help="oracle 网格步长 h，如 1/8")
    parser.add_argument("--quad-order", type=int, help="每轴 Gauss 阶数")
    parser.add_argument("--epsilon-schedule", help="ε = 2^-j 的指数，如 3..8 或 3,4,5")
    parser.add_argument("--out", help="报告输出路径（缺省输出到 stdout）")
    parser.add_argument("--normalize-timings", action="store_true", help="报告中的耗时统一记为 0")
    return parser


def from_args(argv: Optional[list[str]] = None) -> JobSpec:
    """解析命令行；argparse 的错误以 SystemExit(2) 退出"""
    args = build_parser().parse_args(argv)
    return JobSpec(
        command=args.command,
        space=args.space,
        forms=args.forms,
        q=args.q,
        seed=args.seed,
        resolution=args.resolution,
        quad_order=args.quad_order,
        epsilon_schedule=args.epsilon_schedule,
        out=args.out,
        normalize_timings=args.normalize_timings,
    )
