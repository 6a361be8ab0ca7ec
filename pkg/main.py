"""
ribbon-derham 常构 de Rham 演算
程序入口
"""

import sys
from typing import Optional

from cli.jobs import run
from cli.jobspec import from_args
from core.config import get_config
from core.logger import logger, set_level


def init():
    """初始化日志级别并打印配置摘要"""
    config = get_config()
    set_level(config.log_level)
    logger.info("=" * 60)
    logger.info("ribbon-derham 常构 de Rham 演算")
    logger.info("=" * 60)
    logger.info(f"Gauss 阶数: {config.quadrature.order}, ε 指数: {config.quadrature.epsilon_exponents}")
    logger.info(f"oracle 步长: {config.oracle.resolution}, 缓存: {'开' if config.oracle.use_cache else '关'}")


def main(argv: Optional[list[str]] = None) -> int:
    """主入口，返回退出码"""
    spec = from_args(argv)
    init()
    code, report = run(spec)
    if not spec.out:
        sys.stdout.write(report.dumps(spec.normalize_timings))
    return code


if __name__ == '__main__':
    sys.exit(main())
