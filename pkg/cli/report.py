"""
作业报告
键排序的 JSON；同一作业与种子在耗时归一化后逐字节一致
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from core.config import AppConfig
from core.errors import DerhamError
from core.logger import get_logger

logger = get_logger("cli")

REPORT_VERSION = 1


def verdict(check: str, anchor: str, passed: bool, detail: Any = None) -> dict:
    """报告中的一条判定"""
    return {"check": check, "anchor": anchor, "passed": bool(passed), "detail": _clean(detail)}


def _clean(value: Any) -> Any:
    """转为可确定序列化的 JSON 值（非有限浮点记为字符串）"""
    if isinstance(value, bool) or value is None or isinstance(value, (str, int)):
        return value
    if isinstance(value, float):
        return value if math.isfinite(value) else repr(value)
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "to_dict"):
        return _clean(value.to_dict())
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)


@dataclass
class Report:
    """一次作业的完整报告"""
    command: str
    seed: int
    job: dict
    inputs: dict[str, str] = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    results: list = field(default_factory=list)
    verdicts: list[dict] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    error: Optional[dict] = None
    exit_code: int = 0

    @property
    def passed(self) -> bool:
        return self.error is None and all(v["passed"] for v in self.verdicts)

    def add_input(self, path: str, digest: str) -> None:
        self.inputs[path] = digest

    def add_verdict(self, check: str, anchor: str, passed: bool, detail: Any = None) -> dict:
        entry = verdict(check, anchor, passed, detail)
        self.verdicts.append(entry)
        if not entry["passed"]:
            logger.warning(f"判定未通过: {check} [{anchor}]")
        return entry

    def extend(self, verdicts: list[dict]) -> None:
        for v in verdicts:
            self.add_verdict(v["check"], v["anchor"], v["passed"], v.get("detail"))

    def fail(self, error: DerhamError) -> None:
        self.error = error.to_dict()
        self.exit_code = error.exit_code

    def finish(self) -> int:
        """确定退出码：异常优先，其次是判定"""
        if self.error is None:
            self.exit_code = 0 if self.passed else 3
        return self.exit_code

    def to_dict(self, normalize_timings: bool = False) -> dict:
        timings = {k: (0.0 if normalize_timings else round(v, 6)) for k, v in self.timings.items()}
        return _clean({
            "schema_version": REPORT_VERSION,
            "command": self.command,
            "job": self.job,
            "inputs": dict(self.inputs),
            "seed": self.seed,
            "tolerances": self.tolerances,
            "results": self.results,
            "verdicts": self.verdicts,
            "timings": timings,
            "notes": list(self.notes),
            "error": self.error,
            "exit_code": self.exit_code,
            "passed": self.passed,
        })

    def dumps(self, normalize_timings: bool = False) -> str:
        return json.dumps(self.to_dict(normalize_timings), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def tolerances_of(config: AppConfig) -> dict:
    """报告中记录的容差与数值参数"""
    return {
        "equality_tolerance": config.kernel.tolerance,
        "sample_count": config.kernel.sample_count,
        "extension_tolerance": config.derivative.tolerance,
        "boundary_points": config.derivative.boundary_points,
        "quadrature_order": config.quadrature.order,
        "epsilon_exponents": list(config.quadrature.epsilon_exponents),
        "quadrature_tolerance": config.quadrature.tolerance,
        "oracle_resolution": config.oracle.resolution,
        "gap_ratio": config.engine.gap_ratio,
        "det_floor": config.engine.det_floor,
    }


def write_report(text: str, out: Optional[str]) -> Optional[str]:
    """
    写出报告

    Returns:
        报告内容的 sha256；out 为空时由调用方输出到 stdout
    """
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"报告已写入 {path} (sha256 {digest[:12]})")
    return digest
