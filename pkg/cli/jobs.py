"""
ribbon-derham 作业执行
每个命令逐项处理输入，收集判定后写出报告并记录运行日志
"""

import hashlib
import json
import sqlite3
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from cli.corpus import load_spaces
from cli.jobspec import JobSpec
from cli.loader import FormEntry, SpaceFile, load_forms, load_space
from cli.report import Report, tolerances_of, verdict, write_report
from core.database import get_database
from core.errors import DerhamError, InternalError, NoExtension, SchemaError
from core.logger import get_logger
from engine.cohomology import CohomologyBasis, CohomologyEngine
from engine.poincare import cell_center, is_cell, poincare_primitive
from fiber.operator import homotopy_identity_check, homotopy_invariance_check, projection_section_check
from forms.derivative import extended_D
from forms.zoned_form import ZonedForm, is_zero_form
from geometry.homotopy import contraction_homotopy
from integration.quadrature import QuadratureSpec, integrate_chain, stokes_residual
from kernel.expr import parse_expr

logger = get_logger("jobs")

# 判定所对应的命题
ANCHOR_EXPECTED = "Betti numbers of the fixture"
ANCHOR_STOKES = "Stokes formula for continuous constructible forms"
ANCHOR_CHAIN = "fiber integration is a chain homotopy between 1 and π*s*"
ANCHOR_SECTION = "π* and s* are mutually inverse on cohomology"
ANCHOR_INVARIANCE = "homotopic maps induce the same map on cohomology"
ANCHOR_DD = "D∘D = 0"
ANCHOR_CLOSED = "closedness of the extended derivative"
ANCHOR_REGULARITY = "regularity class of the extended derivative"
ANCHOR_POINCARE = "Poincaré lemma on cells"
ANCHOR_VALUE = "integral of the fixture"


@dataclass
class JobResult:
    """单项（一个区域或一个形式）的处理结果"""
    item: str
    success: bool
    payload: dict = field(default_factory=dict)
    verdicts: list[dict] = field(default_factory=list)
    error: Optional[DerhamError] = None
    seconds: float = 0.0


def _timed(item: str, fn: Callable[[], JobResult]) -> JobResult:
    """执行单项；DerhamError 记入结果而不中断其余项"""
    start = time.perf_counter()
    try:
        result = fn()
    except DerhamError as e:
        logger.error(f"处理 {item} 失败: {type(e).__name__}: {e.message}")
        result = JobResult(item=item, success=False, error=e)
    except Exception as e:
        logger.exception(f"处理 {item} 时出现内部错误")
        result = JobResult(item=item, success=False, error=InternalError.wrap(e))
    result.seconds = time.perf_counter() - start
    return result


# ==================== 上同调 ====================

def _engine_for(spec: JobSpec, space: SpaceFile) -> CohomologyEngine:
    resolution = spec.resolution or space.resolution
    return CohomologyEngine(spec.q, resolution=resolution, spec=QuadratureSpec.from_config())


def _basis_payload(basis: CohomologyBasis) -> dict:
    payload = basis.to_dict()
    if basis.outer is not None:
        payload["rescaled_representatives"] = {
            str(k): [f.to_json(include_region=False) for f in basis.rescaled_representatives(k)]
            for k in sorted(basis.representatives)
        }
    return payload


def _expected_verdict(space: SpaceFile, betti: list[int]) -> Optional[dict]:
    if space.expected_betti is None:
        return None
    return verdict("expected Betti numbers", ANCHOR_EXPECTED, list(betti) == list(space.expected_betti),
                   {"expected": space.expected_betti, "computed": list(betti)})


def _section_verdicts(basis: CohomologyBasis) -> list[dict]:
    """X×ℝ 形区域（末坐标无界）的代表元满足 ω = π*s*ω + D(...)"""
    region = basis.region
    if region.is_point or not all(r.is_cylinder for r in region.ribbons):
        return []
    out = []
    for k, forms in sorted(basis.representatives.items()):
        if k < 1:
            continue
        for i, form in enumerate(forms):
            v = projection_section_check(form)
            out.append(verdict(f"π*s* on H^{k}[{i}]", ANCHOR_SECTION, v.passed, v.to_dict()))
    return out


def _invariance_verdicts(basis: CohomologyBasis) -> list[dict]:
    """有界胞腔：代表元沿收缩同伦的拉回相差恰当形式"""
    region = basis.region
    if region.is_point or not is_cell(region) or not region.is_bounded():
        return []
    h = contraction_homotopy(region, cell_center(region))
    out = []
    for k, forms in sorted(basis.representatives.items()):
        for i, form in enumerate(forms):
            v = homotopy_invariance_check(h, form.with_region(region))
            out.append(verdict(f"contraction invariance H^{k}[{i}]", ANCHOR_INVARIANCE, v.passed, v.to_dict()))
    return out


def process_space(spec: JobSpec, space: SpaceFile, *, homotopy_checks: bool = False) -> JobResult:
    """
    单个区域的上同调

    流程:
    1. 引擎递归求基与 Betti 数
    2. 与 oracle 对照并做周期配对
    3. 与样例期望对照
    4. （verify-derham）同伦不变性与 π*/s* 检查
    """
    logger.info(f"开始计算区域: {space.label} ({space.path})")
    basis = _engine_for(spec, space).compute(space.region)
    verdicts = list(basis.verdicts)
    expected = _expected_verdict(space, basis.betti)
    if expected is not None:
        verdicts.append(expected)
    if homotopy_checks:
        verdicts.extend(_invariance_verdicts(basis))
        verdicts.extend(_section_verdicts(basis))
    payload = {"space": space.label, "path": space.path, **_basis_payload(basis)}
    logger.info(f"区域 {space.label}: b={basis.betti}")
    return JobResult(space.label, True, payload, verdicts)


def run_cohomology(spec: JobSpec, report: Report) -> list[JobResult]:
    space = load_space(spec.space)
    report.add_input(space.path, space.digest)
    return [_timed(space.label, lambda: process_space(spec, space))]


def run_verify_derham(spec: JobSpec, report: Report) -> list[JobResult]:
    spaces = [load_space(spec.space)] if spec.space else load_spaces()
    if not spec.space:
        report.notes.append(f"未给出 --space，运行全部 {len(spaces)} 个样例区域")
    results = []
    for space in spaces:
        report.add_input(space.path, space.digest)
        results.append(_timed(space.label, lambda s=space: process_space(spec, s, homotopy_checks=True)))
    return results


# ==================== 形式 ====================

def _forms(spec: JobSpec, report: Report) -> list[FormEntry]:
    forms_file = load_forms(spec.forms)
    report.add_input(forms_file.path, forms_file.digest)
    return forms_file.entries


def process_stokes(entry: FormEntry) -> JobResult:
    payload: dict = {"id": entry.id, "simplices": []}
    verdicts = []
    spec = QuadratureSpec.from_config()
    for j, (_, sigma) in enumerate(entry.simplices):
        stokes = stokes_residual(entry.form, sigma, spec)
        payload["simplices"].append(stokes.to_dict())
        verdicts.append(verdict(f"Stokes {entry.id}[{j}]", ANCHOR_STOKES, stokes.passed,
                                {"residual": stokes.residual, "direct_residual": stokes.direct_residual,
                                 "threshold": stokes.threshold}))
    return JobResult(entry.id, True, payload, verdicts)


def run_verify_stokes(spec: JobSpec, report: Report) -> list[JobResult]:
    results = []
    for entry in _forms(spec, report):
        if not entry.simplices:
            report.notes.append(f"{entry.id}: 没有给出单形，跳过")
            continue
        results.append(_timed(entry.id, lambda e=entry: process_stokes(e)))
    return results


def process_homotopy(entry: FormEntry) -> JobResult:
    form = entry.form
    identity = homotopy_identity_check(form)
    payload = {"id": entry.id, "identity": identity.to_dict()}
    verdicts = [verdict(f"chain homotopy {entry.id}", ANCHOR_CHAIN, identity.passed, identity.to_dict())]
    if entry.expect.get("closed"):
        v = projection_section_check(form)
        verdicts.append(verdict(f"π*s* {entry.id}", ANCHOR_SECTION, v.passed, v.to_dict()))
    if entry.contract:
        cell = form.region
        if cell is None or not is_cell(cell):
            raise SchemaError("contract 只适用于胞腔上的形式", f"/{entry.id}/contract")
        v = homotopy_invariance_check(contraction_homotopy(cell, cell_center(cell)), form)
        verdicts.append(verdict(f"contraction invariance {entry.id}", ANCHOR_INVARIANCE, v.passed, v.to_dict()))
    return JobResult(entry.id, True, payload, verdicts)


def run_verify_homotopy(spec: JobSpec, report: Report) -> list[JobResult]:
    return [_timed(entry.id, lambda e=entry: process_homotopy(e)) for entry in _forms(spec, report)]


def _expected_number(value: Any, pointer: str) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        expr = parse_expr(value).expr
        if expr.free_symbols:
            raise SchemaError(f"期望值必须是常数: {value!r}", pointer)
        return float(expr)
    raise SchemaError(f"期望值必须是数值或常数表达式: {value!r}", pointer)


def process_integral(entry: FormEntry) -> JobResult:
    result = integrate_chain(entry.form, entry.simplices, QuadratureSpec.from_config())
    payload = {"id": entry.id, **result.to_dict()}
    verdicts = []
    if "value" in entry.expect:
        expected = _expected_number(entry.expect["value"], f"/{entry.id}/expect/value")
        threshold = max(1e-6, 10 * result.error)
        verdicts.append(verdict(f"value {entry.id}", ANCHOR_VALUE, abs(result.value - expected) <= threshold,
                                {"expected": expected, "value": result.value, "threshold": threshold}))
    return JobResult(entry.id, True, payload, verdicts)


def run_integrate(spec: JobSpec, report: Report) -> list[JobResult]:
    results = []
    for entry in _forms(spec, report):
        if not entry.simplices:
            report.notes.append(f"{entry.id}: 没有给出积分链，跳过")
            continue
        results.append(_timed(entry.id, lambda e=entry: process_integral(e)))
    return results


def _second_derivative(eta: ZonedForm) -> Optional[ZonedForm]:
    if eta.k >= eta.n:
        return None
    try:
        return extended_D(eta, check_regularity=False)
    except NoExtension:
        return None


def process_derivative(entry: FormEntry) -> JobResult:
    """
    扩展导数及其附带检查

    期望字段：closed（Dω = 0）、extension / cq_ok（正则性报告）、primitive（胞腔上求原函数）
    """
    form, expect = entry.form, entry.expect
    eta = extended_D(form)
    report = eta.report.to_dict() if eta.report is not None else {}
    payload: dict = {"id": entry.id, "derivative": eta.to_json(include_region=False), "regularity": report}
    if entry.note:
        payload["note"] = entry.note
    verdicts = []

    dd = _second_derivative(eta)
    if dd is not None:
        v = is_zero_form(dd, form.region)
        verdicts.append(verdict(f"D∘D {entry.id}", ANCHOR_DD, v.passed, v.to_dict()))
    if "closed" in expect:
        v = is_zero_form(eta, form.region)
        verdicts.append(verdict(f"closed {entry.id}", ANCHOR_CLOSED, v.passed == bool(expect["closed"]),
                                {"expected": bool(expect["closed"]), **v.to_dict()}))
    for key in ("extension", "cq_ok"):
        if key in expect:
            verdicts.append(verdict(f"{key} {entry.id}", ANCHOR_REGULARITY, report.get(key) == expect[key],
                                    {"expected": expect[key], "reported": report.get(key)}))
    if expect.get("primitive"):
        lam = poincare_primitive(form)
        payload["primitive"] = lam.to_json(include_region=False)
        verdicts.append(verdict(f"primitive {entry.id}", ANCHOR_POINCARE, True, {"method": "ribbon"}))
    return JobResult(entry.id, True, payload, verdicts)


def run_differentiate(spec: JobSpec, report: Report) -> list[JobResult]:
    return [_timed(entry.id, lambda e=entry: process_derivative(e)) for entry in _forms(spec, report)]


COMMAND_HANDLERS: dict[str, Callable[[JobSpec, Report], list[JobResult]]] = {
    "cohomology": run_cohomology,
    "verify-stokes": run_verify_stokes,
    "verify-homotopy": run_verify_homotopy,
    "verify-derham": run_verify_derham,
    "integrate": run_integrate,
    "differentiate": run_differentiate,
}


# ==================== 入口 ====================

def _severity(error: DerhamError) -> int:
    """多项失败时报告最严重的一项：内部错误优先，其余按退出码"""
    return 100 if isinstance(error, InternalError) else error.exit_code


def _collect(report: Report, results: list[JobResult]) -> None:
    first_error: Optional[DerhamError] = None
    for result in results:
        report.timings[result.item] = result.seconds
        if result.success:
            report.results.append(result.payload)
            report.extend(result.verdicts)
        else:
            report.results.append({"item": result.item, "error": result.error.to_dict()})
            if first_error is None or _severity(result.error) > _severity(first_error):
                first_error = result.error
    if first_error is not None:
        report.fail(first_error)


def _input_hash(report: Report) -> str:
    text = json.dumps({"inputs": report.inputs, "job": report.job}, sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _record(report: Report, report_hash: Optional[str]) -> None:
    try:
        get_database().save_run_log(report.command, _input_hash(report), report.exit_code, report_hash)
    except sqlite3.Error as e:
        logger.warning(f"运行日志写入失败: {e}")


def run(spec: JobSpec) -> tuple[int, Report]:
    """
    执行一次作业

    Returns:
        (退出码, 报告)。0 全部通过；1 内部错误；2 输入解析 / q = ω；3 判定未通过；
        4 UnsupportedIntegrand / OracleMismatch / UnsupportedRegion；5 其他计算失败
    """
    logger.info("=" * 60)
    logger.info(f"开始作业: {spec.command}")
    try:
        spec.validate()
    except DerhamError as e:
        logger.error(f"作业参数无效: {e.message}")
        report = Report(spec.command, spec.seed or 0, spec.to_dict())
        report.fail(e)
        return _finish(spec, report)

    config = spec.configure()
    report = Report(spec.command, int(spec.seed), spec.to_dict(), tolerances=tolerances_of(config),
                    notes=list(spec.notes))
    try:
        results = COMMAND_HANDLERS[spec.command](spec, report)
        _collect(report, results)
    except DerhamError as e:
        logger.error(f"作业失败: {type(e).__name__}: {e.message}")
        report.fail(e)
    except Exception as e:
        logger.exception("作业出现内部错误")
        report.fail(InternalError.wrap(e))
    return _finish(spec, report)


def _finish(spec: JobSpec, report: Report) -> tuple[int, Report]:
    code = report.finish()
    text = report.dumps(spec.normalize_timings)
    digest = write_report(text, spec.out)
    _record(report, digest)
    passed = sum(1 for v in report.verdicts if v["passed"])
    logger.info(f"作业结束: {spec.command} exit={code} 判定 {passed}/{len(report.verdicts)} 通过")
    logger.info("=" * 60)
    return code, report
