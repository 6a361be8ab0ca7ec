"""命令行：作业校验、报告格式、输入加载与端到端运行"""

import hashlib
import json

import pytest

from cli.corpus import FORMS_DIR, SPACES_DIR, form_paths, load_spaces, space, space_paths
from cli import jobs
from cli.jobs import run
from cli.jobspec import JobSpec, from_args
from cli.loader import load_forms, load_json, load_space
from cli.report import Report, verdict, write_report
from core.config import get_config
from core.errors import InternalError, NoExtension, OracleMismatch, SchemaError, UnsupportedRegularity
from main import main

REGULARITY = str(FORMS_DIR / "regularity.json")
DX_OVER_X = str(FORMS_DIR / "dx_over_x.json")
INTERVAL = str(SPACES_DIR / "interval.json")


# ==================== JobSpec ====================

@pytest.mark.parametrize("kwargs, pointer", [
    ({"command": "explode"}, "/command"),
    ({"command": "cohomology"}, "/space"),
    ({"command": "integrate"}, "/forms"),
    ({"command": "integrate", "forms": "f.json", "quad_order": 1}, "/quad_order"),
    ({"command": "integrate", "forms": "f.json", "resolution": "0"}, "/resolution"),
    ({"command": "integrate", "forms": "f.json", "epsilon_schedule": "1,2"}, "/epsilon_schedule"),
])
def test_validate_errors(kwargs, pointer):
    with pytest.raises(SchemaError) as info:
        JobSpec(**kwargs).validate()
    assert info.value.pointer == pointer
    assert info.value.exit_code == 2


def test_seed_from_environment():
    spec = JobSpec("verify-derham").validate()
    assert spec.seed == 20240601
    assert spec.notes == []


def test_seed_is_required(monkeypatch):
    monkeypatch.delenv("RIBBON_DERHAM_SEED")
    with pytest.raises(SchemaError) as info:
        JobSpec("verify-derham").validate()
    assert info.value.pointer == "/seed"
    assert info.value.exit_code == 2
    assert JobSpec("verify-derham", seed=3).validate().seed == 3


def test_run_without_seed_exits_two(monkeypatch):
    monkeypatch.delenv("RIBBON_DERHAM_SEED")
    code, report = run(JobSpec("integrate", forms=DX_OVER_X))
    assert code == 2
    assert report.error["error"] == "SchemaError"
    assert report.error["context"]["pointer"] == "/seed"


def test_seed_must_be_integer(monkeypatch):
    monkeypatch.setenv("RIBBON_DERHAM_SEED", "abc")
    with pytest.raises(SchemaError) as info:
        JobSpec("verify-derham").validate()
    assert info.value.pointer == "/seed"


def test_omega_only_rejected_for_engine_commands():
    with pytest.raises(UnsupportedRegularity):
        JobSpec("cohomology", space=INTERVAL, q="omega").validate()
    spec = JobSpec("differentiate", forms=REGULARITY, q="omega").validate()
    assert spec.q == "omega"


def test_configure_applies_overrides():
    spec = JobSpec("integrate", forms=DX_OVER_X, seed=7, quad_order=6, resolution="1/4",
                   epsilon_schedule="3,4,5").validate()
    config = spec.configure()
    assert config is get_config()
    assert config.kernel.seed == 7
    assert config.quadrature.order == 6
    assert config.quadrature.epsilon_exponents == [3, 4, 5]
    assert config.oracle.resolution == 0.25


def test_from_args():
    spec = from_args(["--command", "integrate", "--forms", DX_OVER_X, "--quad-order", "8", "--normalize-timings"])
    assert spec.command == "integrate"
    assert spec.quad_order == 8
    assert spec.normalize_timings
    assert spec.q == "1"


def test_from_args_rejects_unknown_command():
    with pytest.raises(SystemExit) as info:
        from_args(["--command", "explode"])
    assert info.value.code == 2


# ==================== 报告 ====================

def test_report_exit_codes():
    report = Report("integrate", 1, {})
    report.add_verdict("a", "anchor", True)
    assert report.finish() == 0
    report.add_verdict("b", "anchor", False)
    assert report.finish() == 3
    report.fail(OracleMismatch("mismatch"))
    assert report.finish() == 4
    assert report.error["error"] == "OracleMismatch"


def test_report_dumps_is_deterministic():
    def build() -> Report:
        report = Report("integrate", 1, {"command": "integrate"}, timings={"x": 0.123}, notes=["n"])
        report.add_verdict("value", "anchor", True, {"residual": float("nan"), "values": (1, 2)})
        report.finish()
        return report

    text = build().dumps(normalize_timings=True)
    assert text == build().dumps(normalize_timings=True)
    assert text.endswith("\n")
    doc = json.loads(text)
    assert list(doc) == sorted(doc)
    assert doc["timings"] == {"x": 0.0}
    assert doc["verdicts"][0]["detail"] == {"residual": "nan", "values": [1, 2]}
    assert doc["passed"] is True
    assert set(doc) == {"schema_version", "command", "job", "inputs", "seed", "tolerances", "results",
                        "verdicts", "timings", "notes", "error", "exit_code", "passed"}


def test_verdict_shape():
    assert verdict("c", "a", 1) == {"check": "c", "anchor": "a", "passed": True, "detail": None}


def test_write_report(tmp_path):
    out = tmp_path / "nested" / "report.json"
    digest = write_report("{}\n", str(out))
    assert out.read_text(encoding="utf-8") == "{}\n"
    assert digest == hashlib.sha256(b"{}\n").hexdigest()
    assert write_report("{}\n", None) == digest


# ==================== 加载 ====================

def test_load_json_errors(tmp_path):
    with pytest.raises(SchemaError) as info:
        load_json(tmp_path / "missing.json")
    assert info.value.pointer == "/"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(SchemaError):
        load_json(bad)
    future = tmp_path / "future.json"
    future.write_text('{"schema_version": 2}', encoding="utf-8")
    with pytest.raises(SchemaError) as info:
        load_json(future)
    assert info.value.pointer == "/schema_version"


def test_load_space_bad_ribbon_is_schema_error(tmp_path):
    path = tmp_path / "space.json"
    path.write_text(json.dumps({"schema_version": 1, "n": 1,
                                "ribbons": [{"base": "point", "lower": 2, "upper": 1}]}), encoding="utf-8")
    with pytest.raises(SchemaError) as info:
        load_space(path)
    assert info.value.pointer == "/ribbons/0"


def test_fixture_corpus_loads():
    assert len(space_paths()) == 8
    assert len(form_paths()) >= 5
    assert {s.label for s in load_spaces(include_slow=False)} >= {"I1", "I2"}
    assert space("interval").expected_betti == [1]
    with pytest.raises(FileNotFoundError):
        space("klein_bottle")


def test_forms_file_entries():
    forms_file = load_forms(REGULARITY)
    assert [e.id for e in forms_file.entries] == ["kink-dx1", "kink-dx2"]
    assert forms_file.entries[1].expect == {"closed": False, "cq_ok": False}
    single = load_forms(DX_OVER_X)
    assert single.entries[0].id == "dx_over_x"
    assert len(single.entries[0].simplices) == 1


# ==================== 端到端 ====================

def test_run_differentiate_regularity(isolated_env):
    code, report = run(JobSpec("differentiate", forms=REGULARITY))
    assert code == 0, report.dumps()
    assert [r["id"] for r in report.results] == ["kink-dx1", "kink-dx2"]
    assert report.results[1]["regularity"]["cq_ok"] is False
    logs = isolated_env.get_run_logs("differentiate")
    assert len(logs) == 1
    assert logs[0]["exit_code"] == 0


def test_run_integrate_dx_over_x():
    code, report = run(JobSpec("integrate", forms=DX_OVER_X))
    assert code == 0
    assert report.results[0]["value"] == pytest.approx(0.6931471805599453, abs=1e-6)


def test_run_cohomology_interval():
    code, report = run(JobSpec("cohomology", space=INTERVAL))
    assert code == 0
    assert report.results[0]["betti"] == [1]
    assert INTERVAL.endswith(next(iter(report.inputs)))


def test_run_cohomology_square_lists_open_betti():
    code, report = run(JobSpec("cohomology", space=str(SPACES_DIR / "square.json")))
    assert code == 0, report.dumps()
    assert report.results[0]["betti"] == [1, 0]
    assert report.results[0]["oracle"]["betti"] == [1, 0, 0]


def test_run_omega_exits_two(isolated_env):
    code, report = run(JobSpec("cohomology", space=INTERVAL, q="omega"))
    assert code == 2
    assert report.error["error"] == "UnsupportedRegularity"
    assert isolated_env.get_run_logs()[0]["exit_code"] == 2


def test_run_missing_file_exits_two(tmp_path):
    code, report = run(JobSpec("integrate", forms=str(tmp_path / "nope.json")))
    assert code == 2
    assert report.error["error"] == "SchemaError"


def test_run_unexpected_exception_exits_one(monkeypatch, isolated_env):
    def broken(spec, report):
        raise RuntimeError("boom")

    monkeypatch.setitem(jobs.COMMAND_HANDLERS, "integrate", broken)
    code, report = run(JobSpec("integrate", forms=DX_OVER_X))
    assert code == 1
    assert report.error["error"] == "InternalError"
    assert report.error["context"]["exception"] == "RuntimeError"
    assert isolated_env.get_run_logs()[0]["exit_code"] == 1


def test_run_computation_failure_exits_five(monkeypatch):
    def stuck(spec, report):
        raise NoExtension("no continuous extension")

    monkeypatch.setitem(jobs.COMMAND_HANDLERS, "integrate", stuck)
    code, report = run(JobSpec("integrate", forms=DX_OVER_X))
    assert code == 5
    assert report.error["error"] == "NoExtension"
    assert report.passed is False


def test_item_exception_is_wrapped():
    result = jobs._timed("bad", lambda: 1 / 0)
    assert not result.success
    assert isinstance(result.error, InternalError)
    assert result.error.exit_code == 1
    assert result.error.context["exception"] == "ZeroDivisionError"


def test_item_failures_report_most_severe():
    report = Report("integrate", 1, {})
    jobs._collect(report, [
        jobs.JobResult("a", False, error=NoExtension("x")),
        jobs.JobResult("b", False, error=InternalError.wrap(ValueError("y"))),
        jobs.JobResult("c", False, error=OracleMismatch("z")),
    ])
    assert report.finish() == 1
    assert report.error["error"] == "InternalError"


def test_main_writes_identical_reports(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    argv = ["--command", "integrate", "--forms", DX_OVER_X, "--seed", "11", "--normalize-timings"]
    assert main(argv + ["--out", str(first)]) == 0
    assert main(argv + ["--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert json.loads(first.read_text(encoding="utf-8"))["seed"] == 11


def test_main_prints_to_stdout(capsys):
    assert main(["--command", "differentiate", "--forms", REGULARITY]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["command"] == "differentiate"
    assert doc["exit_code"] == 0
