"""
输入文件加载
区域与形式的 JSON 文件 -> 领域对象，所有错误带 JSON pointer
"""

import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional, Union

from core.errors import GrammarError, RibbonError, SchemaError
from core.logger import get_logger
from forms.zoned_form import ZonedForm, form_from_json
from geometry.region import Region, region_from_json
from integration.quadrature import SimplexMap

logger = get_logger("cli")

SCHEMA_VERSION = 1

PathLike = Union[str, Path]


@dataclass
class SpaceFile:
    """区域文件：区域本身加上 oracle 步长与期望的 Betti 数"""
    path: str
    digest: str
    region: Region
    resolution: Optional[str] = None
    expected_betti: Optional[list[int]] = None
    slow: bool = False

    @property
    def label(self) -> str:
        return self.region.label or Path(self.path).stem


@dataclass
class FormEntry:
    """形式文件中的一项"""
    id: str
    form: ZonedForm
    simplices: list[tuple[Fraction, SimplexMap]] = field(default_factory=list)
    expect: dict = field(default_factory=dict)
    contract: bool = False
    note: str = ""


@dataclass
class FormsFile:
    path: str
    digest: str
    entries: list[FormEntry]


# ==================== 基础 ====================

def display_path(path: PathLike) -> str:
    """报告中使用的路径：项目内文件取相对路径"""
    p = Path(path)
    root = Path(__file__).resolve().parent.parent
    try:
        return p.resolve().relative_to(root).as_posix()
    except ValueError:
        return p.as_posix()


def load_json(path: PathLike) -> tuple[Any, str]:
    """
    读取 JSON 文件

    Returns:
        (文档, 原始字节的 sha256)

    Raises:
        SchemaError: 文件不存在或不是合法 JSON
    """
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as e:
        raise SchemaError(f"无法读取文件 {p}: {e.strerror}", "/", file=str(p)) from e
    digest = hashlib.sha256(raw).hexdigest()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise SchemaError(f"JSON 解析失败: {e}", "/", file=str(p)) from e
    _check_version(doc)
    return doc, digest


def _check_version(doc: Any) -> None:
    if isinstance(doc, dict) and "schema_version" in doc:
        if doc["schema_version"] != SCHEMA_VERSION:
            raise SchemaError(
                f"不支持的 schema_version {doc['schema_version']!r}（当前为 {SCHEMA_VERSION}）",
                "/schema_version",
            )


def _rational(value: Any, pointer: str) -> Fraction:
    if isinstance(value, bool):
        raise SchemaError("坐标必须是数值或有理字符串", pointer)
    try:
        return Fraction(str(value)) if isinstance(value, str) else Fraction(value).limit_denominator(10 ** 9)
    except (TypeError, ValueError, ZeroDivisionError) as e:
        raise SchemaError(f"非法数值 {value!r}", pointer) from e


# ==================== 区域 ====================

def _region(doc: Any, pointer: str = "") -> Region:
    try:
        return region_from_json(doc, pointer)
    except RibbonError as e:
        raise SchemaError(e.message, e.context.get("pointer", pointer)) from e
    except GrammarError as e:
        raise SchemaError(e.message, pointer) from e


def load_space(path: PathLike) -> SpaceFile:
    """
    区域文件

    {"schema_version": 1, "id", "n", "ribbons", "constraint"?,
     "oracle": {"resolution": "1/8"}?, "expect": {"betti": [...]}?, "slow": bool?}
    """
    doc, digest = load_json(path)
    region = _region(doc)
    resolution = None
    expected = None
    if isinstance(doc, dict):
        oracle = doc.get("oracle", {})
        if not isinstance(oracle, dict):
            raise SchemaError("oracle 必须是对象", "/oracle")
        if "resolution" in oracle:
            resolution = str(oracle["resolution"])
        expect = doc.get("expect", {})
        if not isinstance(expect, dict):
            raise SchemaError("expect 必须是对象", "/expect")
        if "betti" in expect:
            betti = expect["betti"]
            if not isinstance(betti, list) or not all(isinstance(b, int) and b >= 0 for b in betti):
                raise SchemaError("expect.betti 必须是非负整数列表", "/expect/betti")
            expected = list(betti)
    slow = bool(doc.get("slow", False)) if isinstance(doc, dict) else False
    logger.debug(f"加载区域 {display_path(path)}: {region.label} ({len(region.ribbons)} 个 ribbon)")
    return SpaceFile(display_path(path), digest, region, resolution, expected, slow)


def parse_space(path: PathLike) -> Region:
    """区域文件 -> Region"""
    return load_space(path).region


# ==================== 形式 ====================

def _simplices(doc: Any, pointer: str) -> list[tuple[Fraction, SimplexMap]]:
    if not isinstance(doc, list):
        raise SchemaError("simplices 必须是列表", pointer)
    out = []
    for i, sdoc in enumerate(doc):
        p = f"{pointer}/{i}"
        if not isinstance(sdoc, dict) or "vertices" not in sdoc:
            raise SchemaError("单形必须给出 vertices", p)
        verts = sdoc["vertices"]
        if not isinstance(verts, list) or not verts or not all(isinstance(v, list) for v in verts):
            raise SchemaError("vertices 必须是坐标列表的列表", f"{p}/vertices")
        dims = {len(v) for v in verts}
        if len(dims) != 1:
            raise SchemaError("顶点维数不一致", f"{p}/vertices")
        coords = [[_rational(x, f"{p}/vertices/{a}/{b}") for b, x in enumerate(v)] for a, v in enumerate(verts)]
        sign = sdoc.get("sign", 1)
        if sign not in (1, -1):
            raise SchemaError("sign 只能是 1 或 -1", f"{p}/sign")
        weight = _rational(sdoc.get("weight", 1), f"{p}/weight")
        out.append((weight, SimplexMap.affine(coords, sign)))
    return out


def _entry(doc: Any, pointer: str, index: int) -> FormEntry:
    try:
        form = form_from_json(doc, pointer)
    except RibbonError as e:
        raise SchemaError(e.message, e.context.get("pointer", f"{pointer}/region")) from e
    except GrammarError as e:
        raise SchemaError(e.message, pointer) from e
    simplices = _simplices(doc["simplices"], f"{pointer}/simplices") if "simplices" in doc else []
    for j, (_, sigma) in enumerate(simplices):
        if sigma.n != form.n:
            raise SchemaError(f"单形所在维数 {sigma.n} 与形式维数 {form.n} 不一致", f"{pointer}/simplices/{j}")
    expect = doc.get("expect", {})
    if not isinstance(expect, dict):
        raise SchemaError("expect 必须是对象", f"{pointer}/expect")
    return FormEntry(str(doc.get("id", f"form-{index}")), form, simplices, expect,
                     bool(doc.get("contract", False)), str(doc.get("note", "")))


def load_forms(path: PathLike) -> FormsFile:
    """
    形式文件：单个形式对象，或 {"schema_version": 1, "forms": [...]}

    每项可额外带 "id"、"simplices"（[{vertices, sign?, weight?}]）、"expect"、"contract"、"note"。
    """
    doc, digest = load_json(path)
    if isinstance(doc, dict) and "forms" in doc:
        items = doc["forms"]
        if not isinstance(items, list) or not items:
            raise SchemaError("forms 必须是非空列表", "/forms")
        entries = [_entry(item, f"/forms/{i}", i) for i, item in enumerate(items)]
    else:
        entries = [_entry(doc, "", 0)]
    logger.debug(f"加载形式 {display_path(path)}: {len(entries)} 项")
    return FormsFile(display_path(path), digest, entries)


def parse_form(path: PathLike) -> ZonedForm:
    """形式文件 -> 第一个 ZonedForm"""
    return load_forms(path).entries[0].form
