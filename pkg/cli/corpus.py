"""
内置样例库
fixtures/spaces 与 fixtures/forms 下的 JSON 文件
"""

from pathlib import Path

from cli.loader import FormsFile, SpaceFile, load_forms, load_space

FIXTURES_DIR = Path(__file__).resolve().parent.parent / "fixtures"
SPACES_DIR = FIXTURES_DIR / "spaces"
FORMS_DIR = FIXTURES_DIR / "forms"


def space_paths() -> list[Path]:
    """样例区域文件（按文件名排序）"""
    return sorted(SPACES_DIR.glob("*.json"))


def form_paths() -> list[Path]:
    return sorted(FORMS_DIR.glob("*.json"))


def load_spaces(*, include_slow: bool = True) -> list[SpaceFile]:
    spaces = [load_space(p) for p in space_paths()]
    if not include_slow:
        spaces = [s for s in spaces if not s.slow]
    return spaces


def space(name: str) -> SpaceFile:
    """按文件名（不含 .json）取样例区域"""
    path = SPACES_DIR / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"样例区域不存在: {name}")
    return load_space(path)


def forms(name: str) -> FormsFile:
    path = FORMS_DIR / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"样例形式不存在: {name}")
    return load_forms(path)

