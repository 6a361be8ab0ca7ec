"""
测试公共夹具
每个测试使用独立的配置单例与临时数据库
"""

import pytest

from core.config import reset_config
from core.database import Database, reset_database

TEST_SEED = "20240601"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 需要完整上同调引擎或较细网格的测试")


@pytest.fixture(autouse=True)
def isolated_env(tmp_path, monkeypatch):
    monkeypatch.setenv("RIBBON_DERHAM_SEED", TEST_SEED)
    monkeypatch.delenv("RIBBON_DERHAM_CACHE", raising=False)
    monkeypatch.delenv("RIBBON_DERHAM_QUAD_ORDER", raising=False)
    monkeypatch.delenv("RIBBON_DERHAM_EPSILON", raising=False)
    monkeypatch.delenv("RIBBON_DERHAM_RESOLUTION", raising=False)
    reset_config()
    db = Database(tmp_path / "test.db")
    reset_database(db)
    yield db
    # 先还原环境变量再重建配置
    monkeypatch.undo()
    reset_config()
    reset_database()
