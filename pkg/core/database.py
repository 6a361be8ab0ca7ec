"""
ribbon-derham SQLite 数据库管理
包含 oracle 结果缓存与运行日志两张表
"""

import json
import sqlite3
from datetime import datetime
from pathlib import Path
from typing import Optional
from contextlib import contextmanager

from core.config import get_config
from core.logger import get_logger

logger = get_logger("database")

# 数据库文件路径
DB_DIR = Path(__file__).parent.parent / "data"
DB_FILE = DB_DIR / "ribbon_derham.db"


# 建表 SQL
CREATE_TABLES_SQL = """
-- oracle 结果缓存表
CREATE TABLE IF NOT EXISTS oracle_cache (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    region_key TEXT NOT NULL,
    resolution TEXT NOT NULL,
    betti TEXT NOT NULL,
    cycles TEXT NOT NULL,
    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
    UNIQUE(region_key, resolution)
);

-- 运行日志表
CREATE TABLE IF NOT EXISTS run_log (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    command TEXT NOT NULL,
    input_hash TEXT NOT NULL,
    exit_code INTEGER NOT NULL,
    report_hash TEXT,
    run_time TIMESTAMP NOT NULL,
    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
);

-- 创建索引
CREATE INDEX IF NOT EXISTS idx_oracle_region ON oracle_cache(region_key, resolution);
CREATE INDEX IF NOT EXISTS idx_run_command ON run_log(command, run_time);
"""


class Database:
    """数据库管理类"""

    def __init__(self, db_path: Optional[Path] = None):
        self.db_path = Path(db_path) if db_path is not None else DB_FILE
        self.db_path.parent.mkdir(parents=True, exist_ok=True)
        self._init_db()

    def _init_db(self):
        """初始化数据库"""
        with self.get_connection() as conn:
            conn.executescript(CREATE_TABLES_SQL)
            logger.debug(f"数据库初始化完成: {self.db_path}")

    @contextmanager
    def get_connection(self):
        """获取数据库连接（上下文管理器）"""
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        try:
            yield conn
            conn.commit()
        except Exception as e:
            conn.rollback()
            logger.error(f"数据库操作失败: {e}")
            raise
        finally:
            conn.close()

    # ==================== oracle 缓存操作 ====================

    def save_oracle_result(self, region_key: str, resolution: str, betti: list[int], cycles: list):
        """保存 oracle 结果（Betti 数与导出的循环）"""
        with self.get_connection() as conn:
            conn.execute(
                """
                INSERT OR REPLACE INTO oracle_cache (region_key, resolution, betti, cycles)
                VALUES (?, ?, ?, ?)
                """,
                (region_key, resolution, json.dumps(betti), json.dumps(cycles, sort_keys=True))
            )
        logger.debug(f"缓存 oracle 结果: {region_key[:12]} h={resolution} b={betti}")

    def get_oracle_result(self, region_key: str, resolution: str) -> Optional[tuple[list[int], list]]:
        """读取 oracle 缓存，未命中返回 None"""
        with self.get_connection() as conn:
            cursor = conn.execute(
                """
                SELECT betti, cycles FROM oracle_cache
                WHERE region_key = ? AND resolution = ?
                """,
                (region_key, resolution)
            )
            row = cursor.fetchone()
            if row:
                return json.loads(row["betti"]), json.loads(row["cycles"])
            return None

    # ==================== 运行日志操作 ====================

    def save_run_log(self, command: str, input_hash: str, exit_code: int, report_hash: Optional[str] = None):
        """保存运行日志"""
        with self.get_connection() as conn:
            conn.execute(
                """
                INSERT INTO run_log (command, input_hash, exit_code, report_hash, run_time)
                VALUES (?, ?, ?, ?, ?)
                """,
                (command, input_hash, exit_code, report_hash, datetime.now().isoformat())
            )
        logger.info(f"保存运行日志: {command} -> exit {exit_code}")

    def get_run_logs(self, command: Optional[str] = None, limit: int = 20) -> list[dict]:
        """获取最近的运行日志（按时间降序）"""
        with self.get_connection() as conn:
            if command:
                cursor = conn.execute(
                    "SELECT * FROM run_log WHERE command = ? ORDER BY id DESC LIMIT ?",
                    (command, limit)
                )
            else:
                cursor = conn.execute("SELECT * FROM run_log ORDER BY id DESC LIMIT ?", (limit,))
            return [dict(row) for row in cursor]


# 全局数据库实例
_db: Optional[Database] = None


def get_database() -> Database:
    """获取数据库单例"""
    global _db
    if _db is None:
        path = get_config().storage.db_path
        _db = Database(Path(path) if path else None)
    return _db


def reset_database(db: Optional[Database] = None) -> None:
    """替换数据库单例（测试使用）"""
    global _db
    _db = db
