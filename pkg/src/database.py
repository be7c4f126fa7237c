"""
Run ledger: every CLI run and every bound it evaluated
"""
import json
import logging
import os
import sqlite3
from typing import Dict, List, Optional

import config

logger = logging.getLogger(__name__)


class RunLedger:
    """SQLite record of toolkit runs"""

    def __init__(self, db_path: Optional[str] = None):
        self.db_path = db_path or config.DATABASE_PATH
        self._ensure_directory()
        self._create_tables()

    def _ensure_directory(self):
        directory = os.path.dirname(self.db_path)
        if directory:
            os.makedirs(directory, exist_ok=True)

    def _create_tables(self):
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()

            cursor.execute('''
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    task TEXT NOT NULL,
                    inputs_digest TEXT NOT NULL,
                    seed INTEGER,
                    status TEXT NOT NULL,
                    exit_code INTEGER NOT NULL,
                    wall_time REAL,
                    report_path TEXT,
                    message TEXT,
                    started_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
            ''')

            cursor.execute('''
                CREATE TABLE IF NOT EXISTS bounds (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER NOT NULL,
                    bound_id TEXT NOT NULL,
                    value REAL,
                    n0 INTEGER,
                    constants TEXT,
                    FOREIGN KEY (run_id) REFERENCES runs (id)
                )
            ''')

            conn.commit()
            logger.debug("Ledger tables created/verified")

    def record_run(self, task: str, inputs_digest: str, seed: Optional[int], exit_code: int,
                   wall_time: float, report_path: Optional[str] = None,
                   message: Optional[str] = None) -> int:
        status = 'ok' if exit_code == 0 else 'failed'
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()
            cursor.execute('''
                INSERT INTO runs (task, inputs_digest, seed, status, exit_code, wall_time,
                                  report_path, message)
                VALUES (?, ?, ?, ?, ?, ?, ?, ?)
            ''', (task, inputs_digest, seed, status, exit_code, wall_time, report_path, message))
            conn.commit()
            return cursor.lastrowid

    def record_bound(self, run_id: int, bound: Dict, n0: Optional[int] = None) -> int:
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()
            cursor.execute('''
                INSERT INTO bounds (run_id, bound_id, value, n0, constants)
                VALUES (?, ?, ?, ?, ?)
            ''', (
                run_id,
                bound['bound_id'],
                bound['value'],
                n0,
                json.dumps(bound.get('constants', {}), sort_keys=True),
            ))
            conn.commit()
            return cursor.lastrowid

    def get_recent_runs(self, limit: int = 20) -> List[Dict]:
        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            cursor = conn.cursor()
            cursor.execute('''
                SELECT * FROM runs
                ORDER BY id DESC
                LIMIT ?
            ''', (limit,))
            return [dict(row) for row in cursor.fetchall()]

    def get_runs_by_digest(self, inputs_digest: str) -> List[Dict]:
        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            cursor = conn.cursor()
            cursor.execute('SELECT * FROM runs WHERE inputs_digest = ? ORDER BY id',
                           (inputs_digest,))
            return [dict(row) for row in cursor.fetchall()]

    def get_bounds(self, run_id: int) -> List[Dict]:
        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            cursor = conn.cursor()
            cursor.execute('SELECT * FROM bounds WHERE run_id = ? ORDER BY id', (run_id,))
            rows = [dict(row) for row in cursor.fetchall()]
        for row in rows:
            row['constants'] = json.loads(row['constants'] or '{}')
        return rows

    def get_summary(self) -> Dict:
        """Run counts by status and the tightest recorded bound slack"""
        with sqlite3.connect(self.db_path) as conn:
            cursor = conn.cursor()
            cursor.execute('''
                SELECT
                    COUNT(*) as total_runs,
                    SUM(CASE WHEN exit_code = 0 THEN 1 ELSE 0 END) as ok_runs,
                    SUM(CASE WHEN exit_code = 3 THEN 1 ELSE 0 END) as invariant_failures
                FROM runs
            ''')
            row = cursor.fetchone()
            cursor.execute('SELECT MIN(value - n0) FROM bounds WHERE n0 IS NOT NULL')
            slack = cursor.fetchone()[0]
            return {
                'total_runs': row[0] or 0,
                'ok_runs': row[1] or 0,
                'invariant_failures': row[2] or 0,
                'min_bound_slack': slack,
            }
