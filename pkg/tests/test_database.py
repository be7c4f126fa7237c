"""Tests for RunLedger"""
import pytest
import os
import sqlite3

from src.database import RunLedger


class TestRunLedger:

    @pytest.fixture
    def ledger(self, mock_database):
        """Create test ledger instance"""
        return RunLedger(db_path=mock_database)

    def test_initialization(self, ledger):
        """Test ledger initialization"""
        assert os.path.exists(ledger.db_path)

    def test_tables_created(self, ledger):
        """Test all tables are created"""
        with sqlite3.connect(ledger.db_path) as conn:
            cursor = conn.cursor()
            cursor.execute("SELECT name FROM sqlite_master WHERE type='table'")
            tables = [row[0] for row in cursor.fetchall()]

            assert 'runs' in tables
            assert 'bounds' in tables

    def test_nested_directory_created(self, temp_dir):
        path = os.path.join(temp_dir, 'a', 'b', 'runs.db')
        RunLedger(db_path=path)
        assert os.path.exists(path)

    def test_record_run(self, ledger):
        """Test recording a run"""
        run_id = ledger.record_run('count', 'd' * 64, 7, 0, 0.5, 'out.json')

        assert isinstance(run_id, int)
        assert run_id > 0

        runs = ledger.get_recent_runs()
        assert runs[0]['status'] == 'ok'
        assert runs[0]['seed'] == 7
        assert runs[0]['report_path'] == 'out.json'

    def test_failed_status(self, ledger):
        """Test nonzero exit codes are failures"""
        ledger.record_run('verify', 'abc', 0, 3, 1.0, message='criterion 1 failed')
        run = ledger.get_recent_runs(limit=1)[0]
        assert run['status'] == 'failed'
        assert run['message'] == 'criterion 1 failed'

    def test_recent_runs_newest_first(self, ledger):
        for i in range(3):
            ledger.record_run('count', f'digest{i}', i, 0, 0.1)
        runs = ledger.get_recent_runs(limit=2)
        assert [r['inputs_digest'] for r in runs] == ['digest2', 'digest1']

    def test_runs_by_digest(self, ledger):
        ledger.record_run('count', 'same', 1, 0, 0.1)
        ledger.record_run('bound', 'other', 1, 0, 0.1)
        ledger.record_run('count', 'same', 1, 2, 0.1)
        runs = ledger.get_runs_by_digest('same')
        assert len(runs) == 2
        assert [r['exit_code'] for r in runs] == [0, 2]

    def test_record_bound(self, ledger):
        """Test bound constants survive the JSON column"""
        run_id = ledger.record_run('bound', 'abc', 1, 0, 0.1)
        bound = {'bound_id': 'z2_log', 'value': 3.5,
                 'constants': {'C': {'value': 0.4, 'provenance': 'calibrated'}}}
        ledger.record_bound(run_id, bound, n0=2)

        rows = ledger.get_bounds(run_id)
        assert len(rows) == 1
        assert rows[0]['bound_id'] == 'z2_log'
        assert rows[0]['n0'] == 2
        assert rows[0]['constants']['C']['provenance'] == 'calibrated'

    def test_get_summary(self, ledger):
        """Test run counts and the tightest slack"""
        ok = ledger.record_run('bound', 'a', 1, 0, 0.1)
        ledger.record_run('verify', 'b', 1, 3, 0.1)
        ledger.record_bound(ok, {'bound_id': 'bargmann_general', 'value': 4.0}, n0=3)
        ledger.record_bound(ok, {'bound_id': 'clr', 'value': 6.0}, n0=3)
        ledger.record_bound(ok, {'bound_id': 'lt_transient', 'value': 1.0})

        summary = ledger.get_summary()

        assert summary['total_runs'] == 2
        assert summary['ok_runs'] == 1
        assert summary['invariant_failures'] == 1
        assert summary['min_bound_slack'] == 1.0

    def test_empty_summary(self, ledger):
        summary = ledger.get_summary()
        assert summary['total_runs'] == 0
        assert summary['min_bound_slack'] is None
