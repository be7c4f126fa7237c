"""Pytest configuration and fixtures"""
import json
import os
import sys
import pytest
import tempfile
import shutil

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.core import BoxSpec, Family, ModelSpec, Potential, Seed, Site, ToleranceConfig


@pytest.fixture
def temp_dir():
    """Create temporary directory for tests"""
    temp_path = tempfile.mkdtemp()
    yield temp_path
    shutil.rmtree(temp_path, ignore_errors=True)


@pytest.fixture
def tol():
    """Default tolerances"""
    return ToleranceConfig()


@pytest.fixture
def seed():
    return Seed(1234)


@pytest.fixture
def z1():
    """Z^1 truncated to [-40, 40]"""
    return ModelSpec(Family.Z1, BoxSpec(40))


@pytest.fixture
def z2():
    """Z^2 truncated to the 21 x 21 box"""
    return ModelSpec(Family.Z2, BoxSpec(10))


@pytest.fixture
def fractional():
    return ModelSpec(Family.FRACTIONAL, BoxSpec(40), alpha=0.5)


@pytest.fixture
def hierarchical():
    """nu = 2, p = 1/2 (recurrent, s_h = 2), 2^6 sites"""
    return ModelSpec(Family.HIERARCHICAL, nu=2, p=0.5, levels=6)


@pytest.fixture
def transient_hierarchical():
    """nu = 4, p = 1/2 (transient, s_h = 4)"""
    return ModelSpec(Family.HIERARCHICAL, nu=4, p=0.5, levels=3)


@pytest.fixture
def chain_records():
    """Conservative generator of a 5-site path (rows sum to zero)"""
    records = [[[i], [i + 1], -1.0] for i in range(4)]
    records += [[[i], [i], 1.0 if i in (0, 4) else 2.0] for i in range(5)]
    return records


@pytest.fixture
def delta_z1():
    """Single delta of depth 1 at the origin of Z^1"""
    return Potential({Site((0,)): 1.0})


@pytest.fixture
def write_config(temp_dir):
    """Write a task config to the temp dir and return its path"""
    def _write(data, name='task.json'):
        path = os.path.join(temp_dir, name)
        with open(path, 'w') as f:
            json.dump(data, f)
        return path
    return _write


@pytest.fixture
def mock_database(temp_dir):
    """Create temporary test database"""
    db_path = os.path.join(temp_dir, 'test_runs.db')
    return db_path


@pytest.fixture(autouse=True)
def mock_env_vars(monkeypatch, temp_dir):
    """Mock environment variables for all tests"""
    env_vars = {
        'DATABASE_PATH': os.path.join(temp_dir, 'runs.db'),
        'OUTPUT_DIR': os.path.join(temp_dir, 'output'),
        'LOG_LEVEL': 'ERROR',  # Reduce noise in tests
    }

    for key, value in env_vars.items():
        monkeypatch.setenv(key, value)
    monkeypatch.delenv('SPECTRAL_SEED', raising=False)
    monkeypatch.setattr('config.SPECTRAL_SEED', None)
    monkeypatch.setattr('config.OUTPUT_DIR', env_vars['OUTPUT_DIR'])
    monkeypatch.setattr('config.DATABASE_PATH', env_vars['DATABASE_PATH'])
