"""Pytest configuration and fixtures."""

import os
import tempfile

import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-channel acceptance runs")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def test_db(monkeypatch):
    """Create a temporary ledger database and patch DB_PATH to use it."""
    fd, db_path = tempfile.mkstemp(suffix=".db")
    os.close(fd)

    monkeypatch.setattr("src.config.DB_PATH", db_path)
    monkeypatch.setattr("src.database.DB_PATH", db_path)

    from src.database import init_db

    init_db()

    yield db_path

    if os.path.exists(db_path):
        os.remove(db_path)


@pytest.fixture
def params():
    """Default coefficients (stiff pulse regime)."""
    from src.model import ModelParams

    return ModelParams()


@pytest.fixture
def small_grid():
    from src.model import Grid1D

    return Grid1D(L=20.0, n_cells=200)


@pytest.fixture
def stiff_phi():
    from src.model import ResponseFunction

    return ResponseFunction(shape="arctan", delta=1e-3)
