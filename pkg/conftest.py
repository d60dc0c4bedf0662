import pytest

from quantum_model import ExperimentParams


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running model reproduction checks")


@pytest.fixture(autouse=True)
def serial_workers(monkeypatch):
    monkeypatch.setenv("WFH_SIM_JOBS", "1")


@pytest.fixture
def table1():
    return ExperimentParams.from_preset("table1")


@pytest.fixture
def ideal():
    return ExperimentParams.ideal()
