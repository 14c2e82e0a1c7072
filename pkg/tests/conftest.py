import pathlib

import pytest

from stiffcal import load_model

ROOT = pathlib.Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def model_path():
    return ROOT / "configs" / "kr270_like.yaml"


@pytest.fixture(scope="session")
def model(model_path):
    return load_model(model_path)


@pytest.fixture(scope="session")
def table1_path():
    return ROOT / "data" / "table1.csv"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance-criterion verdict lines even under capture."""
    lines = getattr(config, "_criterion_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
