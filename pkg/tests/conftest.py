import sys
from importlib import resources
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from glmcausal.dag import parse_dag  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return Path(str(resources.files("glmcausal").joinpath("fixtures")))


@pytest.fixture(scope="session")
def fig1_path(fixture_dir) -> Path:
    return fixture_dir / "fig1.dag"


@pytest.fixture(scope="session")
def chain_path(fixture_dir) -> Path:
    return fixture_dir / "chain.dag"


@pytest.fixture(scope="session")
def fig1(fig1_path):
    return parse_dag(fig1_path.read_text())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
