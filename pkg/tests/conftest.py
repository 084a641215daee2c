from pathlib import Path

import pytest

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def configs_dir():
    return CONFIGS


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
