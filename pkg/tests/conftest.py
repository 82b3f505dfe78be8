import sys
from pathlib import Path

import pytest

HERE = Path(__file__).parent
SAMPLES = HERE.parent / "samples"
sys.path.insert(0, str(HERE))


@pytest.fixture
def samples() -> Path:
    return SAMPLES


def sample_text(name: str) -> str:
    return (SAMPLES / name).read_text()


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
