import pytest

from vecsens.array_model import ArrayGeometry, SensorKind

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES: list[tuple[str, bool, str]] = []


def record(criterion: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE_LINES.append((criterion, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {crit}: {detail}")


@pytest.fixture
def tripole4():
    return ArrayGeometry.linear(SensorKind.TRIPOLE, 4)


@pytest.fixture
def tripole5():
    return ArrayGeometry.linear(SensorKind.TRIPOLE, 5)


@pytest.fixture
def crossed5():
    return ArrayGeometry.linear(SensorKind.CROSSED_DIPOLE, 5)
