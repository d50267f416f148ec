import pytest

from vslcav.corridor import Gantry, build_corridor


@pytest.fixture
def fig8_geom():
    gantries = [Gantry("G64.4", 64.4), Gantry("G63.85", 63.85), Gantry("G63.2", 63.2)]
    return build_corridor(gantries, 65.0, 62.5)


@pytest.fixture
def chain_geom():
    gantries = [Gantry(f"G{mm:.1f}", mm) for mm in (59.1, 58.6, 58.1, 57.6, 57.1)]
    return build_corridor(gantries, 60.0, 56.5)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
