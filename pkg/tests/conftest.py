import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def pytest_addoption(parser):
    parser.addoption(
        "--run-expensive", action="store_true", default=False,
        help="run long Monte Carlo checks (N = 1e8)",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-expensive"):
        return
    skip = pytest.mark.skip(reason="needs --run-expensive")
    for item in items:
        if "expensive" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def paper_matrix():
    return np.array([[3.0, 3.0, 3.0], [-2.0, -2.0, 4.0], [1.0, -1.0, 0.0]])
