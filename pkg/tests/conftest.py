import warnings

import pytest

from forcedwell.jump_model import build_rate_profile
from forcedwell.potential import make_tilted_quartic

ACCEPTANCE_LINES: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def symmetric():
    return make_tilted_quartic(1.0, 0.0)


@pytest.fixture(scope="session")
def tilted():
    return make_tilted_quartic(1.0, 0.1)


@pytest.fixture(scope="session")
def tilted_profile(tilted):
    return build_rate_profile(tilted, 0.45, 0.2)


@pytest.fixture(autouse=True)
def _quiet_truncation():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=UserWarning)
        yield
