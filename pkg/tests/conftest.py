import pytest

from slatefree.catalog import build_catalog
from slatefree.users import UserModel

LAYOUT_OVERRIDES = ((0, 5.0), (1, 0.0), (7, 4.0), (9, 8.0))
X_SET = (0, 1, 8)


@pytest.fixture(scope="session")
def layout_catalog():
    return build_catalog(10, LAYOUT_OVERRIDES, cost_seed=0)


def three_users(k=10, x=X_SET, alpha=0.75):
    return {
        "user1": UserModel.user1(k, alpha),
        "user2": UserModel.user2(k, alpha, x),
        "user3": UserModel.user3(k, x),
    }


@pytest.fixture(scope="session")
def layout_users():
    return three_users()


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
