import pytest

from acceptance_log import RESULTS
from signals import synthetic_array


@pytest.fixture(scope="session")
def array_2s():
    return synthetic_array(2.0, 5, seed=3)


@pytest.fixture(scope="session")
def array_4s():
    return synthetic_array(4.0, 5, seed=4)


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
