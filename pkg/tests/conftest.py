import json

import pytest

from capqae.datasets import load_benchmark

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def benchmark():
    return load_benchmark()


@pytest.fixture
def record_acceptance():
    """Store a criterion outcome; the terminal summary prints one line each."""

    def record(number, name, passed, detail):
        ACCEPTANCE[number] = (name, bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, passed, detail = ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {name}: {json.dumps(detail)}")
