import numpy as np
import pytest

from quasistatic.model import Liouvilleans, default_spec, tracking_spec

# Acceptance results collected by tests/test_acceptance.py and printed once
# at the end of the session, one line per criterion.
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def default_L():
    return Liouvilleans(default_spec())


@pytest.fixture(scope="session")
def tracking_L():
    return Liouvilleans(tracking_spec())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {text}")
