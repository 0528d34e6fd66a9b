"""Shared fixtures and the acceptance-criteria summary printed after the run."""

import numpy as np
import pytest

from cbfvol.distributions import make_rng
from cbfvol.model import CbfSpec, simulate

# criterion number -> (title, passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def record(number, title, passed, detail=""):
    ACCEPTANCE[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        tag = "PASS" if passed else "FAIL"
        tr.write_line(f"[{tag}] {number:2d}. {title}" + (f" -- {detail}" if detail else ""))
    n_pass = sum(v[1] for v in ACCEPTANCE.values())
    tr.write_line(f"{n_pass}/{len(ACCEPTANCE)} acceptance criteria passed")


OMEGA = np.array([[0.5, 0.2, 0.3], [0.2, 0.5, 0.25], [0.3, 0.25, 0.5]])


@pytest.fixture(scope="session")
def sim_spec():
    return CbfSpec.diagonal(OMEGA, [[0.4, 0.55, 0.5]], [[0.4, 0.3, 0.5]], (10.0, 8.0))


@pytest.fixture(scope="session")
def sim_series(sim_spec):
    return simulate(sim_spec, 800, rng=make_rng(11))


@pytest.fixture
def rng():
    return make_rng(1234)
