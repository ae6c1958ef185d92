"""Shared parameter sets and the acceptance-summary hook."""
import math

import pytest

from cdroop.model import ControllerParams, FilterAndLoops, GridLink, SystemParams, impedance_angle

W0 = 2 * math.pi * 50.0


def case_one(v_g=1.0, eta=0.02, alpha=1.0, r_g=0.08, **filt):
    """Inductive-resistive grid with the shared filter and loop gains."""
    return SystemParams(GridLink(r_g, 0.2, v_g),
                        ControllerParams(eta * W0, alpha, impedance_angle(r_g, 0.2), 0.5, 0.2, 1.0),
                        FilterAndLoops(**filt))


def case_three(v_g=0.5, alpha=3.0):
    """Weak resistive grid, large voltage gain."""
    return SystemParams(GridLink(0.8, 0.8, v_g),
                        ControllerParams(0.08 * W0, alpha, math.pi / 4, 0.8, -0.2, 1.0))


def weak_grid_counterexample():
    return SystemParams(GridLink(0.4, 0.4, 0.1),
                        ControllerParams(0.08 * W0, 1.0, math.pi / 2, 0.0, 0.0, 1.0))


def off_grid(alpha=2.0, eta=0.02):
    return SystemParams(GridLink(0.0, 1.0, 0.0),
                        ControllerParams(eta * W0, alpha, math.pi / 2, 0.0, 0.0, 1.0))


@pytest.fixture
def p_case1():
    return case_one()


@pytest.fixture
def p_case1_dip():
    return case_one(v_g=0.5)


@pytest.fixture
def p_case3():
    return case_three()


@pytest.fixture
def p_ex3():
    return weak_grid_counterexample()


# acceptance lines collected during the run and printed at the end
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    def record(label, ok, detail=""):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}".rstrip())
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
