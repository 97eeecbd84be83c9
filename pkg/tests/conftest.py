"""Shared fixtures and the acceptance-line recorder.

Tuned maps cost seconds to tens of seconds, so the two reference maps
(golden mean and sqrt(2)-1, both at tol 1e-8) are session scoped and shared
between the module tests and the acceptance suite.  Tune wall times are
recorded because the tuning acceptance budget includes them.
"""

import dataclasses
import time
from fractions import Fraction

import pytest
from hypothesis import settings

from flatflow import cf, flatmap
from flatflow._precision import run_ladder

settings.register_profile("suite", deadline=None, max_examples=150)
settings.load_profile("suite")

ACCEPTANCE_LINES = []


def record_criterion(num: int, label: str, ok: bool, detail: str = "") -> bool:
    """One pass/fail line per acceptance criterion, echoed in the summary."""
    tag = "PASS" if ok else "FAIL"
    line = f"[criterion {num:02d}] {tag} {label}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tune_seconds():
    return {}


@pytest.fixture(scope="session")
def golden_target():
    return cf.target_from_quotients([1] * 45)


@pytest.fixture(scope="session")
def silver_target():
    # sqrt(2) - 1 = [2, 2, 2, ...]
    return cf.target_from_quotients([2] * 30)


@pytest.fixture(scope="session")
def golden_params(golden_target, tune_seconds):
    t0 = time.monotonic()
    params = flatmap.tune(Fraction(3, 2), Fraction(1, 5), golden_target,
                          Fraction(1, 10**8), precision_bits=128)
    tune_seconds["golden"] = time.monotonic() - t0
    return params


@pytest.fixture(scope="session")
def silver_params(silver_target, tune_seconds):
    t0 = time.monotonic()
    params = flatmap.tune(Fraction(3, 2), Fraction(1, 5), silver_target,
                          Fraction(1, 10**8), precision_bits=128)
    tune_seconds["silver"] = time.monotonic() - t0
    return params


@pytest.fixture(scope="session")
def golden_lift(golden_params):
    return flatmap.Lift(golden_params)


@pytest.fixture(scope="session")
def golden_qtable(golden_target):
    return cf.convergents(golden_target.cf)


@pytest.fixture(scope="session")
def golden_geometry(golden_params, golden_qtable):
    def attempt(bits):
        p = dataclasses.replace(golden_params, precision_bits=bits)
        return flatmap.preimage_geometry(flatmap.Lift(p), golden_qtable, 12)

    return run_ladder(attempt, golden_params.precision_bits, 4096)
