from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from optcd.models import AR1CorrShift, IIDBernoulli, IIDExponentialRate, IIDNormalShift
from optcd.weights import builtin

settings.register_profile("optcd", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("optcd")

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE: dict = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def normal_model():
    return IIDNormalShift(0.0, 1.0, 1.0)


@pytest.fixture
def small_shift_model():
    return IIDNormalShift(0.0, 0.2, 1.0)


@pytest.fixture
def exp_model():
    return IIDExponentialRate(1.0, 2.0)


@pytest.fixture
def ar1_model():
    return AR1CorrShift(0.5, 0.1, 1.0)


@pytest.fixture
def bern_model():
    return IIDBernoulli(0.5, 0.75)


ALL_PAIR_IDS = ("M1", "M2", "M3", "M4", "M5", "M6", "M7", "M8")


def make_pair(pid: str):
    return builtin(pid, r=0.0) if pid == "M5" else builtin(pid)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
