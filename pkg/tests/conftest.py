import os
import re

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_RESULTS: dict[int, tuple[str, str, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if m is None or report.when == "teardown" or (report.when == "setup" and report.passed):
        return
    num = int(m.group(1))
    outcome = "PASS" if report.passed else "FAIL"
    name = report.nodeid.split("::")[-1]
    prev = ACCEPTANCE_RESULTS.get(num)
    if prev is not None and prev[0] == "FAIL":
        outcome, name = prev[0], prev[1]
    duration = report.duration + (float(prev[2][:-1]) if prev else 0.0)
    # the first failing test names the criterion
    ACCEPTANCE_RESULTS[num] = (outcome, name, f"{duration:.1f}s")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        outcome, name, dur = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"criterion {num:2d}: {outcome}  ({name}, {dur})")
