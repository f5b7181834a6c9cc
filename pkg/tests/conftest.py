import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gyroverify import fields as F

settings.register_profile(
    "repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("repo")

MODEL_NAMES = sorted(F.BUILTINS)


@pytest.fixture(params=MODEL_NAMES)
def any_model(request):
    return F.builtin(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_criterion(number: int, passed: bool, detail: str):
    """Register one acceptance verdict line (printed again in the session summary)."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
