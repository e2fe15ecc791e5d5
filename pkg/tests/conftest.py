import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def uniform(n, seed):
    return np.random.default_rng(seed).random((n, 2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report one line each; printed at the end of the run
ACCEPTANCE: dict = {}


def record(criterion: str, status: str, detail: str):
    ACCEPTANCE[criterion] = (status, detail)
    print(f"[criterion {criterion}] {status}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("ab")), k)):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:<3} {status:<4} {detail}")
