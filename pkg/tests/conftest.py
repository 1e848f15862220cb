import numpy as np
import pytest

from drifttrack.bounds import BoundParams, make_bound
from drifttrack.problem import make_problem, regression_constants


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def problem():
    return make_problem()


@pytest.fixture
def global_params():
    return regression_constants(2, 0.5, 0.5, 20.0)


@pytest.fixture
def isa_bound(global_params):
    return make_bound("inverse_step_average", global_params)


@pytest.fixture
def ll_bound(global_params):
    return make_bound("lipschitz_lyapunov", global_params)


def three_se(samples):
    samples = np.asarray(samples, dtype=float)
    return 3.0 * samples.std(ddof=1) / np.sqrt(samples.shape[0])


def small_params(m=0.25, A=0.25, B=0.25, M=None, diam=20.0):
    return BoundParams(m=m, A=A, B=B, M=m if M is None else M, diam=diam)


ACCEPTANCE_LINES = []


def report(label, ok, detail):
    line = f"{label}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
