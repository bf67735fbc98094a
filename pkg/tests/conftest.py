import numpy as np
import pytest

from twrqcd import param_kernels as pk


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def iid1():
    return pk.iid_gaussian(1)


@pytest.fixture(scope="session")
def linear2():
    return pk.linear_gaussian_ar(2)


@pytest.fixture(scope="session")
def mlp4():
    return pk.mlp_gaussian(dim=4, seed=7)


@pytest.fixture(scope="session", params=["iid", "linear", "mlp"])
def family(request, iid1, linear2, mlp4):
    return {"iid": iid1, "linear": linear2, "mlp": mlp4}[request.param]


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    """Remember one acceptance verdict; all of them are printed in the terminal summary."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
