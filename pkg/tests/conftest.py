import numpy as np
import pytest

from lpvtube.config import finite_step_sequence, load_config, mpc_config
from lpvtube.invariant import ContractiveSequence, maximal_contractive_set
from lpvtube.lpv import LpvSystem
from lpvtube.polytope import Polytope


def scalar_system(u_max=3.0, theta=(0.5, 1.5), x_max=2.0):
    """x+ = theta x + u with interval scheduling, input and state sets."""
    return LpvSystem(np.zeros((1, 1)), np.ones((1, 1, 1)), np.ones((1, 1)),
                     Polytope.box([theta[0]], [theta[1]]),
                     Polytope.box([-x_max], [x_max]), Polytope.box([-u_max], [u_max]))


@pytest.fixture(scope="session")
def example():
    return load_config("example5.cfg")


@pytest.fixture(scope="session")
def omega(example):
    return maximal_contractive_set(example.sys, example.lam)


@pytest.fixture(scope="session")
def max_seq(example, omega):
    return ContractiveSequence((omega,), example.lam)


@pytest.fixture(scope="session")
def fs_seq(example, omega):
    return finite_step_sequence(example, omega)


@pytest.fixture(scope="session")
def mpc_max(example, max_seq):
    return mpc_config(example, max_seq)


@pytest.fixture(scope="session")
def mpc_fs(example, fs_seq):
    return mpc_config(example, fs_seq)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
