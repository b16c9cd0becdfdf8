"""Shared fixtures: benchmark system, scalar toy, random feasible population."""

import numpy as np
import pytest

from stoch_h2hinf import (
    CostSpec,
    SdltiSystem,
    f16_system,
    random_feasible_system,
    solve_coupled_gare,
)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def f16():
    return f16_system()


@pytest.fixture(scope="session")
def f16_solution(f16):
    sys_, cost = f16
    return solve_coupled_gare(sys_, cost, tol=1e-12, max_iters=10000)


@pytest.fixture(scope="session")
def scalar_sys():
    """Hand-checkable scalar plant: a1=0.8, a2=0.1, b1=0.5, c1=0.2, c2=0.05."""
    return SdltiSystem([[0.8]], [[0.1]], [[0.5]], [[0.2]], [[0.05]])


@pytest.fixture(scope="session")
def scalar_cost():
    """gamma=2, Q=1."""
    return CostSpec(2.0, [[1.0]])


@pytest.fixture(scope="session")
def random_population():
    """20 random feasible systems, n <= 3, fixed generator seed."""
    rng = np.random.default_rng(20240817)
    out = []
    for i in range(20):
        n = 2 + (i % 2)
        out.append(random_feasible_system(rng, n=n))
    return out
