import numpy as np
import pytest

from hogwild import gen_cut, gen_mc, gen_svm


def brute_stats(n, edges):
    """Omega, Delta, rho by direct enumeration over all edge pairs."""
    E = len(edges)
    sets = [set(e) for e in edges]
    omega = max(len(s) for s in sets)
    deg = [sum(v in s for s in sets) for v in range(n)]
    hits = [sum(1 for t in sets if s & t) for s in sets]
    return omega, max(deg) / E, max(hits) / E


@pytest.fixture(scope="session")
def small_svm():
    return gen_svm(60, 15, 3, noise=0.1, seed=11, lam=0.5).problem


@pytest.fixture(scope="session")
def small_mc():
    return gen_mc(12, 10, 2, 0.5, seed=5, mu=0.1).problem


@pytest.fixture(scope="session")
def small_cut():
    return gen_cut(N=4, D=3, terminals=6, seed=2).problem


@pytest.fixture(scope="session")
def families(small_svm, small_mc, small_cut):
    return {"svm": small_svm, "mc": small_mc, "cut": small_cut}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
