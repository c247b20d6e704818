import math

import pytest

from kuramoto_pls import bicauchy, distributions, pls


@pytest.fixture(scope="session")
def cauchy1():
    return distributions.cauchy(1.0, 0.0)


@pytest.fixture(scope="session")
def cauchy_k4(cauchy1):
    return pls.solve_rs(cauchy1, 4.0)[0]


@pytest.fixture(scope="session")
def gauss_2kc():
    d = distributions.gaussian(1.0)
    return pls.solve_rs(d, 2 * d.critical_coupling())[0]


@pytest.fixture(scope="session")
def bicauchy_k8():
    return {b.label: b for b in bicauchy.solve_branches(1.0, 2.0, 8.0)}


def cauchy_rs(delta, K):
    return math.sqrt(1 - 2 * delta / K)
