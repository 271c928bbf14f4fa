import numpy as np
import pytest

from divpop.mdp import random_mdp

_ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mdp5():
    return random_mdp(5, 3, gamma=0.9, rng=7)


def random_population(rng, n, s, concentration=1.0):
    return rng.dirichlet(np.full(s, concentration), size=n)


def entropy(p):
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def mi_from_entropies(occs, prior):
    """Independent oracle: I(s;z) = H(rho) - sum_z p(z) H(rho_z)."""
    avg = prior @ occs
    return entropy(avg) - sum(prior[z] * entropy(occs[z]) for z in range(len(occs)))


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""

    def report(name, passed, detail=""):
        _ACCEPTANCE.append((name, bool(passed), detail))
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
