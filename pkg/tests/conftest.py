import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mixchain import models as md

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_modular(n, rng):
    return md.Modular(md.ModularFunction(rng.normal(0, 1.5, n)))


def random_ising(n, rng):
    return md.IsingComplete(n, float(rng.uniform(0.2, 2.0) * np.log(n)))


def random_facility(n, rng, L=None):
    L = L or int(rng.integers(2, 8))
    return md.FacilityLocation(rng.exponential(1.0, (n, L)) * (rng.random((n, L)) < 0.6))


def random_logdet(n, rng):
    G = rng.normal(size=(n, n + 2))
    K = G @ G.T / (n + 2)
    return md.LogDetDpp((K + K.T) / 2, float(rng.uniform(0.3, 1.5)))


def random_table(n, rng):
    return md.ExplicitTable(rng.normal(0, 2, 1 << n))


def random_diversity(n, rng):
    return md.FlDiversity(rng.normal(-1, 1, n), rng.exponential(1.0, (n, 4)))


FAMILIES = {
    "modular": random_modular,
    "ising": random_ising,
    "facility": random_facility,
    "logdet": random_logdet,
    "table": random_table,
    "diversity": random_diversity,
}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
