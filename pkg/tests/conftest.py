import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from meponmf.datagen import GammaSpec, clustered_synthetic, flat_spec, gamma_synthetic, hierarchical_spec

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

WELL_SEPARATED = np.array([[1.0, 0.1, 0.1], [0.1, 1.0, 0.1], [0.1, 0.1, 1.0]])

_acceptance = {}


@pytest.fixture(scope="session")
def gamma_bench():
    return gamma_synthetic(GammaSpec(10, 1000, seed=1))


@pytest.fixture(scope="session")
def three_clusters():
    return clustered_synthetic(flat_spec(WELL_SEPARATED, points_per_cluster=30, spread=0.05, seed=3))


@pytest.fixture(scope="session")
def hierarchical():
    return clustered_synthetic(hierarchical_spec(seed=0))


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" in report.nodeid and (
        report.when == "call" or report.outcome != "passed"
    ):
        name = report.nodeid.split("::")[-1].removeprefix("test_criterion_")
        _acceptance[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance, key=lambda s: int(s.split("_")[0])):
        num, _, label = name.partition("_")
        terminalreporter.write_line(f"criterion {num:>2} {label.replace('_', ' ')}: {_acceptance[name]}")
