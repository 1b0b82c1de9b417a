import json

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import gridclust as gc

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def kundur_path():
    return gc.example_path("kundur4.json")


@pytest.fixture(scope="session")
def kundur(kundur_path):
    return gc.load_grid(kundur_path)


@pytest.fixture(scope="session")
def kundur_doc(kundur_path):
    return json.loads(kundur_path.read_text())


@pytest.fixture(scope="session")
def kundur_net(kundur):
    return gc.to_per_unit(kundur, require_proportional=True)


@pytest.fixture(scope="session")
def kundur_reduced(kundur_net):
    return gc.reduce_network(kundur_net)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pair_grid(m1=0.03, m2=0.03, length=3.0, r=0.2222, l_h=0.00051, k=3.0):
    """Two inverters joined by a single line."""
    from gridclust.grid_model import BusSpec, GridSpec, InverterSpec, LineSpec

    return GridSpec(
        omega0_rad_s=2 * np.pi * 50,
        base_voltage_V=230.0,
        base_power_VA=1e4,
        buses=(
            BusSpec("1", InverterSpec(m1, m1 / k)),
            BusSpec("2", InverterSpec(m2, m2 / k)),
        ),
        lines=(LineSpec("1", "2", length, r, l_h),),
    )


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
