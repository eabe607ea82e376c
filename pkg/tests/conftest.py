import numpy as np
import pytest

from terrainopt.kinematics import VehicleGeometry
from terrainopt.terrain import PlaneTerrain, fit_terrain, synth_terrain

# filled by test_acceptance; printed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def geom():
    return VehicleGeometry()


@pytest.fixture(scope="session")
def flat():
    return PlaneTerrain()


@pytest.fixture(scope="session")
def wavy():
    """Fitted sinusoidal terrain over a 7 m patch."""
    cloud = synth_terrain("sinusoidal", extent=14.0, amplitude=0.3, wavelength=4.0)
    return fit_terrain(cloud, 100, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
