import numpy as np
import pytest

from src.assembly import BCs, LoadProtocol
from src.dynamics import simulate
from src.materials import LinearElastic
from src.mesh import truss_mesh

collect_ignore = ["examples"]

TRUSS_E = 200e9


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run end-to-end reproductions")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end reproduction, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def linear_truss():
    """(mesh, bcs, trajectory) of a 4-element elastic truss pulled at its tip."""
    mesh = truss_mesh(4, 1.0, 0.005, 8000.0)
    bcs = BCs(clamped=("left",), loaded=("right",), fixed_components=(1,))
    protocol = LoadProtocol(p=(2e6, 0.0), T=0.2, label="case0")
    traj = simulate(mesh, bcs, protocol, LinearElastic([[TRUSS_E]]), 30, 1e-3)
    return mesh, bcs, traj
