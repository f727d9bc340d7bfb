import numpy as np
import pytest

from oatbec.config import preset
from oatbec.meanfield import ground_state


def pytest_addoption(parser):
    parser.addoption("--run-extended", action="store_true", default=False,
                     help="run the full 3D reproductions (tens of minutes to hours)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-extended"):
        return
    skip = pytest.mark.skip(reason="extended reproduction; pass --run-extended")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def ci_small():
    """(config, params, grid, ground state) for the desk-scale preset."""
    cfg = preset("ci-small")
    params = cfg.physics.build()
    grid = cfg.grid.build()
    return cfg, params, grid, ground_state(params, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
