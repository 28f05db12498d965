import numpy as np
import pytest

from hetsar import ModelSpec, SmoothConfig
from hetsar.design import assemble_design
from hetsar.sim import Scenario, simulate_dataset


@pytest.fixture(scope="session")
def small_sim():
    """A 7x7-grid heteroscedastic SAR draw with its design, for unit tests."""
    scenario = Scenario(layout={"kind": "grid_rook", "rows": 7, "cols": 7},
                        rho=0.3, replicates=1, seed=5)
    frame, W = simulate_dataset(scenario, 0)
    spec = ModelSpec(response="y", mean_linear=("x1", "x2"),
                     mean_smooth=(SmoothConfig("x3", num_basis=8),),
                     scale_linear=("x2",))
    return frame, W, spec


@pytest.fixture()
def small_design(small_sim):
    frame, _, spec = small_sim
    return assemble_design(spec, frame)


@pytest.fixture(scope="session")
def medium_fit():
    """A converged 12x12 fit with a smooth mean term and a linear scale term."""
    from hetsar.sim import fit_hamsar
    scenario = Scenario(layout={"kind": "grid_rook", "rows": 12, "cols": 12},
                        rho=0.4, replicates=1, seed=17)
    frame, W = simulate_dataset(scenario, 0)
    fit = fit_hamsar(frame, W)
    assert fit.converged
    return frame, W, fit


def rng_for(seed):
    return np.random.default_rng(seed)
