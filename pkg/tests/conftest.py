import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lightning_vem.geometry import Polygon
from oracles import regular_polygon

settings.register_profile(
    "lvem", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("lvem")


@pytest.fixture(scope="session")
def square():
    return Polygon([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


@pytest.fixture(scope="session")
def pentagon():
    return regular_polygon(5, phase=np.pi / 2)


@pytest.fixture(scope="session")
def study_bases():
    """Fitted element bases of the default CVT meshes, shared by every module in the session.

    Keys follow ``run_convergence``: (n_cells, rng_seed, FitConfig).
    """
    return {}


def bases_for(cache, n_cells, rng_seed=0, cfg=None):
    from lightning_vem.analysis import cvt_mesh
    from lightning_vem.lightning import FitConfig, fit_mesh_bases

    cfg = FitConfig() if cfg is None else cfg
    key = (n_cells, rng_seed, cfg)
    if key not in cache:
        cache[key] = fit_mesh_bases(cvt_mesh(n_cells, rng_seed).polygons, cfg)
    return cvt_mesh(n_cells, rng_seed), cache[key]
