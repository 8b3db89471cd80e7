"""Shared fixtures.

Expensive artifacts (the interpolated material model, optimization runs)
are cached on disk across test sessions. Set LATBUCK_TEST_CACHE to move the
cache; delete the directory to force a rebuild.
"""

import json
import os

import numpy as np
import pytest

from latbuck import fem, geometry, homog, macro, matmodel

CACHE_DIR = os.environ.get(
    "LATBUCK_TEST_CACHE", os.path.join(os.path.dirname(__file__), "..", ".test_cache")
)


def cache_path(name):
    os.makedirs(CACHE_DIR, exist_ok=True)
    return os.path.join(CACHE_DIR, name)


def cached_json(name, builder):
    """JSON-roundtrippable results of expensive computations."""
    path = cache_path(name + ".json")
    if os.path.exists(path):
        with open(path) as fh:
            return json.load(fh)
    result = builder()
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(result, fh)
    os.replace(tmp, path)
    return result


def cached_array(name, builder):
    path = cache_path(name + ".npy")
    if os.path.exists(path):
        return np.load(path)
    arr = np.asarray(builder())
    np.save(path, arr)
    return arr


E0_MAT = fem.plane_stress_matrix(10.0, 0.3)


@pytest.fixture(scope="session")
def model():
    """Desk-scale material model; built once and reused from disk."""
    path = cache_path("model_desk.txt")
    if not os.path.exists(path):
        m, _ = matmodel.build_model()
        matmodel.save_model(m, path)
    return matmodel.load_model(path)


@pytest.fixture(scope="session")
def cell_03():
    """Unit cell solution at density 0.3, reused across micro-scale tests."""
    params = geometry.UnitCellParams(d=1.0, rho=0.3, r_rel=0.05)
    return homog.solve_cell_problems(params, 1, 1200, E0_MAT)


@pytest.fixture(scope="session")
def column_problem(model):
    """Desk-scale graded-lattice column used by the optimization tests."""
    return macro.make_column_problem(10, 52, 1.0, 5.2, total_load=1.0, material_mode="model", model=model, n_modes=6)
