"""
Shared test fixtures for all tests.
"""
import pytest
import json
import numpy as np

from qsup.config import DEFAULT_CONFIG
from qsup.schemas import SweepSpec

# Calibrated walk-off per block in units of sigma
ACCEPTANCE_D_OVER_SIGMA = 1.07


@pytest.fixture
def rng():
    """Seeded generator for randomized property tests"""
    return np.random.default_rng(12345)


@pytest.fixture
def d_over_sigma():
    return ACCEPTANCE_D_OVER_SIGMA


@pytest.fixture
def out_dir(tmp_path):
    """Temporary output directory"""
    path = tmp_path / "results"
    path.mkdir()
    return str(path)


@pytest.fixture
def small_spec(out_dir):
    """A sweep small enough for integration tests"""
    return SweepSpec(**{
        **DEFAULT_CONFIG,
        "psi_list": [45.0],
        "xi_list": [20.0, 45.0],
        "k_max": 2,
        "n_repetitions": 3,
        "shots_mean": 2e4,
        "seed": 7,
        "output_dir": out_dir,
    })


@pytest.fixture
def config_file(tmp_path):
    """Write a config mapping to a temporary JSON file and return its path"""
    def _write(data):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(data))
        return str(path)

    return _write
