from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from scorefold.io import parse_pdb_ca

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture(scope="session")
def capsid64():
    """First 64 residues of chain A of 1A8O, an HIV capsid domain."""
    return parse_pdb_ca(DATA / "1A8O.pdb", "A").crop(0, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
