import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_mesh(rng, n_faces=6, spread=1.0):
    """Disjoint random triangles with areas well above the degeneracy threshold."""
    from paramball.mesh import TriMesh, face_areas

    while True:
        V = rng.normal(scale=spread, size=(3 * n_faces, 3))
        F = np.arange(3 * n_faces).reshape(-1, 3)
        if face_areas(V, F).min() > 1e-2:
            return TriMesh(V, F, rng.uniform(0.2, 0.9, size=(n_faces, 3)))
