# tests/conftest.py

import numpy as np
import pytest

from spherekit.sphere_core import GridShape, lat_lon_to_xyz, pixel_centers, pixel_to_lat_lon


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def band_limited_field(shape: GridShape) -> np.ndarray:
    """Low-degree polynomial in (x, y, z) sampled at pixel centers; smooth across the poles."""
    u, v = pixel_centers(shape)
    x, y, z = lat_lon_to_xyz(*pixel_to_lat_lon(u, v, shape))
    return 1.0 + x + 0.5 * y * z + 0.3 * (3.0 * z * z - 1.0)


def float32_exact(values: np.ndarray) -> np.ndarray:
    """Rounds to values a PFM file stores without loss."""
    return np.asarray(values, dtype=np.float32).astype(np.float64)
