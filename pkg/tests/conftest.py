import numpy as np
import pytest

from seekmap.geometry import CameraModel, Pose


@pytest.fixture
def small_cam():
    """40x30, 90 degree horizontal FOV, cheap enough for per-test integration."""
    return CameraModel(40, 30, 20.0, 20.0, 20.0, 15.0, 0.1, 8.0)


@pytest.fixture
def identity_pose():
    return Pose.identity()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_pose(rng) -> Pose:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Pose(q, rng.uniform(-5, 5, size=3))
