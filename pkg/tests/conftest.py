import numpy as np
import pytest

from splatuq.presets import get_preset
from splatuq.renderer import CameraPose
from splatuq.scene import GaussianSplat, SceneParams


def random_scene(rng, n_splats=3, n_objects=2, spread=0.4, big=True):
    """Random anisotropic scene. ``big`` splats fill a 32x32, zoom-8 view without far tails."""
    splats = []
    for i in range(n_splats):
        base = np.log(rng.uniform(0.9, 1.6, 2)) if big else np.log(rng.uniform(0.2, 0.6, 2))
        base[1] += 0.35  # keep splats clearly anisotropic
        splats.append(
            GaussianSplat(
                mu=rng.uniform(-spread, spread, 2),
                log_scale=base,
                phi=rng.uniform(-np.pi, np.pi),
                opacity_logit=rng.normal(0.0, 0.7),
                color_logit=rng.normal(0.0, 1.0, 3),
                depth_rank=i,
                object_id=i % n_objects,
            )
        )
    return SceneParams(tuple(splats), tuple(rng.uniform(0.0, 1.0, 3)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def camera():
    return CameraPose((0.031, -0.017), 0.21, 8.0, 32, 32)


@pytest.fixture(scope="session")
def three_splat():
    return get_preset("three-splat")


@pytest.fixture(scope="session")
def two_object():
    return get_preset("two-object")
