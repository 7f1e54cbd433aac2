import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fourdassoc.detections import chain_topology, default_topology
from fourdassoc.geometry import Camera
from fourdassoc.synth import NoiseConfig, SceneConfig, make_sequence

settings.register_profile(
    "repo",
    deadline=None,
    max_examples=60,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


def identity_camera(cam_id: int = 0, image_size=(2048, 2048)) -> Camera:
    return Camera(cam_id, np.eye(3), np.eye(3), np.zeros(3), image_size)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def body():
    return default_topology()


@pytest.fixture(scope="session")
def chain3():
    return chain_topology(3)


@pytest.fixture(scope="session")
def clean_two_person():
    """Noiseless 2-person, 5-view, 10-frame scene with index maps."""
    return make_sequence(SceneConfig(n_persons=2, n_views=5, n_frames=10), NoiseConfig.clean(), seed=3)


@pytest.fixture(scope="session")
def noisy_three_person():
    """Default-noise 3-person, 5-view, 20-frame scene."""
    return make_sequence(SceneConfig(n_persons=3, n_views=5, n_frames=20), NoiseConfig(), seed=11)
