import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from mvcardboard.geometry import CameraModel, Extrinsics, Intrinsics, make_camera

ACCEPTANCE_LINES: list[str] = []


def random_camera(rng: np.random.Generator, cam_id: str = "rand") -> CameraModel:
    """Random pose with the center well above the ground, looking down at the origin area."""
    eye = np.array([rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(2, 10)])
    target = np.array([rng.uniform(-5, 5), rng.uniform(-5, 5), 0.0])
    cam = make_camera(eye, target, fx=rng.uniform(600, 2000), cam_id=cam_id)
    # add a random roll so the tests do not rely on horizontal image rows
    roll = Rotation.from_rotvec([0, 0, rng.uniform(-0.3, 0.3)]).as_matrix()
    R = roll @ cam.R
    return CameraModel(cam.intrinsics, Extrinsics(R, -R @ eye), cam.image_size, cam_id)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def simple_cam():
    """Identity-oriented intrinsics from the worked examples, placed 5 m up looking along +Y."""
    return make_camera((0.0, -10.0, 5.0), (0.0, 5.0, 0.0), fx=1000.0, cam_id="simple")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
