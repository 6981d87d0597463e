import numpy as np
import pytest

from suction_affordance.camera import CameraIntrinsics, approach_vector
from suction_affordance.scene import plane_depth

# Filled by tests/test_acceptance.py: criterion number -> (passed, detail)
ACCEPTANCE = {}


def small_camera(size=64, f=500.0):
    return CameraIntrinsics(f, f, size / 2, size / 2, size, size)


def tilted_plane(K, beta, gamma, z0=0.5):
    """Depth of a plane through (0, 0, z0) whose facing normal is -approach_vector(beta, gamma)."""
    return plane_depth(K, -approach_vector(beta, gamma), (0.0, 0.0, z0))


def ones_seg(depth):
    return np.where(np.isfinite(depth), 1, 0).astype(np.uint16)


@pytest.fixture
def K64():
    return small_camera()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
