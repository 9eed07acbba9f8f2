import numpy as np
import pytest

from aw4re.corpus import EvidenceCorpus, EvidenceRecord
from aw4re.geometry import ActionSequence, CameraAction, CameraIntrinsics, Pose, look_at_pose
from aw4re.scene import Frame, SceneConfig, generate_scene, render_oracle
from aw4re.trajectories import static_sequence


def tiny_intrinsics(width=32, height=24, focal=28.0, near=0.1, far=100.0):
    return CameraIntrinsics(
        fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0,
        width=width, height=height, near=near, far=far,
    )


def flat_frame(height=24, width=32, color=(120, 60, 30), depth=5.0, dynamic=None):
    """Synthetic frame: constant color, constant depth, optional mask patch.

    ``dynamic`` is None (all static) or a (row0, row1, col0, col1) box.
    """
    rgb = np.zeros((height, width, 3), np.uint8)
    rgb[:] = color
    d = np.full((height, width), depth, np.float32)
    mask = np.zeros((height, width), bool)
    if dynamic is not None:
        r0, r1, c0, c1 = dynamic
        mask[r0:r1, c0:c1] = True
    return Frame(rgb=rgb, depth=d, dynamic_mask=mask)


def identity_action(time=1, intr=None):
    return CameraAction(intr or tiny_intrinsics(), Pose.identity(), time)


def looking_action(eye, target, time=1, intr=None):
    return CameraAction(intr or tiny_intrinsics(), look_at_pose(eye, target), time)


def sequence_of(actions):
    return ActionSequence(tuple(actions))


def constant_sequence(horizon, intr=None, eye=(0.0, 0.0, 0.0), target=None):
    intr = intr or tiny_intrinsics()
    if target is None:
        return sequence_of(identity_action(t, intr) for t in range(1, horizon + 1))
    return static_sequence(eye, target, intr, horizon)


@pytest.fixture(scope="session")
def demo_scene():
    """Small world with one mover, shared across pipeline tests."""
    return generate_scene(17, SceneConfig(horizon=6, n_static=2, n_dynamic=1, extent=8.0))


@pytest.fixture(scope="session")
def demo_sequence(demo_scene):
    intr = tiny_intrinsics(width=64, height=48, focal=55.0)
    return static_sequence((7.5, 1.0, 4.0), (0.0, 0.0, 0.5), intr, demo_scene.horizon)


@pytest.fixture(scope="session")
def demo_corpus(demo_scene, demo_sequence):
    frames = [render_oracle(demo_scene, a) for a in demo_sequence]
    return EvidenceCorpus(horizon=demo_scene.horizon).add_iteration(demo_sequence, frames)
