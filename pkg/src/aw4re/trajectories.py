"""Built-in camera action sequence generators for the CLI and tests.

Every generator returns an ActionSequence over the full horizon.  ``hold``
and ``rewind`` derive counterfactual queries from an existing trajectory:
hold freezes the camera at a chosen frame's pose for the rest of the
horizon; rewind holds a pivot frame's pose for all earlier times and
follows the original from the pivot on.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import ActionSequence, CameraAction, CameraIntrinsics, look_at_pose


def default_intrinsics(width=160, height=120, focal=150.0, near=0.1, far=100.0) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0,
        width=width, height=height, near=near, far=far,
    )


def static_sequence(eye, target, intrinsics: CameraIntrinsics, horizon: int) -> ActionSequence:
    """Fixed camera observing all time steps."""
    pose = look_at_pose(eye, target)
    return ActionSequence(
        tuple(CameraAction(intrinsics, pose, t) for t in range(1, horizon + 1))
    )


def orbit_sequence(
    intrinsics: CameraIntrinsics,
    horizon: int,
    center=(0.0, 0.0, 0.5),
    radius: float = 8.0,
    height: float = 4.0,
    revolutions: float = 0.5,
    start_angle: float = 0.0,
) -> ActionSequence:
    """Camera circling the arena center while looking at it."""
    actions = []
    for t in range(1, horizon + 1):
        frac = (t - 1) / max(1, horizon - 1)
        ang = start_angle + 2.0 * math.pi * revolutions * frac
        eye = np.array(
            [center[0] + radius * math.cos(ang), center[1] + radius * math.sin(ang), height]
        )
        actions.append(CameraAction(intrinsics, look_at_pose(eye, center), t))
    return ActionSequence(tuple(actions))


def zoom_sequence(
    intrinsics: CameraIntrinsics,
    horizon: int,
    eye=(9.0, 0.0, 4.0),
    target=(0.0, 0.0, 0.5),
    factor: float = 2.0,
) -> ActionSequence:
    """Fixed viewpoint whose focal length ramps to ``factor`` times the base."""
    pose = look_at_pose(eye, target)
    actions = []
    for t in range(1, horizon + 1):
        frac = (t - 1) / max(1, horizon - 1)
        scale = 1.0 + (factor - 1.0) * frac
        intr = CameraIntrinsics(
            fx=intrinsics.fx * scale,
            fy=intrinsics.fy * scale,
            cx=intrinsics.cx,
            cy=intrinsics.cy,
            width=intrinsics.width,
            height=intrinsics.height,
            near=intrinsics.near,
            far=intrinsics.far,
        )
        actions.append(CameraAction(intr, pose, t))
    return ActionSequence(tuple(actions))


def corner_sequence(
    intrinsics: CameraIntrinsics,
    horizon: int,
    extent: float = 10.0,
    height: float = 5.0,
) -> ActionSequence:
    """Oblique view from an arena corner toward the center."""
    eye = (0.85 * extent, 0.85 * extent, height)
    return static_sequence(eye, (0.0, 0.0, 0.5), intrinsics, horizon)


def hold_sequence(base: ActionSequence, freeze_t: int) -> ActionSequence:
    """Follow ``base`` through freeze_t, then hold that frame's camera."""
    if not (1 <= freeze_t <= base.horizon):
        raise ValueError(f"freeze_t={freeze_t} outside 1..{base.horizon}")
    frozen = base[freeze_t - 1]
    actions = []
    for t in range(1, base.horizon + 1):
        src = base[t - 1] if t <= freeze_t else frozen
        actions.append(CameraAction(src.intrinsics, src.pose, t))
    return ActionSequence(tuple(actions))


def rewind_sequence(base: ActionSequence, pivot_t: int) -> ActionSequence:
    """Hold the pivot frame's camera for t < pivot, follow base afterwards."""
    if not (1 <= pivot_t <= base.horizon):
        raise ValueError(f"pivot_t={pivot_t} outside 1..{base.horizon}")
    pivot = base[pivot_t - 1]
    actions = []
    for t in range(1, base.horizon + 1):
        src = pivot if t < pivot_t else base[t - 1]
        actions.append(CameraAction(src.intrinsics, src.pose, t))
    return ActionSequence(tuple(actions))


GENERATORS = {
    "static": static_sequence,
    "orbit": orbit_sequence,
    "zoom": zoom_sequence,
    "corner": corner_sequence,
}
