"""Pinhole camera model, rigid poses, and frustum-overlap estimation.

Coordinate conventions (used everywhere in this package):

- Extrinsics are stored camera-from-world: ``x_cam = R @ x_world + t``.
- The camera looks along its +z axis; x points right, y points down.
- Image origin is the top-left corner.  Pixel (row i, col j) covers the
  continuous rectangle [j, j+1) x [i, i+1); its center is (j+0.5, i+0.5).
- Projection returns continuous image coordinates (u, v) with
  ``u = fx * x/z + cx`` (column direction) and ``v = fy * y/z + cy`` (row).
- Depth is the camera-frame z coordinate (distance along the optical axis,
  not ray length).

All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera, DepthOutOfRange

_ORTHO_TOL = 1e-9


def _frozen_array(values, shape, dtype=np.float64) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype).reshape(shape).copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics plus image size and depth clip range."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = 0.1
    far: float = 100.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be >= 1, got {self.width}x{self.height}")
        if not (0 < self.near < self.far):
            raise ValueError(f"need 0 < near < far, got ({self.near}, {self.far})")

    @property
    def focal(self) -> float:
        """Scalar focal length (geometric mean of fx, fy), in pixels."""
        return math.sqrt(self.fx * self.fy)


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid camera-from-world transform: ``x_cam = rotation @ x_world + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen_array(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen_array(self.translation, (3,)))
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > _ORTHO_TOL:
            raise ValueError(f"rotation not orthonormal (max deviation {err:.2e})")
        det = np.linalg.det(self.rotation)
        if abs(det - 1.0) > _ORTHO_TOL:
            raise ValueError(f"rotation determinant {det:.12f} != +1")

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @property
    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    @property
    def optical_axis(self) -> np.ndarray:
        """Viewing direction (+z of the camera) in world coordinates."""
        return self.rotation.T @ np.array([0.0, 0.0, 1.0])

    def transform(self, points: np.ndarray) -> np.ndarray:
        """World -> camera for an (N, 3) array."""
        return points @ self.rotation.T + self.translation

    def inverse_transform(self, points: np.ndarray) -> np.ndarray:
        """Camera -> world for an (N, 3) array."""
        return (points - self.translation) @ self.rotation


@dataclass(frozen=True)
class CameraAction:
    """One sensing configuration: intrinsics + pose + the time index it images."""

    intrinsics: CameraIntrinsics
    pose: Pose
    time: int

    def __post_init__(self):
        if self.time < 1:
            raise ValueError(f"time index must be >= 1, got {self.time}")

    def to_dict(self) -> dict:
        intr = self.intrinsics
        return {
            "fx": intr.fx,
            "fy": intr.fy,
            "cx": intr.cx,
            "cy": intr.cy,
            "width": intr.width,
            "height": intr.height,
            "near": intr.near,
            "far": intr.far,
            "rotation": [float(v) for v in self.pose.rotation.reshape(-1)],
            "translation": [float(v) for v in self.pose.translation],
            "time": self.time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraAction":
        intr = CameraIntrinsics(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
            near=float(d["near"]),
            far=float(d["far"]),
        )
        pose = Pose(np.array(d["rotation"], dtype=np.float64).reshape(3, 3),
                    np.array(d["translation"], dtype=np.float64))
        return cls(intrinsics=intr, pose=pose, time=int(d["time"]))


@dataclass(frozen=True)
class ActionSequence:
    """One action per time step over a fixed horizon; actions[t-1].time == t."""

    actions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        actions = tuple(self.actions)
        object.__setattr__(self, "actions", actions)
        if not actions:
            raise ValueError("action sequence must not be empty")
        for idx, action in enumerate(actions):
            if action.time != idx + 1:
                raise ValueError(
                    f"actions[{idx}].time = {action.time}, expected {idx + 1}"
                )

    @property
    def horizon(self) -> int:
        return len(self.actions)

    def __len__(self):
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def __getitem__(self, t_index):
        return self.actions[t_index]

    def to_list(self) -> list:
        return [a.to_dict() for a in self.actions]

    @classmethod
    def from_list(cls, items) -> "ActionSequence":
        return cls(tuple(CameraAction.from_dict(d) for d in items))


# ---------------------------------------------------------------------------
# Projection / unprojection
# ---------------------------------------------------------------------------

def project_points(points: np.ndarray, action: CameraAction):
    """Project (N, 3) world points; returns ((N, 2) pixel coords, (N,) depths).

    No clipping is applied; callers filter on the returned depths and image
    bounds.  Depths <= 0 yield non-finite pixel coordinates.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = pts @ action.pose.rotation.T + action.pose.translation
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = action.intrinsics.fx * cam[:, 0] / z + action.intrinsics.cx
        v = action.intrinsics.fy * cam[:, 1] / z + action.intrinsics.cy
    return np.stack([u, v], axis=1), z


def project(point, action: CameraAction):
    """Project one world point; returns ((u, v), depth).

    Raises BehindCamera when the camera-frame depth is <= near.  The pixel
    may fall outside the image bounds; the caller filters.
    """
    pt = np.asarray(point, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(pt)):
        raise ValueError(f"point must be finite, got {pt}")
    uv, z = project_points(pt[None, :], action)
    depth = float(z[0])
    if depth <= action.intrinsics.near:
        raise BehindCamera(
            f"depth {depth:.6g} <= near plane {action.intrinsics.near:.6g}"
        )
    return (float(uv[0, 0]), float(uv[0, 1])), depth


def unproject_pixels(pixels: np.ndarray, depths: np.ndarray, action: CameraAction) -> np.ndarray:
    """Inverse of project_points for (N, 2) pixels and (N,) depths; no range check."""
    px = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    d = np.asarray(depths, dtype=np.float64).reshape(-1)
    intr = action.intrinsics
    cam = np.empty((px.shape[0], 3), dtype=np.float64)
    cam[:, 0] = (px[:, 0] - intr.cx) / intr.fx * d
    cam[:, 1] = (px[:, 1] - intr.cy) / intr.fy * d
    cam[:, 2] = d
    return (cam - action.pose.translation) @ action.pose.rotation


def unproject(pixel, depth: float, action: CameraAction) -> np.ndarray:
    """Lift one pixel at a given depth to a world point.

    Raises DepthOutOfRange unless near < depth <= far.
    """
    intr = action.intrinsics
    if not (intr.near < depth <= intr.far):
        raise DepthOutOfRange(
            f"depth {depth:.6g} outside ({intr.near:.6g}, {intr.far:.6g}]"
        )
    px = np.asarray(pixel, dtype=np.float64).reshape(2)
    return unproject_pixels(px[None, :], np.array([depth]), action)[0]


# ---------------------------------------------------------------------------
# Frustum overlap
# ---------------------------------------------------------------------------

def _halton(index: np.ndarray, base: int) -> np.ndarray:
    """Radical-inverse sequence in the given base, vectorized over indices."""
    result = np.zeros(index.shape, dtype=np.float64)
    f = 1.0
    i = index.astype(np.int64).copy()
    while np.any(i > 0):
        f /= base
        result += f * (i % base)
        i //= base
    return result


def frustum_samples(action: CameraAction, samples: int, depth_range, seed: int = 0):
    """Deterministic stratified samples of the action's viewing volume.

    Pixel positions follow a seeded Halton (2, 3) pattern, uniform over the
    image; depths are log-uniform over ``depth_range`` clipped to the
    camera's (near, far] interval.  Returns (N, 3) world points, or an empty
    array when the clipped depth interval is empty.
    """
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    intr = action.intrinsics
    lo = max(float(depth_range[0]), intr.near * (1.0 + 1e-12))
    hi = min(float(depth_range[1]), intr.far)
    if not (lo < hi) and not math.isclose(lo, hi):
        return np.empty((0, 3), dtype=np.float64)
    hi = max(hi, lo)
    idx = np.arange(samples, dtype=np.int64)
    rng = np.random.default_rng(seed)
    shift = rng.random(3)
    u = (_halton(idx + 1, 2) + shift[0]) % 1.0
    v = (_halton(idx + 1, 3) + shift[1]) % 1.0
    w = ((idx + 0.5) / samples + shift[2]) % 1.0
    pixels = np.stack([u * intr.width, v * intr.height], axis=1)
    depths = np.exp(np.log(lo) + w * (np.log(hi) - np.log(lo)))
    return unproject_pixels(pixels, depths, action)


def points_in_view(points: np.ndarray, action: CameraAction) -> np.ndarray:
    """Boolean mask: point projects inside the image with valid depth."""
    intr = action.intrinsics
    uv, z = project_points(points, action)
    return (
        (z > intr.near)
        & (z <= intr.far)
        & (uv[:, 0] >= 0.0)
        & (uv[:, 0] < intr.width)
        & (uv[:, 1] >= 0.0)
        & (uv[:, 1] < intr.height)
    )


def frustum_overlap(
    candidate: CameraAction,
    query: CameraAction,
    samples: int = 512,
    depth_range=(0.5, 60.0),
    seed: int = 0,
) -> float:
    """Fraction of the query's viewing volume visible to the candidate camera.

    Sample points are drawn deterministically in the query frustum (uniform
    over pixels x log-uniform over depth), so ``frustum_overlap(a, a)`` is
    exactly 1.0 and repeated calls with the same seed agree bit-for-bit.
    Degenerate configurations return 0.0.
    """
    pts = frustum_samples(query, samples, depth_range, seed=seed)
    if pts.shape[0] == 0:
        return 0.0
    inside = points_in_view(pts, candidate)
    return float(np.count_nonzero(inside)) / pts.shape[0]


# ---------------------------------------------------------------------------
# Pose helpers (used by scene generation and trajectory builders)
# ---------------------------------------------------------------------------

def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    ax = np.asarray(axis, dtype=np.float64)
    ax = ax / np.linalg.norm(ax)
    k = np.array(
        [[0, -ax[2], ax[1]], [ax[2], 0, -ax[0]], [-ax[1], ax[0], 0]],
        dtype=np.float64,
    )
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def look_at_pose(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-from-world pose for a camera at ``eye`` looking at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    forward = target - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("eye and target coincide")
    forward = forward / norm
    upv = np.asarray(up, dtype=np.float64)
    right = np.cross(forward, upv)
    rnorm = np.linalg.norm(right)
    if rnorm < 1e-12:
        # Viewing direction parallel to up: pick an arbitrary right vector.
        right = np.cross(forward, np.array([1.0, 0.0, 0.0]))
        rnorm = np.linalg.norm(right)
    right = right / rnorm
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward], axis=0)
    # Re-orthonormalize to keep the Pose validator happy at float precision.
    uu, _, vt = np.linalg.svd(rot)
    rot = uu @ vt
    return Pose(rotation=rot, translation=-rot @ eye)


def geodesic_angle(rot_a: np.ndarray, rot_b: np.ndarray) -> float:
    """Rotation angle (radians) between two orientation matrices."""
    cos = (np.trace(rot_a @ rot_b.T) - 1.0) / 2.0
    return float(math.acos(min(1.0, max(-1.0, cos))))


def transform_action(action: CameraAction, rotation: np.ndarray, translation) -> CameraAction:
    """Apply a world-frame rigid transform to an action's pose.

    If world points move as ``x' = G x + g``, the camera that images the
    transformed scene identically has pose ``(R G^T, t - R G^T g)``.
    """
    g_rot = np.asarray(rotation, dtype=np.float64)
    g_t = np.asarray(translation, dtype=np.float64)
    new_rot = action.pose.rotation @ g_rot.T
    new_t = action.pose.translation - new_rot @ g_t
    return CameraAction(
        intrinsics=action.intrinsics,
        pose=Pose(new_rot, new_t),
        time=action.time,
    )
