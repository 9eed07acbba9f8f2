"""Procedural synthetic 4D world with exact analytic raycasting.

The world is z-up: the ground is the plane z = 0 and objects rest on it.
Rendering traces one ray per pixel center against analytic primitives
(ground plane, axis-aligned boxes, spheres), so depths are exact and every
prediction downstream can be checked against ground truth.  Shading is
Lambertian with a fixed directional light and view-independent, which makes
reprojected colors of the same surface point identical across cameras.

Dynamic objects follow closed-form motion laws (linear or circular), so the
latent state at any time step is available analytically and is never
affected by sensing actions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraAction

_RAY_EPS = 1e-12


# ---------------------------------------------------------------------------
# Procedural value noise (seeded, vectorized)
# ---------------------------------------------------------------------------

def _hash01(xi, yi, zi, seed):
    """Lattice hash -> float64 in [0, 1); deterministic across platforms."""
    seed_mix = np.uint32((int(seed) * 0x9E3779B1) & 0xFFFFFFFF)
    h = (
        xi.astype(np.uint32) * np.uint32(0x8DA6B343)
        ^ yi.astype(np.uint32) * np.uint32(0xD8163841)
        ^ zi.astype(np.uint32) * np.uint32(0xCB1AB31F)
        ^ seed_mix
    )
    h ^= h >> np.uint32(13)
    h *= np.uint32(0x5BD1E995)
    h ^= h >> np.uint32(15)
    return h.astype(np.float64) / 4294967296.0


def value_noise(points: np.ndarray, freq: float, seed: int) -> np.ndarray:
    """Trilinearly interpolated lattice noise in [0, 1] for (N, 3) points."""
    p = np.asarray(points, dtype=np.float64) * freq
    p0 = np.floor(p)
    frac = p - p0
    s = frac * frac * (3.0 - 2.0 * frac)
    base = p0.astype(np.int64)

    def corner(dx, dy, dz):
        return _hash01(base[:, 0] + dx, base[:, 1] + dy, base[:, 2] + dz, seed)

    n = 0.0
    for dx in (0, 1):
        wx = s[:, 0] if dx else 1.0 - s[:, 0]
        for dy in (0, 1):
            wy = s[:, 1] if dy else 1.0 - s[:, 1]
            for dz in (0, 1):
                wz = s[:, 2] if dz else 1.0 - s[:, 2]
                n = n + corner(dx, dy, dz) * (wx * wy * wz)
    return n


@dataclass(frozen=True)
class Texture:
    """Procedural albedo: seeded value noise modulating a base color."""

    base_rgb: tuple
    freq: float
    seed: int

    def albedo(self, local_points: np.ndarray) -> np.ndarray:
        """Albedo in [0, 1] at (N, 3) object-local points."""
        n1 = value_noise(local_points, self.freq, self.seed)
        n2 = value_noise(local_points, self.freq * 2.3, self.seed + 101)
        base = np.asarray(self.base_rgb, dtype=np.float64)
        shade = 0.45 + 0.55 * n1
        tint = (n2 - 0.5) * 0.18
        return np.clip(base[None, :] * shade[:, None] + tint[:, None], 0.0, 1.0)

    def to_dict(self):
        return {"base_rgb": list(self.base_rgb), "freq": self.freq, "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(float(v) for v in d["base_rgb"]), float(d["freq"]), int(d["seed"]))


@dataclass(frozen=True)
class Motion:
    """Closed-form trajectory of an object center over time steps 1..T."""

    kind: str  # "linear" | "circular"
    origin: tuple = (0.0, 0.0, 0.0)  # linear: center at t=1
    velocity: tuple = (0.0, 0.0, 0.0)  # linear: meters per frame
    center: tuple = (0.0, 0.0, 0.0)  # circular: orbit center
    radius: float = 0.0
    omega: float = 0.0  # radians per frame
    phase: float = 0.0

    def center_at(self, t: int) -> np.ndarray:
        if self.kind == "linear":
            return np.asarray(self.origin) + (t - 1) * np.asarray(self.velocity)
        if self.kind == "circular":
            ang = self.phase + self.omega * (t - 1)
            c = np.asarray(self.center, dtype=np.float64)
            return c + self.radius * np.array([math.cos(ang), math.sin(ang), 0.0])
        raise ValueError(f"unknown motion kind {self.kind!r}")

    def to_dict(self):
        return {
            "kind": self.kind,
            "origin": list(self.origin),
            "velocity": list(self.velocity),
            "center": list(self.center),
            "radius": self.radius,
            "omega": self.omega,
            "phase": self.phase,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d["kind"],
            origin=tuple(float(v) for v in d["origin"]),
            velocity=tuple(float(v) for v in d["velocity"]),
            center=tuple(float(v) for v in d["center"]),
            radius=float(d["radius"]),
            omega=float(d["omega"]),
            phase=float(d["phase"]),
        )


@dataclass(frozen=True)
class SceneObject:
    """One analytic primitive, optionally moving."""

    obj_id: int
    shape: str  # "plane" | "sphere" | "box"
    position: tuple = (0.0, 0.0, 0.0)  # static anchor / plane point
    radius: float = 0.0  # sphere
    half_extents: tuple = (0.0, 0.0, 0.0)  # box
    texture: Texture = Texture((0.5, 0.5, 0.5), 0.5, 0)
    motion: Motion | None = None

    @property
    def dynamic(self) -> bool:
        return self.motion is not None

    def center_at(self, t: int) -> np.ndarray:
        if self.motion is not None:
            return self.motion.center_at(t)
        return np.asarray(self.position, dtype=np.float64)

    def to_dict(self):
        return {
            "obj_id": self.obj_id,
            "shape": self.shape,
            "position": list(self.position),
            "radius": self.radius,
            "half_extents": list(self.half_extents),
            "texture": self.texture.to_dict(),
            "motion": None if self.motion is None else self.motion.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            obj_id=int(d["obj_id"]),
            shape=d["shape"],
            position=tuple(float(v) for v in d["position"]),
            radius=float(d["radius"]),
            half_extents=tuple(float(v) for v in d["half_extents"]),
            texture=Texture.from_dict(d["texture"]),
            motion=None if d.get("motion") is None else Motion.from_dict(d["motion"]),
        )


@dataclass(frozen=True)
class SceneConfig:
    """Knobs for procedural scene generation."""

    horizon: int = 24
    n_static: int = 4  # primitives beyond the ground plane
    n_dynamic: int = 1
    extent: float = 10.0  # half-size of the arena, meters
    ground: bool = True
    ambient: float = 0.35
    diffuse: float = 0.65
    light_dir: tuple = (0.35, 0.25, 0.88)
    sky_rgb: tuple = (24, 30, 44)
    texture_freq_range: tuple = (0.25, 0.7)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.n_static < 0 or self.n_dynamic < 0:
            raise ValueError("primitive counts must be >= 0")
        if not self.ground and self.n_static == 0:
            raise ValueError("scene needs at least one static primitive")

    def to_dict(self):
        return {
            "horizon": self.horizon,
            "n_static": self.n_static,
            "n_dynamic": self.n_dynamic,
            "extent": self.extent,
            "ground": self.ground,
            "ambient": self.ambient,
            "diffuse": self.diffuse,
            "light_dir": list(self.light_dir),
            "sky_rgb": list(self.sky_rgb),
            "texture_freq_range": list(self.texture_freq_range),
        }

    @classmethod
    def from_dict(cls, d):
        kwargs = dict(d)
        for key in ("light_dir", "sky_rgb", "texture_freq_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class SceneSpec:
    """Fully determined world: a pure function of (seed, config)."""

    seed: int
    config: SceneConfig
    objects: tuple = field(default_factory=tuple)

    @property
    def horizon(self) -> int:
        return self.config.horizon

    @property
    def dynamic_ids(self) -> frozenset:
        return frozenset(o.obj_id for o in self.objects if o.dynamic)

    def to_dict(self):
        return {
            "seed": self.seed,
            "config": self.config.to_dict(),
            "objects": [o.to_dict() for o in self.objects],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            seed=int(d["seed"]),
            config=SceneConfig.from_dict(d["config"]),
            objects=tuple(SceneObject.from_dict(o) for o in d["objects"]),
        )


@dataclass(frozen=True, eq=False)
class Frame:
    """One rendered/imported observation.

    rgb is (H, W, 3) uint8.  depth is (H, W) float32 meters with 0 marking
    no-hit pixels (values otherwise lie in the camera's (near, far]); it is
    None for imported data without a depth channel.  dynamic_mask is (H, W)
    bool marking pixels whose nearest hit is a moving object, or None when
    unavailable.
    """

    rgb: np.ndarray
    depth: np.ndarray | None = None
    dynamic_mask: np.ndarray | None = None

    def __post_init__(self):
        rgb = np.ascontiguousarray(self.rgb, dtype=np.uint8)
        rgb.flags.writeable = False
        object.__setattr__(self, "rgb", rgb)
        if self.depth is not None:
            depth = np.ascontiguousarray(self.depth, dtype=np.float32)
            if depth.shape != rgb.shape[:2]:
                raise ValueError(f"depth shape {depth.shape} != rgb {rgb.shape[:2]}")
            depth.flags.writeable = False
            object.__setattr__(self, "depth", depth)
        if self.dynamic_mask is not None:
            mask = np.ascontiguousarray(self.dynamic_mask, dtype=bool)
            if mask.shape != rgb.shape[:2]:
                raise ValueError(f"mask shape {mask.shape} != rgb {rgb.shape[:2]}")
            mask.flags.writeable = False
            object.__setattr__(self, "dynamic_mask", mask)

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return np.array_equal(a, b)

        return (
            np.array_equal(self.rgb, other.rgb)
            and same(self.depth, other.depth)
            and same(self.dynamic_mask, other.dynamic_mask)
        )


# ---------------------------------------------------------------------------
# Scene generation
# ---------------------------------------------------------------------------

def _random_texture(rng, config: SceneConfig, muted: bool = False) -> Texture:
    lo, hi = config.texture_freq_range
    freq = float(rng.uniform(lo, hi))
    seed = int(rng.integers(0, 2**31 - 1))
    if muted:
        base = 0.28 + 0.22 * rng.random(3)
    else:
        base = 0.35 + 0.6 * rng.random(3)
    return Texture(tuple(float(v) for v in base), freq, seed)


def generate_scene(seed: int, config: SceneConfig | None = None) -> SceneSpec:
    """Deterministic procedural world; identical inputs give identical specs."""
    config = config or SceneConfig()
    rng = np.random.default_rng(seed)
    objects = []
    obj_id = 0
    span = config.extent
    T = config.horizon

    if config.ground:
        objects.append(
            SceneObject(
                obj_id=obj_id,
                shape="plane",
                position=(0.0, 0.0, 0.0),
                texture=_random_texture(rng, config, muted=True),
            )
        )
        obj_id += 1

    for _ in range(config.n_static):
        shape = "box" if rng.random() < 0.5 else "sphere"
        xy = rng.uniform(-0.6 * span, 0.6 * span, size=2)
        if shape == "sphere":
            radius = float(rng.uniform(0.5, 1.4))
            objects.append(
                SceneObject(
                    obj_id=obj_id,
                    shape="sphere",
                    position=(float(xy[0]), float(xy[1]), radius),
                    radius=radius,
                    texture=_random_texture(rng, config),
                )
            )
        else:
            half = rng.uniform(0.4, 1.2, size=3)
            objects.append(
                SceneObject(
                    obj_id=obj_id,
                    shape="box",
                    position=(float(xy[0]), float(xy[1]), float(half[2])),
                    half_extents=tuple(float(v) for v in half),
                    texture=_random_texture(rng, config),
                )
            )
        obj_id += 1

    for _ in range(config.n_dynamic):
        shape = "box" if rng.random() < 0.4 else "sphere"
        if shape == "sphere":
            radius = float(rng.uniform(0.4, 0.9))
            size_kwargs = {"radius": radius}
            height = radius
        else:
            half = rng.uniform(0.3, 0.7, size=3)
            size_kwargs = {"half_extents": tuple(float(v) for v in half)}
            height = float(half[2])

        if rng.random() < 0.5:
            a = rng.uniform(-0.55 * span, 0.55 * span, size=2)
            b = rng.uniform(-0.55 * span, 0.55 * span, size=2)
            vel = (b - a) / max(1, T - 1)
            motion = Motion(
                kind="linear",
                origin=(float(a[0]), float(a[1]), height),
                velocity=(float(vel[0]), float(vel[1]), 0.0),
            )
        else:
            c = rng.uniform(-0.35 * span, 0.35 * span, size=2)
            radius_orbit = float(rng.uniform(0.15 * span, 0.35 * span))
            cycles = float(rng.uniform(0.5, 1.5))
            motion = Motion(
                kind="circular",
                center=(float(c[0]), float(c[1]), height),
                radius=radius_orbit,
                omega=2.0 * math.pi * cycles / max(1, T - 1),
                phase=float(rng.uniform(0.0, 2.0 * math.pi)),
            )
        objects.append(
            SceneObject(
                obj_id=obj_id,
                shape=shape,
                texture=_random_texture(rng, config),
                motion=motion,
                **size_kwargs,
            )
        )
        obj_id += 1

    return SceneSpec(seed=seed, config=config, objects=tuple(objects))


def scene_state(scene: SceneSpec, t: int):
    """Closed-form object poses at time t (diagnostics view of the latent state)."""
    if not (1 <= t <= scene.horizon):
        raise ValueError(f"t={t} outside horizon 1..{scene.horizon}")
    return [
        {
            "obj_id": obj.obj_id,
            "shape": obj.shape,
            "center": obj.center_at(t).tolist(),
            "dynamic": obj.dynamic,
        }
        for obj in scene.objects
    ]


# ---------------------------------------------------------------------------
# Raycasting
# ---------------------------------------------------------------------------

def _safe_dirs(dirs: np.ndarray) -> np.ndarray:
    d = dirs.copy()
    small = np.abs(d) < _RAY_EPS
    d[small] = np.where(np.signbit(d[small]), -_RAY_EPS, _RAY_EPS)
    return d


def _intersect_plane(origin, dirs, z0):
    t = (z0 - origin[2]) / _safe_dirs(dirs[:, 2:3])[:, 0]
    return np.where(t > 0, t, np.inf)


def _intersect_sphere(origin, dirs, center, radius):
    oc = origin - center
    a = np.einsum("ij,ij->i", dirs, dirs)
    b = 2.0 * dirs @ oc
    c = oc @ oc - radius * radius
    disc = b * b - 4.0 * a * c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t = (-b - sq) / (2.0 * a)
    return np.where(hit & (t > 0), t, np.inf)


def _intersect_box(origin, dirs, center, half):
    lo = center - half
    hi = center + half
    d = _safe_dirs(dirs)
    t1 = (lo[None, :] - origin[None, :]) / d
    t2 = (hi[None, :] - origin[None, :]) / d
    tmin = np.minimum(t1, t2).max(axis=1)
    tmax = np.maximum(t1, t2).min(axis=1)
    hit = (tmin <= tmax) & (tmin > 0)
    return np.where(hit, tmin, np.inf)


def _box_normals(points, center, half):
    rel = (points - center) / half
    axis = np.argmax(np.abs(rel), axis=1)
    normals = np.zeros_like(points)
    normals[np.arange(points.shape[0]), axis] = np.sign(
        rel[np.arange(points.shape[0]), axis]
    )
    return normals


def shade(albedo: np.ndarray, normals: np.ndarray, config: SceneConfig) -> np.ndarray:
    """Lambert shading (view-independent): albedo * (ambient + diffuse * n.l)."""
    light = np.asarray(config.light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)
    lam = np.maximum(0.0, normals @ light)
    lit = albedo * (config.ambient + config.diffuse * lam)[:, None]
    return np.clip(lit, 0.0, 1.0)


def render_oracle(scene: SceneSpec, action: CameraAction) -> Frame:
    """Ground-truth observation for a sensing action: exact per-pixel raycast.

    Depth is the camera-frame z of the nearest hit (0 where no primitive is
    hit within (near, far]); the dynamic mask marks pixels whose nearest hit
    is a moving object evaluated at the action's time step.
    """
    if not (1 <= action.time <= scene.horizon):
        raise ValueError(f"action.time={action.time} outside horizon 1..{scene.horizon}")
    intr = action.intrinsics
    h, w = intr.height, intr.width
    cols, rows = np.meshgrid(np.arange(w), np.arange(h))
    dirs_cam = np.stack(
        [
            (cols.reshape(-1) + 0.5 - intr.cx) / intr.fx,
            (rows.reshape(-1) + 0.5 - intr.cy) / intr.fy,
            np.ones(h * w),
        ],
        axis=1,
    )
    # With dir_z = 1 in camera frame, the ray parameter equals camera-frame z.
    dirs = dirs_cam @ action.pose.rotation
    origin = action.pose.camera_center

    n_rays = h * w
    best_t = np.full(n_rays, np.inf)
    best_obj = np.full(n_rays, -1, dtype=np.int32)
    centers = {}
    for obj in scene.objects:
        center = obj.center_at(action.time)
        centers[obj.obj_id] = center
        if obj.shape == "plane":
            t = _intersect_plane(origin, dirs, center[2])
        elif obj.shape == "sphere":
            t = _intersect_sphere(origin, dirs, center, obj.radius)
        elif obj.shape == "box":
            t = _intersect_box(origin, dirs, center, np.asarray(obj.half_extents))
        else:
            raise ValueError(f"unknown shape {obj.shape!r}")
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_obj = np.where(closer, obj.obj_id, best_obj)

    valid = np.isfinite(best_t) & (best_t > intr.near) & (best_t <= intr.far)
    depth = np.where(valid, best_t, 0.0).astype(np.float32)

    rgb = np.empty((n_rays, 3), dtype=np.float64)
    rgb[:] = np.asarray(scene.config.sky_rgb, dtype=np.float64) / 255.0
    dyn = np.zeros(n_rays, dtype=bool)
    for obj in scene.objects:
        sel = valid & (best_obj == obj.obj_id)
        if not np.any(sel):
            continue
        pts = origin[None, :] + best_t[sel, None] * dirs[sel]
        center = centers[obj.obj_id]
        if obj.shape == "plane":
            local = pts
            normals = np.tile(np.array([0.0, 0.0, 1.0]), (pts.shape[0], 1))
        elif obj.shape == "sphere":
            local = pts - center
            normals = local / obj.radius
        else:
            local = pts - center
            normals = _box_normals(pts, center, np.asarray(obj.half_extents))
        rgb[sel] = shade(obj.texture.albedo(local), normals, scene.config)
        if obj.dynamic:
            dyn[sel] = True

    frame_rgb = np.round(rgb * 255.0).astype(np.uint8).reshape(h, w, 3)
    return Frame(
        rgb=frame_rgb,
        depth=depth.reshape(h, w),
        dynamic_mask=dyn.reshape(h, w),
    )
