"""Finite-horizon sensing loop around the synthetic world and the decoder.

Sensing actions never change the world; they only decide what becomes
observable.  In real mode a step renders ground truth, appends it to the
evidence corpus, and commits coverage.  In surrogate mode a step answers a
counterfactual query from the existing corpus (decode + complete) without
growing it; its information gain is measured against hypothetical coverage
and not committed.

The reward is task + info_gain - cost_weight * cost.  Information gain is a
coverage surrogate: the fraction of 4D grid cells (x, y, z, time-bin) newly
touched by unprojecting the step's valid-depth pixels.  Cost charges pose
translation (m), rotation geodesic angle (rad), and |log zoom| against the
previous iteration's action at the same time step (or the previous time
step's action on the first iteration), with unit weights.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .completion import PluginDescriptor, complete_baseline, complete_external
from .corpus import EvidenceCorpus
from .decoder import DecoderConfig, decode
from .geometry import ActionSequence, geodesic_angle, unproject_pixels
from .retrieval import RetrievalConfig, select_evidence
from .scene import SceneConfig, generate_scene, render_oracle

MODE_REAL = "real"
MODE_SURROGATE = "surrogate"


@dataclass(frozen=True)
class EnvConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    mode: str = MODE_REAL
    discount: float = 0.99  # gamma
    cost_weight: float = 0.1  # lambda
    grid_cell: float = 0.5  # meters
    time_bin: int = 1  # frames per coverage time bin
    grid_bounds: tuple | None = None  # ((xlo,xhi),(ylo,yhi),(zlo,zhi)); default from extent
    completion_plugin: str | None = None  # external plugin command for surrogate steps

    def __post_init__(self):
        if not (0.0 < self.discount <= 1.0):
            raise ValueError(f"discount must be in (0, 1], got {self.discount}")
        if self.cost_weight < 0:
            raise ValueError(f"cost_weight must be >= 0, got {self.cost_weight}")
        if self.grid_cell <= 0:
            raise ValueError(f"grid_cell must be > 0, got {self.grid_cell}")
        if self.time_bin < 1:
            raise ValueError(f"time_bin must be >= 1, got {self.time_bin}")
        if self.mode not in (MODE_REAL, MODE_SURROGATE):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def horizon(self) -> int:
        return self.scene.horizon

    def bounds(self) -> tuple:
        if self.grid_bounds is not None:
            return self.grid_bounds
        ext = self.scene.extent * 1.25
        return ((-ext, ext), (-ext, ext), (-1.0, ext))

    def to_dict(self):
        return {
            "scene": self.scene.to_dict(),
            "retrieval": self.retrieval.to_dict(),
            "decoder": self.decoder.to_dict(),
            "mode": self.mode,
            "discount": self.discount,
            "cost_weight": self.cost_weight,
            "grid_cell": self.grid_cell,
            "time_bin": self.time_bin,
            "grid_bounds": None if self.grid_bounds is None else [list(b) for b in self.grid_bounds],
            "completion_plugin": self.completion_plugin,
        }

    @classmethod
    def from_dict(cls, d):
        kwargs = dict(d)
        if "scene" in kwargs:
            kwargs["scene"] = SceneConfig.from_dict(kwargs["scene"])
        if "retrieval" in kwargs:
            kwargs["retrieval"] = RetrievalConfig.from_dict(kwargs["retrieval"])
        if "decoder" in kwargs:
            kwargs["decoder"] = DecoderConfig.from_dict(kwargs["decoder"])
        if kwargs.get("grid_bounds") is not None:
            kwargs["grid_bounds"] = tuple(tuple(b) for b in kwargs["grid_bounds"])
        return cls(**kwargs)


@dataclass(frozen=True)
class RewardBreakdown:
    task: float
    info_gain: float
    cost: float
    cost_weight: float
    total: float

    @classmethod
    def compute(cls, task, info_gain, cost, cost_weight) -> "RewardBreakdown":
        return cls(
            task=task,
            info_gain=info_gain,
            cost=cost,
            cost_weight=cost_weight,
            total=task + info_gain - cost_weight * cost,
        )

    def to_dict(self):
        return {
            "task": self.task,
            "info_gain": self.info_gain,
            "cost": self.cost,
            "cost_weight": self.cost_weight,
            "total": self.total,
        }


@dataclass(frozen=True)
class Episode:
    """One sensing trajectory; immutable, step() returns the successor."""

    config: EnvConfig
    seed: int
    scene: object
    corpus: EvidenceCorpus
    iteration: int  # k: index of the next sensing iteration
    coverage: frozenset = field(default_factory=frozenset)
    last_actions: ActionSequence | None = None
    reward_log: tuple = field(default_factory=tuple)

    @property
    def coverage_fraction(self) -> float:
        return len(self.coverage) / _grid_shape_total(self.config)


def _grid_shape(config: EnvConfig):
    (xlo, xhi), (ylo, yhi), (zlo, zhi) = config.bounds()
    cell = config.grid_cell
    nx = max(1, int(math.ceil((xhi - xlo) / cell)))
    ny = max(1, int(math.ceil((yhi - ylo) / cell)))
    nz = max(1, int(math.ceil((zhi - zlo) / cell)))
    nt = max(1, int(math.ceil(config.horizon / config.time_bin)))
    return nx, ny, nz, nt


def _grid_shape_total(config: EnvConfig) -> int:
    nx, ny, nz, nt = _grid_shape(config)
    return nx * ny * nz * nt


def _cells_for_points(config: EnvConfig, points: np.ndarray, t: int) -> np.ndarray:
    (xlo, _), (ylo, _), (zlo, _) = config.bounds()
    nx, ny, nz, _ = _grid_shape(config)
    cell = config.grid_cell
    ix = np.floor((points[:, 0] - xlo) / cell).astype(np.int64)
    iy = np.floor((points[:, 1] - ylo) / cell).astype(np.int64)
    iz = np.floor((points[:, 2] - zlo) / cell).astype(np.int64)
    ok = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny) & (iz >= 0) & (iz < nz)
    tb = (t - 1) // config.time_bin
    ids = ((np.int64(tb) * nx + ix) * ny + iy) * nz + iz
    return np.unique(ids[ok])


def _observation_cells(config: EnvConfig, frames, actions: ActionSequence) -> set:
    """4D grid cells touched by the valid-depth pixels of an observation.

    ``frames`` may be oracle Frames (depth channel) or decoded partial
    observations (depth buffer over supported pixels).
    """
    cells = set()
    for t_index, frame in enumerate(frames):
        action = actions[t_index]
        depth = getattr(frame, "depth", None)
        if depth is None:
            depth = getattr(frame, "depth_buffer", None)
        if depth is None:
            continue
        rows, cols = np.nonzero(depth > 0)
        if rows.size == 0:
            continue
        pts = unproject_pixels(
            np.stack([cols + 0.5, rows + 0.5], axis=1),
            depth[rows, cols].astype(np.float64),
            action,
        )
        cells.update(_cells_for_points(config, pts, action.time).tolist())
    return cells


def info_gain(episode: Episode, new_frames, actions: ActionSequence) -> float:
    """Fraction of 4D grid cells newly covered by this observation."""
    cells = _observation_cells(episode.config, new_frames, actions)
    fresh = cells - set(episode.coverage)
    return len(fresh) / _grid_shape_total(episode.config)


def action_cost(actions: ActionSequence, previous: ActionSequence | None = None) -> float:
    """Pose/zoom change magnitude with unit weights; 0 for an exact repeat."""
    total = 0.0
    for t_index, action in enumerate(actions):
        if previous is not None:
            ref = previous[t_index]
        elif t_index > 0:
            ref = actions[t_index - 1]
        else:
            continue
        trans = float(
            np.linalg.norm(action.pose.camera_center - ref.pose.camera_center)
        )
        angle = geodesic_angle(action.pose.rotation, ref.pose.rotation)
        zoom = abs(math.log(action.intrinsics.focal / ref.intrinsics.focal))
        total += trans + angle + zoom
    return total


def actions_hash(actions: ActionSequence) -> str:
    payload = json.dumps(actions.to_list(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def frame_hash(rgb: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()).hexdigest()


def reset(config: EnvConfig, seed: int) -> Episode:
    """Fresh episode: seeded scene, empty corpus, empty coverage, k = 1."""
    scene = generate_scene(seed, config.scene)
    return Episode(
        config=config,
        seed=seed,
        scene=scene,
        corpus=EvidenceCorpus(horizon=config.horizon),
        iteration=1,
    )


def step(episode: Episode, actions: ActionSequence, task_scorer=None, mode: str | None = None):
    """One sensing iteration; returns (observation, reward, next episode).

    Real mode renders and commits; surrogate mode answers a counterfactual
    query against the current corpus without committing anything but the
    reward log.  ``task_scorer(episode, actions, observation) -> float``
    supplies the task term when available.
    """
    config = episode.config
    mode = mode or config.mode
    if actions.horizon != config.horizon:
        raise ValueError(
            f"action horizon {actions.horizon} != episode horizon {config.horizon}"
        )

    cost = action_cost(actions, episode.last_actions)

    if mode == MODE_REAL:
        frames = [render_oracle(episode.scene, a) for a in actions]
        cells = _observation_cells(config, frames, actions)
        fresh = cells - set(episode.coverage)
        gain = len(fresh) / _grid_shape_total(config)
        task = float(task_scorer(episode, actions, frames)) if task_scorer else 0.0
        reward = RewardBreakdown.compute(task, gain, cost, config.cost_weight)
        entry = _log_entry(episode, mode, actions, reward, [f.rgb for f in frames])
        nxt = replace(
            episode,
            corpus=episode.corpus.add_iteration(actions, frames),
            iteration=episode.iteration + 1,
            coverage=episode.coverage | frozenset(fresh),
            last_actions=actions,
            reward_log=episode.reward_log + (entry,),
        )
        return frames, reward, nxt

    if mode == MODE_SURROGATE:
        partials = [
            decode(
                a,
                select_evidence(episode.corpus, a, config.retrieval),
                episode.corpus,
                config.decoder,
            )
            for a in actions
        ]
        if config.completion_plugin:
            completed = complete_external(
                partials, PluginDescriptor(command=config.completion_plugin)
            )
        else:
            completed = complete_baseline(partials)
        gain = info_gain(episode, partials, actions)  # hypothetical, not committed
        task = float(task_scorer(episode, actions, completed)) if task_scorer else 0.0
        reward = RewardBreakdown.compute(task, gain, cost, config.cost_weight)
        entry = _log_entry(episode, mode, actions, reward, [c.rgb for c in completed])
        nxt = replace(episode, reward_log=episode.reward_log + (entry,))
        return completed, reward, nxt

    raise ValueError(f"unknown mode {mode!r}")


def _log_entry(episode, mode, actions, reward, rgb_frames):
    return {
        "step": len(episode.reward_log) + 1,
        "mode": mode,
        "iteration": episode.iteration,
        "actions_hash": actions_hash(actions),
        **reward.to_dict(),
        "coverage_fraction": episode.coverage_fraction,
        "frame_hashes": [frame_hash(rgb) for rgb in rgb_frames],
    }


def write_log(episode: Episode, path) -> None:
    """Episode log as JSON-lines, one record per step."""
    with open(path, "w") as fh:
        for entry in episode.reward_log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Shipped policies: enough to exercise the loop, not to optimize it.
# ---------------------------------------------------------------------------

def scripted_policy(sequences):
    """Replay a fixed list of action sequences, cycling when exhausted."""
    sequences = list(sequences)
    if not sequences:
        raise ValueError("scripted policy needs at least one sequence")

    def policy(episode: Episode, step_index: int) -> ActionSequence:
        return sequences[step_index % len(sequences)]

    return policy


def random_orbit_policy(seed: int, intrinsics, radius_range=(0.5, 0.85), height_range=(2.0, 6.0)):
    """Seeded random viewpoints on an orbit around the arena center.

    Each iteration picks one pose (held for all time steps) from a stream
    deterministic in (seed, step_index).
    """
    from .trajectories import static_sequence  # local import to avoid a cycle

    def policy(episode: Episode, step_index: int) -> ActionSequence:
        rng = np.random.default_rng((seed, step_index))
        ext = episode.config.scene.extent
        angle = rng.uniform(0.0, 2.0 * math.pi)
        radius = rng.uniform(*radius_range) * ext
        height = rng.uniform(*height_range)
        eye = np.array([radius * math.cos(angle), radius * math.sin(angle), height])
        target = np.array([rng.uniform(-0.2, 0.2) * ext, rng.uniform(-0.2, 0.2) * ext, 0.5])
        return static_sequence(eye, target, intrinsics, episode.config.horizon)

    return policy
