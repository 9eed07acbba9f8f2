"""Evidence selection: score corpus records against a queried camera action.

The per-record relevance score is a convex combination of three terms, each
targeting one way evidence stops being useful for a query:

- geometric: frustum overlap between candidate and query viewing volumes
  (viewpoint shift),
- temporal: exp(-|i - t| / tau) (time gap),
- scale: min(rho, 1/rho) where rho compares per-pixel metric footprints of
  the two cameras at the candidate's mean scene distance (zoom mismatch).

The selection objective is a sum of per-record scores under a budget, so the
exact optimum is the top-M records; a coverage-aware greedy mode is provided
as a clearly-labelled extension for corpora full of near-duplicates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import EvidenceCorpus, EvidenceRecord
from .geometry import (
    CameraAction,
    frustum_overlap,
    frustum_samples,
    points_in_view,
    project_points,
)

MODE_TOP_M = "paper_topM"
MODE_COVERAGE = "coverage_greedy"


@dataclass(frozen=True)
class RetrievalConfig:
    budget: int = 8  # M
    temporal_scale: float = 15.0  # tau, frames
    w_geo: float = 0.6
    w_time: float = 0.2
    w_scale: float = 0.2
    frustum_samples: int = 512
    depth_range: tuple = (0.5, 60.0)
    mode: str = MODE_TOP_M
    restrict_same_time: bool = False  # the time-local ablation switch
    sample_seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if self.temporal_scale <= 0:
            raise ValueError(f"temporal_scale must be > 0, got {self.temporal_scale}")
        for name in ("w_geo", "w_time", "w_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        total = self.w_geo + self.w_time + self.w_scale
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {total}")
        if self.mode not in (MODE_TOP_M, MODE_COVERAGE):
            raise ValueError(f"unknown mode {self.mode!r}")

    def to_dict(self):
        return {
            "budget": self.budget,
            "temporal_scale": self.temporal_scale,
            "w_geo": self.w_geo,
            "w_time": self.w_time,
            "w_scale": self.w_scale,
            "frustum_samples": self.frustum_samples,
            "depth_range": list(self.depth_range),
            "mode": self.mode,
            "restrict_same_time": self.restrict_same_time,
            "sample_seed": self.sample_seed,
        }

    @classmethod
    def from_dict(cls, d):
        kwargs = dict(d)
        if "depth_range" in kwargs:
            kwargs["depth_range"] = tuple(kwargs["depth_range"])
        return cls(**kwargs)


@dataclass(frozen=True)
class ScoredIndex:
    iteration: int
    time: int
    score: float

    @property
    def key(self):
        return (self.iteration, self.time)


@dataclass(frozen=True)
class EvidenceSelection:
    """Budgeted, ranked evidence indices for one query frame."""

    query_time: int
    entries: tuple = field(default_factory=tuple)  # ScoredIndex, scores nonincreasing
    skipped_no_depth: tuple = field(default_factory=tuple)  # ScoredIndex diagnostics

    @property
    def indices(self):
        return [e.key for e in self.entries]

    @property
    def on_time(self):
        return [e.key for e in self.entries if e.time == self.query_time]

    @property
    def off_time(self):
        return [e.key for e in self.entries if e.time != self.query_time]

    def __len__(self):
        return len(self.entries)

    def to_json_dict(self):
        return {
            "query_time": self.query_time,
            "selected": [
                {"iteration": e.iteration, "time": e.time, "score": e.score}
                for e in self.entries
            ],
            "on_time": [list(k) for k in self.on_time],
            "off_time": [list(k) for k in self.off_time],
            "skipped_no_depth": [
                {"iteration": e.iteration, "time": e.time, "score": e.score}
                for e in self.skipped_no_depth
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def _mean_scene_distance(record: EvidenceRecord, cfg: RetrievalConfig) -> float:
    depth = record.frame.depth
    if depth is not None:
        valid = depth > 0
        if np.any(valid):
            return float(depth[valid].mean())
    lo, hi = cfg.depth_range
    return math.sqrt(lo * hi)


def scale_compatibility(record: EvidenceRecord, query: CameraAction, cfg: RetrievalConfig) -> float:
    """min(rho, 1/rho) comparing per-pixel footprints at the candidate's mean depth."""
    cand = record.action
    z_c = _mean_scene_distance(record, cfg)
    anchor = cand.pose.camera_center + z_c * cand.pose.optical_axis
    _, z = project_points(anchor[None, :], query)
    z_q = max(float(z[0]), query.intrinsics.near)
    rho = (z_c * query.intrinsics.focal) / (z_q * cand.intrinsics.focal)
    return min(rho, 1.0 / rho)


def relevance(record: EvidenceRecord, query: CameraAction, cfg: RetrievalConfig) -> float:
    """Action-conditioned contribution score in [0, 1]; deterministic."""
    g = frustum_overlap(
        record.action,
        query,
        samples=cfg.frustum_samples,
        depth_range=cfg.depth_range,
        seed=cfg.sample_seed,
    )
    temporal = math.exp(-abs(record.time - query.time) / cfg.temporal_scale)
    sigma = scale_compatibility(record, query, cfg)
    return cfg.w_geo * g + cfg.w_time * temporal + cfg.w_scale * sigma


def _rank_key(entry: ScoredIndex, query_time: int):
    # Higher score first; ties to the temporally closer record, then lower j, i.
    return (-entry.score, abs(entry.time - query_time), entry.iteration, entry.time)


def _coverage_sets(records, query: CameraAction, cfg: RetrievalConfig):
    pts = frustum_samples(
        query, cfg.frustum_samples, cfg.depth_range, seed=cfg.sample_seed
    )
    return [points_in_view(pts, rec.action) if pts.shape[0] else np.zeros(0, bool) for rec in records]


def select_evidence(
    corpus: EvidenceCorpus, query: CameraAction, cfg: RetrievalConfig
) -> EvidenceSelection:
    """Budgeted evidence subset for one query frame.

    ``paper_topM`` takes the M highest-scoring usable records, the exact
    optimum of the modular sum objective.  ``coverage_greedy`` weights each
    candidate's score by the fraction of query-frustum samples not yet
    covered by earlier picks.  Records without a depth channel are scored
    and reported but excluded from the selection (they cannot contribute
    proxy points), so the budget overruns into the next-ranked usable ones.
    """
    candidates = list(corpus.records)
    if cfg.restrict_same_time:
        candidates = [r for r in candidates if r.time == query.time]

    scored = [
        (rec, ScoredIndex(rec.iteration, rec.time, relevance(rec, query, cfg)))
        for rec in candidates
    ]
    scored.sort(key=lambda pair: _rank_key(pair[1], query.time))

    usable = [(rec, e) for rec, e in scored if rec.has_depth]
    skipped = tuple(e for rec, e in scored if not rec.has_depth)

    if cfg.mode == MODE_TOP_M or not usable:
        chosen = [e for _, e in usable[: cfg.budget]]
        return EvidenceSelection(
            query_time=query.time, entries=tuple(chosen), skipped_no_depth=skipped
        )

    # coverage_greedy
    records = [rec for rec, _ in usable]
    entries = [e for _, e in usable]
    covers = _coverage_sets(records, query, cfg)
    n_samples = covers[0].shape[0] if covers else 0
    uncovered = np.ones(n_samples, dtype=bool)
    remaining = list(range(len(entries)))
    picked = []
    while remaining and len(picked) < cfg.budget:
        best_pos = None
        best_key = None
        for pos in remaining:
            e = entries[pos]
            if n_samples:
                gain_frac = float(np.count_nonzero(covers[pos] & uncovered)) / n_samples
            else:
                gain_frac = 0.0
            gain = e.score * gain_frac
            key = (-gain, -e.score, abs(e.time - query.time), e.iteration, e.time)
            if best_key is None or key < best_key:
                best_key = key
                best_pos = pos
        picked.append(best_pos)
        if n_samples:
            uncovered &= ~covers[best_pos]
        remaining.remove(best_pos)

    # Present the picked set in rank order so scores are nonincreasing.
    chosen = sorted(
        (entries[pos] for pos in picked), key=lambda e: _rank_key(e, query.time)
    )
    return EvidenceSelection(
        query_time=query.time, entries=tuple(chosen), skipped_no_depth=skipped
    )


def partition(selection: EvidenceSelection):
    """Split the selection into same-time and cross-time index lists."""
    return selection.on_time, selection.off_time
