"""Local 3D proxy construction from selected evidence.

Same-time records contribute every valid-depth pixel (dynamic content
included); cross-time records contribute only static pixels, i.e. pixels
whose dynamic mask is 0, so moving objects never leak across time steps.
Each point is the unprojection of one source pixel center and keeps its
source coordinates for provenance audits.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import EvidenceCorpus, EvidenceRecord
from .errors import MissingMask
from .geometry import CameraAction, project_points, unproject_pixels
from .retrieval import EvidenceSelection

log = logging.getLogger(__name__)

PROV_ON_TIME = 0
PROV_OFF_TIME_STATIC = 1

_PREFILTER_DILATION = 0.10  # fraction of image size kept beyond each border


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Struct-of-arrays point cloud with per-point provenance.

    positions: (N, 3) float64 world meters
    colors: (N, 3) uint8
    source_iteration / source_time: (N,) int32 record key (j, i)
    source_row / source_col: (N,) int32 source pixel
    source_depth: (N,) float32, the stored depth the point was lifted from
    source_focal: (N,) float32, scalar focal length of the source camera
    provenance: (N,) uint8, PROV_ON_TIME or PROV_OFF_TIME_STATIC
    """

    positions: np.ndarray
    colors: np.ndarray
    source_iteration: np.ndarray
    source_time: np.ndarray
    source_row: np.ndarray
    source_col: np.ndarray
    source_depth: np.ndarray
    source_focal: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        n = self.positions.shape[0]
        object.__setattr__(self, "positions", _frozen(np.asarray(self.positions, np.float64).reshape(n, 3)))
        object.__setattr__(self, "colors", _frozen(np.asarray(self.colors, np.uint8).reshape(n, 3)))
        for name in ("source_iteration", "source_time", "source_row", "source_col"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), np.int32).reshape(n)))
        object.__setattr__(self, "source_depth", _frozen(np.asarray(self.source_depth, np.float32).reshape(n)))
        object.__setattr__(self, "source_focal", _frozen(np.asarray(self.source_focal, np.float32).reshape(n)))
        object.__setattr__(self, "provenance", _frozen(np.asarray(self.provenance, np.uint8).reshape(n)))

    def __len__(self):
        return self.positions.shape[0]

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    @classmethod
    def empty(cls) -> "PointCloud":
        z = np.zeros(0)
        return cls(
            positions=np.zeros((0, 3)),
            colors=np.zeros((0, 3)),
            source_iteration=z,
            source_time=z,
            source_row=z,
            source_col=z,
            source_depth=z,
            source_focal=z,
            provenance=z,
        )

    @classmethod
    def concatenate(cls, clouds) -> "PointCloud":
        clouds = [c for c in clouds if not c.is_empty]
        if not clouds:
            return cls.empty()
        return cls(
            positions=np.concatenate([c.positions for c in clouds]),
            colors=np.concatenate([c.colors for c in clouds]),
            source_iteration=np.concatenate([c.source_iteration for c in clouds]),
            source_time=np.concatenate([c.source_time for c in clouds]),
            source_row=np.concatenate([c.source_row for c in clouds]),
            source_col=np.concatenate([c.source_col for c in clouds]),
            source_depth=np.concatenate([c.source_depth for c in clouds]),
            source_focal=np.concatenate([c.source_focal for c in clouds]),
            provenance=np.concatenate([c.provenance for c in clouds]),
        )


def static_mask_apply(record: EvidenceRecord) -> np.ndarray:
    """Boolean (H, W) map of usable static pixels: mask == 0 and depth > 0.

    Raises MissingMask when the record carries no dynamic mask; callers that
    can skip the record must do so loudly, never silently include it.
    """
    if record.frame.dynamic_mask is None:
        raise MissingMask(
            f"record (j={record.iteration}, i={record.time}) has no dynamic mask"
        )
    if record.frame.depth is None:
        return np.zeros((record.frame.height, record.frame.width), dtype=bool)
    return (~record.frame.dynamic_mask) & (record.frame.depth > 0)


def _lift_record(record: EvidenceRecord, pixel_mask: np.ndarray, provenance: int) -> PointCloud:
    rows, cols = np.nonzero(pixel_mask)
    if rows.size == 0:
        return PointCloud.empty()
    depth = record.frame.depth[rows, cols]
    intr = record.action.intrinsics
    in_range = (depth > intr.near) & (depth <= intr.far)
    rows, cols, depth = rows[in_range], cols[in_range], depth[in_range]
    if rows.size == 0:
        return PointCloud.empty()
    pixels = np.stack([cols + 0.5, rows + 0.5], axis=1)
    positions = unproject_pixels(pixels, depth.astype(np.float64), record.action)
    n = rows.size
    return PointCloud(
        positions=positions,
        colors=record.frame.rgb[rows, cols],
        source_iteration=np.full(n, record.iteration),
        source_time=np.full(n, record.time),
        source_row=rows,
        source_col=cols,
        source_depth=depth,
        source_focal=np.full(n, intr.focal),
        provenance=np.full(n, provenance),
    )


def _frustum_prefilter(cloud: PointCloud, query: CameraAction) -> PointCloud:
    if cloud.is_empty:
        return cloud
    intr = query.intrinsics
    uv, z = project_points(cloud.positions, query)
    mx = _PREFILTER_DILATION * intr.width
    my = _PREFILTER_DILATION * intr.height
    keep = (
        (z > intr.near)
        & (z <= intr.far * (1.0 + _PREFILTER_DILATION))
        & (uv[:, 0] >= -mx)
        & (uv[:, 0] < intr.width + mx)
        & (uv[:, 1] >= -my)
        & (uv[:, 1] < intr.height + my)
    )
    if np.all(keep):
        return cloud
    return PointCloud(
        positions=cloud.positions[keep],
        colors=cloud.colors[keep],
        source_iteration=cloud.source_iteration[keep],
        source_time=cloud.source_time[keep],
        source_row=cloud.source_row[keep],
        source_col=cloud.source_col[keep],
        source_depth=cloud.source_depth[keep],
        source_focal=cloud.source_focal[keep],
        provenance=cloud.provenance[keep],
    )


def build_proxy(
    query: CameraAction,
    selection: EvidenceSelection,
    corpus: EvidenceCorpus,
    prefilter: bool = True,
) -> PointCloud:
    """Lift the selected evidence into a per-query point cloud.

    Point order is canonical (records by (j, i), pixels row-major), so the
    output is deterministic regardless of selection order.  An empty result
    is a signal, not an error: the decoder turns it into an all-unsupported
    observation.
    """
    parts = []
    for key in sorted(selection.indices):
        record = corpus.get(*key)
        if record.frame.depth is None:
            warnings.warn(
                f"record (j={key[0]}, i={key[1]}) has no depth; skipped in proxy",
                stacklevel=2,
            )
            continue
        if record.time == selection.query_time:
            pixel_mask = record.frame.depth > 0
            part = _lift_record(record, pixel_mask, PROV_ON_TIME)
        else:
            try:
                pixel_mask = static_mask_apply(record)
            except MissingMask:
                warnings.warn(
                    f"cross-time record (j={key[0]}, i={key[1]}) has no dynamic "
                    "mask; skipped in proxy",
                    stacklevel=2,
                )
                continue
            part = _lift_record(record, pixel_mask, PROV_OFF_TIME_STATIC)
        if prefilter:
            part = _frustum_prefilter(part, query)
        parts.append(part)

    cloud = PointCloud.concatenate(parts)
    if cloud.is_empty:
        log.debug("empty proxy for query t=%d", selection.query_time)
    return cloud


def save_ply(cloud: PointCloud, path) -> Path:
    """ASCII point list for external inspection."""
    path = Path(path)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "property uchar provenance",
        "end_header",
    ]
    body = [
        f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {c[0]} {c[1]} {c[2]} {prov}"
        for p, c, prov in zip(cloud.positions, cloud.colors, cloud.provenance)
    ]
    path.write_text("\n".join(lines + body) + "\n")
    return path
