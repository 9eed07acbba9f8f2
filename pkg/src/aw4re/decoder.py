"""Decode a local proxy into an evidence-backed partial observation.

Each proxy point is projected into the query camera and splatted over a
square footprint whose side matches the ratio of source-to-query pixel
footprints, with a per-pixel z-buffer keeping the nearest point.  When the
resulting support is sparse, a pull-push pyramid spreads supported colors
into nearby holes as low-frequency guidance; pixels farther than the fill
radius from any support stay explicitly unsupported (and black).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import kernels
from .corpus import EvidenceCorpus
from .geometry import CameraAction, project_points
from .proxy import PointCloud, build_proxy
from .retrieval import EvidenceSelection


@dataclass(frozen=True)
class DecoderConfig:
    dense_threshold: float = 0.6  # support density above which densify is a no-op
    max_fill_radius: float = 8.0  # pixels at native scale, scaled by zoom ratio
    pyramid_base_levels: int = 4
    max_splat: int = 9  # cap on splat side, pixels
    prefilter: bool = True

    def to_dict(self):
        return {
            "dense_threshold": self.dense_threshold,
            "max_fill_radius": self.max_fill_radius,
            "pyramid_base_levels": self.pyramid_base_levels,
            "max_splat": self.max_splat,
            "prefilter": self.prefilter,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class PartialObservation:
    """Evidence-backed partial frame: rgb + explicit support mask.

    Pixels with support_mask == 0 hold the fill value (black).  The depth
    buffer is diagnostic: winning splat depth where directly supported,
    0 elsewhere (densified pixels included).
    """

    rgb: np.ndarray  # (H, W, 3) uint8
    support_mask: np.ndarray  # (H, W) bool
    depth_buffer: np.ndarray  # (H, W) float32

    def __post_init__(self):
        rgb = np.ascontiguousarray(self.rgb, dtype=np.uint8)
        mask = np.ascontiguousarray(self.support_mask, dtype=bool)
        depth = np.ascontiguousarray(self.depth_buffer, dtype=np.float32)
        if mask.shape != rgb.shape[:2] or depth.shape != rgb.shape[:2]:
            raise ValueError("partial observation channel shapes disagree")
        object.__setattr__(self, "rgb", _frozen(rgb))
        object.__setattr__(self, "support_mask", _frozen(mask))
        object.__setattr__(self, "depth_buffer", _frozen(depth))

    @property
    def support_density(self) -> float:
        return float(np.count_nonzero(self.support_mask)) / self.support_mask.size

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @classmethod
    def empty(cls, height: int, width: int) -> "PartialObservation":
        return cls(
            rgb=np.zeros((height, width, 3), np.uint8),
            support_mask=np.zeros((height, width), bool),
            depth_buffer=np.zeros((height, width), np.float32),
        )


def _record_ordinals(cloud: PointCloud) -> np.ndarray:
    """Ordinal of each point's (j, i) source in (j, i) sort order."""
    key = cloud.source_iteration.astype(np.int64) << 32 | cloud.source_time.astype(np.int64)
    _, ordinals = np.unique(key, return_inverse=True)
    return ordinals.astype(np.int64)


def splat(cloud: PointCloud, query: CameraAction, max_splat: int = 9) -> PartialObservation:
    """Project the proxy into the query camera with z-buffered square splats.

    Splat side is max(1, round(source footprint / query footprint)), capped.
    Depth ties (within 1e-6 m) go to same-time points over cross-time static
    ones, then to the lower (j, i) source, then to the lower source pixel,
    which makes the result independent of point order.
    """
    intr = query.intrinsics
    h, w = intr.height, intr.width
    if cloud.is_empty:
        return PartialObservation.empty(h, w)

    uv, z = project_points(cloud.positions, query)
    in_front = z > intr.near
    if not np.any(in_front):
        return PartialObservation.empty(h, w)

    idx = np.nonzero(in_front)[0]
    u, v, z = uv[idx, 0], uv[idx, 1], z[idx]

    # Footprint of one source pixel, measured in query pixels.
    ratio = (intr.focal * cloud.source_depth[idx].astype(np.float64)) / (
        cloud.source_focal[idx].astype(np.float64) * z
    )
    sides = np.clip(np.round(ratio), 1, max_splat).astype(np.int64)

    ordinals = _record_ordinals(cloud)[idx]
    keys = (
        (
            (cloud.provenance[idx].astype(np.int64) << 20 | ordinals) << 16
            | cloud.source_row[idx].astype(np.int64)
        )
        << 16
    ) | cloud.source_col[idx].astype(np.int64)

    cx = np.floor(u).astype(np.int64)
    cy = np.floor(v).astype(np.int64)

    pair_pix = []
    pair_depth = []
    pair_key = []
    pair_point = []
    for side in np.unique(sides):
        sel = sides == side
        lo = (side - 1) // 2
        hi = side // 2
        offs = np.arange(-lo, hi + 1)
        dy, dx = np.meshgrid(offs, offs, indexing="ij")
        px = cx[sel][:, None] + dx.reshape(-1)[None, :]
        py = cy[sel][:, None] + dy.reshape(-1)[None, :]
        ok = (px >= 0) & (px < w) & (py >= 0) & (py < h)
        n_off = offs.size * offs.size
        point_ids = np.broadcast_to(idx[sel][:, None], (np.count_nonzero(sel), n_off))
        pair_pix.append((py[ok] * w + px[ok]))
        pair_depth.append(np.broadcast_to(z[sel][:, None], ok.shape)[ok])
        pair_key.append(np.broadcast_to(keys[sel][:, None], ok.shape)[ok])
        pair_point.append(point_ids[ok])

    pair_pix = np.concatenate(pair_pix)
    pair_depth = np.concatenate(pair_depth)
    pair_key = np.concatenate(pair_key)
    pair_point = np.concatenate(pair_point)

    winner = kernels.zbuffer_resolve(pair_pix, pair_depth, pair_key, h * w)
    hit = winner >= 0
    flat_ids = np.nonzero(hit)[0]
    won_points = pair_point[winner[hit]]

    rgb = np.zeros((h * w, 3), dtype=np.uint8)
    rgb[flat_ids] = cloud.colors[won_points]
    depth_buffer = np.zeros(h * w, dtype=np.float32)
    # pair_depth is the projected z of the winning point.
    depth_buffer[flat_ids] = pair_depth[winner[hit]]

    return PartialObservation(
        rgb=rgb.reshape(h, w, 3),
        support_mask=hit.reshape(h, w),
        depth_buffer=depth_buffer.reshape(h, w),
    )


def fill_levels(cfg: DecoderConfig, zoom_ratio: float) -> int:
    """Pyramid depth: base levels plus one per zoom octave, and always enough
    to spread values across the fill radius."""
    zoom_levels = math.ceil(math.log2(max(zoom_ratio, 1.0)))
    radius = max(cfg.max_fill_radius * max(zoom_ratio, 1e-9), 1.0)
    reach_levels = math.ceil(math.log2(radius)) + 2
    return max(cfg.pyramid_base_levels + zoom_levels, reach_levels)


def densify(
    partial: PartialObservation,
    query: CameraAction,
    zoom_ratio: float,
    cfg: DecoderConfig | None = None,
) -> PartialObservation:
    """Scale-aware support densification via pull-push filling.

    Identity when support is already dense (>= cfg.dense_threshold).  Filled
    pixels become supported only within cfg.max_fill_radius * zoom_ratio
    pixels of original support; everything farther stays unsupported and
    black.  Directly supported pixels are preserved bit-exactly.
    """
    cfg = cfg or DecoderConfig()
    support = partial.support_mask
    if partial.support_density >= cfg.dense_threshold:
        return partial
    if not support.any():
        return partial

    filled, reachable = kernels.pull_push(
        partial.rgb.astype(np.float64),
        support.astype(np.float64),
        fill_levels(cfg, zoom_ratio),
    )
    dist = ndimage.distance_transform_edt(~support)
    radius = cfg.max_fill_radius * zoom_ratio
    new_mask = support | ((dist <= radius) & reachable)

    rgb = np.zeros_like(partial.rgb)
    fill_px = new_mask & ~support
    rgb[fill_px] = np.clip(np.rint(filled[fill_px]), 0, 255).astype(np.uint8)
    rgb[support] = partial.rgb[support]

    return PartialObservation(
        rgb=rgb,
        support_mask=new_mask,
        depth_buffer=partial.depth_buffer,
    )


def query_zoom_ratio(
    selection: EvidenceSelection, corpus: EvidenceCorpus, query: CameraAction
) -> float:
    """Query focal over the median focal of the selected source cameras."""
    focals = [
        corpus.get(*key).action.intrinsics.focal for key in selection.indices
    ]
    if not focals:
        return 1.0
    return query.intrinsics.focal / float(np.median(focals))


def decode(
    query: CameraAction,
    selection: EvidenceSelection,
    corpus: EvidenceCorpus,
    cfg: DecoderConfig | None = None,
) -> PartialObservation:
    """Full decode: build proxy, splat, densify.

    An empty proxy decodes to an all-unsupported observation rather than an
    error, so callers can treat zero-overlap queries uniformly.
    """
    cfg = cfg or DecoderConfig()
    cloud = build_proxy(query, selection, corpus, prefilter=cfg.prefilter)
    partial = splat(cloud, query, max_splat=cfg.max_splat)
    zoom = query_zoom_ratio(selection, corpus, query)
    return densify(partial, query, zoom, cfg)
