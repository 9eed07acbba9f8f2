"""Fidelity and temporal-consistency metrics, full-frame and evidence-region.

PSNR is capped at 99 dB so identical images never produce infinities in
reports.  SSIM is the standard single-scale form (11x11 Gaussian window,
sigma 1.5, K1=0.01, K2=0.03, population statistics) computed on luminance.
The perceptual distance is a deterministic multi-scale structure proxy --
mean over three dyadic scales and the three color channels of
(1 - SSIM) / 2 -- standing in for learned perceptual metrics; its numbers
are comparable to each other, not to any neural metric.  Temporal
consistency is the mean perceptual distance between consecutive frames.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

PSNR_CAP = 99.0
_WIN = 11
_PAD = _WIN // 2
_SIGMA = 1.5
_K1 = 0.01
_K2 = 0.03
_L = 255.0
MIN_EVIDENCE_COMPONENT = 32  # side of the square an evidence region must fill

CSV_COLUMNS = [
    "query_id",
    "mode",
    "full_psnr",
    "full_ssim",
    "full_perceptual",
    "evidence_psnr",
    "evidence_ssim",
    "evidence_perceptual",
    "temporal_full",
    "temporal_evidence",
]


def _as_float(img) -> np.ndarray:
    return np.asarray(img, dtype=np.float64)


def _check_pair(a, b):
    a = _as_float(a)
    b = _as_float(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def _check_mask(mask, shape):
    m = np.asarray(mask, dtype=bool)
    if m.shape != shape[:2]:
        raise ValueError(f"mask shape {m.shape} does not match image {shape[:2]}")
    if not m.any():
        raise ValueError("mask selects no pixels")
    return m


def mse(a, b, mask=None) -> float:
    a, b = _check_pair(a, b)
    diff = a - b
    if diff.ndim == 3:
        sq = (diff * diff).mean(axis=2)
    else:
        sq = diff * diff
    if mask is not None:
        m = _check_mask(mask, a.shape)
        return float(sq[m].mean())
    return float(sq.mean())


def psnr_from_mse(value: float) -> float:
    if value <= 0.0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(_L * _L / value)))


def psnr(a, b, mask=None) -> float:
    """Peak signal-to-noise ratio in dB over all (or masked) pixels."""
    return psnr_from_mse(mse(a, b, mask))


def _gaussian_kernel1d() -> np.ndarray:
    x = np.arange(-_PAD, _PAD + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / _SIGMA) ** 2)
    return k / k.sum()


_KERNEL_1D = _gaussian_kernel1d()


def _windowed_mean(img: np.ndarray) -> np.ndarray:
    """11x11 Gaussian-window means, valid region only."""
    tmp = ndimage.correlate1d(img, _KERNEL_1D, axis=0, mode="nearest")
    out = ndimage.correlate1d(tmp, _KERNEL_1D, axis=1, mode="nearest")
    return out[_PAD:-_PAD, _PAD:-_PAD]


def luminance(img) -> np.ndarray:
    arr = _as_float(img)
    if arr.ndim == 2:
        return arr
    return 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]


def _ssim_map(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    c1 = (_K1 * _L) ** 2
    c2 = (_K2 * _L) ** 2
    ux = _windowed_mean(x)
    uy = _windowed_mean(y)
    uxx = _windowed_mean(x * x)
    uyy = _windowed_mean(y * y)
    uxy = _windowed_mean(x * y)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    cov = uxy - ux * uy
    return ((2 * ux * uy + c1) * (2 * cov + c2)) / (
        (ux * ux + uy * uy + c1) * (vx + vy + c2)
    )


def _ssim_plane(x, y, mask=None):
    if x.shape[0] < _WIN or x.shape[1] < _WIN:
        raise ValueError(
            f"image {x.shape} smaller than the {_WIN}x{_WIN} SSIM window"
        )
    smap = _ssim_map(x, y)
    if mask is None:
        return float(smap.mean())
    centers = mask[_PAD:-_PAD, _PAD:-_PAD]
    if not centers.any():
        return None
    return float(smap[centers].mean())


def ssim(a, b, mask=None) -> float:
    """Single-scale SSIM on luminance; masked form averages the window
    scores whose centers are masked-in."""
    a, b = _check_pair(a, b)
    m = _check_mask(mask, a.shape) if mask is not None else None
    value = _ssim_plane(luminance(a), luminance(b), m)
    if value is None:
        raise ValueError("mask selects no interior window centers")
    return value


def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[0] & ~1, img.shape[1] & ~1
    img = img[:h, :w]
    return 0.25 * (
        img[0::2, 0::2] + img[0::2, 1::2] + img[1::2, 0::2] + img[1::2, 1::2]
    )


def _downsample_mask(mask: np.ndarray) -> np.ndarray:
    h, w = mask.shape[0] & ~1, mask.shape[1] & ~1
    mask = mask[:h, :w]
    return mask[0::2, 0::2] & mask[0::2, 1::2] & mask[1::2, 0::2] & mask[1::2, 1::2]


def perceptual_proxy(a, b, mask=None):
    """Multi-scale structure distance: mean over 3 dyadic scales and the
    color channels of (1 - SSIM)/2.  Zero iff the images are equal.

    With a mask, scales whose downsampled mask is empty are skipped; returns
    None when no scale is computable (callers report the pair as absent).
    """
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    m = _check_mask(mask, a.shape) if mask is not None else None

    planes_a = [np.ascontiguousarray(a[..., c]) for c in range(a.shape[2])]
    planes_b = [np.ascontiguousarray(b[..., c]) for c in range(b.shape[2])]
    scores = []
    for _scale in range(3):
        if planes_a[0].shape[0] < _WIN or planes_a[0].shape[1] < _WIN:
            break
        if m is None or m.any():
            channel_scores = [
                _ssim_plane(pa, pb, m) for pa, pb in zip(planes_a, planes_b)
            ]
            if all(s is not None for s in channel_scores):
                mean_ssim = float(np.mean(channel_scores))
                scores.append((1.0 - mean_ssim) / 2.0)
        planes_a = [_downsample(p) for p in planes_a]
        planes_b = [_downsample(p) for p in planes_b]
        if m is not None:
            m = _downsample_mask(m)
    if not scores:
        return None
    return float(np.mean(scores))


def temporal_consistency(seq, masks=None):
    """Mean perceptual distance between consecutive frames; lower is stabler.

    With masks, each pair is restricted to the intersection of its two
    masks; pairs with an empty intersection are skipped.  Returns None when
    every pair was skipped (reported as absent).
    """
    seq = list(seq)
    if len(seq) < 2:
        raise ValueError("temporal consistency needs at least two frames")
    if masks is not None:
        masks = list(masks)
        if len(masks) != len(seq):
            raise ValueError("mask count must match frame count")
    dists = []
    for k in range(len(seq) - 1):
        pair_mask = None
        if masks is not None:
            pair_mask = np.asarray(masks[k], bool) & np.asarray(masks[k + 1], bool)
            if not pair_mask.any():
                continue
        d = perceptual_proxy(seq[k], seq[k + 1], pair_mask)
        if d is not None:
            dists.append(d)
    if not dists:
        return None
    return float(np.mean(dists))


def evidence_region_usable(mask: np.ndarray) -> bool:
    """True when the mask's largest 4-connected component covers at least a
    32x32 pixel area (contiguous spatial support for windowed metrics)."""
    labels, count = ndimage.label(np.asarray(mask, bool))
    if count == 0:
        return False
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, np.arange(1, count + 1))
    return bool(sizes.max() >= MIN_EVIDENCE_COMPONENT * MIN_EVIDENCE_COMPONENT)


MODE_FULL_REFERENCE = "full_reference"
MODE_EVIDENCE_ONLY = "evidence_only"


@dataclass(frozen=True)
class MetricsReport:
    """Per-query evaluation, shaped like the two report tables.

    With ground truth: full-frame and evidence blocks (psnr/ssim/perceptual)
    plus full and evidence temporal consistency.  Without: evidence PSNR
    against the decoded partial's grounded pixels plus full temporal
    consistency only.  Absent values are omitted from JSON and left empty
    in CSV.
    """

    query_id: str
    mode: str
    full: dict = field(default_factory=dict)
    evidence: dict = field(default_factory=dict)
    temporal: dict = field(default_factory=dict)
    per_frame: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_json_dict(self):
        def drop_none(d):
            return {k: v for k, v in d.items() if v is not None}

        return {
            "query_id": self.query_id,
            "mode": self.mode,
            "full": drop_none(self.full),
            "evidence": drop_none(self.evidence),
            "temporal": drop_none(self.temporal),
            "per_frame": self.per_frame,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def csv_row(self):
        def fmt(value):
            return "" if value is None else f"{value:.6f}"

        return [
            self.query_id,
            self.mode,
            fmt(self.full.get("psnr")),
            fmt(self.full.get("ssim")),
            fmt(self.full.get("perceptual")),
            fmt(self.evidence.get("psnr")),
            fmt(self.evidence.get("ssim")),
            fmt(self.evidence.get("perceptual")),
            fmt(self.temporal.get("full_tc")),
            fmt(self.temporal.get("evidence_tc")),
        ]


def write_csv(reports, path):
    """Fixed column order: full block, evidence block, temporal block."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for report in reports:
        writer.writerow(report.csv_row())
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _aggregate_psnr(sq_sums, counts):
    total = sum(counts)
    if total == 0:
        return None
    return psnr_from_mse(sum(sq_sums) / total)


def evaluate_query(
    predicted,
    partials,
    reference=None,
    query_id: str = "query",
    metadata: dict | None = None,
) -> MetricsReport:
    """Score a completed query video.

    ``predicted`` are CompletedObservation, ``partials`` the decoded partial
    observations they came from (source of the support masks and, without
    ground truth, of the grounded pixel values), ``reference`` optional
    oracle frames.
    """
    predicted = list(predicted)
    partials = list(partials)
    if len(predicted) != len(partials):
        raise ValueError("predicted and partial counts differ")
    masks = [p.support_mask for p in partials]
    pred_rgb = [p.rgb for p in predicted]

    per_frame = []
    if reference is not None:
        reference = list(reference)
        if len(reference) != len(predicted):
            raise ValueError("reference count differs from predictions")
        full_sq, full_n = [], []
        ev_sq, ev_n = [], []
        ssim_vals, perc_vals = [], []
        ev_ssim_vals, ev_perc_vals = [], []
        for t, (pred, ref, mask) in enumerate(zip(pred_rgb, reference, masks)):
            ref_rgb = ref.rgb
            frame_mse = mse(pred, ref_rgb)
            full_sq.append(frame_mse * pred.shape[0] * pred.shape[1])
            full_n.append(pred.shape[0] * pred.shape[1])
            frame_ssim = ssim(pred, ref_rgb)
            frame_perc = perceptual_proxy(pred, ref_rgb)
            ssim_vals.append(frame_ssim)
            perc_vals.append(frame_perc)

            row = {
                "t": t + 1,
                "psnr": psnr_from_mse(frame_mse),
                "ssim": frame_ssim,
                "perceptual": frame_perc,
                "support_density": float(np.mean(mask)),
            }
            if mask.any():
                m_mse = mse(pred, ref_rgb, mask)
                ev_sq.append(m_mse * int(np.count_nonzero(mask)))
                ev_n.append(int(np.count_nonzero(mask)))
                row["evidence_psnr"] = psnr_from_mse(m_mse)
                if evidence_region_usable(mask):
                    es = ssim(pred, ref_rgb, mask)
                    ep = perceptual_proxy(pred, ref_rgb, mask)
                    row["evidence_ssim"] = es
                    ev_ssim_vals.append(es)
                    if ep is not None:
                        row["evidence_perceptual"] = ep
                        ev_perc_vals.append(ep)
            per_frame.append(row)

        n_frames = len(pred_rgb)
        full_block = {
            "psnr": _aggregate_psnr(full_sq, full_n),
            "ssim": float(np.mean(ssim_vals)),
            "perceptual": float(np.mean(perc_vals)),
        }
        evidence_block = {
            "psnr": _aggregate_psnr(ev_sq, ev_n),
            "ssim": float(np.mean(ev_ssim_vals)) if ev_ssim_vals else None,
            "perceptual": float(np.mean(ev_perc_vals)) if ev_perc_vals else None,
        }
        temporal_block = {
            "full_tc": temporal_consistency(pred_rgb) if n_frames >= 2 else None,
            "evidence_tc": temporal_consistency(pred_rgb, masks) if n_frames >= 2 else None,
        }
        mode = MODE_FULL_REFERENCE
    else:
        # Without ground truth, fidelity can only be judged against the
        # pixels evidence actually constrained.
        ev_sq, ev_n = [], []
        for t, (pred, partial, mask) in enumerate(zip(pred_rgb, partials, masks)):
            row = {"t": t + 1, "support_density": float(np.mean(mask))}
            if mask.any():
                m_mse = mse(pred, partial.rgb, mask)
                ev_sq.append(m_mse * int(np.count_nonzero(mask)))
                ev_n.append(int(np.count_nonzero(mask)))
                row["evidence_psnr"] = psnr_from_mse(m_mse)
            per_frame.append(row)
        full_block = {}
        evidence_block = {"psnr": _aggregate_psnr(ev_sq, ev_n)}
        temporal_block = {
            "full_tc": temporal_consistency(pred_rgb) if len(pred_rgb) >= 2 else None
        }
        mode = MODE_EVIDENCE_ONLY

    return MetricsReport(
        query_id=query_id,
        mode=mode,
        full=full_block,
        evidence=evidence_block,
        temporal=temporal_block,
        per_frame=per_frame,
        metadata=metadata or {},
    )
