"""Fill unsupported regions of a partial video.

The built-in baseline is deterministic: per frame, holes take the pull-push
spatial fill, then a temporal pass blends in the previous completed frame
wherever that frame's pixel was itself supported or already propagated.
Frames with no support at all copy the propagated value outright, so a
static fully-observed first frame propagates unchanged.  Evidence-backed
pixels are never altered.

Generative completion plugs in through a subprocess protocol: the engine
writes a request directory (frames + masks + manifest), invokes
``<plugin> <request_dir> <response_dir>``, and reads back completed frames.
"""

from __future__ import annotations

import json
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .corpus import decode_png, encode_mask_png, encode_png
from .decoder import PartialObservation
from .errors import EvidenceViolation, MalformedResponse, PluginError, PluginTimeout

BASELINE_SOURCE = "baseline"
STRICT_TOLERANCE = 2  # max per-channel change on supported pixels, uint8 scale


def _frozen(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class CompletedObservation:
    """Final estimated frame; keeps the support mask it inherited."""

    rgb: np.ndarray  # (H, W, 3) uint8
    support_mask: np.ndarray  # (H, W) bool
    completion_source: str = BASELINE_SOURCE

    def __post_init__(self):
        rgb = np.ascontiguousarray(self.rgb, dtype=np.uint8)
        mask = np.ascontiguousarray(self.support_mask, dtype=bool)
        if mask.shape != rgb.shape[:2]:
            raise ValueError("support mask shape does not match rgb")
        object.__setattr__(self, "rgb", _frozen(rgb))
        object.__setattr__(self, "support_mask", _frozen(mask))


def _check_same_dims(partials):
    if not partials:
        raise ValueError("empty partial sequence")
    h, w = partials[0].height, partials[0].width
    for t, p in enumerate(partials):
        if (p.height, p.width) != (h, w):
            raise ValueError(
                f"frame {t} is {p.height}x{p.width}, expected {h}x{w}"
            )
    return h, w


def complete_baseline(partials) -> list:
    """Deterministic spatial + temporal fill; supported pixels untouched."""
    partials = list(partials)
    h, w = _check_same_dims(partials)
    levels = kernels.full_pyramid_levels(h, w)

    out = []
    prev_rgb = None
    prev_propagatable = None
    for partial in partials:
        support = partial.support_mask
        rgb = np.zeros((h, w, 3), dtype=np.float64)
        rgb[support] = partial.rgb[support]

        has_support = bool(support.any())
        if has_support:
            filled, _ = kernels.pull_push(
                partial.rgb.astype(np.float64), support.astype(np.float64), levels
            )
        else:
            filled = None

        hole = ~support
        if prev_rgb is not None:
            prop = hole & prev_propagatable
        else:
            prop = np.zeros((h, w), dtype=bool)

        if filled is not None:
            rgb[hole] = filled[hole]
            rgb[prop] = 0.5 * filled[prop] + 0.5 * prev_rgb[prop]
        elif prev_rgb is not None:
            rgb[prop] = prev_rgb[prop]

        frame = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
        frame[support] = partial.rgb[support]  # exact, no float round-trip
        out.append(
            CompletedObservation(
                rgb=frame, support_mask=support, completion_source=BASELINE_SOURCE
            )
        )
        prev_rgb = frame.astype(np.float64)
        prev_propagatable = support | prop
    return out


@dataclass(frozen=True)
class PluginDescriptor:
    """External completion plugin invoked as ``<command> <request> <response>``."""

    command: str
    plugin_id: str = "external"
    timeout_s: float = 600.0
    strict: bool = False


def write_plugin_request(partials, request_dir: Path) -> None:
    request_dir.mkdir(parents=True, exist_ok=True)
    h, w = _check_same_dims(partials)
    for t, partial in enumerate(partials, start=1):
        (request_dir / f"frame_{t:04d}.png").write_bytes(encode_png(partial.rgb))
        (request_dir / f"mask_{t:04d}.png").write_bytes(
            encode_mask_png(partial.support_mask)
        )
    manifest = {
        "frame_count": len(partials),
        "width": w,
        "height": h,
        "frames": [
            {"index": t, "frame": f"frame_{t:04d}.png", "mask": f"mask_{t:04d}.png"}
            for t in range(1, len(partials) + 1)
        ],
    }
    (request_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))


def complete_external(partials, plugin: PluginDescriptor, workdir=None) -> list:
    """Run an external generative completion plugin over the partial video.

    Validates the response frame count and dimensions; in strict mode also
    rejects responses that change any supported pixel by more than
    STRICT_TOLERANCE per channel.
    """
    partials = list(partials)
    h, w = _check_same_dims(partials)

    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        request_dir = Path(tmp) / "request"
        response_dir = Path(tmp) / "response"
        write_plugin_request(partials, request_dir)
        response_dir.mkdir()

        try:
            result = subprocess.run(
                [plugin.command, str(request_dir), str(response_dir)],
                timeout=plugin.timeout_s,
                capture_output=True,
            )
        except subprocess.TimeoutExpired as exc:
            raise PluginTimeout(
                f"plugin {plugin.plugin_id!r} exceeded {plugin.timeout_s}s"
            ) from exc
        if result.returncode != 0:
            raise PluginError(
                f"plugin {plugin.plugin_id!r} exited {result.returncode}: "
                f"{result.stderr.decode(errors='replace')[:500]}"
            )

        frames = []
        for t in range(1, len(partials) + 1):
            path = response_dir / f"frame_{t:04d}.png"
            if not path.is_file():
                raise MalformedResponse(
                    f"plugin response missing frame_{t:04d}.png "
                    f"(expected {len(partials)} frames)"
                )
            rgb = decode_png(path.read_bytes())
            if rgb.shape != (h, w, 3):
                raise MalformedResponse(
                    f"frame {t} has shape {rgb.shape}, expected {(h, w, 3)}"
                )
            frames.append(rgb)
        extra = sorted(response_dir.glob("frame_*.png"))
        if len(extra) != len(partials):
            raise MalformedResponse(
                f"plugin wrote {len(extra)} frames, expected {len(partials)}"
            )

    if plugin.strict:
        for t, (partial, rgb) in enumerate(zip(partials, frames), start=1):
            mask = partial.support_mask
            if not mask.any():
                continue
            diff = np.abs(
                rgb[mask].astype(np.int16) - partial.rgb[mask].astype(np.int16)
            )
            worst = int(diff.max()) if diff.size else 0
            if worst > STRICT_TOLERANCE:
                raise EvidenceViolation(
                    f"frame {t}: plugin changed a supported pixel by {worst}/255 "
                    f"(> {STRICT_TOLERANCE}/255)"
                )

    return [
        CompletedObservation(
            rgb=rgb,
            support_mask=partial.support_mask,
            completion_source=f"external:{plugin.plugin_id}",
        )
        for partial, rgb in zip(partials, frames)
    ]
