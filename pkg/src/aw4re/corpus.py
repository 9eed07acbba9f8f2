"""Observation history: append-only corpus of (frame, action) records.

Snapshots are immutable values: ``add_iteration`` returns a new corpus that
shares record objects with its parent, so readers holding an older snapshot
never observe later writes.

On-disk layout (one directory per corpus)::

    manifest.json             horizon, iterations, per-record file refs + sha256
    rgb_JJJJ_IIII.png         8-bit RGB
    depth_JJJJ_IIII.awd       b"AWDEPTH1" + u32le width + u32le height
                              + float32le row-major depth (optional)
    mask_JJJJ_IIII.png        1-bit dynamic mask (optional)
    action_JJJJ_IIII.json     camera action (flat schema, see geometry)

Depth and mask files are optional so externally produced sequences without
those channels can be imported; synthetic capture always writes them.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ChecksumMismatch, CorruptManifest, MissingFrameFile
from .geometry import ActionSequence, CameraAction
from .scene import Frame

_DEPTH_MAGIC = b"AWDEPTH1"
_FORMAT_NAME = "aw4re-corpus"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EvidenceRecord:
    """One captured frame with the action that produced it."""

    iteration: int  # j >= 1
    time: int  # i in 1..T
    frame: Frame
    action: CameraAction

    def __post_init__(self):
        if self.iteration < 1:
            raise ValueError(f"iteration must be >= 1, got {self.iteration}")
        if self.action.time != self.time:
            raise ValueError(
                f"action.time={self.action.time} != record time={self.time}"
            )
        intr = self.action.intrinsics
        if (self.frame.height, self.frame.width) != (intr.height, intr.width):
            raise ValueError(
                f"frame {self.frame.height}x{self.frame.width} does not match "
                f"intrinsics {intr.height}x{intr.width} at (j={self.iteration}, i={self.time})"
            )

    @property
    def key(self):
        return (self.iteration, self.time)

    @property
    def has_depth(self) -> bool:
        return self.frame.depth is not None


@dataclass(frozen=True)
class EvidenceCorpus:
    """Immutable snapshot of the observation history."""

    horizon: int
    records: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        records = tuple(sorted(self.records, key=lambda r: r.key))
        seen = set()
        for rec in records:
            if not (1 <= rec.time <= self.horizon):
                raise ValueError(f"record time {rec.time} outside 1..{self.horizon}")
            if rec.key in seen:
                raise ValueError(f"duplicate record for (j={rec.iteration}, i={rec.time})")
            seen.add(rec.key)
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "_index", {r.key: r for r in records})

    @property
    def iteration_count(self) -> int:
        """Number of completed iterations (the k-1 of the history)."""
        return max((r.iteration for r in self.records), default=0)

    def __len__(self):
        return len(self.records)

    def get(self, iteration: int, time: int) -> EvidenceRecord:
        return self._index[(iteration, time)]

    def __contains__(self, key):
        return key in self._index

    def add_iteration(self, actions: ActionSequence, frames) -> "EvidenceCorpus":
        """New snapshot with one more iteration appended; self is unchanged."""
        frames = list(frames)
        if actions.horizon != self.horizon:
            raise ValueError(
                f"action horizon {actions.horizon} != corpus horizon {self.horizon}"
            )
        if len(frames) != self.horizon:
            raise ValueError(
                f"got {len(frames)} frames for horizon {self.horizon}"
            )
        j = self.iteration_count + 1
        new = [
            EvidenceRecord(iteration=j, time=t + 1, frame=frame, action=actions[t])
            for t, frame in enumerate(frames)
        ]
        return EvidenceCorpus(horizon=self.horizon, records=self.records + tuple(new))

    def content_hash(self) -> str:
        """sha256 over all pixel data, depths, masks, and actions."""
        digest = hashlib.sha256()
        for rec in self.records:
            digest.update(struct.pack("<II", rec.iteration, rec.time))
            digest.update(rec.frame.rgb.tobytes())
            if rec.frame.depth is not None:
                digest.update(rec.frame.depth.astype("<f4").tobytes())
            if rec.frame.dynamic_mask is not None:
                digest.update(np.packbits(rec.frame.dynamic_mask).tobytes())
            digest.update(
                json.dumps(rec.action.to_dict(), sort_keys=True).encode("utf-8")
            )
        return digest.hexdigest()


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def encode_depth(depth: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(depth, dtype="<f4")
    h, w = arr.shape
    return _DEPTH_MAGIC + struct.pack("<II", w, h) + arr.tobytes()


def decode_depth(data: bytes) -> np.ndarray:
    if len(data) < 16 or data[:8] != _DEPTH_MAGIC:
        raise CorruptManifest("bad depth header")
    w, h = struct.unpack("<II", data[8:16])
    expected = 16 + 4 * w * h
    if len(data) != expected:
        raise CorruptManifest(
            f"depth payload is {len(data)} bytes, expected {expected}"
        )
    return np.frombuffer(data[16:], dtype="<f4").reshape(h, w)


def encode_png(rgb: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(rgb), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def encode_mask_png(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    img = Image.fromarray((np.ascontiguousarray(mask, dtype=np.uint8) * 255))
    img.convert("1").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def decode_mask_png(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        return np.asarray(img.convert("1"), dtype=bool)


def _record_stem(j: int, i: int) -> str:
    return f"{j:04d}_{i:04d}"


def save(corpus: EvidenceCorpus, path) -> Path:
    """Write the corpus directory; load(save(c)) is bit-exact."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in corpus.records:
        stem = _record_stem(rec.iteration, rec.time)
        files = {}
        checks = {}

        rgb_bytes = encode_png(rec.frame.rgb)
        files["rgb"] = f"rgb_{stem}.png"
        checks["rgb"] = _sha256_bytes(rgb_bytes)
        (root / files["rgb"]).write_bytes(rgb_bytes)

        action_bytes = json.dumps(rec.action.to_dict(), indent=2, sort_keys=True).encode("utf-8")
        files["action"] = f"action_{stem}.json"
        checks["action"] = _sha256_bytes(action_bytes)
        (root / files["action"]).write_bytes(action_bytes)

        if rec.frame.depth is not None:
            depth_bytes = encode_depth(rec.frame.depth)
            files["depth"] = f"depth_{stem}.awd"
            checks["depth"] = _sha256_bytes(depth_bytes)
            (root / files["depth"]).write_bytes(depth_bytes)
        else:
            files["depth"] = None

        if rec.frame.dynamic_mask is not None:
            mask_bytes = encode_mask_png(rec.frame.dynamic_mask)
            files["mask"] = f"mask_{stem}.png"
            checks["mask"] = _sha256_bytes(mask_bytes)
            (root / files["mask"]).write_bytes(mask_bytes)
        else:
            files["mask"] = None

        entries.append(
            {
                "iteration": rec.iteration,
                "time": rec.time,
                "files": files,
                "checksums": checks,
            }
        )

    manifest = {
        "format": _FORMAT_NAME,
        "version": _FORMAT_VERSION,
        "horizon": corpus.horizon,
        "iterations": sorted({r.iteration for r in corpus.records}),
        "records": entries,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return root


def _read_entry_file(root: Path, entry: dict, kind: str, required: bool) -> bytes | None:
    where = f"(j={entry['iteration']}, i={entry['time']})"
    name = entry["files"].get(kind)
    if name is None:
        if required:
            raise CorruptManifest(f"record {where} lists no {kind} file")
        return None
    path = root / name
    if not path.is_file():
        raise MissingFrameFile(f"missing {kind} file {name} for record {where}")
    data = path.read_bytes()
    expected = entry.get("checksums", {}).get(kind)
    if expected is not None and _sha256_bytes(data) != expected:
        raise ChecksumMismatch(f"checksum mismatch in {kind} file for record {where}")
    return data


def load(path) -> EvidenceCorpus:
    """Read a corpus directory, verifying checksums and per-record geometry."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise CorruptManifest(f"no manifest.json under {root}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptManifest(f"manifest.json is not valid JSON: {exc}") from exc
    if manifest.get("format") != _FORMAT_NAME:
        raise CorruptManifest(f"unknown corpus format {manifest.get('format')!r}")

    try:
        horizon = int(manifest["horizon"])
        entries = manifest["records"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptManifest(f"manifest missing required fields: {exc}") from exc

    records = []
    for entry in entries:
        where = f"(j={entry.get('iteration')}, i={entry.get('time')})"
        rgb = decode_png(_read_entry_file(root, entry, "rgb", required=True))
        action = CameraAction.from_dict(
            json.loads(_read_entry_file(root, entry, "action", required=True))
        )

        depth_bytes = _read_entry_file(root, entry, "depth", required=False)
        depth = None
        if depth_bytes is not None:
            try:
                depth = decode_depth(depth_bytes)
            except CorruptManifest as exc:
                raise CorruptManifest(f"record {where}: {exc}") from exc
            if depth.shape != rgb.shape[:2]:
                raise CorruptManifest(
                    f"record {where}: depth {depth.shape} does not match rgb {rgb.shape[:2]}"
                )

        mask_bytes = _read_entry_file(root, entry, "mask", required=False)
        mask = decode_mask_png(mask_bytes) if mask_bytes is not None else None

        records.append(
            EvidenceRecord(
                iteration=int(entry["iteration"]),
                time=int(entry["time"]),
                frame=Frame(rgb=rgb, depth=depth, dynamic_mask=mask),
                action=action,
            )
        )
    return EvidenceCorpus(horizon=horizon, records=tuple(records))
