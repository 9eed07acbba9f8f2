import os
import stat
import textwrap

import numpy as np
import pytest

from aw4re.completion import (
    PluginDescriptor,
    complete_baseline,
    complete_external,
)
from aw4re.decoder import PartialObservation
from aw4re.errors import EvidenceViolation, MalformedResponse, PluginError, PluginTimeout


def partial(rgb, mask):
    rgb = np.asarray(rgb, np.uint8)
    return PartialObservation(
        rgb=rgb,
        support_mask=np.asarray(mask, bool),
        depth_buffer=np.zeros(rgb.shape[:2], np.float32),
    )


def full_frame(color, h=24, w=32):
    rgb = np.zeros((h, w, 3), np.uint8)
    rgb[:] = color
    return partial(rgb, np.ones((h, w), bool))


def empty_frame(h=24, w=32):
    return partial(np.zeros((h, w, 3), np.uint8), np.zeros((h, w), bool))


class TestBaseline:
    def test_fully_supported_is_identity(self):
        frames = [full_frame((10 * t, 5, 200 - 10 * t)) for t in range(1, 5)]
        out = complete_baseline(frames)
        for src, dst in zip(frames, out):
            assert np.array_equal(dst.rgb, src.rgb)
            assert dst.completion_source == "baseline"

    def test_propagation_fixed_point(self):
        # Static world observed once: later, fully unsupported frames must
        # equal the first completed frame in the propagated region.
        rng = np.random.default_rng(0)
        first = rng.integers(0, 256, (24, 32, 3), np.uint8)
        frames = [partial(first, np.ones((24, 32), bool))] + [empty_frame() for _ in range(4)]
        out = complete_baseline(frames)
        for later in out[1:]:
            assert np.array_equal(later.rgb, first)

    def test_constant_half_fill(self):
        rgb = np.zeros((24, 32, 3), np.uint8)
        mask = np.zeros((24, 32), bool)
        rgb[:, :16] = (60, 120, 180)
        mask[:, :16] = True
        out = complete_baseline([partial(rgb, mask)])
        assert np.all(out[0].rgb.reshape(-1, 3) == (60, 120, 180))

    def test_evidence_preserved_bit_exact(self):
        rng = np.random.default_rng(9)
        frames = []
        for _ in range(3):
            rgb = rng.integers(0, 256, (24, 32, 3), np.uint8)
            mask = rng.random((24, 32)) < 0.4
            rgb[~mask] = 0
            frames.append(partial(rgb, mask))
        out = complete_baseline(frames)
        for src, dst in zip(frames, out):
            assert np.array_equal(dst.rgb[src.support_mask], src.rgb[src.support_mask])

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        frames = []
        for _ in range(3):
            rgb = rng.integers(0, 256, (24, 32, 3), np.uint8)
            mask = rng.random((24, 32)) < 0.5
            rgb[~mask] = 0
            frames.append(partial(rgb, mask))
        a = complete_baseline(frames)
        b = complete_baseline(frames)
        for x, y in zip(a, b):
            assert np.array_equal(x.rgb, y.rgb)

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError):
            complete_baseline([full_frame((1, 2, 3)), full_frame((1, 2, 3), h=10, w=10)])

    def test_temporal_blend_halves_toward_previous(self):
        # Frame 2 has spatial support of one color and a propagated pixel
        # whose previous value differs: the hole blends 50/50.
        h, w = 24, 32
        first = full_frame((100, 100, 100), h, w)
        rgb2 = np.zeros((h, w, 3), np.uint8)
        mask2 = np.zeros((h, w), bool)
        rgb2[:, :16] = (200, 200, 200)
        mask2[:, :16] = True
        out = complete_baseline([first, partial(rgb2, mask2)])
        hole = out[1].rgb[:, 16:]
        assert np.all(hole == 150)  # 0.5 * 200 (fill) + 0.5 * 100 (previous)


def _write_plugin(tmp_path, name, body):
    path = tmp_path / name
    path.write_text("#!/usr/bin/env python3\n" + textwrap.dedent(body))
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return str(path)


IDENTITY_PLUGIN = """
import json, shutil, sys
from pathlib import Path
req, resp = Path(sys.argv[1]), Path(sys.argv[2])
manifest = json.loads((req / "manifest.json").read_text())
for entry in manifest["frames"]:
    shutil.copy(req / entry["frame"], resp / entry["frame"])
"""

SHORT_PLUGIN = """
import json, shutil, sys
from pathlib import Path
req, resp = Path(sys.argv[1]), Path(sys.argv[2])
manifest = json.loads((req / "manifest.json").read_text())
for entry in manifest["frames"][:-1]:
    shutil.copy(req / entry["frame"], resp / entry["frame"])
"""

PERTURB_PLUGIN = """
import json, sys
import numpy as np
from pathlib import Path
from PIL import Image
req, resp = Path(sys.argv[1]), Path(sys.argv[2])
manifest = json.loads((req / "manifest.json").read_text())
for entry in manifest["frames"]:
    arr = np.asarray(Image.open(req / entry["frame"]).convert("RGB"), np.int16)
    out = np.clip(arr + 10, 0, 255).astype(np.uint8)
    Image.fromarray(out, "RGB").save(resp / entry["frame"])
"""

FAILING_PLUGIN = """
import sys
sys.exit(3)
"""

SLEEPY_PLUGIN = """
import time
time.sleep(30)
"""


@pytest.fixture
def frames():
    rng = np.random.default_rng(5)
    out = []
    for _ in range(3):
        rgb = rng.integers(0, 256, (24, 32, 3), np.uint8)
        mask = rng.random((24, 32)) < 0.5
        rgb[~mask] = 0
        out.append(partial(rgb, mask))
    return out


class TestExternal:
    def test_identity_plugin(self, tmp_path, frames):
        cmd = _write_plugin(tmp_path, "identity.py", IDENTITY_PLUGIN)
        out = complete_external(frames, PluginDescriptor(command=cmd, plugin_id="id"))
        for src, dst in zip(frames, out):
            assert np.array_equal(dst.rgb, src.rgb)
            assert dst.completion_source == "external:id"

    def test_wrong_frame_count(self, tmp_path, frames):
        cmd = _write_plugin(tmp_path, "short.py", SHORT_PLUGIN)
        with pytest.raises(MalformedResponse):
            complete_external(frames, PluginDescriptor(command=cmd))

    def test_strict_mode_rejects_evidence_changes(self, tmp_path, frames):
        cmd = _write_plugin(tmp_path, "perturb.py", PERTURB_PLUGIN)
        with pytest.raises(EvidenceViolation):
            complete_external(frames, PluginDescriptor(command=cmd, strict=True))

    def test_lenient_mode_tolerates_changes(self, tmp_path, frames):
        cmd = _write_plugin(tmp_path, "perturb.py", PERTURB_PLUGIN)
        out = complete_external(frames, PluginDescriptor(command=cmd, strict=False))
        assert len(out) == len(frames)

    def test_nonzero_exit(self, tmp_path, frames):
        cmd = _write_plugin(tmp_path, "fail.py", FAILING_PLUGIN)
        with pytest.raises(PluginError):
            complete_external(frames, PluginDescriptor(command=cmd))

    def test_timeout(self, tmp_path, frames):
        cmd = _write_plugin(tmp_path, "sleepy.py", SLEEPY_PLUGIN)
        with pytest.raises(PluginTimeout):
            complete_external(frames, PluginDescriptor(command=cmd, timeout_s=1.0))
