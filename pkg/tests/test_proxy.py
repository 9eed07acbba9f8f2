import warnings

import numpy as np
import pytest

from aw4re.corpus import EvidenceCorpus, EvidenceRecord
from aw4re.errors import MissingMask
from aw4re.geometry import project_points
from aw4re.proxy import (
    PROV_OFF_TIME_STATIC,
    PROV_ON_TIME,
    build_proxy,
    save_ply,
    static_mask_apply,
)
from aw4re.retrieval import RetrievalConfig, select_evidence
from aw4re.scene import Frame

from conftest import flat_frame, identity_action

CFG = RetrievalConfig(budget=8, frustum_samples=64, depth_range=(1.0, 30.0))


def record(j, i, frame):
    return EvidenceRecord(iteration=j, time=i, frame=frame, action=identity_action(time=i))


def selection_for(corpus, time):
    return select_evidence(corpus, identity_action(time=time), CFG)


class TestStaticMask:
    def test_all_zero_mask_keeps_valid_depth(self):
        frame = flat_frame()
        rec = record(1, 1, frame)
        kept = static_mask_apply(rec)
        assert kept.sum() == frame.depth.size

    def test_all_one_mask_keeps_nothing(self):
        frame = flat_frame(dynamic=(0, 24, 0, 32))
        assert static_mask_apply(record(1, 1, frame)).sum() == 0

    def test_half_mask_pixel_count_oracle(self):
        # Survivors = valid-depth pixels minus masked valid-depth pixels.
        rgb = np.zeros((24, 32, 3), np.uint8)
        depth = np.zeros((24, 32), np.float32)
        depth[:, :20] = 5.0  # only 20 columns have depth
        mask = np.zeros((24, 32), bool)
        mask[:12] = True  # top half dynamic
        frame = Frame(rgb=rgb, depth=depth, dynamic_mask=mask)
        kept = static_mask_apply(record(1, 1, frame))
        valid = int((depth > 0).sum())
        masked_valid = int(((depth > 0) & mask).sum())
        assert kept.sum() == valid - masked_valid == 24 * 20 - 12 * 20

    def test_missing_mask_raises(self):
        frame = Frame(rgb=np.zeros((24, 32, 3), np.uint8),
                      depth=np.full((24, 32), 5.0, np.float32))
        with pytest.raises(MissingMask):
            static_mask_apply(record(1, 1, frame))


class TestBuildProxy:
    def test_single_on_time_record_lifts_every_valid_pixel(self):
        frame = flat_frame()
        corpus = EvidenceCorpus(horizon=2, records=(record(1, 1, frame),))
        sel = selection_for(corpus, 1)
        cloud = build_proxy(identity_action(time=1), sel, corpus, prefilter=False)
        assert len(cloud) == 24 * 32
        assert np.all(cloud.provenance == PROV_ON_TIME)

    def test_fully_dynamic_off_time_record_gives_empty_proxy(self):
        frame = flat_frame(dynamic=(0, 24, 0, 32))
        corpus = EvidenceCorpus(horizon=3, records=(record(1, 1, frame),))
        sel = selection_for(corpus, 3)  # off-time only
        cloud = build_proxy(identity_action(time=3), sel, corpus, prefilter=False)
        assert cloud.is_empty

    def test_on_plus_off_time_counts(self):
        on = flat_frame(depth=4.0, dynamic=(0, 6, 0, 32))
        off = flat_frame(depth=6.0, dynamic=(10, 20, 5, 15))
        corpus = EvidenceCorpus(
            horizon=3, records=(record(1, 2, on), record(1, 1, off))
        )
        sel = selection_for(corpus, 2)
        cloud = build_proxy(identity_action(time=2), sel, corpus, prefilter=False)
        n_on = int((on.depth > 0).sum())
        n_off_static = int(((off.depth > 0) & ~off.dynamic_mask).sum())
        assert len(cloud) == n_on + n_off_static
        off_pts = cloud.provenance == PROV_OFF_TIME_STATIC
        assert off_pts.sum() == n_off_static
        # Dynamic-exclusion, literally: no off-time point at a masked pixel.
        bad = 0
        for row, col in zip(cloud.source_row[off_pts], cloud.source_col[off_pts]):
            if off.dynamic_mask[row, col]:
                bad += 1
        assert bad == 0

    def test_position_consistency(self, demo_corpus, demo_sequence):
        sel = selection_for_demo(demo_corpus, demo_sequence, 3)
        query = demo_sequence[2]
        cloud = build_proxy(query, sel, demo_corpus, prefilter=False)
        uv, z = project_points(cloud.positions, cloud_action(demo_corpus, cloud, 0))
        # Every point re-projects onto its own source pixel center...
        assert np.abs(uv[:, 0] - (cloud.source_col + 0.5)).max() < 1e-6
        assert np.abs(uv[:, 1] - (cloud.source_row + 0.5)).max() < 1e-6
        # ...at its stored depth (float32 storage, machine-precision reproject).
        assert np.abs(z - cloud.source_depth).max() < 1e-9 * float(cloud.source_depth.max())
        # The stored depth is the source frame's depth, bit for bit.
        rec = demo_corpus.get(int(cloud.source_iteration[0]), int(cloud.source_time[0]))
        stored = rec.frame.depth[cloud.source_row, cloud.source_col]
        sel_points = (cloud.source_iteration == cloud.source_iteration[0]) & (
            cloud.source_time == cloud.source_time[0]
        )
        assert np.array_equal(cloud.source_depth[sel_points], stored[sel_points])

    def test_monotone_in_selection(self, demo_corpus, demo_sequence):
        query = demo_sequence[2]
        small = select_evidence(demo_corpus, query, RetrievalConfig(
            budget=2, frustum_samples=64, depth_range=(1.0, 30.0)))
        large = select_evidence(demo_corpus, query, RetrievalConfig(
            budget=5, frustum_samples=64, depth_range=(1.0, 30.0)))
        assert set(small.indices) <= set(large.indices)
        c_small = build_proxy(query, small, demo_corpus, prefilter=False)
        c_large = build_proxy(query, large, demo_corpus, prefilter=False)
        assert len(c_large) >= len(c_small)
        keys_small = set(zip(c_small.source_iteration, c_small.source_time,
                             c_small.source_row, c_small.source_col))
        keys_large = set(zip(c_large.source_iteration, c_large.source_time,
                             c_large.source_row, c_large.source_col))
        assert keys_small <= keys_large

    def test_canonical_order(self, demo_corpus, demo_sequence):
        query = demo_sequence[1]
        sel = selection_for_demo(demo_corpus, demo_sequence, 2)
        a = build_proxy(query, sel, demo_corpus)
        b = build_proxy(query, sel, demo_corpus)
        assert np.array_equal(a.positions, b.positions)
        order = np.lexsort(
            (a.source_col, a.source_row, a.source_time, a.source_iteration)
        )
        assert np.array_equal(order, np.arange(len(a)))

    def test_off_time_record_without_mask_is_skipped_loudly(self):
        no_mask = Frame(rgb=np.zeros((24, 32, 3), np.uint8),
                        depth=np.full((24, 32), 5.0, np.float32))
        corpus = EvidenceCorpus(horizon=3, records=(record(1, 1, no_mask),))
        sel = selection_for(corpus, 3)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cloud = build_proxy(identity_action(time=3), sel, corpus, prefilter=False)
        assert cloud.is_empty
        assert any("dynamic mask" in str(w.message) for w in caught)

    def test_ply_export(self, tmp_path):
        frame = flat_frame()
        corpus = EvidenceCorpus(horizon=1, records=(record(1, 1, frame),))
        sel = selection_for(corpus, 1)
        cloud = build_proxy(identity_action(time=1), sel, corpus, prefilter=False)
        out = save_ply(cloud, tmp_path / "proxy.ply")
        text = out.read_text().splitlines()
        assert text[0] == "ply"
        assert f"element vertex {len(cloud)}" in text
        assert len(text) == text.index("end_header") + 1 + len(cloud)


def selection_for_demo(corpus, sequence, time):
    return select_evidence(corpus, sequence[time - 1], CFG)


def cloud_action(corpus, cloud, idx):
    return corpus.get(int(cloud.source_iteration[idx]), int(cloud.source_time[idx])).action
