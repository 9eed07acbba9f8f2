import itertools
import math

import numpy as np
import pytest

from aw4re.corpus import EvidenceCorpus, EvidenceRecord
from aw4re.geometry import CameraAction, Pose, rotation_about_axis, transform_action
from aw4re.retrieval import (
    MODE_COVERAGE,
    RetrievalConfig,
    partition,
    relevance,
    scale_compatibility,
    select_evidence,
)
from aw4re.scene import Frame

from conftest import flat_frame, identity_action, looking_action, tiny_intrinsics

CFG = RetrievalConfig(budget=2, frustum_samples=64, depth_range=(1.0, 30.0))


def record_at(j, i, action=None, depth=5.0, with_depth=True):
    frame = flat_frame(depth=depth)
    if not with_depth:
        frame = Frame(rgb=frame.rgb)  # no depth channel
    return EvidenceRecord(iteration=j, time=i, frame=frame, action=action or identity_action(time=i))


def corpus_from(records, horizon=12):
    return EvidenceCorpus(horizon=horizon, records=tuple(records))


class TestRelevance:
    def test_identical_record_scores_one(self):
        query = identity_action(time=3)
        rec = record_at(1, 3)
        assert relevance(rec, query, CFG) == pytest.approx(1.0, abs=1e-9)

    def test_disjoint_and_distant_leaves_scale_term(self):
        cfg = RetrievalConfig(budget=2, temporal_scale=1.0, frustum_samples=64,
                              depth_range=(1.0, 30.0))
        query = identity_action(time=60, intr=tiny_intrinsics())
        away = Pose(rotation_about_axis((0, 1, 0), math.pi), np.zeros(3))
        rec = record_at(1, 1, action=CameraAction(tiny_intrinsics(), away, 1))
        sigma = scale_compatibility(rec, query, cfg)
        score = relevance(rec, query, cfg)
        assert score == pytest.approx(cfg.w_scale * sigma, abs=1e-12)

    def test_yawed_candidate_matches_recomposed_score(self):
        # Compose the closed-form temporal/scale terms with a Monte-Carlo
        # overlap estimate computed independently of the sampler.
        cfg = RetrievalConfig(budget=2, temporal_scale=10.0, frustum_samples=512,
                              depth_range=(1.0, 30.0))
        query = identity_action(time=8)
        yaw = Pose(rotation_about_axis((0, 1, 0), math.radians(10.0)), np.zeros(3))
        rec = record_at(1, 3, action=CameraAction(tiny_intrinsics(), yaw, 3))

        rng = np.random.default_rng(7)
        qi = query.intrinsics
        n = 200_000
        u = rng.uniform(0, qi.width, n)
        v = rng.uniform(0, qi.height, n)
        d = np.exp(rng.uniform(math.log(1.0), math.log(30.0), n))
        cam = np.stack([(u - qi.cx) / qi.fx * d, (v - qi.cy) / qi.fy * d, d], axis=1)
        cam2 = cam @ yaw.rotation.T
        z = cam2[:, 2]
        uu = qi.fx * cam2[:, 0] / z + qi.cx
        vv = qi.fy * cam2[:, 1] / z + qi.cy
        g_oracle = float(np.mean(
            (z > qi.near) & (z <= qi.far) & (uu >= 0) & (uu < qi.width)
            & (vv >= 0) & (vv < qi.height)
        ))
        sigma = scale_compatibility(rec, query, cfg)
        expected = cfg.w_geo * g_oracle + cfg.w_time * math.exp(-0.5) + cfg.w_scale * sigma
        assert relevance(rec, query, cfg) == pytest.approx(expected, abs=cfg.w_geo * 0.02 + 1e-9)

    def test_score_in_unit_interval(self):
        rng = np.random.default_rng(2)
        query = looking_action((6, 0, 3), (0, 0, 0), time=5)
        for _ in range(10):
            eye = rng.uniform(-8, 8, 3)
            eye[2] = abs(eye[2]) + 1
            t = int(rng.integers(1, 12))
            rec = record_at(1, t, action=looking_action(eye, (0, 0, 0), time=t))
            score = relevance(rec, query, CFG)
            assert 0.0 <= score <= 1.0

    def test_rigid_invariance(self):
        query = looking_action((6, 1, 3), (0, 0, 0), time=4)
        rec = record_at(1, 2, action=looking_action((4, -3, 2), (0, 0, 1), time=2))
        rot = rotation_about_axis((0.2, 0.9, 0.1), 0.8)
        shift = np.array([3.0, 5.0, -1.0])
        moved = EvidenceRecord(
            rec.iteration, rec.time, rec.frame, transform_action(rec.action, rot, shift)
        )
        a = relevance(rec, query, CFG)
        b = relevance(moved, transform_action(query, rot, shift), CFG)
        assert a == pytest.approx(b, abs=1e-9)


class TestSelect:
    def _distinct_corpus(self):
        # Five records at increasing temporal distance from t=6: distinct scores.
        records = [record_at(1, i) for i in (1, 2, 4, 5, 6)]
        return corpus_from(records)

    def test_top2_equals_exhaustive(self):
        corpus = self._distinct_corpus()
        query = identity_action(time=6)
        cfg = RetrievalConfig(budget=2, frustum_samples=64, depth_range=(1.0, 30.0))
        sel = select_evidence(corpus, query, cfg)
        scores = {rec.key: relevance(rec, query, cfg) for rec in corpus.records}
        best = max(
            itertools.combinations(scores, 2), key=lambda ks: sum(scores[k] for k in ks)
        )
        assert set(sel.indices) == set(best)

    def test_budget_larger_than_corpus(self):
        corpus = self._distinct_corpus()
        cfg = RetrievalConfig(budget=50, frustum_samples=64, depth_range=(1.0, 30.0))
        sel = select_evidence(corpus, identity_action(time=6), cfg)
        assert len(sel) == len(corpus)

    def test_tie_break_prefers_temporally_closer(self):
        # Zero temporal weight makes two same-pose records tie exactly.
        cfg = RetrievalConfig(budget=1, w_geo=0.8, w_time=0.0, w_scale=0.2,
                              frustum_samples=64, depth_range=(1.0, 30.0))
        corpus = corpus_from([record_at(1, 2), record_at(1, 5)])
        sel = select_evidence(corpus, identity_action(time=6), cfg)
        assert sel.indices == [(1, 5)]

    def test_selection_deterministic(self):
        corpus = self._distinct_corpus()
        query = identity_action(time=6)
        a = select_evidence(corpus, query, CFG)
        b = select_evidence(corpus, query, CFG)
        assert a == b

    def test_budget_respected(self):
        corpus = self._distinct_corpus()
        for m in (1, 2, 3):
            cfg = RetrievalConfig(budget=m, frustum_samples=64, depth_range=(1.0, 30.0))
            assert len(select_evidence(corpus, identity_action(time=6), cfg)) == m

    def test_scores_nonincreasing(self):
        corpus = self._distinct_corpus()
        sel = select_evidence(corpus, identity_action(time=6),
                              RetrievalConfig(budget=5, frustum_samples=64,
                                              depth_range=(1.0, 30.0)))
        scores = [e.score for e in sel.entries]
        assert scores == sorted(scores, reverse=True)

    def test_depthless_records_flagged_and_overrun(self):
        # The best-scoring record lacks depth: it must be reported, not
        # selected, and the budget spent on usable records.
        records = [
            record_at(1, 6, with_depth=False),
            record_at(1, 5),
            record_at(1, 3),
        ]
        corpus = corpus_from(records)
        cfg = RetrievalConfig(budget=2, frustum_samples=64, depth_range=(1.0, 30.0))
        sel = select_evidence(corpus, identity_action(time=6), cfg)
        assert set(sel.indices) == {(1, 5), (1, 3)}
        assert [e.key for e in sel.skipped_no_depth] == [(1, 6)]

    def test_time_local_restriction(self):
        corpus = self._distinct_corpus()
        cfg = RetrievalConfig(budget=4, frustum_samples=64, depth_range=(1.0, 30.0),
                              restrict_same_time=True)
        sel = select_evidence(corpus, identity_action(time=6), cfg)
        assert sel.indices == [(1, 6)]
        cfg5 = RetrievalConfig(budget=4, frustum_samples=64, depth_range=(1.0, 30.0),
                               restrict_same_time=True)
        sel_none = select_evidence(corpus, identity_action(time=3), cfg5)
        assert sel_none.indices == []

    def test_coverage_greedy_avoids_duplicates(self):
        # Three clones of one viewpoint plus one side view: the greedy mode
        # must fill its second slot with the side view.
        front = looking_action((7.0, 0.0, 3.0), (0, 0, 0.5), time=1)
        side = looking_action((0.0, 7.0, 3.0), (0, 0, 0.5), time=4)
        records = [
            record_at(1, 1, action=front),
            record_at(1, 2, action=CameraAction(front.intrinsics, front.pose, 2)),
            record_at(1, 3, action=CameraAction(front.intrinsics, front.pose, 3)),
            record_at(1, 4, action=side),
        ]
        corpus = corpus_from(records)
        query = looking_action((7.0, 0.5, 3.0), (0, 0, 0.5), time=2)
        top = select_evidence(
            corpus, query,
            RetrievalConfig(budget=2, frustum_samples=256, depth_range=(1.0, 30.0)),
        )
        greedy = select_evidence(
            corpus, query,
            RetrievalConfig(budget=2, frustum_samples=256, depth_range=(1.0, 30.0),
                            mode=MODE_COVERAGE),
        )
        assert (1, 4) not in top.indices
        assert (1, 4) in greedy.indices


class TestPartition:
    def test_all_on_time(self):
        corpus = corpus_from([record_at(1, 4), record_at(2, 4)], horizon=6)
        sel = select_evidence(corpus, identity_action(time=4), CFG)
        on, off = partition(sel)
        assert off == []
        assert set(on) == {(1, 4), (2, 4)}

    def test_none_on_time(self):
        corpus = corpus_from([record_at(1, 1), record_at(1, 2)], horizon=6)
        sel = select_evidence(corpus, identity_action(time=5), CFG)
        on, off = partition(sel)
        assert on == []
        assert len(off) == 2

    def test_mixed_partition(self):
        records = [record_at(1, 6), record_at(1, 3), record_at(2, 6)]
        corpus = corpus_from(records)
        cfg = RetrievalConfig(budget=3, frustum_samples=64, depth_range=(1.0, 30.0))
        sel = select_evidence(corpus, identity_action(time=6), cfg)
        on, off = partition(sel)
        assert set(on) == {(1, 6), (2, 6)}
        assert off == [(1, 3)]
