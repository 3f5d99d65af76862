import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import UNIT, box_with_iou, track
from oracles import pr_curve_ap
from vql3d.geom3d import iou3d
from vql3d.metrics import (
    STAP_THRESHOLDS,
    TAP_THRESHOLDS,
    ResponseTrack,
    ScoringError,
    TemporalInterval,
    average_precision,
    compute_stap,
    compute_tap,
    evaluate_queries,
    recovery_rate,
    score,
    stiou,
    success_rate,
    tiou,
)


class TestTemporal:
    def test_interval_validation(self):
        with pytest.raises(ValueError):
            TemporalInterval(5, 4)
        with pytest.raises(ValueError):
            TemporalInterval(-1, 4)
        assert len(TemporalInterval(3, 3)) == 1

    def test_tiou_cases(self):
        a = TemporalInterval(10, 29)
        assert tiou(a, a) == 1.0
        assert tiou(a, TemporalInterval(40, 50)) == 0.0
        assert tiou(a, TemporalInterval(20, 39)) == pytest.approx(1 / 3, abs=1e-15)
        # Adjacent frames share nothing.
        assert tiou(TemporalInterval(0, 4), TemporalInterval(5, 9)) == 0.0
        # Inclusive counting: one shared frame out of 9.
        assert tiou(TemporalInterval(0, 4), TemporalInterval(4, 8)) == pytest.approx(1 / 9)

    @given(st.integers(0, 50), st.integers(0, 20), st.integers(0, 50), st.integers(0, 20))
    def test_tiou_matches_frame_sets(self, s1, n1, s2, n2):
        a, b = TemporalInterval(s1, s1 + n1), TemporalInterval(s2, s2 + n2)
        fa, fb = set(a.frames()), set(b.frames())
        assert tiou(a, b) == pytest.approx(len(fa & fb) / len(fa | fb), abs=1e-15)
        assert tiou(a, b) == tiou(b, a)


class TestStIoU:
    def test_identical(self):
        gt = track("q", 0, 9)
        assert stiou(gt, gt) == pytest.approx(1.0, abs=1e-9)

    def test_disjoint_in_time(self):
        assert stiou(track("q", 20, 29), track("q", 0, 9)) == 0.0

    def test_mean_of_frames(self):
        gt = track("q", 0, 2)
        pred = track("q", 0, 2, per_frame=[box_with_iou(1.0), box_with_iou(0.5),
                                           box_with_iou(0.0)])
        assert iou3d(box_with_iou(0.5), UNIT) == pytest.approx(0.5, abs=1e-12)
        assert stiou(pred, gt) == pytest.approx(0.5, abs=1e-12)

    def test_outside_frames_ignored(self):
        gt = track("q", 5, 9)
        assert stiou(track("q", 0, 20), gt) == pytest.approx(1.0)

    def test_half_frames(self):
        assert stiou(track("q", 0, 4), track("q", 0, 9)) == pytest.approx(0.5)

    def test_missing_prediction(self):
        assert stiou(None, track("q", 0, 3)) == 0.0


class TestAveragePrecision:
    def test_hand_case(self):
        ranked = [(0.9, True), (0.8, False), (0.7, True)]
        assert Fraction(average_precision(ranked, 3)).limit_denominator(100) == Fraction(5, 9)
        assert pr_curve_ap(ranked, 3) == Fraction(5, 9)

    def test_trivial(self):
        assert average_precision([(0.5, True)], 1) == 1.0
        assert average_precision([(0.5, False)], 1) == 0.0
        assert average_precision([], 4) == 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            average_precision([(0.5, True)], 0)
        with pytest.raises(ValueError):
            average_precision([(float("nan"), True)], 1)
        with pytest.raises(ValueError):
            average_precision([(0.5, True), (0.4, True)], 1)

    def test_tie_break_by_key(self):
        # Equal confidence: key "a" ranks before "b".
        assert average_precision([(0.5, False, "b"), (0.5, True, "a")], 1) == 1.0
        assert average_precision([(0.5, True, "b"), (0.5, False, "a")], 1) == 0.5

    def test_exhaustive_small_instances(self):
        confs = (0.9, 0.5, 0.5, 0.2)
        checked = 0
        for n in range(0, 5):
            for flags in itertools.product((False, True), repeat=n):
                for order in set(itertools.permutations(confs[:n])):
                    items = [(c, f, f"q{i}") for i, (c, f) in enumerate(zip(order, flags))]
                    for num_gt in range(max(1, sum(flags)), 6):
                        got = average_precision(items, num_gt)
                        assert got == float(pr_curve_ap(items, num_gt))
                        checked += 1
        assert checked > 500

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), max_size=12),
           st.integers(0, 5))
    def test_bounds_and_oracle(self, items, extra):
        num_gt = max(1, sum(f for _, f in items)) + extra
        ap = average_precision(items, num_gt)
        assert 0.0 <= ap <= 1.0
        assert ap == float(pr_curve_ap(items, num_gt))

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=1, max_size=10),
           st.data())
    def test_losing_a_hit_never_helps(self, items, data):
        num_gt = max(1, sum(f for _, f in items))
        hits = [i for i, it in enumerate(items) if it[1]]
        if not hits:
            return
        k = data.draw(st.sampled_from(hits))
        for variant in (items[:k] + items[k + 1:],
                        items[:k] + [(items[k][0], False)] + items[k + 1:]):
            assert average_precision(variant, num_gt) <= average_precision(items, num_gt)


def half_tiou_suite():
    gts, preds = [], []
    for i in range(4):
        gts.append(track(f"q{i}", 0, 9))
        if i % 2 == 0:
            # [0,9] vs [0,5]: 6 of 10 frames -> 0.6.
            preds.append(track(f"q{i}", 0, 5, confidence=0.5))
        else:
            # [0,9] vs [7,9]: 3 of 10 frames -> 0.3.
            preds.append(track(f"q{i}", 7, 9, confidence=0.5))
    return preds, gts


class TestSuites:
    def test_exact_predictions(self):
        gts = [track(f"q{i}", i, i + 5) for i in range(5)]
        preds = [track(f"q{i}", i, i + 5, confidence=0.1 * i) for i in range(5)]
        aps, mean = compute_tap(preds, gts)
        assert set(aps) == set(TAP_THRESHOLDS)
        assert all(v == 1.0 for v in aps.values()) and mean == 1.0
        aps, mean = compute_stap(preds, gts)
        assert set(aps) == set(STAP_THRESHOLDS)
        assert mean == 1.0

    def test_disjoint_predictions(self):
        gts = [track(f"q{i}", 0, 5) for i in range(3)]
        preds = [track(f"q{i}", 10, 12) for i in range(3)]
        assert compute_tap(preds, gts)[1] == 0.0
        assert compute_stap(preds, gts)[1] == 0.0

    def test_half_suite(self):
        preds, gts = half_tiou_suite()
        aps, _ = compute_tap(preds, gts)
        assert aps[0.25] == 1.0
        items = [(0.5, i % 2 == 0, f"q{i}") for i in range(4)]
        expected = pr_curve_ap(items, 4)
        assert expected == Fraction(5, 12)
        assert aps[0.50] == float(expected)
        assert aps[0.75] == 0.0

    def test_half_spatial_suite(self):
        gts = [track("q0", 0, 9)]
        preds = [track("q0", 0, 4)]
        aps, _ = compute_stap(preds, gts)
        assert aps[0.05] == aps[0.25] == aps[0.50] == 1.0
        assert aps[0.75] == aps[0.95] == 0.0

    def test_missing_query_lowers_recall(self):
        gts = [track("a", 0, 3), track("b", 0, 3)]
        aps, _ = compute_tap([track("a", 0, 3)], gts)
        assert all(v == 0.5 for v in aps.values())

    def test_orphan_prediction(self):
        with pytest.raises(ScoringError, match="ghost"):
            compute_tap([track("ghost", 0, 3)], [track("a", 0, 3)])

    def test_duplicate_rejected(self):
        with pytest.raises(ScoringError):
            evaluate_queries([track("a", 0, 3), track("a", 0, 3)], [track("a", 0, 3)])


class TestRates:
    def test_success_count(self):
        gts = [track(f"q{i:03d}", 0, 0) for i in range(401)]
        preds = [track(f"q{i:03d}", 0, 0, box=UNIT if i < 184 else box_with_iou(0.0))
                 for i in range(401)]
        assert success_rate(preds, gts) == pytest.approx(100 * 184 / 401, rel=1e-12)
        assert success_rate(preds, gts) == pytest.approx(45.885286783, abs=1e-8)

    def test_success_bounds(self):
        gts = [track("a", 0, 3)]
        assert success_rate([track("a", 0, 3)], gts) == 100.0
        assert success_rate([], gts) == 0.0

    def test_recovery_pooled(self):
        gt = track("q", 0, 3)
        pred = track("q", 0, 3, per_frame=[box_with_iou(v) for v in (0.6, 0.4, 0.55, 0.0)])
        assert recovery_rate([pred], [gt]) == 50.0

    def test_recovery_pooling_vs_macro(self):
        gts = [track("a", 0, 0), track("b", 0, 2)]
        preds = [track("a", 0, 0), track("b", 0, 2, box=box_with_iou(0.0))]
        report = score(preds, gts)
        assert report.recovery == pytest.approx(25.0)
        assert report.recovery_macro == pytest.approx(50.0)

    def test_frame_deletion_monotone(self):
        rng = np.random.default_rng(42)
        gt = track("q", 0, 9)
        per = [box_with_iou(v) for v in rng.uniform(0, 1, 10)]
        prev_rec = prev_succ = None
        for end in range(9, -1, -1):
            pred = track("q", 0, end, per_frame=per[:end + 1])
            rec, succ = recovery_rate([pred], [gt]), success_rate([pred], [gt])
            if prev_rec is not None:
                assert rec <= prev_rec and succ <= prev_succ
            prev_rec, prev_succ = rec, succ


class TestScore:
    def make(self, n=8, seed=42):
        rng = np.random.default_rng(seed)
        gts, preds = [], []
        for i in range(n):
            s = int(rng.integers(0, 20))
            gts.append(track(f"q{i}", s, s + 9))
            shift = int(rng.integers(-5, 6))
            per = [box_with_iou(v) for v in rng.uniform(0, 1, 10)]
            start = max(0, s + shift)
            preds.append(track(f"q{i}", start, start + 9, confidence=float(rng.uniform()),
                               per_frame=per))
        return preds, gts

    def test_empty_predictions(self):
        d = score([], [track("a", 0, 3)]).to_dict()
        assert d["tAP"] == d["stAP"] == d["success"] == d["recovery"] == 0.0
        assert d["num_predictions"] == 0

    def test_means_and_ordering(self):
        preds, gts = self.make()
        r = score(preds, gts)
        assert r.tap == pytest.approx(np.mean(list(r.tap_per_threshold.values())), abs=1e-12)
        assert r.stap == pytest.approx(np.mean(list(r.stap_per_threshold.values())), abs=1e-12)
        vals = [r.stap_per_threshold[t] for t in STAP_THRESHOLDS]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
        vals = [r.tap_per_threshold[t] for t in TAP_THRESHOLDS]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
        assert all(0 <= v <= 1 for v in vals)
        assert 0 <= r.success <= 100 and 0 <= r.recovery <= 100

    def test_permutation_invariant(self):
        preds, gts = self.make()
        base = score(preds, gts).to_dict()
        rng = np.random.default_rng(42)
        for _ in range(3):
            p = [preds[i] for i in rng.permutation(len(preds))]
            g = [gts[i] for i in rng.permutation(len(gts))]
            assert score(p, g).to_dict() == base

    def test_workers_identical(self):
        preds, gts = self.make()
        assert score(preds, gts, workers=2).to_dict() == score(preds, gts).to_dict()

    def test_report_schema(self):
        preds, gts = self.make(3)
        d = score(preds, gts).to_dict()
        assert d["schema"] == "vql3d.report/1"
        assert list(d["tAP_per_threshold"]) == ["0.25", "0.50", "0.75", "0.95"]
        assert list(d["stAP_per_threshold"]) == ["0.05", "0.25", "0.50", "0.75", "0.95"]
        assert [q["query_id"] for q in d["per_query"]] == ["q0", "q1", "q2"]

    def test_track_validation(self):
        with pytest.raises(ValueError):
            ResponseTrack("q", TemporalInterval(0, 2), {0: UNIT, 1: UNIT})
        with pytest.raises(ValueError):
            ResponseTrack("q", TemporalInterval(0, 0), {0: UNIT, 3: UNIT})
        with pytest.raises(ValueError):
            ResponseTrack("q", TemporalInterval(0, 0), {0: UNIT}, float("inf"))
