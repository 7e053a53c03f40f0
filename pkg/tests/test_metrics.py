"""Region, boundary, and presence metric tests.

Hand-checkable cases are asserted directly; anything needing enumeration is
frozen from pixel-level counts worked out by hand (noted inline).
"""
import math

import numpy as np
import pytest

from gateseg.errors import MetricUndefinedError
from gateseg.masks import Mask, MaskSequence
from gateseg.metrics import (
    DEFAULT_POLICY,
    POLICY_EXCLUDE,
    POLICY_FULL_CREDIT,
    AggregateReport,
    ConfusionCounts,
    aggregate,
    aggregate_metrics,
    boundary_f,
    default_radius,
    extract_boundary,
    final_score,
    n_acc,
    presence_confusion,
    region_j,
    score_query,
    sequence_scores,
    t_acc,
)
from gateseg.queries import QueryRecord
from gateseg.synth import oracle_boundary_f


def grid(rows):
    return np.array([[c == "#" for c in row] for row in rows], dtype=bool)


def make_query(query_id, gt_frames, pred_frames):
    gt = MaskSequence.from_masks([Mask(g) for g in gt_frames])
    pred = MaskSequence.from_masks([Mask(p) for p in pred_frames])
    return QueryRecord(query_id=query_id, gt=gt, pred=pred)


def presence_query(query_id, gt_present, pred_present):
    """1x1 single-frame query whose GT/pred presence is set by the flags."""
    on = np.ones((1, 1), dtype=bool)
    off = np.zeros((1, 1), dtype=bool)
    return make_query(
        query_id, [on if gt_present else off], [on if pred_present else off]
    )


class TestRegionJ:
    def test_identical_masks(self):
        m = Mask(grid(["##.", ".#."]))
        assert region_j(m, m) == 1.0

    def test_disjoint_masks(self):
        assert region_j(Mask(grid(["#."])), Mask(grid([".#"]))) == 0.0

    def test_top_half_of_full(self):
        # 8 shared pixels over a 16 pixel union.
        pred = Mask(grid(["####", "####", "....", "...."]))
        gt = Mask(np.ones((4, 4), dtype=bool))
        assert region_j(pred, gt) == 8 / 16

    def test_single_overlap_pixel(self):
        # intersection 1, union 3
        pred = Mask(grid(["##."]))
        gt = Mask(grid([".##"]))
        assert region_j(pred, gt) == pytest.approx(1 / 3)

    def test_both_empty_is_one(self):
        assert region_j(Mask.zeros(3, 3), Mask.zeros(3, 3)) == 1.0

    def test_one_empty_is_zero(self):
        assert region_j(Mask(grid(["#"])), Mask.zeros(1, 1)) == 0.0
        assert region_j(Mask.zeros(1, 1), Mask(grid(["#"]))) == 0.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            region_j(Mask.zeros(2, 2), Mask.zeros(2, 3))

    def test_symmetry(self):
        a = Mask(grid(["##..", ".##.", "..##"]))
        b = Mask(grid(["####", "....", "..##"]))
        assert region_j(a, b) == region_j(b, a)


class TestExtractBoundary:
    def test_empty_mask_has_empty_boundary(self):
        assert extract_boundary(Mask.zeros(4, 4)).is_empty()

    def test_single_pixel_is_its_own_boundary(self):
        m = Mask(grid([".#.", "...", "..."]))
        assert extract_boundary(m) == m

    def test_full_image_boundary_is_outer_ring(self):
        # Every edge pixel touches the outside; the 2x2 interior does not.
        b = extract_boundary(Mask(np.ones((4, 4), dtype=bool)))
        assert b.foreground_count() == 12
        assert not b.pixels[1:3, 1:3].any()

    def test_solid_block_keeps_only_its_ring(self):
        m = Mask(grid([".....", ".###.", ".###.", ".###.", "....."]))
        b = extract_boundary(m)
        assert b.foreground_count() == 8
        assert not b.pixels[2, 2]

    def test_one_pixel_thick_shape_is_all_boundary(self):
        m = Mask(grid([".....", ".###.", "....."]))
        assert extract_boundary(m) == m


class TestDefaultRadius:
    def test_vga(self):
        # hypot(640, 480) = 800; 0.8 percent of that is 6.4, ceil -> 7
        assert default_radius(640, 480) == 7

    def test_floor_of_one(self):
        assert default_radius(1, 1) == 1

    def test_square_hundred(self):
        # hypot = 141.42, times 0.008 = 1.13, ceil -> 2
        assert default_radius(100, 100) == 2

    def test_rejects_degenerate_dims(self):
        with pytest.raises(ValueError):
            default_radius(0, 10)


class TestBoundaryF:
    def test_identical_masks(self):
        m = Mask(grid([".....", ".###.", ".###.", "....."]))
        assert boundary_f(m, m, 1) == 1.0

    def test_both_empty_is_one(self):
        assert boundary_f(Mask.zeros(3, 3), Mask.zeros(3, 3), 1) == 1.0

    def test_one_empty_is_zero(self):
        m = Mask(grid(["#"]))
        assert boundary_f(m, Mask.zeros(1, 1), 1) == 0.0
        assert boundary_f(Mask.zeros(1, 1), m, 1) == 0.0

    def test_far_disjoint_is_zero(self):
        pred = Mask(grid(["#.........", ".........."]))
        gt = Mask(grid([".........#", ".........."]))
        assert boundary_f(pred, gt, 2) == 0.0

    def test_shift_inside_radius_is_perfect(self):
        base = np.zeros((8, 8), dtype=bool)
        base[2:5, 2:5] = True
        shifted = np.roll(base, 1, axis=1)
        assert boundary_f(Mask(base), Mask(shifted), 1) == 1.0

    def test_shift_outside_radius_penalized(self):
        base = np.zeros((10, 16), dtype=bool)
        base[3:6, 2:6] = True
        shifted = np.roll(base, 8, axis=1)
        assert boundary_f(Mask(base), Mask(shifted), 1) == 0.0

    def test_two_adjacent_pixels_radius_zero(self):
        # Boundaries are {(0,0)} and {(0,1)}: no exact hits at radius 0.
        pred = Mask(grid(["#."]))
        gt = Mask(grid([".#"]))
        assert boundary_f(pred, gt, 0) == 0.0
        assert boundary_f(pred, gt, 1) == 1.0

    def test_partial_coverage_hand_case(self):
        # pred boundary {(0,0)}, gt boundary {(0,0),(0,3)}:
        # precision 1, recall 1/2, F = 2*(1*0.5)/(1+0.5) = 2/3
        pred = Mask(grid(["#...."]))
        gt = Mask(grid(["#..#."]))
        assert boundary_f(pred, gt, 1) == pytest.approx(2 / 3)

    def test_negative_radius_rejected(self):
        m = Mask.zeros(2, 2)
        with pytest.raises(ValueError):
            boundary_f(m, m, -1)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            boundary_f(Mask.zeros(2, 2), Mask.zeros(3, 2), 1)

    @pytest.mark.parametrize("seed", range(12))
    @pytest.mark.parametrize("radius", [0, 1, 3])
    def test_matches_brute_force_oracle(self, seed, radius):
        rng = np.random.default_rng(seed)
        pred = Mask(rng.random((17, 13)) < 0.3)
        gt = Mask(rng.random((17, 13)) < 0.3)
        fast = boundary_f(pred, gt, radius)
        slow = oracle_boundary_f(pred, gt, radius)
        assert fast == pytest.approx(slow, abs=1e-12)

    def test_large_masks_use_tree_path(self):
        # 256x256 circles force the KD-tree branch; oracle must still agree.
        yy, xx = np.ogrid[:256, :256]
        pred = Mask((yy - 128) ** 2 + (xx - 128) ** 2 <= 90**2)
        gt = Mask((yy - 131) ** 2 + (xx - 125) ** 2 <= 88**2)
        assert boundary_f(pred, gt, 3) == pytest.approx(
            oracle_boundary_f(pred, gt, 3), abs=1e-12
        )


class TestSequenceScores:
    def test_perfect_prediction(self):
        seq = MaskSequence.from_masks([Mask(grid([".#", "##"]))] * 3)
        s = sequence_scores(seq, seq, 1)
        assert s.j_frames == (1.0, 1.0, 1.0)
        assert s.f_frames == (1.0, 1.0, 1.0)
        assert s.j_mean == 1.0 and s.f_mean == 1.0

    def test_both_empty_frame_scores_one(self):
        seq = MaskSequence.zeros(2, 3, 3)
        s = sequence_scores(seq, seq, 1)
        assert s.j_frames == (1.0, 1.0)
        assert s.f_frames == (1.0, 1.0)

    def test_one_sided_empty_frame_scores_zero(self):
        gt = MaskSequence.from_masks([Mask(grid(["#."])), Mask.zeros(1, 2)])
        pred = MaskSequence.zeros(2, 1, 2)
        s = sequence_scores(pred, gt, 1)
        assert s.j_frames == (0.0, 1.0)
        assert s.f_frames == (0.0, 1.0)
        assert s.j_mean == 0.5

    def test_means_are_frame_averages(self):
        g = np.zeros((6, 6), dtype=bool)
        g[1:4, 1:4] = True
        gt = MaskSequence.from_masks([Mask(g), Mask(g)])
        half = g.copy()
        half[3, :] = False  # drop the bottom row of the square
        pred = MaskSequence.from_masks([Mask(g), Mask(half)])
        s = sequence_scores(pred, gt, 1)
        assert s.j_mean == pytest.approx((s.j_frames[0] + s.j_frames[1]) / 2)
        assert s.j_frames[0] == 1.0
        assert s.j_frames[1] == pytest.approx(6 / 9)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            sequence_scores(MaskSequence.zeros(2, 2, 2), MaskSequence.zeros(3, 2, 2), 1)


class TestConfusion:
    def test_counts_validate_non_negative(self):
        with pytest.raises(ValueError):
            ConfusionCounts(tp=-1, tn=0, fp=0, fn=0)

    def test_addition(self):
        total = ConfusionCounts(1, 2, 3, 4) + ConfusionCounts(10, 20, 30, 40)
        assert total == ConfusionCounts(11, 22, 33, 44)
        assert total.total == 110

    def test_presence_confusion_classifies_each_cell(self):
        queries = [
            presence_query("tp", True, True),
            presence_query("tn", False, False),
            presence_query("fp", False, True),
            presence_query("fn", True, False),
        ]
        assert presence_confusion(queries) == ConfusionCounts(tp=1, tn=1, fp=1, fn=1)

    def test_presence_confusion_mixed_batch(self):
        # 7 correctly-silent absent queries plus 3 hallucinated ones.
        queries = [presence_query(f"tn{i}", False, False) for i in range(7)]
        queries += [presence_query(f"fp{i}", False, True) for i in range(3)]
        counts = presence_confusion(queries)
        assert counts == ConfusionCounts(tp=0, tn=7, fp=3, fn=0)
        assert n_acc(counts) == pytest.approx(0.7)

    def test_n_acc_undefined_without_absent_queries(self):
        with pytest.raises(MetricUndefinedError):
            n_acc(ConfusionCounts(tp=5, tn=0, fp=0, fn=2))

    def test_t_acc_undefined_without_present_queries(self):
        with pytest.raises(MetricUndefinedError):
            t_acc(ConfusionCounts(tp=0, tn=5, fp=2, fn=0))

    def test_accuracies(self):
        counts = ConfusionCounts(tp=41, tn=7, fp=3, fn=9)
        assert t_acc(counts) == pytest.approx(41 / 50)
        assert n_acc(counts) == pytest.approx(7 / 10)


class TestFinalScore:
    def test_equal_weights(self):
        assert final_score(0.6, 0.6, 0.6) == pytest.approx(0.6)

    def test_published_style_row(self):
        # 0.67/0.89/0.98 averages to 0.846...
        assert final_score(0.67, 0.89, 0.98) == pytest.approx(2.54 / 3)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            final_score(1.2, 0.5, 0.5)
        with pytest.raises(ValueError):
            final_score(0.5, -0.1, 0.5)


class TestScoreQuery:
    def test_present_gt_uses_sequence_scores(self):
        q = make_query("a", [grid(["##", "##"])], [grid(["##", "##"])])
        m = score_query(q, 1)
        assert (m.j_mean, m.f_mean) == (1.0, 1.0)
        assert m.gt_present and m.pred_present
        assert m.jf_mean == 1.0

    def test_absent_gt_full_credit_for_silence(self):
        q = presence_query("b", gt_present=False, pred_present=False)
        m = score_query(q, 1, POLICY_FULL_CREDIT)
        assert (m.j_mean, m.f_mean) == (1.0, 1.0)

    def test_absent_gt_zero_credit_for_hallucination(self):
        q = presence_query("c", gt_present=False, pred_present=True)
        m = score_query(q, 1, POLICY_FULL_CREDIT)
        assert (m.j_mean, m.f_mean) == (0.0, 0.0)

    def test_absent_gt_excluded_under_exclude_policy(self):
        q = presence_query("d", gt_present=False, pred_present=True)
        m = score_query(q, 1, POLICY_EXCLUDE)
        assert m.j_mean is None and m.f_mean is None
        assert m.jf_mean is None
        # presence bookkeeping is policy independent
        assert m.confusion == ConfusionCounts(tp=0, tn=0, fp=1, fn=0)

    def test_unknown_policy_rejected(self):
        q = presence_query("e", True, True)
        with pytest.raises(ValueError):
            score_query(q, 1, "mystery")


class TestAggregate:
    def test_perfect_batch_is_all_ones(self):
        queries = [
            make_query("p0", [grid(["##", ".#"])], [grid(["##", ".#"])]),
            presence_query("a0", False, False),
        ]
        report = aggregate(queries, radius=1)
        assert isinstance(report, AggregateReport)
        assert (report.j, report.f, report.jf) == (1.0, 1.0, 1.0)
        assert report.n_acc == 1.0 and report.t_acc == 1.0 and report.final == 1.0
        assert report.query_count == 2 and report.scored_count == 2

    def test_policy_changes_scored_set(self):
        queries = [
            make_query("p0", [grid(["##"])], [grid(["##"])]),
            presence_query("a0", False, True),  # hallucinated
        ]
        full = aggregate(queries, radius=1, policy=POLICY_FULL_CREDIT)
        excl = aggregate(queries, radius=1, policy=POLICY_EXCLUDE)
        assert full.scored_count == 2 and excl.scored_count == 1
        assert full.j == 0.5 and excl.j == 1.0
        # presence counts identical either way
        assert full.counts == excl.counts == ConfusionCounts(tp=1, tn=0, fp=1, fn=0)

    def test_default_policy_is_full_credit(self):
        assert DEFAULT_POLICY == POLICY_FULL_CREDIT

    def test_default_radius_comes_from_frame_dims(self):
        g = np.zeros((480, 640), dtype=bool)
        g[100:200, 100:300] = True
        q = make_query("p0", [g], [g])
        report = aggregate([q])
        assert report.radius == 7

    def test_input_order_does_not_change_bits(self):
        rng = np.random.default_rng(5)
        queries = []
        for i in range(12):
            gt = rng.random((9, 9)) < 0.4
            pred = rng.random((9, 9)) < 0.4
            queries.append(make_query(f"q{i:02d}", [gt], [pred]))
        fwd = aggregate(queries, radius=1)
        rev = aggregate(list(reversed(queries)), radius=1)
        assert fwd == rev  # bitwise equal fields, not approx

    def test_empty_batch_rejected(self):
        with pytest.raises(MetricUndefinedError):
            aggregate([], radius=1)

    def test_no_scored_queries_rejected(self):
        absent = [presence_query("a", False, False)]
        with pytest.raises(MetricUndefinedError):
            aggregate(absent, radius=1, policy=POLICY_EXCLUDE)

    def test_degenerate_accuracies_render_as_none(self):
        # all GT present: N-acc has a zero denominator
        queries = [make_query("p", [grid(["#"])], [grid(["#"])])]
        report = aggregate(queries, radius=1)
        assert report.n_acc is None and report.t_acc == 1.0
        assert report.final is None

    def test_aggregate_metrics_validates_empty(self):
        with pytest.raises(MetricUndefinedError):
            aggregate_metrics([], DEFAULT_POLICY, 1)

    def test_means_use_compensated_summation(self):
        # ten J values of exactly 0.1: fsum averages to exactly 0.1,
        # a naive left-to-right sum would not
        queries = [
            make_query(f"q{i}", [grid(["##########"])], [grid(["#........."])])
            for i in range(10)
        ]
        report = aggregate(queries, radius=0)
        assert all(score_query(q, 0).j_mean == 0.1 for q in queries)
        assert report.j == 0.1

    def test_custom_mapper_is_used(self):
        calls = []

        def spy_map(fn, items):
            items = list(items)
            calls.append(len(items))
            return map(fn, items)

        queries = [presence_query(f"q{i}", True, True) for i in range(3)]
        report = aggregate(queries, radius=1, mapper=spy_map)
        assert calls == [3]
        assert report.t_acc == 1.0
