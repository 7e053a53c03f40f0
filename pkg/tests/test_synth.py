"""Synthetic scenario generator and brute-force oracle tests."""
import numpy as np
import pytest

from gateseg.masks import Mask, MaskSequence, indicator, rle_encode
from gateseg.metrics import aggregate
from gateseg.queries import QueryRecord
from gateseg.synth import (
    RNG_ALGORITHM,
    SCENARIO_PRESETS,
    ScenarioConfig,
    gen_scenario,
    oracle_boundary_f,
    oracle_sweep,
    perturb_mask,
)


def grid(rows):
    return np.array([[c == "#" for c in row] for row in rows], dtype=bool)


def scenario_fingerprint(s):
    """Every generated bit, in comparable form."""
    return [
        (
            q.query_id,
            q.transcript,
            q.sequence_id,
            q.existence_prob,
            [rle_encode(m).counts for m in q.gt.frames],
            [rle_encode(m).counts for m in q.pred.frames],
            q.features.values.tobytes(),
        )
        for q in s.queries
    ]


class TestPerturbMask:
    def test_identity(self):
        m = Mask(grid([".....", ".###.", "....."]))
        assert perturb_mask(m) == m

    def test_shift_moves_foreground(self):
        m = Mask(grid(["#....", ".....", "....."]))
        shifted = perturb_mask(m, shift=(2, 1))
        assert shifted == Mask(grid([".....", "..#..", "....."]))

    def test_shift_clips_at_border(self):
        m = Mask(grid(["...#", "...."]))
        assert perturb_mask(m, shift=(1, 0)).is_empty()

    def test_dilation_of_single_pixel_is_full_3x3(self):
        m = Mask(grid([".....", "..#..", ".....", "....."]))
        grown = perturb_mask(m, morph_delta=1)
        expected = grid([".###.", ".###.", ".###.", "....."])
        assert grown == Mask(expected)

    def test_erosion_of_single_pixel_is_empty(self):
        m = Mask(grid([".....", "..#..", "....."]))
        assert perturb_mask(m, morph_delta=-1).is_empty()

    def test_erosion_keeps_core_of_block(self):
        m = Mask(grid([".....", ".###.", ".###.", ".###.", "....."]))
        assert perturb_mask(m, morph_delta=-1) == Mask(
            grid([".....", ".....", "..#..", ".....", "....."])
        )

    def test_dilate_then_erode_restores_rectangle(self):
        m = Mask(grid(["........", ".####...", ".####...", "........"]))
        there = perturb_mask(m, morph_delta=1)
        back = perturb_mask(there, morph_delta=-1)
        assert back == m


class TestScenarioConfig:
    def test_defaults_are_valid(self):
        cfg = ScenarioConfig()
        assert cfg.num_queries == 60 and cfg.feat_dim == 16

    def test_validation(self):
        with pytest.raises(ValueError):
            ScenarioConfig(num_queries=0)
        with pytest.raises(ValueError):
            ScenarioConfig(height=4)
        with pytest.raises(ValueError):
            ScenarioConfig(frac_absent=1.5)
        with pytest.raises(ValueError):
            ScenarioConfig(shape_family="triangle")
        with pytest.raises(ValueError):
            ScenarioConfig(max_shift=-1)

    def test_presets_exist(self):
        assert set(SCENARIO_PRESETS) == {"separable", "clean", "noisy"}


class TestGenScenario:
    def test_same_seed_is_bit_identical(self):
        cfg = ScenarioConfig(num_queries=12, seed=42)
        assert scenario_fingerprint(gen_scenario(cfg)) == scenario_fingerprint(
            gen_scenario(cfg)
        )

    def test_different_seed_differs(self):
        a = gen_scenario(ScenarioConfig(num_queries=12, seed=1))
        b = gen_scenario(ScenarioConfig(num_queries=12, seed=2))
        assert scenario_fingerprint(a) != scenario_fingerprint(b)

    def test_absent_count_is_exact(self):
        s = gen_scenario(ScenarioConfig(num_queries=40, frac_absent=0.25, seed=3))
        assert sum(1 for present in s.labels if not present) == 10

    def test_all_present_when_frac_absent_zero(self):
        s = gen_scenario(ScenarioConfig(num_queries=10, frac_absent=0.0, seed=0))
        assert all(s.labels)
        assert all(indicator(q.gt) for q in s.queries)

    def test_all_absent_when_frac_absent_one(self):
        s = gen_scenario(
            ScenarioConfig(num_queries=10, frac_absent=1.0, fp_rate=0.5, seed=0)
        )
        assert not any(s.labels)
        hallucinated = sum(1 for q in s.queries if indicator(q.pred))
        assert hallucinated == 5  # ceil(10 * 0.5)

    def test_labels_match_reference_presence(self):
        s = gen_scenario(ScenarioConfig(num_queries=20, seed=7))
        for q, label in zip(s.queries, s.labels):
            assert indicator(q.gt) == label

    def test_present_references_nonempty_in_every_frame(self):
        s = gen_scenario(ScenarioConfig(num_queries=16, seed=11))
        for q, label in zip(s.queries, s.labels):
            if label:
                assert all(not f.is_empty() for f in q.gt.frames)

    def test_clean_preset_scores_perfectly(self):
        cfg = SCENARIO_PRESETS["clean"]
        s = gen_scenario(cfg)
        report = aggregate(s.queries, radius=1)
        assert (report.j, report.f, report.jf) == (1.0, 1.0, 1.0)
        assert report.n_acc == 1.0 and report.t_acc == 1.0 and report.final == 1.0

    def test_metadata_records_generator(self):
        s = gen_scenario(ScenarioConfig(num_queries=9, seed=5))
        assert s.metadata == {"rng": RNG_ALGORITHM, "seed": 5}

    def test_train_dataset_aligns_labels(self):
        s = gen_scenario(ScenarioConfig(num_queries=10, seed=1))
        data = s.train_dataset()
        assert len(data) == 10
        for (features, label), q, present in zip(data, s.queries, s.labels):
            assert features is q.features
            assert label == int(present)

    def test_feature_shape_follows_config(self):
        cfg = ScenarioConfig(num_queries=4, feat_tokens=3, frames=5, feat_dim=7, seed=0)
        s = gen_scenario(cfg)
        for q in s.queries:
            assert (q.features.n, q.features.t, q.features.d) == (3, 5, 7)

    def test_ellipse_family_generates(self):
        s = gen_scenario(
            ScenarioConfig(num_queries=6, shape_family="ellipse", seed=2)
        )
        assert any(label for label in s.labels)

    def test_too_small_frames_for_noise_rejected(self):
        # the 8x8 minimum passes config validation but cannot host a shape
        # once the default shift and morph margins are carved out
        cfg = ScenarioConfig(num_queries=4, height=8, width=8, seed=0)
        with pytest.raises(ValueError):
            gen_scenario(cfg)

    def test_small_frames_work_without_noise_margins(self):
        cfg = ScenarioConfig(
            num_queries=6, height=8, width=8, frames=2,
            max_shift=1, max_morph=0, seed=0,
        )
        s = gen_scenario(cfg)
        assert len(s.queries) == 6


class TestOracleBoundaryF:
    def test_identical(self):
        m = Mask(grid([".....", ".###.", "....."]))
        assert oracle_boundary_f(m, m, 1) == 1.0

    def test_both_empty(self):
        z = Mask.zeros(3, 3)
        assert oracle_boundary_f(z, z, 1) == 1.0

    def test_one_empty(self):
        m = Mask(grid(["#"]))
        assert oracle_boundary_f(m, Mask.zeros(1, 1), 2) == 0.0

    def test_single_pixels_at_known_distance(self):
        pred = Mask(grid(["#....", "....."]))
        gt = Mask(grid(["..#..", "....."]))
        assert oracle_boundary_f(pred, gt, 1) == 0.0  # distance 2
        assert oracle_boundary_f(pred, gt, 2) == 1.0

    def test_diagonal_distance_is_euclidean(self):
        pred = Mask(grid(["#..", "...", "..."]))
        gt = Mask(grid(["...", "...", "..#"]))
        # centers are sqrt(8) = 2.83 apart
        assert oracle_boundary_f(pred, gt, 2) == 0.0
        assert oracle_boundary_f(pred, gt, 3) == 1.0

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            oracle_boundary_f(Mask.zeros(2, 2), Mask.zeros(2, 3), 1)


class TestOracleSweep:
    def make_query(self, query_id, prob, gt_present, pred_present):
        on = MaskSequence.from_masks([Mask(np.ones((3, 3), dtype=bool))])
        off = MaskSequence.zeros(1, 3, 3)
        return QueryRecord(
            query_id=query_id,
            gt=on if gt_present else off,
            pred=on if pred_present else off,
            existence_prob=prob,
        )

    def test_single_query_straddle(self):
        q = self.make_query("q", 0.5, True, True)
        result = oracle_sweep([q], [0.25, 0.75], radius=1)
        assert result.grid[0][1].t_acc == 1.0
        assert result.grid[1][1].t_acc == 0.0

    def test_grid_is_sorted_in_result(self):
        q = self.make_query("q", 0.5, True, True)
        result = oracle_sweep([q], [0.9, 0.1], radius=1)
        assert [tau for tau, _ in result.grid] == [0.1, 0.9]

    def test_empty_grid_rejected(self):
        q = self.make_query("q", 0.5, True, True)
        with pytest.raises(ValueError):
            oracle_sweep([q], [], radius=1)

    def test_missing_probability_rejected(self):
        q = self.make_query("q", None, True, True)
        with pytest.raises(ValueError, match="q"):
            oracle_sweep([q], [0.5], radius=1)
