import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from lrru.config import LrruConfig
from lrru.data import (
    DEPTH_SCALE,
    apply_sparsity,
    metrics,
    read_depth_png,
    render_scene,
    save_dataset,
    load_dataset,
    sparsify_lines,
    sparsify_random,
    synth_scene,
    write_depth_png,
)
from lrru.depthmap import DepthMap
from lrru.errors import DataError


class TestDepthPng:
    def test_pixel_256_is_one_meter(self, tmp_path):
        arr = np.zeros((4, 4), dtype=np.uint16)
        arr[1, 2] = 256
        Image.fromarray(arr).save(tmp_path / "d.png")
        m = read_depth_png(tmp_path / "d.png")
        assert m.depth[1, 2] == 1000.0
        assert m.valid[1, 2]

    def test_pixel_zero_is_invalid(self, tmp_path):
        arr = np.zeros((2, 2), dtype=np.uint16)
        Image.fromarray(arr).save(tmp_path / "d.png")
        m = read_depth_png(tmp_path / "d.png")
        assert not m.valid.any()
        assert (m.depth == 0).all()

    def test_write_read_write_is_byte_identical(self, tmp_path, rng):
        depth = rng.uniform(500, 20000, (16, 16))
        valid = rng.uniform(0, 1, (16, 16)) > 0.3
        write_depth_png(DepthMap(depth, valid), tmp_path / "a.png")
        m = read_depth_png(tmp_path / "a.png")
        write_depth_png(m, tmp_path / "b.png")
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()

    def test_roundtrip_error_bound(self, tmp_path, rng):
        depth = rng.uniform(500, 60000, (8, 8))
        m = DepthMap.dense(depth)
        write_depth_png(m, tmp_path / "d.png")
        back = read_depth_png(tmp_path / "d.png")
        assert np.abs(back.depth - depth).max() <= 500.0 / 256.0

    def test_exact_multiples_are_lossless(self, tmp_path):
        depth = np.arange(1, 17, dtype=float).reshape(4, 4) * (1000.0 / 256.0)
        write_depth_png(DepthMap.dense(depth), tmp_path / "d.png")
        back = read_depth_png(tmp_path / "d.png")
        np.testing.assert_array_equal(back.depth, depth)

    def test_eight_bit_file_rejected(self, tmp_path):
        Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(tmp_path / "bad.png")
        with pytest.raises(DataError, match="16-bit"):
            read_depth_png(tmp_path / "bad.png")

    def test_rgb_file_rejected(self, tmp_path):
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(tmp_path / "bad.png")
        with pytest.raises(DataError):
            read_depth_png(tmp_path / "bad.png")

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(DataError):
            read_depth_png(tmp_path / "missing.png")

    def test_depth_beyond_16bit_range_rejected(self, tmp_path):
        m = DepthMap.dense(np.full((2, 2), 300000.0))
        with pytest.raises(DataError):
            write_depth_png(m, tmp_path / "d.png")


class TestSynthScene:
    def test_same_seed_bit_identical(self):
        cfg = LrruConfig()
        a = synth_scene(11, 32, 32, cfg)
        b = synth_scene(11, 32, 32, cfg)
        np.testing.assert_array_equal(a.rgb, b.rgb)
        np.testing.assert_array_equal(a.gt.depth, b.gt.depth)
        np.testing.assert_array_equal(a.sparse.depth, b.sparse.depth)

    def test_different_seeds_differ(self):
        cfg = LrruConfig()
        a = synth_scene(11, 32, 32, cfg)
        b = synth_scene(12, 32, 32, cfg)
        assert not np.array_equal(a.gt.depth, b.gt.depth)

    def test_gt_fully_valid_and_in_range(self):
        cfg = LrruConfig()
        for seed in range(5):
            s = synth_scene(seed, 32, 32, cfg)
            assert s.gt.valid.all()
            assert s.gt.depth.min() >= 500.0
            assert s.gt.depth.max() <= cfg.max_depth_mm

    def test_sparse_subset_of_gt(self):
        s = synth_scene(3, 32, 32, LrruConfig(), sparsity="random:100")
        assert s.sparse.count_valid() == 100
        assert np.all(s.gt.valid[s.sparse.valid])
        np.testing.assert_array_equal(s.sparse.depth[s.sparse.valid], s.gt.depth[s.sparse.valid])

    def test_extents_must_divide_by_8(self):
        with pytest.raises(DataError):
            synth_scene(0, 30, 32, LrruConfig())

    def test_depth_edges_coincide_with_image_edges(self):
        for seed in range(8):
            rgb, depth, region = render_scene(seed, 64, 64, 10000.0)
            jump_y = np.abs(np.diff(depth, axis=0)) > 250.0
            jump_x = np.abs(np.diff(depth, axis=1)) > 250.0
            edge_y = np.abs(np.diff(rgb, axis=0)).max(axis=2) > 0.05
            edge_x = np.abs(np.diff(rgb, axis=1)).max(axis=2) > 0.05
            assert edge_y[jump_y].all()
            assert edge_x[jump_x].all()

    def test_has_at_least_one_occluder_edge(self):
        rgb, depth, region = render_scene(0, 64, 64, 10000.0)
        assert (np.abs(np.diff(depth, axis=0)) > 250.0).any() or (np.abs(np.diff(depth, axis=1)) > 250.0).any()


class TestSparsify:
    def test_keep_all_equals_gt(self, rng):
        gt = DepthMap.dense(rng.uniform(500, 9000, (8, 8)))
        out = sparsify_random(gt, 64, seed=1)
        np.testing.assert_array_equal(out.depth, gt.depth)
        np.testing.assert_array_equal(out.valid, gt.valid)

    def test_exact_count_and_values(self, rng):
        gt = DepthMap.dense(rng.uniform(500, 9000, (16, 16)))
        out = sparsify_random(gt, 37, seed=5)
        assert out.count_valid() == 37
        np.testing.assert_array_equal(out.depth[out.valid], gt.depth[out.valid])

    def test_too_many_samples_rejected(self, rng):
        gt = DepthMap.dense(rng.uniform(500, 9000, (4, 4)))
        with pytest.raises(DataError):
            sparsify_random(gt, 17, seed=0)

    def test_lines_keep_every_one_is_identity(self, rng):
        gt = DepthMap.dense(rng.uniform(500, 9000, (8, 8)))
        out = sparsify_lines(gt, 1)
        np.testing.assert_array_equal(out.valid, gt.valid)

    def test_lines_counting(self, rng):
        gt = DepthMap.dense(rng.uniform(500, 9000, (16, 8)))
        out = sparsify_lines(gt, 4, jitter=0)
        rows = np.unique(np.nonzero(out.valid)[0])
        np.testing.assert_array_equal(rows, [0, 4, 8, 12])

    def test_doubling_keep_every_halves_rows(self, rng):
        gt = DepthMap.dense(rng.uniform(500, 9000, (32, 8)))
        n4 = sparsify_lines(gt, 4).count_valid()
        n8 = sparsify_lines(gt, 8).count_valid()
        assert n4 == 2 * n8

    def test_jitter_moves_rows_deterministically(self, rng):
        gt = DepthMap.dense(rng.uniform(500, 9000, (32, 8)))
        a = sparsify_lines(gt, 4, jitter=2, seed=3)
        b = sparsify_lines(gt, 4, jitter=2, seed=3)
        np.testing.assert_array_equal(a.valid, b.valid)

    def test_apply_sparsity_spec_parsing(self, rng):
        gt = DepthMap.dense(rng.uniform(500, 9000, (16, 16)))
        assert apply_sparsity(gt, "random:10", 0).count_valid() == 10
        assert apply_sparsity(gt, "lines:4", 0).count_valid() == 64
        with pytest.raises(DataError):
            apply_sparsity(gt, "bogus:1", 0)


class TestMetrics:
    def test_identity_prediction(self, rng):
        gt = DepthMap.dense(rng.uniform(500, 9000, (8, 8)))
        rep = metrics(gt, gt)
        assert rep.rmse_mm == 0 and rep.mae_mm == 0 and rep.rel == 0
        assert rep.irmse_per_km == 0 and rep.imae_per_km == 0
        assert rep.delta1 == 100.0 and rep.delta2 == 100.0 and rep.delta3 == 100.0

    def test_single_pixel_hand_case(self):
        gt = DepthMap.dense(np.array([[2000.0]]))
        pred = DepthMap.dense(np.array([[2500.0]]))
        rep = metrics(pred, gt)
        assert rep.rmse_mm == 500.0
        assert rep.mae_mm == 500.0
        assert rep.rel == 0.25
        assert rep.irmse_per_km == 100.0
        assert rep.imae_per_km == 100.0
        assert rep.delta1 == 0.0
        assert rep.delta2 == 100.0 and rep.delta3 == 100.0

    def test_two_pixel_hand_case(self):
        gt = DepthMap.dense(np.array([[2000.0, 2000.0]]))
        pred = DepthMap.dense(np.array([[2000.0, 3000.0]]))
        rep = metrics(pred, gt)
        assert rep.mae_mm == 500.0
        assert rep.rmse_mm == pytest.approx(np.sqrt(500000.0), abs=1e-9)
        assert rep.rmse_mm >= rep.mae_mm

    def test_evaluation_restricted_to_gt_valid(self, rng):
        depth = rng.uniform(500, 9000, (4, 4))
        valid = np.zeros((4, 4), dtype=bool)
        valid[0, 0] = True
        gt = DepthMap(depth, valid)
        pred = DepthMap.dense(np.where(valid, depth, 123.0))
        rep = metrics(pred, gt)
        assert rep.rmse_mm == 0.0 and rep.valid_count == 1

    def test_pred_missing_on_valid_rejected(self, rng):
        gt = DepthMap.dense(rng.uniform(500, 9000, (4, 4)))
        holes = DepthMap(gt.depth.copy(), np.eye(4, dtype=bool))
        with pytest.raises(DataError):
            metrics(holes, gt)

    def test_empty_gt_rejected(self):
        empty = DepthMap(np.zeros((4, 4)), np.zeros((4, 4), dtype=bool))
        pred = DepthMap.dense(np.full((4, 4), 1000.0))
        with pytest.raises(DataError):
            metrics(pred, empty)

    def test_delta_ordering(self, rng):
        gt = DepthMap.dense(rng.uniform(500, 9000, (16, 16)))
        pred = DepthMap.dense(gt.depth * rng.uniform(0.7, 1.4, (16, 16)))
        rep = metrics(pred, gt)
        assert rep.delta1 <= rep.delta2 <= rep.delta3 <= 100.0

    @given(st.floats(min_value=0.1, max_value=10.0))
    @settings(max_examples=20, deadline=None)
    def test_scale_consistency(self, c):
        rng = np.random.default_rng(0)
        gt_depth = rng.uniform(500, 9000, (8, 8))
        pred_depth = gt_depth * rng.uniform(0.8, 1.25, (8, 8))
        r1 = metrics(DepthMap.dense(pred_depth), DepthMap.dense(gt_depth))
        r2 = metrics(DepthMap.dense(c * pred_depth), DepthMap.dense(c * gt_depth))
        assert r2.rel == pytest.approx(r1.rel, rel=1e-9)
        assert r2.delta1 == r1.delta1 and r2.delta2 == r1.delta2 and r2.delta3 == r1.delta3
        assert r2.rmse_mm == pytest.approx(c * r1.rmse_mm, rel=1e-9)
        assert r2.mae_mm == pytest.approx(c * r1.mae_mm, rel=1e-9)
        assert r2.irmse_per_km == pytest.approx(r1.irmse_per_km / c, rel=1e-9)
        assert r2.imae_per_km == pytest.approx(r1.imae_per_km / c, rel=1e-9)


class TestDatasetIO:
    def test_save_load_roundtrip(self, tmp_path):
        cfg = LrruConfig()
        samples = [synth_scene(i, 16, 16, cfg, "random:30") for i in range(3)]
        save_dataset(samples, tmp_path)
        loaded, names = load_dataset(tmp_path)
        assert names == ["000000.png", "000001.png", "000002.png"]
        assert len(loaded) == 3
        np.testing.assert_array_equal(loaded[1].sparse.valid, samples[1].sparse.valid)
        assert np.abs(loaded[1].gt.depth - samples[1].gt.depth).max() <= 500.0 / 256.0

    def test_missing_sparse_dir_rejected(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path)
