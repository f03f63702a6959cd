import numpy as np
import pytest

from lrru.checkpoint import load_checkpoint
from lrru.config import LrruConfig, LrSchedule, OptimizerConfig
from lrru.data import synth_scene
from lrru.errors import DataError
from lrru.guidance import ModelParams, init_params
from lrru.pipeline import (
    infer,
    iteration_loss_weights,
    loss,
    lrru_forward,
    train,
)
from lrru.prefill import prefill
from lrru.tensor import Tensor


def tiny_cfg(**kw):
    opt = OptimizerConfig(lr=1e-3, batch_size=2, epochs=1, lr_schedule=LrSchedule(constant_epochs=1, halve_every=1))
    return LrruConfig(optimizer=opt, **kw)


def zero_head_params(cfg):
    params = init_params(cfg)
    for name in params:
        if name.startswith("tdu.") and ".weight." in name:
            params[name].data[:] = 0.0
    return params


@pytest.fixture(scope="module")
def scene():
    return synth_scene(42, 32, 32, LrruConfig(), "random:150")


class TestForward:
    def test_zero_heads_give_identity_chain(self, scene):
        cfg = tiny_cfg()
        params = zero_head_params(cfg)
        outs = lrru_forward(scene.rgb, scene.sparse, params, cfg)
        pre = prefill(scene.sparse, cfg.max_depth_mm)
        for out in outs:
            np.testing.assert_array_equal(out.data[0, 0], pre.depth)

    def test_four_dense_full_resolution_outputs(self, scene):
        cfg = tiny_cfg()
        outs = lrru_forward(scene.rgb, scene.sparse, init_params(cfg), cfg)
        assert len(outs) == 4
        for out in outs:
            assert out.data.shape == (1, 1, 32, 32)
            assert np.isfinite(out.data).all()

    def test_batch_of_maps(self, scene):
        cfg = tiny_cfg()
        other = synth_scene(43, 32, 32, cfg, "random:150")
        outs = lrru_forward(
            np.stack([scene.rgb, other.rgb]), [scene.sparse, other.sparse], init_params(cfg), cfg)
        assert outs[-1].data.shape == (2, 1, 32, 32)

    def test_depth_only_forward(self, scene):
        cfg = tiny_cfg(depth_only=True)
        outs = lrru_forward(None, scene.sparse, init_params(cfg), cfg)
        assert outs[-1].data.shape == (1, 1, 32, 32)

    def test_empty_sparse_propagates(self):
        cfg = tiny_cfg()
        from lrru.depthmap import DepthMap

        empty = DepthMap(np.zeros((32, 32)), np.zeros((32, 32), dtype=bool))
        with pytest.raises(DataError, match="empty input"):
            lrru_forward(np.zeros((32, 32, 3)), empty, init_params(cfg), cfg)

    def test_gradients_reach_every_parameter(self, scene):
        cfg = tiny_cfg()
        params = init_params(cfg)
        outs = lrru_forward(scene.rgb, scene.sparse, params, cfg)
        cost = loss(outs, scene.gt, cfg)
        params.zero_grads()
        cost.backward()
        dead = [name for name, p in params.items() if p.grad is None or not np.abs(p.grad).any()]
        assert not dead, f"parameters with no gradient: {dead}"


class TestLoss:
    def test_weights_exponential(self):
        cfg = LrruConfig()
        w = iteration_loss_weights(cfg)
        expect = [0.512, 0.64, 0.8, 1.0]
        assert all(abs(a - b) < 1e-15 for a, b in zip(w, expect))
        for earlier, later in zip(w[:-1], w[1:]):
            assert earlier / later == pytest.approx(0.8, abs=1e-12)

    def test_perfect_prediction_gives_zero(self, scene):
        cfg = tiny_cfg()
        gt_t = Tensor(scene.gt.depth[None, None])
        assert float(loss([gt_t] * 4, scene.gt, cfg).data) == 0.0

    def test_single_pixel_single_term(self):
        from lrru.depthmap import DepthMap

        cfg = tiny_cfg(loss_terms=("l2",))
        gt = DepthMap.dense(np.array([[4000.0]]))
        perfect = Tensor(np.array(4000.0).reshape(1, 1, 1, 1))
        off = Tensor(np.array(4003.0).reshape(1, 1, 1, 1))
        value = float(loss([perfect, perfect, perfect, off], gt, cfg).data)
        assert value == pytest.approx(9.0, abs=1e-12)

        cfg_both = tiny_cfg(loss_terms=("l1", "l2"))
        value_both = float(loss([perfect, perfect, perfect, off], gt, cfg_both).data)
        assert value_both == pytest.approx(12.0, abs=1e-12)

    def test_every_iterate_contributes(self, scene):
        cfg = tiny_cfg()
        gt_t = Tensor(scene.gt.depth[None, None])
        preds = [gt_t] * 4
        base = float(loss(preds, scene.gt, cfg).data)
        for i in range(4):
            bumped = list(preds)
            bumped[i] = Tensor(scene.gt.depth[None, None] + 5.0)
            assert float(loss(bumped, scene.gt, cfg).data) != base

    def test_no_valid_gt_rejected(self):
        from lrru.depthmap import DepthMap

        cfg = tiny_cfg()
        empty = DepthMap(np.zeros((4, 4)), np.zeros((4, 4), dtype=bool))
        pred = Tensor(np.ones((1, 1, 4, 4)))
        with pytest.raises(DataError):
            loss([pred] * 4, empty, cfg)


class TestLrSchedule:
    def test_constant_then_halved(self):
        cfg = LrruConfig(optimizer=OptimizerConfig(lr=1e-3, lr_schedule=LrSchedule(constant_epochs=15, halve_every=5)))
        assert cfg.lr_at(0) == 1e-3
        assert cfg.lr_at(14) == 1e-3
        assert cfg.lr_at(15) == 5e-4
        assert cfg.lr_at(19) == 5e-4
        assert cfg.lr_at(20) == 2.5e-4
        assert cfg.lr_at(25) == 1.25e-4


class TestTrain:
    def test_one_epoch_checkpoint_roundtrip(self, tmp_path):
        cfg = tiny_cfg()
        samples = [synth_scene(i, 16, 16, cfg, "random:40") for i in range(2)]
        params, log = train(samples, cfg, out_dir=tmp_path)
        assert (tmp_path / "final.lrru").exists()
        assert (tmp_path / "epoch_000.lrru").exists()
        assert (tmp_path / "train_log.ndjson").exists()
        loaded, cfg_dict = load_checkpoint(tmp_path / "final.lrru")
        restored = ModelParams(loaded)
        cfg2 = LrruConfig.from_dict(cfg_dict)
        a = lrru_forward(samples[0].rgb, samples[0].sparse, params, cfg)[-1].data
        b = lrru_forward(samples[0].rgb, samples[0].sparse, restored, cfg2)[-1].data
        np.testing.assert_array_equal(a, b)

    def test_zero_lr_zero_decay_is_null_update(self):
        opt = OptimizerConfig(lr=0.0, weight_decay=0.0, batch_size=2, epochs=1,
                              lr_schedule=LrSchedule(constant_epochs=1, halve_every=1))
        cfg = LrruConfig(optimizer=opt)
        samples = [synth_scene(i, 16, 16, cfg, "random:40") for i in range(2)]
        before = {k: v.data.copy() for k, v in init_params(cfg).items()}
        params, _ = train(samples, cfg)
        for name in before:
            np.testing.assert_array_equal(params[name].data, before[name])

    def test_first_epoch_losses_bit_identical(self):
        cfg = tiny_cfg()
        samples = [synth_scene(i, 16, 16, cfg, "random:40") for i in range(4)]
        _, log1 = train(samples, cfg)
        _, log2 = train(samples, cfg)
        assert log1.records[0]["loss"] == log2.records[0]["loss"]

    def test_empty_dataset_rejected(self):
        with pytest.raises(DataError):
            train([], tiny_cfg())

    def test_divergence_guard_aborts(self, monkeypatch):
        import lrru.pipeline as pipeline
        from lrru.errors import NumericError

        monkeypatch.setattr(pipeline, "_batch_loss",
                            lambda preds, prepared, cfg: Tensor(np.array(np.inf)))
        cfg = tiny_cfg()
        samples = [synth_scene(i, 16, 16, cfg, "random:40") for i in range(2)]
        with pytest.raises(NumericError, match="diverged"):
            train(samples, cfg)

    def test_trainlog_epochs_monotone_and_finite(self):
        opt = OptimizerConfig(lr=1e-3, batch_size=2, epochs=3, lr_schedule=LrSchedule(constant_epochs=3, halve_every=1))
        cfg = LrruConfig(optimizer=opt)
        samples = [synth_scene(i, 16, 16, cfg, "random:40") for i in range(2)]
        _, log = train(samples, cfg)
        epochs = [r["epoch"] for r in log.records]
        assert epochs == sorted(set(epochs)) and len(epochs) == 3
        assert all(np.isfinite(r["loss"]) for r in log.records)


class TestInfer:
    def test_tta_construction_audit(self, scene):
        cfg = tiny_cfg()
        params = init_params(cfg)
        plain = infer(scene.rgb, scene.sparse, params, cfg, tta=False)
        flipped_in_rgb = np.ascontiguousarray(scene.rgb[:, ::-1])
        flipped_in_sparse = scene.sparse.flip_horizontal()
        flipped_out = infer(flipped_in_rgb, flipped_in_sparse, params, cfg, tta=False)
        manual = 0.5 * (plain.depth + flipped_out.depth[:, ::-1])
        tta = infer(scene.rgb, scene.sparse, params, cfg, tta=True)
        assert np.abs(tta.depth - manual).max() < 1e-12

    def test_tta_on_mirror_symmetric_input_matches_plain(self):
        cfg = tiny_cfg()
        params = zero_head_params(cfg)
        base = synth_scene(7, 32, 16, cfg, "random:60")
        rgb = np.concatenate([base.rgb, base.rgb[:, ::-1]], axis=1)
        from lrru.depthmap import DepthMap

        sp = DepthMap(np.concatenate([base.sparse.depth, base.sparse.depth[:, ::-1]], axis=1),
                      np.concatenate([base.sparse.valid, base.sparse.valid[:, ::-1]], axis=1))
        plain = infer(rgb, sp, params, cfg, tta=False)
        tta = infer(rgb, sp, params, cfg, tta=True)
        assert np.abs(tta.depth - plain.depth).max() < 1e-9

    def test_depth_only_infer_without_rgb(self, scene):
        cfg = tiny_cfg(depth_only=True)
        out = infer(None, scene.sparse, init_params(cfg), cfg, tta=True)
        assert out.valid.all()
        assert out.depth.shape == (32, 32)
