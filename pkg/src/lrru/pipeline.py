"""The recurrent refinement pipeline: forward pass, loss, training, inference.

A sparse map is densified by morphology, then refined four times by
update units driven by coarse-to-fine guidance features: the first step
sees the 1/8-scale guidance (wide effective reach), later steps see
progressively finer scales. The network operates on depth normalized by
``max_depth_mm``; losses and metrics are computed in raw millimeters.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import atomic_write_text, save_checkpoint
from .config import LrruConfig
from .data import DepthSample, metrics
from .depthmap import DepthMap
from .errors import DataError, NumericError
from .guidance import ModelParams, extract_cross_guided, extract_self_guided, init_params, upsample_guidance
from .optim import adam_step, init_adam_state
from .prefill import prefill
from .tdu import TduHead, apply_update, kernel_scope_stats, predict_kernel
from .tensor import Tensor


@dataclass
class TrainLog:
    """Newline-delimited JSON friendly training record."""

    records: list = field(default_factory=list)

    def add(self, record: dict):
        if self.records and record.get("epoch", 0) <= self.records[-1].get("epoch", -1):
            raise ValueError("epoch indices must increase")
        self.records.append(record)

    def to_ndjson(self) -> str:
        import json

        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


def _as_batch(sparse):
    if isinstance(sparse, DepthMap):
        return [sparse]
    return list(sparse)


def _prep_inputs(rgb, sparse_maps, cfg: LrruConfig):
    """Normalize raw inputs into network tensors plus the prefilled start map."""
    H, W = sparse_maps[0].depth.shape
    for m in sparse_maps:
        if m.depth.shape != (H, W):
            raise DataError(f"sparse maps disagree on extents: {m.depth.shape} vs {(H, W)}")
    N = len(sparse_maps)
    sp = np.stack([m.depth for m in sparse_maps]).reshape(N, 1, H, W) / cfg.max_depth_mm
    pre = np.stack([prefill(m, cfg.max_depth_mm).depth for m in sparse_maps]).reshape(N, 1, H, W)
    rgb_t = None
    if rgb is not None:
        arr = np.asarray(rgb, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.shape[-1] == 3:  # (N, H, W, 3) -> (N, 3, H, W)
            arr = arr.transpose(0, 3, 1, 2)
        rgb_t = Tensor(arr)
    return rgb_t, Tensor(sp), pre


def _forward_with_kernels(rgb_t, sparse_t, prefilled_mm, params, cfg: LrruConfig):
    """Core recurrence from a prefilled start map in millimeters.

    The evolving map stays in millimeters; only the network inputs (the
    self-guidance conv) see it scaled to [0, 1]. Returns the mm iterates
    and the kernel field of every step.
    """
    _, _, H, W = sparse_t.data.shape
    feats = extract_cross_guided(rgb_t, sparse_t, params)
    lifted = upsample_guidance(feats, H, W)
    by_scale = {0.125: lifted[0], 0.25: lifted[1], 0.5: lifted[2], 1.0: lifted[3]}

    d = prefilled_mm
    outs = []
    kernel_fields = []
    for t in range(cfg.iterations):
        self_feat = extract_self_guided(T.scale(d, 1.0 / cfg.max_depth_mm), params)
        cross = by_scale[cfg.scale_schedule[t]]
        kf = predict_kernel(cross, self_feat, TduHead.from_params(params, t + 1), cfg.kernel_size)
        d = apply_update(d, kf)
        kernel_fields.append(kf)
        outs.append(d)
    return outs, kernel_fields


def lrru_forward(rgb, sparse, params: ModelParams, cfg: LrruConfig):
    """Run prefill plus the full update recurrence.

    ``rgb`` is None (depth-only) or an array shaped (H, W, 3), (N, H, W, 3)
    or (N, 3, H, W) with values in [0, 1]; ``sparse`` is a DepthMap or a
    list of them. Returns the per-iteration dense outputs in millimeters,
    finest last.
    """
    sparse_maps = _as_batch(sparse)
    rgb_t, sparse_t, pre = _prep_inputs(rgb, sparse_maps, cfg)
    outs, _ = _forward_with_kernels(rgb_t, sparse_t, Tensor(pre), params, cfg)
    return outs


def iteration_loss_weights(cfg: LrruConfig):
    """Exponentially increasing weights over the supervised iterates."""
    n = cfg.iterations
    return [cfg.gamma ** (n - 1 - i) for i in range(n)]


def loss(preds, gt, cfg: LrruConfig) -> Tensor:
    """Masked L1/L2 losses over every iterate, later iterates weighted more.

    ``preds`` are the per-iteration outputs in millimeters; ``gt`` is a
    DepthMap or list of them. Each term is averaged over the valid
    ground-truth pixels.
    """
    gt_maps = _as_batch(gt)
    N = len(gt_maps)
    H, W = gt_maps[0].depth.shape
    gt_arr = np.stack([m.depth for m in gt_maps]).reshape(N, 1, H, W)
    mask_arr = np.stack([m.valid for m in gt_maps]).reshape(N, 1, H, W).astype(np.float64)
    count = float(mask_arr.sum())
    if count == 0:
        raise DataError("loss: ground truth has no valid pixels")
    gt_t = Tensor(gt_arr)
    mask_t = Tensor(mask_arr)

    weights = iteration_loss_weights(cfg)
    total = None
    for pred, w in zip(preds, weights):
        masked = T.mul(T.sub(pred, gt_t), mask_t)
        for term in cfg.loss_terms:
            if term == "l2":
                contrib = T.sum_all(T.mul(masked, masked))
            else:
                contrib = T.sum_all(T.abs_val(masked))
            contrib = T.scale(contrib, w / count)
            total = contrib if total is None else T.add(total, contrib)
    return total


@dataclass
class _PreparedSample:
    rgb: np.ndarray | None  # (3, H, W)
    sparse_norm: np.ndarray  # (1, H, W)
    pre_mm: np.ndarray  # (1, H, W)
    gt_depth: np.ndarray  # (1, H, W)
    gt_mask: np.ndarray  # (1, H, W)


def _prepare_samples(samples, cfg: LrruConfig):
    prepared = []
    for s in samples:
        if not cfg.depth_only and s.rgb is None:
            raise DataError("sample has no rgb image but the config is not depth-only")
        pre = prefill(s.sparse, cfg.max_depth_mm).depth
        prepared.append(_PreparedSample(
            rgb=None if cfg.depth_only else s.rgb.transpose(2, 0, 1),
            sparse_norm=(s.sparse.depth / cfg.max_depth_mm)[None],
            pre_mm=pre[None],
            gt_depth=s.gt.depth[None],
            gt_mask=s.gt.valid[None].astype(np.float64),
        ))
    return prepared


def _batch_forward(prepared, params, cfg):
    rgb_t = None
    if prepared[0].rgb is not None:
        rgb_t = Tensor(np.stack([p.rgb for p in prepared]))
    sparse_t = Tensor(np.stack([p.sparse_norm for p in prepared]))
    d0 = Tensor(np.stack([p.pre_mm for p in prepared]))
    return _forward_with_kernels(rgb_t, sparse_t, d0, params, cfg)


def _batch_loss(preds, prepared, cfg):
    gt_t = Tensor(np.stack([p.gt_depth for p in prepared]))
    mask_t = Tensor(np.stack([p.gt_mask for p in prepared]))
    count = float(mask_t.data.sum())
    if count == 0:
        raise DataError("loss: ground truth has no valid pixels")
    total = None
    for pred, w in zip(preds, iteration_loss_weights(cfg)):
        masked = T.mul(T.sub(pred, gt_t), mask_t)
        for term in cfg.loss_terms:
            contrib = T.sum_all(T.mul(masked, masked)) if term == "l2" else T.sum_all(T.abs_val(masked))
            contrib = T.scale(contrib, w / count)
            total = contrib if total is None else T.add(total, contrib)
    return total


def evaluate_iterates(samples, params, cfg: LrruConfig, batch_size: int = 8):
    """Mean per-iteration RMSE/MAE over a sample list, plus the prefill baseline.

    Returns a dict with lists indexed by iterate (position 0 is the
    morphological start map) and per-iteration kernel reach statistics.
    """
    prepared = _prepare_samples(samples, cfg)
    n_iter = cfg.iterations
    rmse_acc = [[] for _ in range(n_iter + 1)]
    mae_acc = [[] for _ in range(n_iter + 1)]
    scope_mean = [[] for _ in range(n_iter)]
    scope_max = [[] for _ in range(n_iter)]
    for lo in range(0, len(prepared), batch_size):
        chunk = prepared[lo:lo + batch_size]
        outs, kfs = _batch_forward(chunk, params, cfg)
        for bi, p in enumerate(chunk):
            gt = DepthMap(p.gt_depth[0], p.gt_mask[0] > 0)
            rep = metrics(DepthMap.dense(p.pre_mm[0]), gt)
            rmse_acc[0].append(rep.rmse_mm)
            mae_acc[0].append(rep.mae_mm)
            for it, out in enumerate(outs, start=1):
                # inverse-depth metrics need positive depth; an unconverged
                # net can momentarily dip below zero
                pred = DepthMap.dense(np.maximum(out.data[bi, 0], 1.0))
                rep = metrics(pred, gt)
                rmse_acc[it].append(rep.rmse_mm)
                mae_acc[it].append(rep.mae_mm)
        for it, kf in enumerate(kfs):
            for stats in kernel_scope_stats(kf):
                scope_mean[it].append(stats["mean_dist_px"])
                scope_max[it].append(stats["max_dist_px"])
    return {
        "rmse_mm": [float(np.mean(v)) for v in rmse_acc],
        "mae_mm": [float(np.mean(v)) for v in mae_acc],
        "kernel_scope": [
            {"iteration": it + 1,
             "mean_dist_px": float(np.mean(scope_mean[it])),
             "max_dist_px": float(np.max(scope_max[it]))}
            for it in range(n_iter)
        ],
    }


def train(dataset, cfg: LrruConfig, val_dataset=None, out_dir=None):
    """Adam training over minibatches; deterministic for a fixed seed.

    Writes a checkpoint per epoch (plus ``final.lrru``) and the training
    log when ``out_dir`` is given. Aborts with a diagnostic if the loss
    stops being finite.
    """
    if not dataset:
        raise DataError("training dataset is empty")
    opt = cfg.optimizer
    params = init_params(cfg)
    state = init_adam_state(params)
    prepared = _prepare_samples(dataset, cfg)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 777]))
    log = TrainLog()
    t0 = time.monotonic()

    for epoch in range(opt.epochs):
        order = shuffle_rng.permutation(len(prepared))
        lr = cfg.lr_at(epoch)
        losses = []
        scope_records = None
        for lo in range(0, len(order), opt.batch_size):
            batch = [prepared[i] for i in order[lo:lo + opt.batch_size]]
            outs, kfs = _batch_forward(batch, params, cfg)
            cost = _batch_loss(outs, batch, cfg)
            value = float(cost.data)
            if not np.isfinite(value):
                raise NumericError(
                    f"training diverged: non-finite loss {value} at epoch {epoch}, step {lo // opt.batch_size}")
            params.zero_grads()
            cost.backward()
            adam_step(params, params.grads(), state, lr,
                      beta1=opt.beta1, beta2=opt.beta2, weight_decay=opt.weight_decay)
            losses.append(value)
            scope_records = [
                {"iteration": i + 1, **_mean_scope(kernel_scope_stats(kf))}
                for i, kf in enumerate(kfs)
            ]
        record = {
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "lr": lr,
            "kernel_scope": scope_records,
            "wall_clock_s": time.monotonic() - t0,
        }
        if val_dataset:
            ev = evaluate_iterates(val_dataset, params, cfg, opt.batch_size)
            record["val_rmse_mm"] = ev["rmse_mm"]
            record["val_mae_mm"] = ev["mae_mm"]
            record["val_kernel_scope"] = ev["kernel_scope"]
        log.add(record)
        if out_dir:
            save_checkpoint(os.path.join(out_dir, f"epoch_{epoch:03d}.lrru"), params, cfg.to_dict())
    if out_dir:
        save_checkpoint(os.path.join(out_dir, "final.lrru"), params, cfg.to_dict())
        atomic_write_text(os.path.join(out_dir, "train_log.ndjson"), log.to_ndjson())
    return params, log


def _mean_scope(per_image):
    return {
        "mean_dist_px": float(np.mean([s["mean_dist_px"] for s in per_image])),
        "max_dist_px": float(np.max([s["max_dist_px"] for s in per_image])),
    }


def infer(rgb, sparse: DepthMap, params: ModelParams, cfg: LrruConfig, tta: bool = False) -> DepthMap:
    """Densify one sample; with ``tta``, average with the mirrored prediction.

    The mirrored branch runs the pipeline on horizontally flipped inputs
    and flips its output back; the result is the elementwise mean.
    """
    if cfg.depth_only:
        rgb = None

    def run(rgb_in, sparse_in):
        raw = lrru_forward(rgb_in, sparse_in, params, cfg)[-1].data[0, 0]
        # depth is physically positive; clamp to the smallest count the
        # 16-bit file encoding can hold so inverse metrics and PNG
        # round-trips stay well defined even for a barely trained model
        return np.maximum(raw, 1000.0 / 256.0)

    out = run(rgb, sparse)
    if tta:
        rgb_f = None if rgb is None else np.ascontiguousarray(np.asarray(rgb)[:, ::-1])
        out_f = run(rgb_f, sparse.flip_horizontal())
        out = 0.5 * (out + out_f[:, ::-1])
    return DepthMap.dense(out)
