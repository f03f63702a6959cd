"""Sparse-to-dense depth completion.

A sparse depth map is densified by non-learning morphology, then
iteratively refined by learned per-pixel spatially-variant kernels
(zero-sum weights plus deformable offsets) predicted from multi-scale
guidance features, coarse scales first. Built on a small numpy-backed
reverse-mode autodiff engine; runs entirely on the CPU.
"""

from .config import LrruConfig, OptimizerConfig, VARIANT_CHANNELS
from .data import (
    DepthSample,
    MetricReport,
    metrics,
    read_depth_png,
    sparsify_lines,
    sparsify_random,
    synth_scene,
    write_depth_png,
)
from .depthmap import DepthMap
from .errors import DataError, LrruError, NumericError, ShapeError, UsageError
from .gradcheck import grad_check, run_gradient_suite
from .guidance import (
    GuidanceFeatures,
    ModelParams,
    extract_cross_guided,
    extract_self_guided,
    init_params,
    upsample_guidance,
)
from .optim import AdamState, adam_step, init_adam_state
from .pipeline import TrainLog, evaluate_iterates, infer, iteration_loss_weights, loss, lrru_forward, train
from .prefill import close, dilate, erode, median_filter, prefill
from .tdu import KernelField, TduHead, apply_update, kernel_scope_stats, predict_kernel
from .tensor import Tensor

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "DataError",
    "DepthMap",
    "DepthSample",
    "GuidanceFeatures",
    "KernelField",
    "LrruConfig",
    "LrruError",
    "MetricReport",
    "ModelParams",
    "NumericError",
    "OptimizerConfig",
    "ShapeError",
    "TduHead",
    "Tensor",
    "TrainLog",
    "UsageError",
    "VARIANT_CHANNELS",
    "adam_step",
    "apply_update",
    "close",
    "dilate",
    "erode",
    "evaluate_iterates",
    "extract_cross_guided",
    "extract_self_guided",
    "grad_check",
    "infer",
    "init_adam_state",
    "init_params",
    "iteration_loss_weights",
    "kernel_scope_stats",
    "loss",
    "lrru_forward",
    "median_filter",
    "metrics",
    "predict_kernel",
    "prefill",
    "read_depth_png",
    "run_gradient_suite",
    "sparsify_lines",
    "sparsify_random",
    "synth_scene",
    "train",
    "upsample_guidance",
    "write_depth_png",
]
