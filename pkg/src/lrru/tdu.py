"""Per-pixel spatially-variant kernel prediction and application.

Each pixel gets its own zero-sum kernel: tap weights squashed through a
sigmoid and recentered so they sum to zero (constants pass through
untouched), plus fractional (dy, dx) offsets that bend the regular k x k
grid toward relevant neighbours. The centre tap is pinned to offset
(0, 0) so every pixel keeps contributing its own value. Applying the
kernel yields a residual that is added onto the map being refined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .tensor import Tensor


@dataclass
class TduHead:
    """The two 1x1 prediction convs of one update step."""

    weight_w: Tensor
    weight_b: Tensor
    offset_w: Tensor
    offset_b: Tensor

    @classmethod
    def from_params(cls, params, step: int) -> "TduHead":
        return cls(
            weight_w=params[f"tdu.t{step}.weight.w"],
            weight_b=params[f"tdu.t{step}.weight.b"],
            offset_w=params[f"tdu.t{step}.offset.w"],
            offset_b=params[f"tdu.t{step}.offset.b"],
        )


@dataclass
class KernelField:
    """Per-pixel kernel: zero-sum tap weights and per-tap (dy, dx) offsets.

    ``weights`` is (N, k*k, H, W); ``offsets`` is (N, 2*k*k, H, W) with
    channel 2j holding dy and 2j+1 holding dx of tap j in row-major grid
    order. The centre tap's pair is exactly zero.
    """

    weights: Tensor
    offsets: Tensor
    k: int


def predict_kernel(cross_feat: Tensor, self_feat: Tensor, head: TduHead, k: int = 3) -> KernelField:
    """Regress the kernel field from concatenated guidance features.

    The weight branch is a 1x1 conv into k*k channels, a sigmoid (taps in
    (0, 1)), then per-pixel mean subtraction (taps sum to zero). The
    offset branch is a 1x1 conv into 2*(k*k - 1) channels with a (0, 0)
    pair inserted at the centre tap index.
    """
    if cross_feat.data.shape[0] != self_feat.data.shape[0] or cross_feat.data.shape[2:] != self_feat.data.shape[2:]:
        raise ShapeError("predict_kernel",
                         f"feature extents differ: {cross_feat.data.shape} vs {self_feat.data.shape}")
    x = T.concat_channels(cross_feat, self_feat)
    weights = T.mean_subtract_channels(T.sigmoid(T.conv2d(x, head.weight_w, head.weight_b)))

    raw = T.conv2d(x, head.offset_w, head.offset_b)
    n, c, h, w = raw.data.shape
    if c != 2 * (k * k - 1):
        raise ShapeError("predict_kernel", f"offset head produced {c} channels, expected {2 * (k * k - 1)}")
    center = (k * k) // 2
    zero_pair = Tensor(np.zeros((n, 2, h, w)))
    if center == 0:
        offsets = T.concat_channels(zero_pair, raw)
    else:
        offsets = T.concat_channels(
            T.slice_channels(raw, 0, 2 * center), zero_pair, T.slice_channels(raw, 2 * center, c))
    return KernelField(weights=weights, offsets=offsets, k=k)


def grid_displacements(k: int) -> np.ndarray:
    """(k*k, 2) integer (dy, dx) of every tap in row-major grid order."""
    r = k // 2
    taps = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]
    return np.asarray(taps, dtype=np.float64)


def apply_update(target: Tensor, kf: KernelField) -> Tensor:
    """Add the kernel-weighted residual of sampled neighbours to the map.

    Each tap samples ``target`` at pixel + grid displacement + offset via
    clamped bilinear interpolation; the residual is the weight-weighted
    sum over taps. Differentiable in the map, the weights and the offsets.
    """
    if target.data.ndim != 4 or target.data.shape[1] != 1:
        raise ShapeError("apply_update", f"expected (N,1,H,W) target, got shape {target.data.shape}")
    N, _, H, W = target.data.shape
    k = kf.k
    k2 = k * k
    if kf.weights.data.shape != (N, k2, H, W):
        raise ShapeError("apply_update",
                         f"weights shape {kf.weights.data.shape} does not match target {(N, k2, H, W)}")
    if kf.offsets.data.shape != (N, 2 * k2, H, W):
        raise ShapeError("apply_update",
                         f"offsets shape {kf.offsets.data.shape} does not match target {(N, 2 * k2, H, W)}")

    disp = grid_displacements(k)
    ys = np.arange(H, dtype=np.float64).reshape(1, 1, H, 1)
    xs = np.arange(W, dtype=np.float64).reshape(1, 1, 1, W)
    base = np.empty((N, 2 * k2, H, W))
    base[:, 0::2] = ys + disp[:, 0].reshape(1, k2, 1, 1)
    base[:, 1::2] = xs + disp[:, 1].reshape(1, k2, 1, 1)

    positions = T.add(kf.offsets, Tensor(base))
    samples = T.grid_sample_bilinear(target, positions)
    residual = T.sum_channels(T.mul(kf.weights, samples))
    return T.add(target, residual)


def kernel_scope_stats(kf: KernelField):
    """Per-image mean and max distance of effective taps from their pixel.

    The centre tap is excluded; each remaining tap sits at grid
    displacement plus learned offset, and its Euclidean distance in
    pixels is aggregated over taps and pixels.
    """
    k = kf.k
    k2 = k * k
    n = kf.offsets.data.shape[0]
    off = kf.offsets.data.reshape(n, k2, 2, *kf.offsets.data.shape[2:])
    eff = off + grid_displacements(k).reshape(1, k2, 2, 1, 1)
    dist = np.sqrt((eff ** 2).sum(axis=2))
    keep = np.ones(k2, dtype=bool)
    keep[k2 // 2] = False
    dist = dist[:, keep]
    return [
        {"mean_dist_px": float(dist[i].mean()), "max_dist_px": float(dist[i].max())}
        for i in range(n)
    ]
