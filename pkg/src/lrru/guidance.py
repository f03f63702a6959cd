"""Guidance feature extraction.

Two parallel five-stage encoders (image and sparse depth) with the image
features injected into the depth stream at every scale, a shared fusion
conv per scale, and a residual decoder that emits guidance features at
1/8, 1/4, 1/2 and full resolution. A separate single conv produces
features from the current depth estimate itself, so the update unit can
adapt to the map it is refining.

Stage 1 runs at full resolution; stages 2 to 5 each halve the extent
with a 5x5 stride-2 conv followed by a 3x3 conv. All activations are
leaky with slope 0.1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import LrruConfig
from .errors import ShapeError
from .tensor import Tensor

LEAKY_SLOPE = 0.1
N_STAGES = 5


@dataclass
class GuidanceFeatures:
    """Multi-scale guidance maps, ordered coarse to fine."""

    eighth: Tensor
    quarter: Tensor
    half: Tensor
    full: Tensor

    def as_tuple(self):
        return (self.eighth, self.quarter, self.half, self.full)

    def by_scale(self, scale: float) -> Tensor:
        table = {0.125: self.eighth, 0.25: self.quarter, 0.5: self.half, 1.0: self.full}
        return table[scale]


class ModelParams(dict):
    """Named parameter tensors, all tracked for gradients."""

    def zero_grads(self):
        for p in self.values():
            p.grad = None

    def grads(self) -> dict:
        return {name: p.grad for name, p in self.items()}

    def count_values(self) -> int:
        return int(sum(p.data.size for p in self.values()))

    def copy_values(self) -> "ModelParams":
        out = ModelParams()
        for name, p in self.items():
            out[name] = Tensor(p.data.copy(), requires_grad=True)
        return out


def init_params(cfg: LrruConfig, rng=None) -> ModelParams:
    """Fresh parameters: centered-uniform fan-in init, zero biases.

    Offset prediction convs start at exactly zero so the first updates
    sample on the regular grid.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    ch = cfg.channels
    k2 = cfg.kernel_size * cfg.kernel_size
    params = ModelParams()

    def conv(name, cin, cout, ksize, zero=False):
        if zero:
            w = np.zeros((cout, cin, ksize, ksize))
        else:
            # centered uniform, fan-in scaled with the leaky-activation gain
            # so feature magnitudes survive the deep coarse-scale path
            fan_in = cin * ksize * ksize
            bound = np.sqrt(6.0 / (fan_in * (1.0 + LEAKY_SLOPE ** 2)))
            w = rng.uniform(-bound, bound, (cout, cin, ksize, ksize))
        params[f"{name}.w"] = Tensor(w, requires_grad=True)
        params[f"{name}.b"] = Tensor(np.zeros(cout), requires_grad=True)

    def encoder(prefix, cin):
        width_in = cin
        for i in range(1, N_STAGES + 1):
            width = ch[i - 1]
            if i == 1:
                conv(f"{prefix}.s1.c1", width_in, width, 3)
            else:
                conv(f"{prefix}.s{i}.c1", width_in, width, 5)
            conv(f"{prefix}.s{i}.c2", width, width, 3)
            width_in = width

    if not cfg.depth_only:
        encoder("rgb_enc", 3)
    encoder("dep_enc", 1)
    for i in range(1, N_STAGES + 1):
        conv(f"fuse.s{i}", ch[i - 1], ch[i - 1], 3)
    dec_io = [(ch[4], ch[3]), (ch[3], ch[2]), (ch[2], ch[1]), (ch[1], ch[0])]
    for j, (cin, cout) in enumerate(dec_io, start=1):
        conv(f"dec.u{j}", cin, cout, 3)
    conv("self_guided", 1, ch[0], 3)

    cross_widths = _cross_widths(cfg)
    for t in range(1, cfg.iterations + 1):
        cin = cross_widths[t - 1] + ch[0]
        conv(f"tdu.t{t}.weight", cin, k2, 1)
        # small gain keeps the first updates close to the identity, the
        # same reasoning as the zero offset start
        params[f"tdu.t{t}.weight.w"].data *= 0.05
        conv(f"tdu.t{t}.offset", cin, 2 * (k2 - 1), 1, zero=True)
    return params


def _cross_widths(cfg: LrruConfig):
    """Channel width of the guidance feature used at each update step."""
    ch = cfg.channels
    by_scale = {0.125: ch[3], 0.25: ch[2], 0.5: ch[1], 1.0: ch[0]}
    return [by_scale[s] for s in cfg.scale_schedule]


def _stage(x, params, prefix, downsample):
    if downsample:
        x = T.leaky_relu(T.conv2d(x, params[f"{prefix}.c1.w"], params[f"{prefix}.c1.b"], stride=2, padding=2), LEAKY_SLOPE)
    else:
        x = T.leaky_relu(T.conv2d(x, params[f"{prefix}.c1.w"], params[f"{prefix}.c1.b"], stride=1, padding=1), LEAKY_SLOPE)
    x = T.leaky_relu(T.conv2d(x, params[f"{prefix}.c2.w"], params[f"{prefix}.c2.b"], stride=1, padding=1), LEAKY_SLOPE)
    return x


def extract_cross_guided(rgb, sparse: Tensor, params: ModelParams) -> GuidanceFeatures:
    """Multi-scale guidance from the image and the sparse depth.

    ``rgb`` is an (N,3,H,W) tensor in [0,1], or None to run from the
    depth stream alone; ``sparse`` is (N,1,H,W), depth scaled to [0,1]
    with zeros where there is no measurement. H and W must be divisible
    by 8.
    """
    N, _, H, W = sparse.data.shape
    if H % 8 or W % 8:
        raise ShapeError("extract_cross_guided",
                         f"input extents {H}x{W} must be divisible by 8; pad the input first")
    if rgb is not None and rgb.data.shape != (N, 3, H, W):
        raise ShapeError("extract_cross_guided",
                         f"rgb shape {rgb.data.shape} does not match sparse {(N, 3, H, W)}")
    if rgb is not None and "rgb_enc.s1.c1.w" not in params:
        raise ShapeError("extract_cross_guided", "parameters were built depth-only but rgb was provided")
    if rgb is None and "rgb_enc.s1.c1.w" in params:
        raise ShapeError("extract_cross_guided", "parameters expect an rgb input")

    skips = []
    d = sparse
    r = rgb
    for i in range(1, N_STAGES + 1):
        down = i > 1
        d = _stage(d, params, f"dep_enc.s{i}", down)
        if r is not None:
            r = _stage(r, params, f"rgb_enc.s{i}", down)
            d = T.add(d, r)
        d = T.leaky_relu(T.conv2d(d, params[f"fuse.s{i}.w"], params[f"fuse.s{i}.b"], stride=1, padding=1), LEAKY_SLOPE)
        skips.append(d)

    y = skips[4]
    outs = []
    for j, skip in enumerate((skips[3], skips[2], skips[1], skips[0]), start=1):
        _, _, sh, sw = skip.data.shape
        y = T.resize_bilinear(y, sh, sw)
        y = T.leaky_relu(T.conv2d(y, params[f"dec.u{j}.w"], params[f"dec.u{j}.b"], stride=1, padding=1), LEAKY_SLOPE)
        y = T.add(y, skip)
        outs.append(y)
    return GuidanceFeatures(eighth=outs[0], quarter=outs[1], half=outs[2], full=outs[3])


def extract_self_guided(target: Tensor, params: ModelParams) -> Tensor:
    """Features of the current depth estimate: one 3x3 conv plus activation."""
    return T.leaky_relu(
        T.conv2d(target, params["self_guided.w"], params["self_guided.b"], stride=1, padding=1), LEAKY_SLOPE)


def upsample_guidance(feats: GuidanceFeatures, height: int, width: int):
    """Bilinearly lift every scale to the given full resolution."""
    return [T.resize_bilinear(f, height, width) for f in feats.as_tuple()]
