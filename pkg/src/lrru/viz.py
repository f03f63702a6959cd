"""Depth colorization with a fixed 256-entry ramp, near depths warm."""

from __future__ import annotations

import numpy as np

from .depthmap import DepthMap

_ANCHORS = np.array([
    [255, 64, 32],
    [255, 150, 40],
    [250, 235, 80],
    [140, 220, 110],
    [70, 180, 210],
    [45, 95, 205],
    [35, 35, 110],
], dtype=np.float64)


def color_ramp() -> np.ndarray:
    """The fixed (256, 3) uint8 lookup table, index 0 = nearest."""
    t = np.linspace(0.0, 1.0, 256)
    pos = t * (len(_ANCHORS) - 1)
    i0 = np.minimum(pos.astype(int), len(_ANCHORS) - 2)
    frac = (pos - i0)[:, None]
    ramp = _ANCHORS[i0] * (1.0 - frac) + _ANCHORS[i0 + 1] * frac
    return np.clip(np.rint(ramp), 0, 255).astype(np.uint8)


def colorize(m: DepthMap):
    """Map a depth image to colors; returns (rgb uint8, min_mm, max_mm).

    Valid depths are normalized between the image's own min and max;
    invalid pixels render black.
    """
    ramp = color_ramp()
    out = np.zeros((*m.depth.shape, 3), dtype=np.uint8)
    if not m.valid.any():
        return out, 0.0, 0.0
    vals = m.depth[m.valid]
    lo, hi = float(vals.min()), float(vals.max())
    span = hi - lo
    if span <= 0:
        idx = np.zeros(vals.shape, dtype=int)
    else:
        idx = np.clip(((m.depth[m.valid] - lo) / span * 255.0).astype(int), 0, 255)
    out[m.valid] = ramp[idx]
    return out, lo, hi
