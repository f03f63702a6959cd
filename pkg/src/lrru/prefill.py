"""Morphological densification of sparse depth maps.

Grayscale morphology restricted to the valid set: invalid pixels act as
the identity element for max and min, and a pixel becomes valid as soon
as any valid pixel falls under the kernel footprint. The pipeline runs
on inverted depth so that dilation propagates near surfaces over far
ones, which matches how occlusions behave.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .depthmap import DepthMap
from .errors import DataError


def diamond_footprint(size: int) -> np.ndarray:
    """Diamond (L1 ball) footprint of odd extent ``size``."""
    _check_odd(size)
    r = size // 2
    y, x = np.ogrid[-r:r + 1, -r:r + 1]
    return (np.abs(y) + np.abs(x)) <= r


def full_footprint(size: int) -> np.ndarray:
    _check_odd(size)
    return np.ones((size, size), dtype=bool)


def _check_odd(size):
    if size % 2 == 0 or size < 1:
        raise ValueError(f"kernel extent must be odd and positive, got {size}")


def _check_footprint(fp):
    fp = np.asarray(fp, dtype=bool)
    if fp.ndim != 2:
        raise ValueError("footprint must be 2-D")
    _check_odd(fp.shape[0])
    _check_odd(fp.shape[1])
    return fp


def dilate(m: DepthMap, footprint) -> DepthMap:
    """Max over valid pixels under the footprint; extends the valid set."""
    fp = _check_footprint(footprint)
    work = np.where(m.valid, m.depth, -np.inf)
    out = ndimage.maximum_filter(work, footprint=fp, mode="constant", cval=-np.inf)
    valid = np.isfinite(out)
    return DepthMap(np.where(valid, out, 0.0), valid)


def erode(m: DepthMap, footprint) -> DepthMap:
    """Min over valid pixels under the footprint; extends the valid set."""
    fp = _check_footprint(footprint)
    work = np.where(m.valid, m.depth, np.inf)
    out = ndimage.minimum_filter(work, footprint=fp, mode="constant", cval=np.inf)
    valid = np.isfinite(out)
    return DepthMap(np.where(valid, out, 0.0), valid)


def close(m: DepthMap, footprint) -> DepthMap:
    return erode(dilate(m, footprint), footprint)


def median_filter(m: DepthMap, size: int) -> DepthMap:
    """Median of the valid pixels under a size x size window.

    Out-of-image and invalid neighbours are simply excluded; a pixel with
    no valid neighbour stays invalid.
    """
    _check_odd(size)
    r = size // 2
    H, W = m.depth.shape
    stack = np.full((size * size, H, W), np.nan)
    layer = 0
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            ys = slice(max(0, dy), min(H, H + dy))
            yd = slice(max(0, -dy), min(H, H - dy))
            xs = slice(max(0, dx), min(W, W + dx))
            xd = slice(max(0, -dx), min(W, W - dx))
            patch = stack[layer]
            patch[yd, xd] = np.where(m.valid[ys, xs], m.depth[ys, xs], np.nan)
            layer += 1
    counts = np.sum(~np.isnan(stack), axis=0)
    valid = counts > 0
    with np.errstate(all="ignore"):
        med = np.nanmedian(stack, axis=0)
    return DepthMap(np.where(valid, med, 0.0), valid)


def prefill(sparse: DepthMap, max_depth_mm: float) -> DepthMap:
    """Densify a sparse map with a fixed morphological pipeline.

    Runs on inverted depth: diamond-5 dilation, close-5, a 7x7 fill of
    the remaining holes, repeated 31x31 fills until dense, then a 5x5
    median rewrite of the pixels that started out invalid. The original
    measurements are restored bit-exactly at the end and the result is
    fully valid.
    """
    if not sparse.valid.any():
        raise DataError("empty input: sparse depth map has no valid pixels")
    orig_depth = sparse.depth
    orig_valid = sparse.valid

    inverted = np.where(orig_valid, max_depth_mm - orig_depth, 0.0)
    cur = DepthMap(inverted, orig_valid.copy())

    cur = dilate(cur, diamond_footprint(5))
    cur = close(cur, full_footprint(5))

    filled = dilate(cur, full_footprint(7))
    cur = _fill_holes(cur, filled)
    while not cur.valid.all():
        filled = dilate(cur, full_footprint(31))
        cur = _fill_holes(cur, filled)

    med = median_filter(cur, 5)
    depth = np.where(orig_valid, cur.depth, med.depth)

    out = max_depth_mm - depth
    # the invert/re-invert round trip can drift by one ulp; the morphology
    # itself never leaves the hull of the measured values
    seen = orig_depth[orig_valid]
    np.clip(out, seen.min(), seen.max(), out=out)
    out[orig_valid] = orig_depth[orig_valid]
    return DepthMap(out, np.ones_like(orig_valid))


def _fill_holes(cur: DepthMap, candidate: DepthMap) -> DepthMap:
    take = ~cur.valid & candidate.valid
    depth = np.where(take, candidate.depth, cur.depth)
    return DepthMap(depth, cur.valid | take)
