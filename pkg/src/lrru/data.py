"""Depth-map file I/O, synthetic scene generation, sparsification and metrics.

Depth files are 16-bit single-channel PNGs storing depth_mm * 256 / 1000
per pixel, with 0 marking a missing measurement. Dataset directories lay
out ``rgb/NNNNNN.png``, ``sparse/NNNNNN.png`` and ``gt/NNNNNN.png`` with
zero-padded six-digit indices.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .checkpoint import atomic_write_bytes
from .depthmap import DepthMap
from .errors import DataError

DEPTH_SCALE = 1000.0 / 256.0  # millimeters per stored count


@dataclass
class DepthSample:
    """One scene: optional guidance image, sparse input, ground truth."""

    rgb: np.ndarray | None
    sparse: DepthMap
    gt: DepthMap

    def __post_init__(self):
        if self.rgb is not None:
            if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
                raise DataError(f"rgb must be (H, W, 3), got {self.rgb.shape}")
            if self.rgb.shape[:2] != self.sparse.depth.shape:
                raise DataError(f"rgb extents {self.rgb.shape[:2]} do not match depth {self.sparse.depth.shape}")
        if self.sparse.depth.shape != self.gt.depth.shape:
            raise DataError(f"sparse extents {self.sparse.depth.shape} do not match gt {self.gt.depth.shape}")


@dataclass
class MetricReport:
    rmse_mm: float
    mae_mm: float
    irmse_per_km: float
    imae_per_km: float
    rel: float
    delta1: float
    delta2: float
    delta3: float
    valid_count: int

    def to_dict(self) -> dict:
        return {
            "rmse_mm": self.rmse_mm,
            "mae_mm": self.mae_mm,
            "irmse_per_km": self.irmse_per_km,
            "imae_per_km": self.imae_per_km,
            "rel": self.rel,
            "delta1": self.delta1,
            "delta2": self.delta2,
            "delta3": self.delta3,
            "valid_count": self.valid_count,
        }


def read_depth_png(path) -> DepthMap:
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError as exc:
        raise DataError(f"depth file not found: {path}") from exc
    except (OSError, Image.UnidentifiedImageError) as exc:
        raise DataError(f"cannot read depth PNG {path}: {exc}") from exc
    if img.mode not in ("I;16", "I;16B", "I"):
        raise DataError(f"{path}: expected a 16-bit single-channel PNG, got mode {img.mode!r}")
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise DataError(f"{path}: expected a single-channel depth image, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > 65535:
        raise DataError(f"{path}: pixel values outside the 16-bit range")
    counts = arr.astype(np.float64)
    return DepthMap(counts * DEPTH_SCALE, counts > 0)


def write_depth_png(m: DepthMap, path):
    counts = np.rint(m.depth / DEPTH_SCALE)
    counts[~m.valid] = 0
    if counts.max() > 65535:
        raise DataError(f"depth {m.depth.max():.0f} mm exceeds the 16-bit PNG range")
    np.clip(counts, 0, 65535, out=counts)
    atomic_write_bytes(path, _encode_png(counts.astype(np.uint16)))


def read_rgb_png(path) -> np.ndarray:
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError as exc:
        raise DataError(f"rgb file not found: {path}") from exc
    except (OSError, Image.UnidentifiedImageError) as exc:
        raise DataError(f"cannot read rgb PNG {path}: {exc}") from exc
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def write_rgb_png(rgb: np.ndarray, path):
    arr = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    atomic_write_bytes(path, _encode_png(arr))


def _encode_png(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def synth_scene(seed: int, height: int, width: int, cfg, sparsity: str = "random:500") -> DepthSample:
    """Deterministic piecewise-planar scene with aligned image and depth edges.

    A handful of slanted planar regions with rectangular or elliptical
    occluders in front; each region has its own albedo shaded by its
    surface normal, so every depth discontinuity is also an image edge.
    Depths stay within [500, max_depth_mm].
    """
    if height % 8 or width % 8:
        raise DataError(f"scene extents {height}x{width} must be divisible by 8")
    rgb, depth, _ = render_scene(seed, height, width, cfg.max_depth_mm)
    gt = DepthMap.dense(depth)
    sparse = apply_sparsity(gt, sparsity, _child_seed(seed, 1))
    return DepthSample(rgb=rgb, sparse=sparse, gt=gt)


def render_scene(seed: int, height: int, width: int, max_depth_mm: float):
    """Return (rgb, depth, region ids). Backbone of ``synth_scene``."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    H, W = height, width
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)

    lo, hi = 500.0, float(max_depth_mm)
    base_lo, base_hi = 2000.0, min(6000.0, hi * 0.8)
    slope_cap = 8.0

    n_regions = int(rng.integers(3, 7))
    centers = rng.uniform(0, 1, (n_regions, 2)) * [H, W]
    d2 = (yy[None] - centers[:, 0, None, None]) ** 2 + (xx[None] - centers[:, 1, None, None]) ** 2
    region = np.argmin(d2, axis=0)

    depth = np.zeros((H, W))
    normals = np.zeros((n_regions, 3))
    for r in range(n_regions):
        b = rng.uniform(base_lo, base_hi)
        gy = rng.uniform(-slope_cap, slope_cap)
        gx = rng.uniform(-slope_cap, slope_cap)
        cy, cx = centers[r]
        plane = b + gy * (yy - cy) + gx * (xx - cx)
        depth[region == r] = plane[region == r]
        normals[r] = _plane_normal(gy, gx)
    np.clip(depth, 1200.0, hi, out=depth)

    n_occ = int(rng.integers(1, 4))
    next_id = n_regions
    for _ in range(n_occ):
        mask = _occluder_mask(rng, yy, xx, H, W)
        if not mask.any():
            continue
        under = depth[mask].min()
        top = under - 300.0
        if top < lo + 50.0:
            continue
        b = rng.uniform(lo + 50.0, top)
        gy = rng.uniform(-slope_cap / 3, slope_cap / 3)
        gx = rng.uniform(-slope_cap / 3, slope_cap / 3)
        cy, cx = yy[mask].mean(), xx[mask].mean()
        plane = b + gy * (yy - cy) + gx * (xx - cx)
        plane = np.clip(plane, lo, top)
        depth[mask] = plane[mask]
        region[mask] = next_id
        normals = np.vstack([normals, _plane_normal(gy, gx)])
        next_id += 1

    light = np.array([0.3, 0.5, 0.81])
    light /= np.linalg.norm(light)
    shade = 0.55 + 0.45 * np.clip(normals @ light, 0.0, 1.0)
    colors = _distinct_colors(rng, shade, min_gap=0.15)
    rgb = colors[region]
    rgb = rgb + rng.normal(0.0, 0.01, rgb.shape)
    np.clip(rgb, 0.0, 1.0, out=rgb)
    return rgb, depth, region


def _plane_normal(gy: float, gx: float) -> np.ndarray:
    # Gradients are in mm/px; a fixed reference slope keeps shading gentle.
    n = np.array([-gy / 50.0, -gx / 50.0, 1.0])
    return n / np.linalg.norm(n)


def _occluder_mask(rng, yy, xx, H, W):
    cy = rng.uniform(0.2, 0.8) * H
    cx = rng.uniform(0.2, 0.8) * W
    ry = rng.uniform(0.08, 0.22) * H
    rx = rng.uniform(0.08, 0.22) * W
    if rng.uniform() < 0.5:
        return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def _distinct_colors(rng, shades: np.ndarray, min_gap: float) -> np.ndarray:
    """Per-region shaded colors kept pairwise distinct, so every region
    boundary is an image edge regardless of the lighting."""
    colors = []
    for shade in shades:
        for _attempt in range(500):
            cand = rng.uniform(0.15, 0.98, 3) * shade
            if all(np.abs(cand - c).max() >= min_gap for c in colors):
                break
        colors.append(cand)
    return np.asarray(colors)


def _child_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1)[0])


def sparsify_random(gt: DepthMap, n: int, seed: int) -> DepthMap:
    """Keep a uniform sample of n valid pixels, without replacement."""
    idx = np.flatnonzero(gt.valid)
    if n > idx.size:
        raise DataError(f"requested {n} samples but only {idx.size} valid pixels exist")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 17]))
    keep = rng.choice(idx, size=n, replace=False)
    valid = np.zeros(gt.depth.shape, dtype=bool)
    valid.flat[keep] = True
    return DepthMap(np.where(valid, gt.depth, 0.0), valid)


def sparsify_lines(gt: DepthMap, keep_every: int, jitter: int = 0, seed: int = 0) -> DepthMap:
    """Keep rows r with (r + jitter_r) % keep_every == 0, like coarser scan lines."""
    if keep_every < 1:
        raise DataError(f"keep_every must be >= 1, got {keep_every}")
    H = gt.depth.shape[0]
    if jitter:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 23]))
        offsets = rng.integers(0, jitter + 1, H)
    else:
        offsets = np.zeros(H, dtype=int)
    rows = (np.arange(H) + offsets) % keep_every == 0
    valid = gt.valid & rows[:, None]
    return DepthMap(np.where(valid, gt.depth, 0.0), valid)


def apply_sparsity(gt: DepthMap, pattern: str, seed: int) -> DepthMap:
    mode, _, arg = pattern.partition(":")
    try:
        if mode == "random":
            return sparsify_random(gt, int(arg), seed)
        if mode == "lines":
            parts = arg.split(":")
            keep = int(parts[0])
            jitter = int(parts[1]) if len(parts) > 1 else 0
            return sparsify_lines(gt, keep, jitter, seed)
    except ValueError as exc:
        raise DataError(f"malformed sparsity pattern {pattern!r}: {exc}") from exc
    raise DataError(f"unknown sparsity mode {pattern!r}; expected random:n or lines:k")


def metrics(pred: DepthMap, gt: DepthMap) -> MetricReport:
    """Error statistics over the ground-truth-valid pixel set.

    RMSE/MAE in millimeters, their inverse-depth counterparts in 1/km
    (computed on 1e6 / depth_mm), mean absolute relative error, and the
    percentage of pixels whose prediction/truth ratio in either direction
    stays strictly below 1.25, 1.25^2 and 1.25^3.
    """
    if not gt.valid.any():
        raise DataError("ground truth has no valid pixels to evaluate")
    sel = gt.valid
    if np.any(~pred.valid & sel):
        raise DataError("prediction is missing values on evaluated pixels")
    dp = pred.depth[sel]
    dg = gt.depth[sel]
    if np.any(dp <= 0) or np.any(dg <= 0):
        raise DataError("evaluated depths must be positive")
    diff = dg - dp
    rmse = float(np.sqrt(np.mean(diff ** 2)))
    mae = float(np.mean(np.abs(diff)))
    up = 1.0e6 / dp
    ug = 1.0e6 / dg
    irmse = float(np.sqrt(np.mean((ug - up) ** 2)))
    imae = float(np.mean(np.abs(ug - up)))
    rel = float(np.mean(np.abs(diff) / dg))
    ratio = np.maximum(dg / dp, dp / dg)
    deltas = [float(100.0 * np.mean(ratio < 1.25 ** p)) for p in (1, 2, 3)]
    return MetricReport(rmse, mae, irmse, imae, rel, deltas[0], deltas[1], deltas[2], int(sel.sum()))


def sample_name(index: int) -> str:
    return f"{index:06d}.png"


def save_dataset(samples, out_dir):
    for sub in ("rgb", "sparse", "gt"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    for i, s in enumerate(samples):
        name = sample_name(i)
        if s.rgb is not None:
            write_rgb_png(s.rgb, os.path.join(out_dir, "rgb", name))
        write_depth_png(s.sparse, os.path.join(out_dir, "sparse", name))
        write_depth_png(s.gt, os.path.join(out_dir, "gt", name))


def load_dataset(root, require_rgb: bool = True, require_gt: bool = True):
    """Read a dataset directory into DepthSamples, sorted by file name."""
    sparse_dir = os.path.join(root, "sparse")
    if not os.path.isdir(sparse_dir):
        raise DataError(f"dataset directory {root} has no sparse/ subdirectory")
    names = sorted(f for f in os.listdir(sparse_dir) if f.endswith(".png"))
    if not names:
        raise DataError(f"no depth PNGs found under {sparse_dir}")
    samples = []
    for name in names:
        sparse = read_depth_png(os.path.join(sparse_dir, name))
        rgb_path = os.path.join(root, "rgb", name)
        rgb = None
        if os.path.isfile(rgb_path):
            rgb = read_rgb_png(rgb_path)
        elif require_rgb:
            raise DataError(f"missing rgb image {rgb_path} (use a depth-only config to skip rgb)")
        gt_path = os.path.join(root, "gt", name)
        if os.path.isfile(gt_path):
            gt = read_depth_png(gt_path)
        elif require_gt:
            raise DataError(f"missing ground truth {gt_path}")
        else:
            gt = DepthMap(np.zeros_like(sparse.depth), np.zeros_like(sparse.valid))
        samples.append(DepthSample(rgb=rgb, sparse=sparse, gt=gt))
    return samples, names
