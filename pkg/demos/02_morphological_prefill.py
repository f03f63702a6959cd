"""Sparse depth to a dense start map with non-learning morphology.

Synthesizes a planar scene, keeps 500 random measurements, densifies
them, and writes colorized before/after images under demos/output/.

Run: python3 demos/02_morphological_prefill.py
"""

import os

import numpy as np
from PIL import Image

from lrru import LrruConfig, metrics, prefill, synth_scene
from lrru.viz import colorize

out_dir = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(out_dir, exist_ok=True)

cfg = LrruConfig()
sample = synth_scene(seed=4, height=64, width=64, cfg=cfg, sparsity="random:500")
print(f"scene: {sample.gt.depth.shape}, depth {sample.gt.depth.min():.0f}..{sample.gt.depth.max():.0f} mm")
print(f"sparse input: {sample.sparse.count_valid()} of {sample.gt.depth.size} pixels")

dense = prefill(sample.sparse, cfg.max_depth_mm)
assert dense.valid.all()
kept = np.array_equal(dense.depth[sample.sparse.valid], sample.sparse.depth[sample.sparse.valid])
print(f"output fully dense, measurements preserved bit-exactly: {kept}")

rep = metrics(dense, sample.gt)
print(f"start-map quality: RMSE {rep.rmse_mm:.1f} mm, MAE {rep.mae_mm:.1f} mm, "
      f"REL {rep.rel:.4f}, d1 {rep.delta1:.1f}%")

for name, m in (("sparse", sample.sparse), ("prefilled", dense), ("gt", sample.gt)):
    rgb, lo, hi = colorize(m)
    Image.fromarray(rgb).save(os.path.join(out_dir, f"prefill_{name}.png"))
    print(f"wrote {name}: depth range {lo:.0f}..{hi:.0f} mm")

Image.fromarray((sample.rgb * 255).astype(np.uint8)).save(os.path.join(out_dir, "prefill_rgb.png"))
print(f"images under {out_dir}/")
