"""The update unit up close: zero-sum weights, pinned centre, deformable taps.

Run: python3 demos/03_update_unit_kernels.py
"""

import numpy as np

from lrru.tdu import KernelField, TduHead, apply_update, kernel_scope_stats, predict_kernel
from lrru.tensor import Tensor

rng = np.random.default_rng(7)
k = 3

head = TduHead(
    weight_w=Tensor(rng.uniform(-0.5, 0.5, (k * k, 6, 1, 1))),
    weight_b=Tensor(np.zeros(k * k)),
    offset_w=Tensor(rng.uniform(-0.3, 0.3, (2 * (k * k - 1), 6, 1, 1))),
    offset_b=Tensor(np.zeros(2 * (k * k - 1))),
)
cross = Tensor(rng.uniform(-1, 1, (1, 4, 8, 8)))
self_feat = Tensor(rng.uniform(-1, 1, (1, 2, 8, 8)))

kf = predict_kernel(cross, self_feat, head, k)
sums = np.abs(kf.weights.data.sum(axis=1))
print(f"per-pixel weight sums: max |sum| = {sums.max():.2e} (zero-sum by construction)")
center = (k * k) // 2
print(f"centre-tap offsets all zero: {np.all(kf.offsets.data[:, 2 * center:2 * center + 2] == 0)}")

stats = kernel_scope_stats(kf)[0]
print(f"kernel reach: mean {stats['mean_dist_px']:.3f}px, max {stats['max_dist_px']:.3f}px "
      f"(regular 3x3 grid sits at mean 1.207)")

# Zero-sum weights annihilate constants: flat regions pass through untouched.
flat = Tensor(np.full((1, 1, 8, 8), 3000.0))
print(f"constant map drift after update: {np.abs(apply_update(flat, kf).data - 3000.0).max():.2e} mm")

# On a step edge the same kernel produces a structured residual.
edge = np.full((1, 1, 8, 8), 2000.0)
edge[:, :, :, 4:] = 5000.0
updated = apply_update(Tensor(edge), kf)
residual = updated.data - edge
print(f"step-edge residual: interior {np.abs(residual[:, :, :, :2]).max():.1f} mm, "
      f"at the edge {np.abs(residual[:, :, :, 3:5]).max():.1f} mm")

# Offsets bend taps toward chosen neighbours; a uniform +2x shift reaches
# two pixels to the right of the regular grid.
shifted = np.zeros((1, 2 * k * k, 8, 8))
shifted[:, 1::2] = 2.0
shifted[:, 2 * center:2 * center + 2] = 0.0
weights = np.zeros((1, k * k, 8, 8))
weights[:, 5] = 1.0   # tap (0, +1), shifted to (0, +3)
weights[:, center] = -1.0
kf2 = KernelField(Tensor(weights), Tensor(shifted), k)
ramp = Tensor(np.tile(np.arange(8, dtype=float) * 100.0, (8, 1))[None, None])
out = apply_update(ramp, kf2)
print(f"copy-from-3-right on a ramp adds ~300: mean residual "
      f"{(out.data - ramp.data)[0, 0, :, :4].mean():.1f} mm")
