"""Inference-side features: mirror-averaged prediction, sparsity sweeps,
depth-only mode, and the metric suite.

Trains two quick miniature models (about a minute total), so the numbers
here are indicative only; the acceptance suite runs the full experiment.

Run: python3 demos/05_inference_tta_and_sparsity.py
"""

import numpy as np

from lrru import LrruConfig, OptimizerConfig, infer, metrics, prefill, sparsify_lines, synth_scene, train
from lrru.config import LrSchedule

opt = OptimizerConfig(lr=1.5e-3, beta2=0.99, batch_size=1, epochs=12, weight_decay=1e-6,
                      lr_schedule=LrSchedule(constant_epochs=9, halve_every=3))
cfg = LrruConfig(optimizer=opt, seed=0)

train_set = [synth_scene(i, 64, 64, cfg, "random:500") for i in range(16)]
params, _ = train(train_set, cfg)
probe = synth_scene(900, 64, 64, cfg, "random:500")
start = metrics(prefill(probe.sparse, cfg.max_depth_mm), probe.gt)

plain = infer(probe.rgb, probe.sparse, params, cfg, tta=False)
merged = infer(probe.rgb, probe.sparse, params, cfg, tta=True)
print(f"prefill start RMSE {start.rmse_mm:.1f} mm")
print(f"plain RMSE {metrics(plain, probe.gt).rmse_mm:.1f} mm | "
      f"mirror-averaged RMSE {metrics(merged, probe.gt).rmse_mm:.1f} mm")

# The averaging contract, verified by hand.
flipped = infer(np.ascontiguousarray(probe.rgb[:, ::-1]), probe.sparse.flip_horizontal(),
                params, cfg, tta=False)
manual = 0.5 * (plain.depth + flipped.depth[:, ::-1])
print(f"mirror average reconstruction max dev: {np.abs(merged.depth - manual).max():.1e} mm")

# Fewer scan lines, monotonically worse completion.
print("\nscan-line sweep (model trained on random samples):")
for keep in (2, 4, 8):
    lined = sparsify_lines(probe.gt, keep_every=keep, seed=1)
    pred = infer(probe.rgb, lined, params, cfg)
    rep = metrics(pred, probe.gt)
    print(f"  every {keep} rows kept: {lined.count_valid():4d} points -> RMSE {rep.rmse_mm:.1f} mm")

# Depth-only variant: same interfaces, no image stream.
cfg_do = LrruConfig(optimizer=opt, seed=0, depth_only=True)
params_do, _ = train(train_set, cfg_do)
pred_do = infer(None, probe.sparse, params_do, cfg_do)
print(f"\ndepth-only mode completes without an image: RMSE "
      f"{metrics(pred_do, probe.gt).rmse_mm:.1f} mm vs prefill start {start.rmse_mm:.1f} mm")
