"""Command-line entry point.

Subcommands cover dataset synthesis, pre-fill, training, inference,
evaluation, gradient checking, visualization and kernel diagnostics.
Machine-readable JSON goes to stdout; progress notes go to stderr. Exit
codes: 0 success, 1 usage, 2 data, 3 numeric.

``LRRU_THREADS`` caps the per-sample worker threads used by infer and
eval (0 or unset picks the CPU count).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import data as D
from .checkpoint import atomic_write_bytes, atomic_write_text, load_checkpoint
from .config import LrruConfig
from .depthmap import DepthMap
from .errors import DataError, LrruError, NumericError, UsageError
from .gradcheck import run_gradient_suite
from .guidance import ModelParams
from .pipeline import infer, train
from .prefill import prefill
from .tdu import kernel_scope_stats
from .viz import colorize


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def worker_count() -> int:
    raw = os.environ.get("LRRU_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"LRRU_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise UsageError(f"LRRU_THREADS must be >= 0, got {n}")
    return n if n > 0 else (os.cpu_count() or 1)


def _note(msg):
    print(msg, file=sys.stderr)


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def _parse_size(text):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise UsageError(f"--size expects HxW, got {text!r}")


def _require_file(path, what):
    if not os.path.isfile(path):
        raise DataError(f"{what} not found: {path}")


def _require_dir(path, what):
    if not os.path.isdir(path):
        raise DataError(f"{what} not found: {path}")


def _load_model(ckpt_path):
    _require_file(ckpt_path, "checkpoint")
    raw_params, cfg_dict = load_checkpoint(ckpt_path)
    if cfg_dict is None:
        raise DataError(f"checkpoint {ckpt_path} carries no config")
    params = ModelParams(raw_params)
    return params, LrruConfig.from_dict(cfg_dict)


def cmd_synth(args):
    h, w = _parse_size(args.size)
    if os.path.isdir(args.out) and os.listdir(args.out) and not args.force:
        raise DataError(f"output directory {args.out} is not empty (use --force to overwrite)")
    cfg = LrruConfig()
    _note(f"synthesizing {args.count} scenes of {h}x{w} into {args.out}")
    samples = [
        D.synth_scene(args.seed + i, h, w, cfg, sparsity=args.sparsity)
        for i in range(args.count)
    ]
    D.save_dataset(samples, args.out)
    manifest = {
        "count": args.count,
        "size": [h, w],
        "seed": args.seed,
        "sparsity": args.sparsity,
        "max_depth_mm": cfg.max_depth_mm,
    }
    atomic_write_text(os.path.join(args.out, "manifest.json"), json.dumps(manifest, sort_keys=True) + "\n")
    _emit(manifest)
    return 0


def cmd_prefill(args):
    _require_file(args.input, "sparse depth file")
    dense = prefill(D.read_depth_png(args.input), args.max_depth)
    D.write_depth_png(dense, args.out)
    _emit({"in": args.input, "out": args.out, "valid_fraction": 1.0})
    return 0


def cmd_train(args):
    _require_file(args.config, "config file")
    _require_dir(args.data, "dataset directory")
    cfg = LrruConfig.from_json_file(args.config)
    samples, _ = D.load_dataset(args.data, require_rgb=not cfg.depth_only)
    _note(f"training {cfg.variant} on {len(samples)} samples for {cfg.optimizer.epochs} epochs")
    _params, log = train(samples, cfg, out_dir=args.out)
    final = log.records[-1]
    _emit({
        "checkpoint": os.path.join(args.out, "final.lrru"),
        "epochs": len(log.records),
        "final_loss": final["loss"],
        "wall_clock_s": final["wall_clock_s"],
    })
    return 0


def _infer_one(name, sample, params, cfg, tta, out_dir):
    pred = infer(sample.rgb, sample.sparse, params, cfg, tta=tta)
    D.write_depth_png(pred, os.path.join(out_dir, name))
    return name


def cmd_infer(args):
    params, cfg = _load_model(args.ckpt)
    if os.path.isdir(args.input):
        samples, names = D.load_dataset(args.input, require_rgb=not cfg.depth_only, require_gt=False)
    else:
        parts = args.input.split(",")
        sparse = D.read_depth_png(parts[0])
        rgb = D.read_rgb_png(parts[1]) if len(parts) > 1 else None
        if rgb is None and not cfg.depth_only:
            raise DataError("model expects an rgb image: pass --in sparse.png,rgb.png")
        samples = [D.DepthSample(rgb=rgb, sparse=sparse, gt=DepthMap.dense(np.ones_like(sparse.depth)))]
        names = [os.path.basename(parts[0])]
    os.makedirs(args.out, exist_ok=True)
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        done = list(pool.map(
            lambda pair: _infer_one(pair[0], pair[1], params, cfg, args.tta, args.out),
            zip(names, samples)))
    _emit({"count": len(done), "out": args.out, "tta": bool(args.tta)})
    return 0


def cmd_eval(args):
    _require_dir(args.pred, "prediction directory")
    _require_dir(args.gt, "ground-truth directory")
    names = sorted(f for f in os.listdir(args.gt) if f.endswith(".png"))
    if not names:
        raise DataError(f"no PNGs found under {args.gt}")
    for name in names:
        _require_file(os.path.join(args.pred, name), f"prediction for {name}")

    def one(name):
        pred = D.read_depth_png(os.path.join(args.pred, name))
        gt = D.read_depth_png(os.path.join(args.gt, name))
        return name, D.metrics(pred, gt)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        reports = list(pool.map(one, names))
    keys = ["rmse_mm", "mae_mm", "irmse_per_km", "imae_per_km", "rel", "delta1", "delta2", "delta3"]
    mean = {k: float(np.mean([r.to_dict()[k] for _, r in reports])) for k in keys}
    body = {
        "count": len(reports),
        "mean": mean,
        "per_image": {name: r.to_dict() for name, r in reports},
    }
    atomic_write_text(args.report, json.dumps(body, sort_keys=True, indent=2) + "\n")
    _emit({"report": args.report, "count": body["count"], "rmse_mm": mean["rmse_mm"]})
    return 0


def cmd_gradcheck(args):
    results = run_gradient_suite(args.seed)
    worst = max(results.values())
    for op, err in sorted(results.items()):
        _note(f"{op:24s} max_rel_err = {err:.3e}")
    _emit({"ops": results, "max_rel_err": worst, "threshold": 1e-4})
    if worst >= 1e-4:
        raise NumericError(f"gradient check failed: max relative error {worst:.3e} >= 1e-4")
    return 0


def cmd_viz(args):
    _require_file(args.input, "depth file")
    m = D.read_depth_png(args.input)
    rgb, lo, hi = colorize(m)
    atomic_write_bytes(args.out, D._encode_png(rgb))
    sidecar = {"min_depth_mm": lo, "max_depth_mm": hi, "source": args.input}
    atomic_write_text(args.out + ".json", json.dumps(sidecar, sort_keys=True) + "\n")
    _emit(sidecar)
    return 0


def cmd_diag(args):
    from .pipeline import _batch_forward, _prepare_samples

    params, cfg = _load_model(args.ckpt)
    _require_dir(args.data, "dataset directory")
    samples, _ = D.load_dataset(args.data, require_rgb=not cfg.depth_only, require_gt=False)
    prepared = _prepare_samples(samples, cfg)
    acc_mean = [[] for _ in range(cfg.iterations)]
    acc_max = [[] for _ in range(cfg.iterations)]
    bs = cfg.optimizer.batch_size
    for lo in range(0, len(prepared), bs):
        _, kfs = _batch_forward(prepared[lo:lo + bs], params, cfg)
        for it, kf in enumerate(kfs):
            for s in kernel_scope_stats(kf):
                acc_mean[it].append(s["mean_dist_px"])
                acc_max[it].append(s["max_dist_px"])
    records = [
        {"iteration": it + 1,
         "mean_dist_px": float(np.mean(acc_mean[it])),
         "max_dist_px": float(np.max(acc_max[it]))}
        for it in range(cfg.iterations)
    ]
    body = {
        "iterations": records,
        "long_to_short": bool(records[0]["mean_dist_px"] > records[-1]["mean_dist_px"]),
    }
    atomic_write_text(args.out, json.dumps(body, sort_keys=True, indent=2) + "\n")
    for r in records:
        _note(f"iteration {r['iteration']}: mean reach {r['mean_dist_px']:.3f}px, max {r['max_dist_px']:.3f}px")
    _emit(body)
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="lrru", description="Sparse-to-dense depth completion toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthesize a dataset directory")
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--size", required=True, help="HxW, both divisible by 8")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sparsity", default="random:500", help="random:n or lines:k")
    s.add_argument("--force", action="store_true")
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("prefill", help="densify one sparse depth PNG")
    s.add_argument("--in", required=True, dest="input")
    s.add_argument("--out", required=True)
    s.add_argument("--max-depth", type=float, default=10000.0, dest="max_depth")
    s.set_defaults(fn=cmd_prefill)

    s = sub.add_parser("train", help="train from a config and dataset directory")
    s.add_argument("--config", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("infer", help="run a checkpoint over inputs")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--in", required=True, dest="input", help="dataset dir or sparse.png[,rgb.png]")
    s.add_argument("--out", required=True)
    s.add_argument("--tta", action="store_true")
    s.set_defaults(fn=cmd_infer)

    s = sub.add_parser("eval", help="score predictions against ground truth")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--report", required=True)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of every operation")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_gradcheck)

    s = sub.add_parser("viz", help="colorize a depth PNG")
    s.add_argument("--in", required=True, dest="input")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_viz)

    s = sub.add_parser("diag", help="per-iteration kernel reach statistics")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_diag)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except LrruError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
