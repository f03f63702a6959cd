"""Central-finite-difference verification of analytic gradients.

Bilinear sampling is piecewise linear in its coordinates, so a
coordinate sitting exactly on an integer lattice point is a kink where
two-sided differences disagree with either one-sided slope. The harness
therefore nudges designated inputs off the lattice before checking.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


def jitter_off_integers(values: np.ndarray, eps: float, margin: float = 10.0, push: float = 10.0) -> np.ndarray:
    """Move values that sit within ``margin*eps`` of an integer to ``push*eps`` past it."""
    out = values.copy()
    nearest = np.round(out)
    on_kink = np.abs(out - nearest) < margin * eps
    out[on_kink] = nearest[on_kink] + push * eps
    return out


def grad_check(f, inputs, eps: float = 1e-4, jitter=()) -> float:
    """Return the max relative error between analytic and numeric gradients.

    ``f`` maps the given Tensors to a scalar Tensor. ``jitter`` lists the
    indices of inputs that feed bilinear sampling coordinates; their
    values are nudged off integer kinks by ``10*eps`` first. The relative
    error of one element is ``|a - n| / max(1, |a|, |n|)``.
    """
    for idx in jitter:
        inputs[idx].data = jitter_off_integers(inputs[idx].data, eps)
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    out = f(*inputs)
    out.backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    max_err = 0.0
    for t, an in zip(inputs, analytic):
        flat = t.data.ravel()
        an_flat = an.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f(*inputs).data)
            flat[i] = orig - eps
            fm = float(f(*inputs).data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * eps)
            a = an_flat[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > max_err:
                max_err = err
    return max_err


def _rand(rng, shape):
    return Tensor(rng.uniform(-2.0, 2.0, shape), requires_grad=True)


def run_gradient_suite(seed: int = 0, eps: float = 1e-4) -> dict[str, float]:
    """Gradient-check every differentiable operation plus the composed update unit.

    Returns a mapping from operation name to its max relative error.
    """
    from .tdu import KernelField, apply_update, predict_kernel, TduHead

    rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    results = {}

    results["conv2d"] = grad_check(
        lambda x, w, b: T.sum_all(T.conv2d(x, w, b, stride=1, padding=1)),
        [_rand(rng, (2, 3, 5, 5)), _rand(rng, (4, 3, 3, 3)), _rand(rng, (4,))],
        eps,
    )
    results["conv2d_strided"] = grad_check(
        lambda x, w, b: T.sum_all(T.conv2d(x, w, b, stride=2, padding=2)),
        [_rand(rng, (1, 2, 8, 8)), _rand(rng, (3, 2, 5, 5)), _rand(rng, (3,))],
        eps,
    )
    pos = Tensor(np.stack([rng.uniform(0.1, 4.9, (1, 4, 6, 6)), rng.uniform(0.1, 4.9, (1, 4, 6, 6))], axis=2).reshape(1, 8, 6, 6))
    results["grid_sample_bilinear"] = grad_check(
        lambda x, p: T.sum_all(T.mul(T.grid_sample_bilinear(x, p), T.grid_sample_bilinear(x, p))),
        [_rand(rng, (1, 1, 6, 6)), pos],
        eps,
        jitter=(1,),
    )
    results["sigmoid"] = grad_check(
        lambda x: T.sum_all(T.mul(T.sigmoid(x), T.sigmoid(x))), [_rand(rng, (2, 3, 4, 4))], eps)
    results["leaky_relu"] = grad_check(
        lambda x: T.sum_all(T.mul(T.leaky_relu(x, 0.1), T.leaky_relu(x, 0.1))),
        [Tensor(jitter_off_integers(rng.uniform(-2, 2, (2, 3, 4, 4)), eps))], eps)
    results["mean_subtract_channels"] = grad_check(
        lambda x: T.sum_all(T.mul(T.mean_subtract_channels(x), T.mean_subtract_channels(x))),
        [_rand(rng, (2, 5, 3, 3))], eps)
    results["add"] = grad_check(
        lambda a, b: T.sum_all(T.mul(T.add(a, b), T.add(a, b))),
        [_rand(rng, (2, 2, 3, 3)), _rand(rng, (2, 2, 3, 3))], eps)
    results["sub"] = grad_check(
        lambda a, b: T.sum_all(T.mul(T.sub(a, b), T.sub(a, b))),
        [_rand(rng, (2, 2, 3, 3)), _rand(rng, (2, 2, 3, 3))], eps)
    results["mul"] = grad_check(
        lambda a, b: T.sum_all(T.mul(a, b)),
        [_rand(rng, (2, 2, 3, 3)), _rand(rng, (2, 2, 3, 3))], eps)
    results["abs"] = grad_check(
        lambda x: T.sum_all(T.abs_val(x)),
        [Tensor(jitter_off_integers(rng.uniform(-2, 2, (2, 2, 4, 4)), eps))], eps)
    results["concat_channels"] = grad_check(
        lambda a, b: T.sum_all(T.mul(T.concat_channels(a, b), T.concat_channels(a, b))),
        [_rand(rng, (1, 2, 4, 4)), _rand(rng, (1, 3, 4, 4))], eps)
    results["slice_channels"] = grad_check(
        lambda x: T.sum_all(T.mul(T.slice_channels(x, 1, 3), T.slice_channels(x, 1, 3))),
        [_rand(rng, (1, 4, 4, 4))], eps)
    results["sum_channels"] = grad_check(
        lambda x: T.sum_all(T.mul(T.sum_channels(x), T.sum_channels(x))),
        [_rand(rng, (2, 4, 3, 3))], eps)
    results["upsample_bilinear"] = grad_check(
        lambda x: T.sum_all(T.mul(T.upsample_bilinear(x, 2), T.upsample_bilinear(x, 2))),
        [_rand(rng, (1, 3, 4, 4))], eps)
    results["resize_bilinear"] = grad_check(
        lambda x: T.sum_all(T.mul(T.resize_bilinear(x, 7, 5), T.resize_bilinear(x, 7, 5))),
        [_rand(rng, (1, 2, 4, 6))], eps)
    results["flip_horizontal"] = grad_check(
        lambda x: T.sum_all(T.mul(T.flip_horizontal(x), x)),
        [_rand(rng, (1, 2, 3, 5))], eps)
    results["composed"] = grad_check(
        lambda x, w, b: T.sum_all(T.sigmoid(T.conv2d(x, w, b, stride=1, padding=1))),
        [_rand(rng, (1, 2, 4, 4)), _rand(rng, (2, 2, 3, 3)), _rand(rng, (2,))],
        eps,
    )

    # Composed update unit: kernel prediction feeding the deformable update.
    k = 3
    cf = _rand(rng, (1, 4, 6, 6))
    sf = _rand(rng, (1, 3, 6, 6))
    head = TduHead(
        weight_w=_rand(rng, (k * k, 7, 1, 1)),
        weight_b=_rand(rng, (k * k,)),
        offset_w=Tensor(rng.uniform(-0.2, 0.2, (2 * (k * k - 1), 7, 1, 1)), requires_grad=True),
        offset_b=Tensor(rng.uniform(-0.2, 0.2, (2 * (k * k - 1),)), requires_grad=True),
    )
    target = _rand(rng, (1, 1, 6, 6))

    # Effective sampling positions are pixel + integer grid + offset, so a kink
    # appears whenever an offset value is nearly integer. A constant shift of
    # the offset map moves the evaluation point off those kinks without
    # touching the differentiation path.
    probe = predict_kernel(cf, sf, head, k)
    off = probe.offsets.data
    delta = np.where(np.abs(off - np.round(off)) < 50 * eps, 100 * eps, 0.0)
    shift = Tensor(delta)

    def tdu_fn(cf_, sf_, ww, wb, ow, ob, tgt):
        h = TduHead(weight_w=ww, weight_b=wb, offset_w=ow, offset_b=ob)
        kf = predict_kernel(cf_, sf_, h, k)
        kf = KernelField(weights=kf.weights, offsets=T.add(kf.offsets, shift), k=k)
        out = apply_update(tgt, kf)
        return T.sum_all(T.mul(out, out))

    results["tdu_predict_apply"] = grad_check(
        tdu_fn,
        [cf, sf, head.weight_w, head.weight_b, head.offset_w, head.offset_b, target],
        eps,
    )
    return results
