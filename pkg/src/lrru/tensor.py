"""Dense tensors with reverse-mode automatic differentiation.

Everything runs in double precision on top of numpy arrays. Each Tensor
remembers the operation that produced it; ``backward`` replays those
records in exact reverse creation order and accumulates gradients
additively, so a tensor feeding several consumers receives the sum of
all path gradients. Operations never mutate their inputs.

Shape conventions follow the rest of the package: feature maps are
4-D ``(batch, channels, height, width)``, convolution biases are 1-D,
reductions produce 0-d scalars. There is no general broadcasting;
elementwise operations require identical shapes.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

DTYPE = np.float64

_seq_counter = 0


def _next_seq():
    global _seq_counter
    _seq_counter += 1
    return _seq_counter


class Tensor:
    """A numpy array plus the bookkeeping needed for a reverse pass."""

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._prev = ()
        self._backward = None
        self._seq = _next_seq()

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Populate ``grad`` on every reachable tensor that requires it.

        The loss must hold a single element. Repeated calls without
        clearing leaf gradients accumulate; gradients of intermediate
        results are rebuilt from scratch on every call.
        """
        if self.data.size != 1:
            raise ShapeError("backward", f"loss must have a single element, got shape {self.shape}")
        nodes = []
        seen = set()
        stack = [self]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            nodes.append(node)
            stack.extend(node._prev)
        nodes.sort(key=lambda n: n._seq, reverse=True)
        for node in nodes:
            if node._prev:
                node.grad = None
        self.grad = np.ones_like(self.data)
        for node in nodes:
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Thin conveniences; the full op set lives at module level.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def sum(self):
        return sum_all(self)


def _make(data, parents, backward_fn):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = tuple(parents)
        out._backward = backward_fn
    return out


def _require_same_shape(op, a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(op, f"operand shapes differ: {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("add", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _make(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("sub", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g)

    return _make(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("mul", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _make(a.data * b.data, (a, b), backward)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * s)

    return _make(a.data * s, (a,), backward)


def abs_val(a: Tensor) -> Tensor:
    sign = np.sign(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * sign)

    return _make(np.abs(a.data), (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    d = a.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out * (1.0 - out))

    return _make(out, (a,), backward)


def leaky_relu(a: Tensor, slope: float = 0.1) -> Tensor:
    positive = a.data > 0
    out = np.where(positive, a.data, slope * a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * np.where(positive, 1.0, slope))

    return _make(out, (a,), backward)


def mean_subtract_channels(a: Tensor) -> Tensor:
    """Subtract the per-pixel channel mean; output channels sum to zero."""
    if a.data.ndim != 4:
        raise ShapeError("mean_subtract_channels", f"expected 4-D input, got shape {a.data.shape}")
    out = a.data - a.data.mean(axis=1, keepdims=True)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g - g.mean(axis=1, keepdims=True))

    return _make(out, (a,), backward)


def concat_channels(*parts: Tensor) -> Tensor:
    if len(parts) < 2:
        raise ShapeError("concat_channels", "needs at least two operands")
    for p in parts:
        if p.data.ndim != 4:
            raise ShapeError("concat_channels", f"expected 4-D input, got shape {p.data.shape}")
    ref = parts[0].data.shape
    for p in parts[1:]:
        s = p.data.shape
        if s[0] != ref[0] or s[2:] != ref[2:]:
            raise ShapeError("concat_channels", f"incompatible shapes {ref} vs {s}")
    widths = [p.data.shape[1] for p in parts]
    bounds = np.cumsum([0] + widths)

    def backward(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                p._accumulate(g[:, lo:hi])

    return _make(np.concatenate([p.data for p in parts], axis=1), parts, backward)


def slice_channels(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 4:
        raise ShapeError("slice_channels", f"expected 4-D input, got shape {a.data.shape}")
    C = a.data.shape[1]
    if not (0 <= start <= stop <= C):
        raise ShapeError("slice_channels", f"range [{start}, {stop}) outside {C} channels")

    def backward(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            buf[:, start:stop] = g
            a._accumulate(buf)

    return _make(a.data[:, start:stop].copy(), (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, float(g)))

    return _make(np.asarray(a.data.sum()), (a,), backward)


def sum_channels(a: Tensor) -> Tensor:
    """Reduce (N, C, H, W) to (N, 1, H, W) by summing over channels."""
    if a.data.ndim != 4:
        raise ShapeError("sum_channels", f"expected 4-D input, got shape {a.data.shape}")
    out = a.data.sum(axis=1, keepdims=True)

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g, a.data.shape))

    return _make(out, (a,), backward)


def flip_horizontal(a: Tensor) -> Tensor:
    if a.data.ndim != 4:
        raise ShapeError("flip_horizontal", f"expected 4-D input, got shape {a.data.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g[:, :, :, ::-1])

    return _make(np.ascontiguousarray(a.data[:, :, :, ::-1]), (a,), backward)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Standard cross-correlation of a 4-D input with an (OC, IC, KH, KW) kernel."""
    if x.data.ndim != 4:
        raise ShapeError("conv2d", f"expected 4-D input, got shape {x.data.shape}")
    if w.data.ndim != 4:
        raise ShapeError("conv2d", f"expected 4-D weight, got shape {w.data.shape}")
    N, C, H, W = x.data.shape
    OC, IC, KH, KW = w.data.shape
    if IC != C:
        raise ShapeError("conv2d", f"weight expects {IC} input channels, input has {C}")
    if b.data.shape != (OC,):
        raise ShapeError("conv2d", f"bias shape {b.data.shape} does not match {OC} output channels")
    if stride < 1 or padding < 0:
        raise ShapeError("conv2d", f"invalid stride {stride} or padding {padding}")
    OH = (H + 2 * padding - KH) // stride + 1
    OW = (W + 2 * padding - KW) // stride + 1
    if OH < 1 or OW < 1:
        raise ShapeError("conv2d", f"kernel ({KH}x{KW}) too large for padded input ({H}x{W}, pad {padding})")

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    cols = np.empty((N, C, KH, KW, OH, OW), dtype=DTYPE)
    for i in range(KH):
        for j in range(KW):
            cols[:, :, i, j] = xp[:, :, i:i + stride * OH:stride, j:j + stride * OW:stride]
    cols2 = cols.reshape(N, C * KH * KW, OH * OW)
    w2 = w.data.reshape(OC, -1)
    out = np.matmul(w2, cols2)
    out += b.data.reshape(1, OC, 1)
    out = out.reshape(N, OC, OH, OW)

    def backward(g):
        g2 = g.reshape(N, OC, OH * OW)
        if b.requires_grad:
            b._accumulate(g2.sum(axis=(0, 2)))
        if w.requires_grad:
            gw = np.matmul(g2, cols2.transpose(0, 2, 1)).sum(axis=0)
            w._accumulate(gw.reshape(w.data.shape))
        if x.requires_grad:
            gcols = np.matmul(w2.T, g2).reshape(N, C, KH, KW, OH, OW)
            gxp = np.zeros_like(xp)
            for i in range(KH):
                for j in range(KW):
                    gxp[:, :, i:i + stride * OH:stride, j:j + stride * OW:stride] += gcols[:, :, i, j]
            if padding:
                x._accumulate(gxp[:, :, padding:padding + H, padding:padding + W])
            else:
                x._accumulate(gxp)

    return _make(out, (x, w, b), backward)


def _resize_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Row-stochastic 1-D bilinear resampling matrix, half-pixel centers."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.int64)
    np.clip(i0, 0, max(n_in - 2, 0), out=i0)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    mat = np.zeros((n_out, n_in), dtype=DTYPE)
    rows = np.arange(n_out)
    np.add.at(mat, (rows, i0), 1.0 - frac)
    np.add.at(mat, (rows, i1), frac)
    return mat


def resize_bilinear(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear resize with half-pixel sample centers (no corner alignment)."""
    if x.data.ndim != 4:
        raise ShapeError("resize_bilinear", f"expected 4-D input, got shape {x.data.shape}")
    if out_h < 1 or out_w < 1:
        raise ShapeError("resize_bilinear", f"invalid target extents {out_h}x{out_w}")
    N, C, H, W = x.data.shape
    if (out_h, out_w) == (H, W):
        def backward_id(g):
            if x.requires_grad:
                x._accumulate(g)

        return _make(x.data.copy(), (x,), backward_id)
    ry = _resize_matrix(out_h, H)
    rx = _resize_matrix(out_w, W)
    flat = x.data.reshape(N * C, H, W)
    out = np.matmul(np.matmul(ry[None], flat), rx.T[None])

    def backward(g):
        if x.requires_grad:
            gf = g.reshape(N * C, out_h, out_w)
            gx = np.matmul(np.matmul(ry.T[None], gf), rx[None])
            x._accumulate(gx.reshape(N, C, H, W))

    return _make(out.reshape(N, C, out_h, out_w), (x,), backward)


def upsample_bilinear(x: Tensor, factor: int) -> Tensor:
    if int(factor) != factor or factor < 1:
        raise ShapeError("upsample_bilinear", f"factor must be a positive integer, got {factor}")
    N, C, H, W = x.data.shape
    return resize_bilinear(x, H * int(factor), W * int(factor))


def grid_sample_bilinear(x: Tensor, positions: Tensor) -> Tensor:
    """Sample a single-channel map at per-pixel fractional coordinates.

    ``positions`` has 2M channels holding (y, x) pairs of absolute pixel
    coordinates, channel 2m the y and channel 2m+1 the x of sample m.
    Coordinates are clamped to the image bounds before interpolating the
    four integer neighbours. Differentiable with respect to both the map
    values and the coordinates (clamped coordinates get zero gradient).
    """
    if x.data.ndim != 4 or x.data.shape[1] != 1:
        raise ShapeError("grid_sample_bilinear", f"expected (N,1,H,W) input, got shape {x.data.shape}")
    if positions.data.ndim != 4:
        raise ShapeError("grid_sample_bilinear", f"expected 4-D positions, got shape {positions.data.shape}")
    N, _, H, W = x.data.shape
    NP, C2, PH, PW = positions.data.shape
    if C2 % 2 != 0:
        raise ShapeError("grid_sample_bilinear", f"positions need an even channel count, got {C2}")
    if NP != N:
        raise ShapeError("grid_sample_bilinear", f"batch mismatch: input {N}, positions {NP}")
    M = C2 // 2

    pairs = positions.data.reshape(N, M, 2, PH, PW)
    y = pairs[:, :, 0]
    xx = pairs[:, :, 1]
    yc = np.clip(y, 0.0, H - 1.0)
    xc = np.clip(xx, 0.0, W - 1.0)
    y_free = (y > 0.0) & (y < H - 1.0)
    x_free = (xx > 0.0) & (xx < W - 1.0)

    y0 = np.floor(yc).astype(np.int64)
    np.clip(y0, 0, max(H - 2, 0), out=y0)
    y1 = np.minimum(y0 + 1, H - 1)
    x0 = np.floor(xc).astype(np.int64)
    np.clip(x0, 0, max(W - 2, 0), out=x0)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = yc - y0
    wx = xc - x0

    img = x.data[:, 0]
    n_idx = np.arange(N).reshape(N, 1, 1, 1)
    v00 = img[n_idx, y0, x0]
    v01 = img[n_idx, y0, x1]
    v10 = img[n_idx, y1, x0]
    v11 = img[n_idx, y1, x1]
    top = (1.0 - wx) * v00 + wx * v01
    bot = (1.0 - wx) * v10 + wx * v11
    out = (1.0 - wy) * top + wy * bot

    def backward(g):
        if x.requires_grad:
            size = H * W
            flat_acc = np.zeros(N * size, dtype=DTYPE)
            base = (np.arange(N) * size).reshape(N, 1, 1, 1)
            for yi, xi, wgt in (
                (y0, x0, (1.0 - wy) * (1.0 - wx)),
                (y0, x1, (1.0 - wy) * wx),
                (y1, x0, wy * (1.0 - wx)),
                (y1, x1, wy * wx),
            ):
                idx = (base + yi * W + xi).ravel()
                flat_acc += np.bincount(idx, weights=(wgt * g).ravel(), minlength=N * size)
            x._accumulate(flat_acc.reshape(N, 1, H, W))
        if positions.requires_grad:
            gy = (bot - top) * g * y_free
            gx = ((1.0 - wy) * (v01 - v00) + wy * (v11 - v10)) * g * x_free
            gp = np.stack([gy, gx], axis=2).reshape(N, C2, PH, PW)
            positions._accumulate(gp)

    return _make(out, (x, positions), backward)
