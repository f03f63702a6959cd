"""Tour of the tensor engine: forward ops, reverse pass, gradient checks.

Run: python3 demos/01_tensors_and_gradients.py
"""

import numpy as np

from lrru import tensor as T
from lrru.gradcheck import grad_check, run_gradient_suite
from lrru.tensor import Tensor

rng = np.random.default_rng(0)

# Tensors are plain numpy arrays plus a recording of how they were made.
x = Tensor(rng.uniform(-1, 1, (1, 3, 4, 4)), requires_grad=True)
w = Tensor(rng.uniform(-0.5, 0.5, (8, 3, 3, 3)), requires_grad=True)
b = Tensor(np.zeros(8), requires_grad=True)

y = T.leaky_relu(T.conv2d(x, w, b, stride=1, padding=1), 0.1)
loss = T.sum_all(T.mul(y, y))
loss.backward()
print(f"conv output shape {y.shape}, loss {float(loss.data):.4f}")
print(f"gradient shapes: x {x.grad.shape}, w {w.grad.shape}, b {b.grad.shape}")

# A tensor feeding two consumers accumulates both path gradients.
a = Tensor(np.array([[[[2.0]]]]), requires_grad=True)
out = T.add(T.mul(a, a), a)  # d/da (a^2 + a) = 2a + 1 = 5
T.sum_all(out).backward()
print(f"d(a^2 + a)/da at a=2: {a.grad.ravel()[0]} (expected 5.0)")

# Bilinear sampling with per-pixel fractional coordinates.
img = Tensor(np.arange(16, dtype=float).reshape(1, 1, 4, 4))
pos = Tensor(np.array([1.5, 2.5]).reshape(1, 2, 1, 1))  # (y, x) pair
val = T.grid_sample_bilinear(img, pos)
print(f"sample at (1.5, 2.5): {val.data.ravel()[0]} (mean of the 4 neighbours)")

# Every differentiable op is validated against central finite differences.
err = grad_check(
    lambda t: T.sum_all(T.sigmoid(t)), [Tensor(rng.uniform(-2, 2, (1, 2, 3, 3)))])
print(f"sigmoid gradient check: max relative error {err:.2e}")

print("\nfull gradient suite:")
for op, e in sorted(run_gradient_suite(seed=0).items()):
    print(f"  {op:24s} {e:.2e}")
