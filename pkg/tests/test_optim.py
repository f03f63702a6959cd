import math

import numpy as np

from lrru.guidance import ModelParams
from lrru.optim import adam_step, init_adam_state
from lrru.tensor import Tensor


def make_params(values):
    params = ModelParams()
    for name, v in values.items():
        params[name] = Tensor(np.asarray(v, dtype=float), requires_grad=True)
    return params


def test_zero_grad_zero_decay_leaves_params_unchanged():
    params = make_params({"w": [1.0, -2.0, 3.0]})
    state = init_adam_state(params)
    before = params["w"].data.copy()
    adam_step(params, {"w": np.zeros(3)}, state, lr=0.1, weight_decay=0.0)
    np.testing.assert_array_equal(params["w"].data, before)


def test_first_step_moves_by_lr():
    params = make_params({"w": [0.0]})
    state = init_adam_state(params)
    adam_step(params, {"w": np.ones(1)}, state, lr=0.1)
    # bias-corrected m/sqrt(v) is exactly 1 on the first step
    assert params["w"].data[0] == -0.1 * 1.0 / (1.0 + 1e-8)


def test_ten_steps_match_hand_trace_and_shrink_w():
    lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
    params = make_params({"w": [1.0]})
    state = init_adam_state(params)

    # scripted trace of Adam on f(w) = w^2, grad = 2w
    w = 1.0
    m = v = 0.0
    for t in range(1, 11):
        g = 2.0 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)

        grad = 2.0 * params["w"].data
        adam_step(params, {"w": grad}, state, lr=lr, beta1=b1, beta2=b2)
        assert params["w"].data[0] == w

    assert abs(params["w"].data[0]) < 1.0


def test_weight_decay_added_to_gradient():
    lr, wd = 0.1, 0.5
    params = make_params({"w": [2.0]})
    state = init_adam_state(params)
    adam_step(params, {"w": np.zeros(1)}, state, lr=lr, weight_decay=wd)
    # effective gradient is wd*w, so the first bias-corrected step is -lr
    assert params["w"].data[0] == 2.0 - lr * 1.0 / (1.0 + 1e-8)


def test_none_gradients_treated_as_zero():
    params = make_params({"w": [1.5]})
    state = init_adam_state(params)
    adam_step(params, {"w": None}, state, lr=0.1, weight_decay=0.0)
    assert params["w"].data[0] == 1.5
