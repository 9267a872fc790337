"""Tensor kernel: autodiff primitives, Adam, cosine schedule, gelu."""
import math

import numpy as np
import pytest

from distillab import nn
from distillab.errors import ConfigurationError, GradCheckError
from distillab.nn import (
    AdamState,
    CosineSchedule,
    ParamGroup,
    Tensor,
    adam_step,
    cosine_lr,
    grad_check,
)


def _group(name, *arrays):
    return ParamGroup(name, [Tensor(a, requires_grad=True) for a in arrays])


def test_grad_check_sum_of_squares():
    g = _group("w", np.array([1.0, -2.0, 0.5]))

    def loss():
        w = g.tensors[0]
        return nn.reduce_sum(w * w)

    err = grad_check(loss, [g], eps=1e-5)
    assert err < 1e-6


def test_grad_check_constant_loss_is_zero():
    g = _group("w", np.array([0.3, 0.7]))
    err = grad_check(lambda: Tensor(0.0), [g], eps=1e-5)
    assert err == 0.0


def test_grad_check_reports_nonfinite():
    g = _group("w", np.array([0.0]))

    def loss():
        with np.errstate(divide="ignore"):
            return nn.reduce_sum(nn.log(g.tensors[0]))  # log(0) = -inf

    with pytest.raises(GradCheckError):
        grad_check(loss, [g], eps=1e-5)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_primitive_gradients(seed):
    rng = np.random.default_rng(seed)
    a = _group("a", rng.uniform(-2, 2, size=(3, 4)))
    b = _group("b", rng.uniform(-2, 2, size=(4, 5)))
    c = _group("c", rng.uniform(-2, 2, size=(5,)))

    def loss():
        x = nn.matmul(a.tensors[0], b.tensors[0]) + c.tensors[0]
        y = nn.tanh(x) * nn.sigmoid(x) + nn.gelu(x)
        z = nn.softmax(y, axis=-1)
        return nn.reduce_sum(z * z) + nn.reduce_mean(y)

    err = grad_check(loss, [a, b, c], eps=1e-5)
    assert err < 1e-4


def test_bmm_concat_transpose_gradients():
    rng = np.random.default_rng(3)
    a = _group("a", rng.uniform(-2, 2, size=(2, 3, 4)))
    b = _group("b", rng.uniform(-2, 2, size=(2, 4, 3)))

    def loss():
        prod = nn.bmm(a.tensors[0], b.tensors[0])
        both = nn.concat([prod, nn.transpose(prod, (0, 2, 1))], axis=-1)
        return nn.reduce_sum(nn.log(nn.clamp_min(both, 0.1)))

    err = grad_check(loss, [a, b], eps=1e-5)
    assert err < 1e-4


def test_embedding_and_gather_gradients():
    rng = np.random.default_rng(4)
    w = _group("emb", rng.uniform(-2, 2, size=(7, 3)))
    ids = np.array([[0, 3, 3], [6, 1, 0]])

    def loss():
        e = nn.embedding(w.tensors[0], ids)
        picked = nn.gather_time(e, np.array([2, 0]))
        return nn.reduce_sum(picked * picked) + nn.reduce_sum(e)

    err = grad_check(loss, [w], eps=1e-5)
    assert err < 1e-4


def test_layer_norm_gradients():
    rng = np.random.default_rng(5)
    x = _group("x", rng.uniform(-2, 2, size=(4, 6)))
    gam = _group("gamma", rng.uniform(0.5, 1.5, size=(6,)))
    bet = _group("beta", rng.uniform(-0.5, 0.5, size=(6,)))

    def loss():
        out = nn.layer_norm(x.tensors[0], gam.tensors[0], bet.tensors[0])
        return nn.reduce_sum(out * out)

    err = grad_check(loss, [x, gam, bet], eps=1e-5)
    assert err < 1e-4


def test_lstm_direction_gradients():
    rng = np.random.default_rng(6)
    E, H = 3, 4
    x = _group("x", rng.uniform(-1, 1, size=(2, 5, E)))
    wx = _group("wx", rng.uniform(-0.5, 0.5, size=(E, 4 * H)))
    wh = _group("wh", rng.uniform(-0.5, 0.5, size=(H, 4 * H)))
    b = _group("b", rng.uniform(-0.5, 0.5, size=(4 * H,)))

    def loss():
        h = nn.lstm_direction(x.tensors[0], wx.tensors[0], wh.tensors[0], b.tensors[0])
        return nn.reduce_sum(h * h)

    err = grad_check(loss, [x, wx, wh, b], eps=1e-5)
    assert err < 1e-4


def test_dropout_gradient_with_fixed_mask():
    rng = np.random.default_rng(7)
    x = _group("x", rng.uniform(-2, 2, size=(5, 5)))

    def loss():
        # fresh generator per call so the mask is identical every evaluation
        return nn.reduce_sum(nn.dropout(x.tensors[0], 0.4, np.random.default_rng(11)))

    err = grad_check(loss, [x], eps=1e-5)
    assert err < 1e-4


# -- gelu ---------------------------------------------------------------------


def test_gelu_values():
    assert nn.gelu(Tensor(0.0)).item() == 0.0
    assert nn.gelu(Tensor(1.0)).item() == pytest.approx(0.8413447, abs=1e-6)
    assert abs(nn.gelu(Tensor(-10.0)).item()) < 1e-8


# -- Adam ---------------------------------------------------------------------


def test_adam_first_step_moves_by_lr():
    g = _group("w", np.array([0.0]))
    g.tensors[0].grad = np.array([1.0])
    state = AdamState()
    adam_step([g], state, lr=0.1)
    assert g.tensors[0].data[0] == pytest.approx(-0.1, abs=1e-6)
    assert state.step == 1


def test_adam_second_step_not_larger():
    g = _group("w", np.array([0.0]))
    state = AdamState()
    g.tensors[0].grad = np.array([1.0])
    adam_step([g], state, lr=0.1)
    first = abs(g.tensors[0].data[0] - 0.0)
    before = g.tensors[0].data[0]
    g.tensors[0].grad = np.array([1.0])
    adam_step([g], state, lr=0.1)
    second = abs(g.tensors[0].data[0] - before)
    assert second <= first * 1.1


def test_adam_frozen_groups_bit_identical():
    rng = np.random.default_rng(8)
    frozen = _group("trunk", rng.normal(size=(3, 3)))
    frozen.set_frozen(True)
    live = _group("head", rng.normal(size=(2,)))
    live.tensors[0].grad = np.array([0.5, -0.5])
    snapshot = frozen.tensors[0].data.tobytes()
    adam_step([frozen, live], AdamState(), lr=0.01)
    assert frozen.tensors[0].data.tobytes() == snapshot


def test_adam_all_frozen_changes_nothing():
    g = _group("w", np.array([1.0, 2.0]))
    g.set_frozen(True)
    before = g.tensors[0].data.copy()
    adam_step([g], AdamState(), lr=0.5)
    np.testing.assert_array_equal(g.tensors[0].data, before)


def test_adam_missing_grad_raises():
    g = _group("w", np.array([1.0]))
    with pytest.raises(ConfigurationError):
        adam_step([g], AdamState(), lr=0.1)


# -- cosine schedule ------------------------------------------------------------


def test_cosine_endpoints_and_midpoint():
    sched = CosineSchedule(lr_high=0.001, lr_low=1e-8, horizon=100)
    assert cosine_lr(0, sched) == pytest.approx(0.001)
    assert cosine_lr(100, sched) == pytest.approx(1e-8)
    assert cosine_lr(50, sched) == pytest.approx((0.001 + 1e-8) / 2, rel=1e-9)
    assert cosine_lr(500, sched) == pytest.approx(1e-8)  # past horizon clamps


def test_cosine_monotone_and_bounded():
    sched = CosineSchedule(lr_high=0.05, lr_low=1e-6, horizon=37)
    values = [cosine_lr(t, sched) for t in range(38)]
    assert all(1e-6 <= v <= 0.05 for v in values)
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_cosine_rejects_bad_bounds():
    with pytest.raises(ConfigurationError):
        CosineSchedule(lr_high=1e-9, lr_low=1e-8, horizon=10)


# -- determinism -----------------------------------------------------------------


def _tiny_training_run(seed):
    rng = np.random.default_rng(seed)
    w = _group("w", rng.normal(size=(4, 4)))
    x_data = rng.normal(size=(8, 4))
    state = AdamState()
    for step in range(20):
        out = nn.tanh(nn.matmul(Tensor(x_data), w.tensors[0]))
        loss = nn.reduce_sum(out * out)
        loss.backward()
        adam_step([w], state, lr=cosine_lr(step, CosineSchedule(0.01, 1e-8, 20)))
    return w.tensors[0].data.tobytes()


def test_training_is_bit_deterministic():
    assert _tiny_training_run(123) == _tiny_training_run(123)
