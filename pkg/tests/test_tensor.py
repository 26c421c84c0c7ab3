"""Autodiff engine: primitive gradients, convolution adjoints, grad-of-grad."""
import numpy as np
import pytest

from eegsr.nn import functional as F
from eegsr.nn.tensor import (
    Tensor,
    concat_t,
    conv2d,
    conv2d_input_grad,
    conv2d_weight_grad,
    conv_same_geometry,
    grad,
    mean_t,
    mul_const,
    no_grad,
    repeat_rows,
    reshape,
    slice_axis,
    sqrt_t,
    sum_t,
    transpose,
)

from helpers import check_grads

RNG = np.random.default_rng(20260801)


def test_scalar_chain_matches_hand_derivative():
    x = Tensor(np.array(0.7), requires_grad=True)
    y = x * x * 3.0 + 2.0 / x
    (g,) = grad(y, [x])
    expected = 6.0 * 0.7 - 2.0 / 0.7**2
    assert abs(g.item() - expected) < 1e-12


def test_grad_on_untracked_output_raises():
    x = Tensor(np.ones(3))
    y = sum_t(x * 2.0)
    with pytest.raises(RuntimeError):
        grad(y, [x])


def test_grad_of_nonscalar_raises():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        grad(x * 2.0, [x])


def test_unused_target_gets_zero_gradient():
    x = Tensor(np.array(2.0), requires_grad=True)
    z = Tensor(np.array(5.0), requires_grad=True)
    (gx, gz) = grad(x * x, [x, z])
    assert gx.item() == 4.0
    assert gz.item() == 0.0
    assert gz.shape == z.shape


def test_no_grad_blocks_recording():
    x = Tensor(np.array(1.5), requires_grad=True)
    with no_grad():
        y = x * x
    assert not y.requires_grad
    assert y._vjp is None


def test_broadcast_add_and_mul_grads():
    a = RNG.normal(size=(4, 3))
    b = RNG.normal(size=(3,))
    check_grads(lambda x, y: sum_t((x + y) * (x * y + 2.0)), [a, b])


def test_elementwise_primitives_against_fd():
    x = RNG.uniform(0.5, 2.0, size=(3, 5))
    check_grads(lambda t: sum_t(F.relu(t * t - 1.5)), [x])
    check_grads(lambda t: sum_t(sqrt_t(t)), [x])
    check_grads(lambda t: mean_t(t**3), [x])
    check_grads(lambda t: sum_t(F.sigmoid(t) * F.elu(t - 1.0)), [x])


def test_structural_primitives_against_fd():
    x = RNG.normal(size=(2, 3, 4))
    check_grads(lambda t: sum_t(transpose(t, (2, 0, 1)) * 1.5), [x])
    check_grads(lambda t: sum_t(reshape(t, (6, 4)) ** 2), [x])
    check_grads(lambda t: sum_t(slice_axis(t, 1, 1, 3) ** 2), [x])
    check_grads(lambda t: sum_t(repeat_rows(t, 3, axis=2) ** 2), [x])
    a = RNG.normal(size=(2, 2, 4))
    check_grads(lambda t, u: sum_t(concat_t([t, u], 1) ** 2), [x, a])


def test_matmul_grads():
    a = RNG.normal(size=(3, 4))
    b = RNG.normal(size=(4, 2))
    check_grads(lambda x, y: sum_t((x @ y) ** 2), [a, b])


def test_mul_const_mask_gradient_is_masked():
    x = Tensor(RNG.normal(size=(5,)), requires_grad=True)
    mask = np.array([1.0, 0.0, 1.0, 0.0, 1.0])
    (g,) = grad(sum_t(mul_const(x, mask)), [x])
    assert np.array_equal(g.data, mask)


def test_same_geometry_matches_ceil_rule():
    # (input, kernel, stride) -> output = ceil(input / stride)
    for h, k, s in [(16, 17, 1), (64, 3, 3), (16, 9, 4), (64, 3, 4), (5, 2, 2)]:
        oh, _, pt, pb, _, _ = conv_same_geometry(h, 1, k, 1, s, 1)
        assert oh == -(-h // s)
        assert pt + pb == max((oh - 1) * s + k - h, 0)
        assert pb - pt in (0, 1)


def test_conv2d_centre_value_hand_computed():
    # 3x3 all-ones kernel over a 5x5 ramp: centre output is the 3x3 sum.
    x = np.arange(25, dtype=np.float64).reshape(1, 1, 5, 5)
    w = np.ones((1, 1, 3, 3))
    y = conv2d(Tensor(x), Tensor(w)).data
    assert y.shape == (1, 1, 5, 5)
    assert y[0, 0, 2, 2] == x[0, 0, 1:4, 1:4].sum()
    # Top-left corner only sees the 2x2 valid patch.
    assert y[0, 0, 0, 0] == x[0, 0, 0:2, 0:2].sum()


def test_conv2d_gradients_against_fd():
    x = RNG.normal(size=(2, 3, 6, 7))
    w = RNG.normal(size=(4, 3, 3, 3)) * 0.3
    check_grads(lambda a, b: sum_t(conv2d(a, b) ** 2), [x, w])


def test_strided_conv_gradients_against_fd():
    x = RNG.normal(size=(2, 2, 8, 9))
    w = RNG.normal(size=(3, 2, 3, 3)) * 0.3
    check_grads(lambda a, b: sum_t(conv2d(a, b, (2, 3)) ** 2), [x, w])


def test_conv_adjoint_identity():
    # <conv(x, w), g> == <x, input_grad(g, w)> == <w, weight_grad(g, x)>
    x = RNG.normal(size=(2, 3, 6, 6))
    w = RNG.normal(size=(4, 3, 3, 3))
    g = RNG.normal(size=(2, 4, 3, 3))
    y = conv2d(Tensor(x), Tensor(w), (2, 2)).data
    gx = conv2d_input_grad(Tensor(g), Tensor(w), (6, 6), (2, 2)).data
    gw = conv2d_weight_grad(Tensor(g), Tensor(x), (3, 3), (2, 2)).data
    lhs = float((y * g).sum())
    assert abs(lhs - float((x * gx).sum())) < 1e-9 * abs(lhs)
    assert abs(lhs - float((w * gw).sum())) < 1e-9 * abs(lhs)


def test_conv_channel_mismatch_raises():
    x = Tensor(np.zeros((1, 3, 5, 5)))
    w = Tensor(np.zeros((2, 4, 3, 3)))
    with pytest.raises(ValueError, match="3 maps.*expects"):
        conv2d(x, w)


def test_double_backward_scalar():
    # d/dx of (dy/dx) for y = x^3: second derivative 6x.
    x = Tensor(np.array(1.3), requires_grad=True)
    y = x * x * x
    (g1,) = grad(y, [x], create_graph=True)
    (g2,) = grad(g1, [x])
    assert abs(g2.item() - 6 * 1.3) < 1e-12


def test_double_backward_through_conv():
    # Gradient-norm penalty pattern: differentiate ||dy/dx||^2 wrt w.
    rng = np.random.default_rng(7)
    x = Tensor(rng.normal(size=(2, 2, 5, 5)), requires_grad=True)
    wv = rng.normal(size=(3, 2, 3, 3)) * 0.4

    def penalty(w):
        y = sum_t(conv2d(x, w) ** 2)
        (gx,) = grad(y, [x], create_graph=True)
        return sum_t(gx * gx)

    check_grads(penalty, [wv], rtol=2e-4)


def test_dropout_inference_is_identity_and_training_scales():
    x = Tensor(RNG.normal(size=(1000,)))
    assert F.dropout(x, 0.4, training=False) is x
    rng = np.random.default_rng(3)
    y = F.dropout(x, 0.4, training=True, rng=rng)
    kept = y.data != 0
    assert np.allclose(y.data[kept], x.data[kept] / 0.6)
    assert abs(kept.mean() - 0.6) < 0.05


def test_dropout_requires_rng_in_training():
    with pytest.raises(ValueError, match="rng"):
        F.dropout(Tensor(np.ones(4)), 0.5, training=True)


def test_elu_fixed_points_and_continuity():
    x = Tensor(np.array([-1.0, 0.0, 1.0, -1e-8, 1e-8, 50.0]))
    y = F.elu(x).data
    assert abs(y[0] - (np.exp(-1.0) - 1.0)) < 1e-15
    assert y[1] == 0.0
    assert y[2] == 1.0
    assert abs(y[3]) < 2e-8 and abs(y[4]) < 2e-8
    assert y[5] == 50.0
    # Derivative at 0 is exactly 1 (identity branch owns the boundary).
    x0 = Tensor(np.array(0.0), requires_grad=True)
    (g,) = grad(F.elu(x0), [x0])
    assert g.item() == 1.0


def test_softmax_rows_sum_to_one_and_grads():
    z = RNG.normal(size=(4, 5)) * 3
    p = F.softmax(Tensor(z)).data
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert (p > 0).all()
    # Huge logits stay finite.
    big = F.softmax(Tensor(np.array([1000.0, 0.0, -1000.0]))).data
    assert np.isfinite(big).all() and abs(big.sum() - 1.0) < 1e-12
    check_grads(lambda t: sum_t(F.softmax(t) ** 2), [z])


def test_losses_reference_values_and_grads():
    p = np.array([0.1, 0.5, 0.4])
    t = np.array([0.0, 1.0, 0.0])
    assert abs(F.cross_entropy(Tensor(p), Tensor(t)).item() - (-np.log(0.5 + 1e-12))) < 1e-12
    u = np.full(3, 1.0 / 3.0)
    assert abs(F.cross_entropy(Tensor(u), Tensor(u)).item() - np.log(3.0)) < 1e-9
    a = RNG.normal(size=(3, 4))
    b = RNG.normal(size=(3, 4))
    assert abs(F.mse(Tensor(a), Tensor(b)).item() - ((a - b) ** 2).mean()) < 1e-12
    assert abs(F.mae(Tensor(a), Tensor(b)).item() - np.abs(a - b).mean()) < 1e-12
    check_grads(lambda x: F.mse(x, Tensor(b)), [a])
    probs = RNG.uniform(0.1, 0.9, size=(4, 3))
    onehot = np.eye(3)[[0, 2, 1, 0]]
    check_grads(lambda x: F.cross_entropy(x, Tensor(onehot)), [probs])


def test_loss_dispatch_and_shape_mismatch():
    with pytest.raises(ValueError, match="unknown loss"):
        F.loss("huber", Tensor(np.ones(2)), Tensor(np.ones(2)))
    with pytest.raises(ValueError, match="mismatch"):
        F.mse(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


def test_upsample_nn_repeats_rows():
    x = np.arange(6, dtype=np.float64).reshape(1, 1, 3, 2)
    y = F.upsample_nn(Tensor(x), 3).data
    assert y.shape == (1, 1, 9, 2)
    assert np.array_equal(y[0, 0, 0:3], np.broadcast_to(x[0, 0, 0], (3, 2)))
    assert np.array_equal(y[0, 0, 3:6], np.broadcast_to(x[0, 0, 1], (3, 2)))


def test_gradient_accumulation_over_reused_node():
    x = Tensor(np.array(2.0), requires_grad=True)
    y = x * x + x * 3.0 + x
    (g,) = grad(y, [x])
    assert g.item() == 2 * 2.0 + 4.0
