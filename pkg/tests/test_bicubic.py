"""Keys cubic interpolation along the channel axis, against a naive oracle."""
import numpy as np
import pytest

from eegsr.bicubic import (
    KEYS_A,
    bicubic_epoch,
    bicubic_missing,
    bicubic_predict_set,
    bicubic_upsample,
    cubic_kernel,
    interpolation_weights,
)
from eegsr.data import Epoch, EpochSet, make_montage
from eegsr.errors import DataError

RNG = np.random.default_rng(20260806)


def oracle_missing(lr_values, montage, a=KEYS_A):
    """Per-sample, per-channel scalar loop; no vectorization shortcuts."""
    n_lr, t = lr_values.shape
    out = np.zeros((montage.n_hr, t))
    for row, m in enumerate(montage.hr_indices):
        u = m / montage.scale
        j0 = int(np.floor(u))
        for col in range(t):
            acc = 0.0
            for j in range(j0 - 1, j0 + 3):
                acc += cubic_kernel(u - j, a) * lr_values[min(max(j, 0), n_lr - 1), col]
            out[row, col] = acc
    return out


def test_kernel_constants():
    assert abs(cubic_kernel(0.0) - 1.0) < 1e-15
    assert abs(cubic_kernel(1.0)) < 1e-15
    assert abs(cubic_kernel(2.0)) < 1e-15
    assert cubic_kernel(2.5) == 0.0
    # Half-offset taps of the a = -0.5 kernel.
    assert abs(cubic_kernel(0.5) - 0.5625) < 1e-15
    assert abs(cubic_kernel(1.5) - (-0.0625)) < 1e-15
    assert cubic_kernel(-0.5) == cubic_kernel(0.5)


def test_kernel_partition_of_unity():
    # For any offset u the four surrounding integer taps sum to 1.
    for u in np.linspace(0.0, 1.0, 23):
        total = sum(cubic_kernel(u - j) for j in (-1, 0, 1, 2))
        assert abs(total - 1.0) < 1e-12


def test_scale2_interior_weights_are_half_offset_taps():
    m = make_montage(32, 2)
    w = interpolation_weights(m)
    assert w.shape == (16, 16)
    # Missing channel 15 sits at u = 7.5: interior stencil, canonical weights.
    row = w[7]
    assert m.hr_indices[7] == 15
    np.testing.assert_allclose(
        row[6:10], [-0.0625, 0.5625, 0.5625, -0.0625], atol=1e-15
    )
    assert np.all(row[:6] == 0.0) and np.all(row[10:] == 0.0)


def test_weight_rows_sum_to_one():
    for scale in (2, 4):
        m = make_montage(32, scale)
        w = interpolation_weights(m)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)


def test_edge_rows_clamp_to_boundary_channels():
    m = make_montage(32, 2)
    w = interpolation_weights(m)
    # Last missing channel (index 31, u = 15.5) needs taps at kept positions
    # 16 and 17; clamping folds both onto the final kept channel.
    row = w[-1]
    np.testing.assert_allclose(row[14], -0.0625, atol=1e-15)
    np.testing.assert_allclose(row[15], 0.5625 + 0.5625 - 0.0625, atol=1e-15)
    assert np.all(row[:14] == 0.0)
    np.testing.assert_allclose(row.sum(), 1.0, atol=1e-15)


def test_matches_brute_force_oracle():
    for scale in (2, 4):
        m = make_montage(32, scale)
        for _ in range(25):
            lr = RNG.normal(size=(m.n_lr, 16)) * 40.0
            fast = bicubic_missing(lr, m)
            slow = oracle_missing(lr, m)
            assert np.max(np.abs(fast - slow)) < 1e-9


def test_kept_channels_pass_through_bit_exact():
    m = make_montage(32, 2)
    lr = RNG.normal(size=(16, 32))
    full = bicubic_upsample(lr, m)
    assert full.shape == (32, 32)
    assert np.array_equal(full[list(m.lr_indices)], lr)


def test_constant_signal_reproduced_exactly():
    m = make_montage(32, 4)
    lr = np.full((8, 10), 3.25)
    full = bicubic_upsample(lr, m)
    np.testing.assert_allclose(full, 3.25, atol=1e-12)


def test_linear_ramp_reproduced_on_interior():
    # Keys a=-0.5 reproduces degree-1 polynomials away from the clamped edge.
    m = make_montage(32, 2)
    ramp = np.arange(0, 32, 2, dtype=np.float64)[:, None] * np.ones((1, 4))
    full = bicubic_upsample(ramp, m)
    interior = [i for i in m.hr_indices if 2 <= i <= 28]
    for i in interior:
        np.testing.assert_allclose(full[i], float(i), atol=1e-12)


def test_linearity_of_operator():
    m = make_montage(32, 2)
    a = RNG.normal(size=(16, 8))
    b = RNG.normal(size=(16, 8))
    lhs = bicubic_missing(2.0 * a + 3.0 * b, m)
    rhs = 2.0 * bicubic_missing(a, m) + 3.0 * bicubic_missing(b, m)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_predict_set_matches_per_epoch():
    m = make_montage(32, 2)
    eps = [Epoch(RNG.normal(size=(16, 12)), label=7, origin_index=i) for i in range(3)]
    lr_set = EpochSet(eps, fs=512.0)
    pred = bicubic_predict_set(lr_set, m)
    assert len(pred) == 3
    for ep, src in zip(pred, eps):
        np.testing.assert_allclose(ep.values, bicubic_missing(src.values, m), atol=1e-12)
        assert ep.label == 7


def test_bicubic_epoch_keeps_metadata():
    m = make_montage(32, 2)
    ep = Epoch(RNG.normal(size=(16, 6)), label=3, subject_id="s02", origin_index=96)
    full = bicubic_epoch(ep, m)
    assert full.values.shape == (32, 6)
    assert (full.label, full.subject_id, full.origin_index) == (3, "s02", 96)


def test_shape_validation():
    m = make_montage(32, 2)
    with pytest.raises(DataError):
        bicubic_missing(RNG.normal(size=(15, 6)), m)
    with pytest.raises(DataError):
        bicubic_upsample(RNG.normal(size=(16,)), m)
