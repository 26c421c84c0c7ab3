"""Cubic-convolution interpolation across the channel axis.

The baseline treats the kept channels as samples of a smooth spatial signal
and fills each missing channel by Keys cubic convolution (a = -0.5) along
the channel index, per time sample. Kept channels pass through bit-exact;
each missing channel is a fixed 4-tap weighted sum of its nearest kept
neighbours, with the stencil clamped at the ends of the channel range.
"""
from __future__ import annotations

import numpy as np

from .data import Epoch
from .errors import DataError

KEYS_A = -0.5


def cubic_kernel(t, a=KEYS_A):
    """Keys cubic convolution kernel evaluated at |t|."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    out = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    tn = t[near]
    out[near] = (a + 2.0) * tn**3 - (a + 3.0) * tn**2 + 1.0
    tf = t[far]
    out[far] = a * tf**3 - 5.0 * a * tf**2 + 8.0 * a * tf - 4.0 * a
    return out if out.ndim else float(out)


def interpolation_weights(montage, a=KEYS_A):
    """(n_hr, n_lr) weight matrix mapping kept channels to missing ones.

    Missing channel m sits at position m / scale in kept-channel
    coordinates; its value is the kernel-weighted sum over the four kept
    neighbours floor(u)-1 .. floor(u)+2, with out-of-range taps clamped to
    the edge channel.
    """
    n_lr = montage.n_lr
    if n_lr < 2:
        raise DataError(f"cubic interpolation needs at least 2 kept channels, got {n_lr}")
    weights = np.zeros((montage.n_hr, n_lr))
    for row, m in enumerate(montage.hr_indices):
        u = m / montage.scale
        j0 = int(np.floor(u))
        for j in range(j0 - 1, j0 + 3):
            w = cubic_kernel(u - j, a)
            weights[row, min(max(j, 0), n_lr - 1)] += w
    return weights


def bicubic_upsample(lr_values, montage, a=KEYS_A):
    """Fill the full channel layout from kept channels.

    Returns (n_channels, n_samples); kept rows are copied unchanged, missing
    rows come from the interpolation matrix.
    """
    lr_values = np.asarray(lr_values, dtype=np.float64)
    if lr_values.ndim != 2 or lr_values.shape[0] != montage.n_lr:
        raise DataError(
            f"expected ({montage.n_lr}, t) kept-channel values, got {lr_values.shape}"
        )
    full = np.empty((montage.n_channels, lr_values.shape[1]))
    full[list(montage.lr_indices)] = lr_values
    full[list(montage.hr_indices)] = interpolation_weights(montage, a) @ lr_values
    return full


def bicubic_missing(lr_values, montage, a=KEYS_A):
    """Only the reconstructed missing rows, (n_hr, n_samples)."""
    lr_values = np.asarray(lr_values, dtype=np.float64)
    if lr_values.ndim != 2 or lr_values.shape[0] != montage.n_lr:
        raise DataError(
            f"expected ({montage.n_lr}, t) kept-channel values, got {lr_values.shape}"
        )
    return interpolation_weights(montage, a) @ lr_values


def bicubic_predict_set(lr_set, montage, a=KEYS_A):
    """Reconstruct the missing-channel block for every epoch in a set."""
    weights = interpolation_weights(montage, a)
    vals = lr_set.values_array()
    pred = np.einsum("hc,nct->nht", weights, vals)
    return lr_set.with_values(pred, channel_labels=None)


def bicubic_epoch(lr_epoch, montage, a=KEYS_A):
    """Full reconstructed epoch (kept rows bit-exact, missing interpolated)."""
    return Epoch(
        bicubic_upsample(lr_epoch.values, montage, a),
        label=lr_epoch.label,
        subject_id=lr_epoch.subject_id,
        origin_index=lr_epoch.origin_index,
    )
