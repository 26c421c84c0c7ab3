"""Recordings, epoch extraction, montage splits and normalization.

A recording is channels x samples. Epochs are fixed windows cut from it on a
regular stride; segments are non-overlapping sub-windows of epochs. A montage
split keeps every `scale`-th channel as the low-resolution input and treats
the rest as the targets to reconstruct.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

# 32-channel cap layout, in recording order. Index 7 is C3, 31 is Cz, 22 is C4.
CHANNEL_LABELS_32 = (
    "Fp1", "AF3", "F7", "F3", "FC1", "FC5", "T7", "C3",
    "CP1", "CP5", "P7", "P3", "Pz", "PO3", "O1", "Oz",
    "O2", "PO4", "P4", "P8", "CP6", "CP2", "C4", "T8",
    "FC6", "FC2", "F4", "F8", "AF4", "Fp2", "Fz", "Cz",
)

SPLITS = ("unsplit", "train", "val", "test")

SIGMA_FLOOR = 1e-8

_KEEP_LABELS = object()


@dataclass
class RawRecording:
    """A continuous multichannel recording with optional per-sample labels."""

    values: np.ndarray
    fs: float
    channel_labels: tuple[str, ...]
    labels: np.ndarray | None = None
    subject_id: str = "s01"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"recording values must be 2-D, got shape {self.values.shape}")
        self.channel_labels = tuple(self.channel_labels)
        if len(self.channel_labels) != self.values.shape[0]:
            raise DataError(
                f"{len(self.channel_labels)} channel labels for {self.values.shape[0]} channels"
            )
        if self.fs <= 0:
            raise DataError(f"sampling rate must be positive, got {self.fs}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.values.shape[1],):
                raise DataError(
                    f"per-sample labels must have shape ({self.values.shape[1]},), "
                    f"got {self.labels.shape}"
                )

    @property
    def n_channels(self):
        return self.values.shape[0]

    @property
    def n_samples(self):
        return self.values.shape[1]


@dataclass
class Epoch:
    """One windowed excerpt: values (channels, samples) plus bookkeeping."""

    values: np.ndarray
    label: int | None = None
    subject_id: str = "s01"
    origin_index: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"epoch values must be 2-D, got shape {self.values.shape}")


@dataclass
class EpochSet:
    """An ordered collection of same-shaped epochs."""

    epochs: list[Epoch]
    split: str = "unsplit"
    fs: float = 512.0
    channel_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise DataError(f"unknown split {self.split!r}; expected one of {SPLITS}")
        shapes = {e.values.shape for e in self.epochs}
        if len(shapes) > 1:
            raise DataError(f"inconsistent epoch shapes in set: {sorted(shapes)}")
        if self.channel_labels is not None:
            self.channel_labels = tuple(self.channel_labels)
            if self.epochs and len(self.channel_labels) != self.epochs[0].values.shape[0]:
                raise DataError("channel label count does not match epoch channel count")

    def __len__(self):
        return len(self.epochs)

    def __iter__(self):
        return iter(self.epochs)

    def __getitem__(self, i):
        return self.epochs[i]

    @property
    def epoch_shape(self):
        return self.epochs[0].values.shape if self.epochs else None

    def values_array(self):
        """Stack to (n_epochs, channels, samples)."""
        if not self.epochs:
            raise DataError("empty epoch set has no values")
        return np.stack([e.values for e in self.epochs])

    def labels_array(self):
        labels = [e.label for e in self.epochs]
        if any(l is None for l in labels):
            raise DataError("epoch set has unlabelled epochs")
        return np.asarray(labels, dtype=np.int64)

    def with_values(self, values, split=None, channel_labels=_KEEP_LABELS):
        """Same metadata, new per-epoch values (n_epochs, channels, samples)."""
        values = np.asarray(values)
        if values.shape[0] != len(self.epochs):
            raise DataError(
                f"value array has {values.shape[0]} epochs, set has {len(self.epochs)}"
            )
        eps = [
            Epoch(v, label=e.label, subject_id=e.subject_id, origin_index=e.origin_index)
            for v, e in zip(values, self.epochs)
        ]
        labels = self.channel_labels if channel_labels is _KEEP_LABELS else channel_labels
        return EpochSet(eps, split=split or self.split, fs=self.fs, channel_labels=labels)


@dataclass(frozen=True)
class MontageSplit:
    """Partition of channel indices into kept (lr) and missing (hr) sets."""

    n_channels: int
    scale: int
    lr_indices: tuple[int, ...]
    hr_indices: tuple[int, ...]

    def __post_init__(self):
        if self.scale < 2:
            raise DataError(f"montage scale must be >= 2, got {self.scale}")
        merged = sorted(self.lr_indices + self.hr_indices)
        if merged != list(range(self.n_channels)):
            raise DataError("lr and hr indices must partition the channel range")
        if len(self.lr_indices) < 2:
            raise DataError("montage needs at least two kept channels")

    @property
    def n_lr(self):
        return len(self.lr_indices)

    @property
    def n_hr(self):
        return len(self.hr_indices)


@dataclass(frozen=True)
class NormStats:
    """Global standardisation constants computed from training data."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.mu) or not np.isfinite(self.sigma):
            raise DataError("normalization stats must be finite")
        if self.sigma < SIGMA_FLOOR:
            raise DataError(f"sigma below floor {SIGMA_FLOOR}: {self.sigma}")


@dataclass(frozen=True)
class SyntheticConfig:
    """Low-rank oscillatory surrogate recordings.

    Channels are a fixed random mixture (`mixing_seed`) of `n_sources`
    band-limited oscillators plus white noise, so channel structure is
    learnable while class identity lives purely in the spectrum: each class
    shifts every oscillator's frequencies by its entry in
    `class_band_offsets`. Labels change in contiguous blocks of
    `label_block` samples.
    """

    n_channels: int = 32
    n_samples: int = 8544
    fs: float = 512.0
    n_sources: int = 4
    band: tuple[float, float] = (7.0, 30.0)
    sines_per_source: int = 3
    amplitude: float = 10.0
    noise_sigma: float = 1.0
    mixing_seed: int = 90
    n_classes: int = 1
    class_ids: tuple[int, ...] = (2, 3, 7)
    class_band_offsets: tuple[float, ...] = (0.0, 6.0, -4.0)
    label_block: int = 2048

    def __post_init__(self):
        if not 1 <= self.n_sources <= self.n_channels:
            raise DataError(
                f"n_sources must be in [1, n_channels], got {self.n_sources}/{self.n_channels}"
            )
        if not 0 < self.band[0] < self.band[1] < self.fs / 2:
            raise DataError(f"band {self.band} must lie inside (0, fs/2)")
        if self.noise_sigma < 0 or self.amplitude <= 0:
            raise DataError("noise_sigma must be >= 0 and amplitude > 0")
        if self.n_classes < 1:
            raise DataError("n_classes must be >= 1")
        if self.n_classes > 1:
            if len(self.class_ids) < self.n_classes:
                raise DataError("class_ids shorter than n_classes")
            if len(self.class_band_offsets) < self.n_classes:
                raise DataError("class_band_offsets shorter than n_classes")
        if self.label_block < 1:
            raise DataError("label_block must be >= 1")


def generate_synthetic(cfg, seed=0):
    """Build a surrogate recording per `cfg`; `seed` drives everything except
    the mixing matrix, which is pinned by `cfg.mixing_seed`."""
    rng = np.random.default_rng(seed)
    mixing = np.random.default_rng(cfg.mixing_seed).normal(size=(cfg.n_channels, cfg.n_sources))
    n = cfg.n_samples
    t = np.arange(n) / cfg.fs

    if cfg.n_classes > 1:
        block_of = (np.arange(n) // cfg.label_block) % cfg.n_classes
        labels = np.asarray(cfg.class_ids[: cfg.n_classes], dtype=np.int64)[block_of]
    else:
        block_of = np.zeros(n, dtype=np.int64)
        labels = None

    freqs = rng.uniform(cfg.band[0], cfg.band[1], size=(cfg.n_sources, cfg.sines_per_source))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=freqs.shape)
    amps = rng.uniform(0.5, 1.0, size=freqs.shape)

    half = cfg.fs / 2.0
    sources = np.zeros((cfg.n_sources, n))
    for c in range(cfg.n_classes):
        mask = block_of == c
        if not mask.any():
            continue
        offset = cfg.class_band_offsets[c] if cfg.n_classes > 1 else 0.0
        fc = np.clip(freqs + offset, 0.5, half - 0.5)
        phase_term = 2.0 * np.pi * fc[:, :, None] * t[mask][None, None, :] + phases[:, :, None]
        sources[:, mask] = (amps[:, :, None] * np.sin(phase_term)).sum(axis=1)

    values = cfg.amplitude * (mixing @ sources)
    if cfg.noise_sigma > 0:
        values = values + rng.normal(0.0, cfg.noise_sigma, size=values.shape)

    if cfg.n_channels == 32:
        names = CHANNEL_LABELS_32
    else:
        names = tuple(f"ch{i:02d}" for i in range(cfg.n_channels))
    return RawRecording(values, fs=cfg.fs, channel_labels=names, labels=labels)


def _window_label(labels, start, window):
    """Majority class over a window; ties resolve to the centre sample."""
    chunk = labels[start : start + window]
    vals, counts = np.unique(chunk, return_counts=True)
    winners = vals[counts == counts.max()]
    if winners.size == 1:
        return int(winners[0])
    return int(labels[start + window // 2])


def extract_epochs(rec, window=512, stride=32):
    """Cut overlapping windows from a recording.

    Yields (n_samples - window) // stride + 1 epochs; fails if the recording
    is shorter than one window.
    """
    if window < 1 or stride < 1:
        raise DataError(f"window and stride must be positive, got {window}, {stride}")
    if rec.n_samples < window:
        raise DataError(
            f"recording has {rec.n_samples} samples, shorter than one {window}-sample window"
        )
    count = (rec.n_samples - window) // stride + 1
    epochs = []
    for i in range(count):
        start = i * stride
        label = None
        if rec.labels is not None:
            label = _window_label(rec.labels, start, window)
        epochs.append(
            Epoch(
                rec.values[:, start : start + window].copy(),
                label=label,
                subject_id=rec.subject_id,
                origin_index=start,
            )
        )
    return EpochSet(epochs, split="unsplit", fs=rec.fs, channel_labels=rec.channel_labels)


def segment_epochs(epoch_set, seg_len=64):
    """Split every epoch into non-overlapping segments of seg_len samples."""
    if not epoch_set.epochs:
        raise DataError("cannot segment an empty epoch set")
    n_samples = epoch_set.epoch_shape[1]
    if n_samples % seg_len != 0:
        raise DataError(f"epoch length {n_samples} is not divisible by segment length {seg_len}")
    out = []
    for ep in epoch_set:
        for k in range(n_samples // seg_len):
            out.append(
                Epoch(
                    ep.values[:, k * seg_len : (k + 1) * seg_len].copy(),
                    label=ep.label,
                    subject_id=ep.subject_id,
                    origin_index=ep.origin_index + k * seg_len,
                )
            )
    return EpochSet(out, split=epoch_set.split, fs=epoch_set.fs,
                    channel_labels=epoch_set.channel_labels)


def regroup_segments(segment_set, group_size):
    """Invert segment_epochs: join each run of group_size segments in order."""
    n = len(segment_set)
    if n == 0 or n % group_size != 0:
        raise DataError(f"{n} segments do not regroup evenly by {group_size}")
    seg_len = segment_set.epoch_shape[1]
    out = []
    for g in range(n // group_size):
        chunk = segment_set.epochs[g * group_size : (g + 1) * group_size]
        first = chunk[0]
        for j, ep in enumerate(chunk):
            if ep.subject_id != first.subject_id or ep.label != first.label:
                raise DataError(f"group {g}: segments mix subjects or labels")
            if ep.origin_index != first.origin_index + j * seg_len:
                raise DataError(f"group {g}: segments are not contiguous in time")
        out.append(
            Epoch(
                np.concatenate([ep.values for ep in chunk], axis=1),
                label=first.label,
                subject_id=first.subject_id,
                origin_index=first.origin_index,
            )
        )
    return EpochSet(out, split=segment_set.split, fs=segment_set.fs,
                    channel_labels=segment_set.channel_labels)


def split_dataset(epoch_set, ratios=(0.75, 0.20, 0.05)):
    """Chronological train/val/test split, applied per subject.

    Each subject's epochs stay in order; train and val take floor shares and
    test receives the remainder, so every epoch lands in exactly one part.
    """
    if not epoch_set.epochs:
        raise DataError("cannot split an empty epoch set")
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise DataError(f"ratios must be three non-negative numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must sum to 1, got {sum(ratios)}")
    groups = {}
    for ep in epoch_set:
        groups.setdefault(ep.subject_id, []).append(ep)
    parts = {"train": [], "val": [], "test": []}
    for eps in groups.values():
        n = len(eps)
        n_train = int(n * ratios[0])
        n_val = int(n * ratios[1])
        parts["train"].extend(eps[:n_train])
        parts["val"].extend(eps[n_train : n_train + n_val])
        parts["test"].extend(eps[n_train + n_val :])
    return tuple(
        EpochSet(parts[name], split=name, fs=epoch_set.fs,
                 channel_labels=epoch_set.channel_labels)
        for name in ("train", "val", "test")
    )


def make_montage(n_channels, scale):
    """Keep every scale-th channel (indices 0, scale, 2*scale, ...)."""
    if scale < 2:
        raise DataError(f"scale must be >= 2, got {scale}")
    if n_channels % scale != 0:
        raise DataError(f"{n_channels} channels do not divide evenly by scale {scale}")
    lr = tuple(range(0, n_channels, scale))
    hr = tuple(i for i in range(n_channels) if i % scale != 0)
    return MontageSplit(n_channels=n_channels, scale=scale, lr_indices=lr, hr_indices=hr)


def downsample_channels(epoch, montage):
    """Split one epoch into kept-channel and missing-channel epochs."""
    if epoch.values.shape[0] != montage.n_channels:
        raise DataError(
            f"epoch has {epoch.values.shape[0]} channels, montage expects {montage.n_channels}"
        )
    lr = Epoch(epoch.values[list(montage.lr_indices)].copy(), label=epoch.label,
               subject_id=epoch.subject_id, origin_index=epoch.origin_index)
    hr = Epoch(epoch.values[list(montage.hr_indices)].copy(), label=epoch.label,
               subject_id=epoch.subject_id, origin_index=epoch.origin_index)
    return lr, hr


def downsample_set(epoch_set, montage):
    """Apply downsample_channels across a set; returns (lr_set, hr_set)."""
    lr_eps, hr_eps = [], []
    for ep in epoch_set:
        lr, hr = downsample_channels(ep, montage)
        lr_eps.append(lr)
        hr_eps.append(hr)
    labels = epoch_set.channel_labels
    lr_names = tuple(labels[i] for i in montage.lr_indices) if labels else None
    hr_names = tuple(labels[i] for i in montage.hr_indices) if labels else None
    return (
        EpochSet(lr_eps, split=epoch_set.split, fs=epoch_set.fs, channel_labels=lr_names),
        EpochSet(hr_eps, split=epoch_set.split, fs=epoch_set.fs, channel_labels=hr_names),
    )


def assemble_channels(lr_epoch, hr_epoch, montage):
    """Scatter kept and reconstructed channels back to the full layout."""
    if lr_epoch.values.shape[0] != montage.n_lr:
        raise DataError(f"lr epoch has {lr_epoch.values.shape[0]} rows, expected {montage.n_lr}")
    if hr_epoch.values.shape[0] != montage.n_hr:
        raise DataError(f"hr epoch has {hr_epoch.values.shape[0]} rows, expected {montage.n_hr}")
    if lr_epoch.values.shape[1] != hr_epoch.values.shape[1]:
        raise DataError("lr and hr epochs differ in sample count")
    full = np.empty((montage.n_channels, lr_epoch.values.shape[1]), dtype=np.float64)
    full[list(montage.lr_indices)] = lr_epoch.values
    full[list(montage.hr_indices)] = hr_epoch.values
    return Epoch(full, label=lr_epoch.label, subject_id=lr_epoch.subject_id,
                 origin_index=lr_epoch.origin_index)


def compute_norm_stats(epoch_set):
    """Global mean and population standard deviation over every value."""
    vals = epoch_set.values_array()
    return NormStats(mu=float(vals.mean()), sigma=max(float(vals.std()), SIGMA_FLOOR))


def normalize_array(values, stats):
    return (np.asarray(values) - stats.mu) / stats.sigma


def denormalize_array(values, stats):
    return np.asarray(values) * stats.sigma + stats.mu


def normalize_set(epoch_set, stats):
    return epoch_set.with_values(normalize_array(epoch_set.values_array(), stats))


def denormalize_set(epoch_set, stats):
    return epoch_set.with_values(denormalize_array(epoch_set.values_array(), stats))
