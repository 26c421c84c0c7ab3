"""Band-power features over sensorimotor channels, and the dense classifier
that consumes them.

Power spectra come from Welch's method: 256-sample periodic Hann windows at
50% overlap, no detrending, scaled by 1 / (fs * sum(w^2)) with one-sided
doubling. At 512 Hz that grid has 2 Hz resolution, and the feature vector
concatenates the 12 bins from 8 to 30 Hz for each of 8 channels over the
motor strip, channel-major: 96 values per epoch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .nn import functional as F
from .nn.optim import AdamState, adam_step
from .nn.tensor import Tensor, grad, no_grad

FEATURE_CHANNELS = ("C3", "Cz", "C4", "CP1", "CP2", "P3", "Pz", "P4")
BAND_FREQS = tuple(float(f) for f in range(8, 31, 2))
N_FEATURES = len(FEATURE_CHANNELS) * len(BAND_FREQS)

WELCH_NPERSEG = 256
WELCH_OVERLAP = 0.5


def hann_periodic(n):
    """Periodic Hann window of length n."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def welch_psd(x, fs, nperseg=WELCH_NPERSEG, overlap=WELCH_OVERLAP):
    """One-sided Welch power spectral density of a 1-D signal.

    Segments overlap by `overlap`, each is Hann-windowed (periodic) and not
    detrended; per-segment periodograms |rfft(w*x)|^2 / (fs * sum(w^2)) are
    doubled at non-DC, non-Nyquist bins and averaged. Returns (freqs, psd).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError(f"welch_psd expects a 1-D signal, got shape {x.shape}")
    if x.size < nperseg:
        raise DataError(f"signal of {x.size} samples is shorter than one {nperseg}-sample segment")
    step = nperseg - int(overlap * nperseg)
    if step < 1:
        raise DataError(f"overlap {overlap} leaves no step")
    window = hann_periodic(nperseg)
    scale = 1.0 / (fs * float(window @ window))
    n_segments = (x.size - nperseg) // step + 1
    acc = None
    for s in range(n_segments):
        seg = x[s * step : s * step + nperseg]
        spec = np.fft.rfft(window * seg)
        p = (spec.real**2 + spec.imag**2) * scale
        p[1:-1] *= 2.0
        acc = p if acc is None else acc + p
    freqs = np.fft.rfftfreq(nperseg, d=1.0 / fs)
    return freqs, acc / n_segments


@dataclass(frozen=True)
class PsdFeature:
    """One epoch's band powers plus its class label and provenance."""

    values: np.ndarray
    label: int | None
    subject_id: str
    origin_index: int

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.shape != (N_FEATURES,):
            raise DataError(f"feature vector must have shape ({N_FEATURES},), got {self.values.shape}")
        if (self.values < 0).any():
            raise DataError("band powers cannot be negative")


def band_feature_vector(values, fs, channel_labels):
    """96-dim band-power vector for one (channels, samples) epoch.

    Channel order follows FEATURE_CHANNELS; within each channel the 8-30 Hz
    bins appear in ascending frequency. Requires a 2 Hz bin grid, i.e.
    fs / WELCH_NPERSEG == 2.
    """
    values = np.asarray(values, dtype=np.float64)
    if channel_labels is None:
        raise DataError("feature extraction needs channel labels")
    labels = list(channel_labels)
    missing = [c for c in FEATURE_CHANNELS if c not in labels]
    if missing:
        raise DataError(f"epoch lacks required channels: {missing}")
    out = np.empty(N_FEATURES)
    bin_idx = None
    for k, name in enumerate(FEATURE_CHANNELS):
        freqs, psd = welch_psd(values[labels.index(name)], fs)
        if bin_idx is None:
            bin_idx = [int(np.flatnonzero(np.isclose(freqs, f))[0]) for f in BAND_FREQS]
        out[k * len(BAND_FREQS) : (k + 1) * len(BAND_FREQS)] = psd[bin_idx]
    return out


def epoch_features(epoch_set):
    """PsdFeature per epoch of a full-layout, fully reassembled set."""
    feats = []
    for ep in epoch_set:
        feats.append(
            PsdFeature(
                band_feature_vector(ep.values, epoch_set.fs, epoch_set.channel_labels),
                label=ep.label,
                subject_id=ep.subject_id,
                origin_index=ep.origin_index,
            )
        )
    return feats


@dataclass(frozen=True)
class FeatureScaler:
    """Per-dimension standardisation fitted on training features."""

    mu: np.ndarray
    sigma: np.ndarray

    @classmethod
    def fit(cls, matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(mu=matrix.mean(axis=0), sigma=np.maximum(matrix.std(axis=0), 1e-12))

    def apply(self, matrix):
        return (np.asarray(matrix, dtype=np.float64) - self.mu) / self.sigma


def feature_matrix(features):
    """Stack PsdFeatures to (n, 96) values and (n,) labels."""
    if not features:
        raise DataError("no features to stack")
    x = np.stack([f.values for f in features])
    labels = [f.label for f in features]
    if any(l is None for l in labels):
        raise DataError("features are missing class labels")
    return x, np.asarray(labels, dtype=np.int64)


@dataclass(frozen=True)
class ClassifierTrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


def _one_hot(labels, class_ids):
    class_ids = list(class_ids)
    idx = np.empty(labels.shape, dtype=np.int64)
    for i, lab in enumerate(labels):
        if lab not in class_ids:
            raise DataError(f"label {lab} not in class set {class_ids}")
        idx[i] = class_ids.index(lab)
    return np.eye(len(class_ids))[idx]


def train_classifier(model, x, labels, cfg, class_ids=(2, 3, 7)):
    """Minimise cross-entropy over standardised feature rows.

    `x` is (n, features) already scaled, `labels` hold raw ids from
    `class_ids` (whose order fixes the output layout). Returns the per-epoch
    mean loss trace.
    """
    n_classes = model.shapes[-1][0]
    if len(class_ids) != n_classes:
        raise DataError(f"{len(class_ids)} class ids for a {n_classes}-way model")
    targets = _one_hot(np.asarray(labels), class_ids)
    x = np.asarray(x, dtype=np.float64)
    params = model.parameters()
    state = AdamState.for_params(params, cfg.lr, cfg.beta1, cfg.beta2)
    rng = np.random.default_rng(cfg.seed)
    trace = []
    for _ in range(cfg.epochs):
        order = rng.permutation(x.shape[0])
        losses = []
        for i in range(0, len(order), cfg.batch_size):
            sel = order[i : i + cfg.batch_size]
            xb = Tensor(x[sel].astype(model.dtype))
            probs = model.forward(xb, training=True, rng=rng)
            loss = F.cross_entropy(probs, Tensor(targets[sel].astype(model.dtype)))
            gs = grad(loss, params)
            adam_step(params, gs, state)
            losses.append(loss.item())
        trace.append(float(np.mean(losses)))
    return trace


def predict(model, x, class_ids):
    """Class ids and probabilities for feature rows; argmax ties take the
    earliest class in `class_ids`."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None]
    with no_grad():
        probs = model.forward(Tensor(x.astype(model.dtype))).data.astype(np.float64)
    ids = np.asarray(list(class_ids), dtype=np.int64)[np.argmax(probs, axis=1)]
    if single:
        return int(ids[0]), probs[0]
    return ids, probs
