"""File formats: recording CSVs, epoch-set archives and preprocessing info.

Recordings travel as CSV (one row per sample, one column per channel, an
optional trailing integer `label` column, and a leading `# key=value` line
for sampling rate and subject). Epoch sets persist as a directory holding a
text manifest, a raw little-endian value file and a per-epoch metadata CSV.
All float text uses repr, so a write/read cycle is value-exact.
"""
from __future__ import annotations

import configparser
import csv
from pathlib import Path

import numpy as np

from .data import Epoch, EpochSet, MontageSplit, NormStats, RawRecording
from .errors import ArtifactError, ParseError
from .nn.serialize import dtype_code, dtype_from_code

FORMAT_VERSION = "1"


def save_recording(path, rec):
    """Write a recording as CSV with a metadata comment line."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(f"# fs={float(rec.fs)!r} subject={rec.subject_id}\n")
        writer = csv.writer(fh)
        header = list(rec.channel_labels)
        if rec.labels is not None:
            header.append("label")
        writer.writerow(header)
        cols = rec.values.T
        for i in range(cols.shape[0]):
            row = [repr(float(v)) for v in cols[i]]
            if rec.labels is not None:
                row.append(str(int(rec.labels[i])))
            writer.writerow(row)


def load_recording(path, fs=None, subject_id=None):
    """Read a recording CSV; malformed content reports its line number."""
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"recording not found: {path}")
    meta = {}
    with open(path, newline="") as fh:
        first = fh.readline()
        line_no = 1
        if first.startswith("#"):
            for token in first[1:].split():
                if "=" in token:
                    k, v = token.split("=", 1)
                    meta[k] = v
            header_line = fh.readline()
            line_no += 1
        else:
            header_line = first
        header = next(csv.reader([header_line]))
        if not header:
            raise ParseError("empty header", line=line_no)
        has_labels = header[-1] == "label"
        channel_labels = header[:-1] if has_labels else header
        if not channel_labels:
            raise ParseError("no channel columns", line=line_no)
        n_cols = len(header)
        rows = []
        labels = []
        for line in csv.reader(fh):
            line_no += 1
            if not line:
                continue
            if len(line) != n_cols:
                raise ParseError(
                    f"expected {n_cols} columns, found {len(line)}", line=line_no
                )
            try:
                rows.append([float(v) for v in line[: len(channel_labels)]])
            except ValueError as exc:
                raise ParseError(f"non-numeric value ({exc})", line=line_no) from None
            if has_labels:
                try:
                    labels.append(int(line[-1]))
                except ValueError:
                    raise ParseError(
                        f"label must be an integer, got {line[-1]!r}", line=line_no
                    ) from None
    if not rows:
        raise ParseError("recording has no samples", line=line_no)
    if fs is None:
        if "fs" not in meta:
            raise ParseError("no sampling rate: pass fs or include '# fs=...' metadata", line=1)
        fs = float(meta["fs"])
    subject = subject_id or meta.get("subject", "s01")
    return RawRecording(
        np.asarray(rows).T,
        fs=fs,
        channel_labels=channel_labels,
        labels=np.asarray(labels, dtype=np.int64) if has_labels else None,
        subject_id=subject,
    )


def save_epoch_set(directory, epoch_set, dtype=np.float64):
    """Persist an epoch set: manifest.txt + values.bin + meta.csv."""
    if not epoch_set.epochs:
        raise ArtifactError("refusing to archive an empty epoch set")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    values = epoch_set.values_array()
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["archive"] = {
        "format_version": FORMAT_VERSION,
        "dtype": dtype_code(dtype),
        "n_epochs": str(values.shape[0]),
        "n_channels": str(values.shape[1]),
        "n_samples": str(values.shape[2]),
        "fs": repr(float(epoch_set.fs)),
        "split": epoch_set.split,
        "channel_labels": ",".join(epoch_set.channel_labels or ()),
        "has_channel_labels": "1" if epoch_set.channel_labels is not None else "0",
    }
    with open(directory / "manifest.txt", "w") as fh:
        cp.write(fh)
    values.astype(np.dtype(dtype).newbyteorder("<")).tofile(directory / "values.bin")
    with open(directory / "meta.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch_index", "subject_id", "label", "origin_index"])
        for i, ep in enumerate(epoch_set):
            writer.writerow(
                [i, ep.subject_id, "" if ep.label is None else ep.label, ep.origin_index]
            )


def load_epoch_set(directory):
    """Rebuild an epoch set from save_epoch_set output."""
    directory = Path(directory)
    manifest = directory / "manifest.txt"
    if not manifest.is_file():
        raise ArtifactError(f"epoch archive not found: {directory}")
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read(manifest)
        head = cp["archive"]
        if head["format_version"] != FORMAT_VERSION:
            raise ArtifactError(f"unsupported archive version {head['format_version']!r}")
        dtype = dtype_from_code(head["dtype"])
        shape = (int(head["n_epochs"]), int(head["n_channels"]), int(head["n_samples"]))
        fs = float(head["fs"])
        split = head["split"]
        if head["has_channel_labels"] == "1":
            raw = head["channel_labels"]
            channel_labels = tuple(raw.split(",")) if raw else ()
        else:
            channel_labels = None
    except (KeyError, ValueError, configparser.Error) as exc:
        raise ArtifactError(f"{manifest}: corrupt archive manifest ({exc})") from exc
    blob = directory / "values.bin"
    if not blob.is_file():
        raise ArtifactError(f"{directory}: missing values.bin")
    if not (directory / "meta.csv").is_file():
        raise ArtifactError(f"{directory}: missing meta.csv")
    values = np.fromfile(blob, dtype=dtype)
    if values.size != int(np.prod(shape)):
        raise ArtifactError(
            f"{directory}: values.bin holds {values.size} values, manifest declares "
            f"{int(np.prod(shape))}"
        )
    values = values.reshape(shape).astype(np.float64)
    epochs = []
    with open(directory / "meta.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["epoch_index", "subject_id", "label", "origin_index"]:
            raise ArtifactError(f"{directory}: unexpected meta.csv header {header}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise ParseError(f"expected 4 columns, found {len(row)}", line=line_no)
            idx = int(row[0])
            if idx != len(epochs):
                raise ArtifactError(f"{directory}: meta.csv rows out of order at {idx}")
            epochs.append(
                Epoch(
                    values[idx],
                    label=None if row[2] == "" else int(row[2]),
                    subject_id=row[1],
                    origin_index=int(row[3]),
                )
            )
    if len(epochs) != shape[0]:
        raise ArtifactError(
            f"{directory}: meta.csv lists {len(epochs)} epochs, manifest declares {shape[0]}"
        )
    return EpochSet(epochs, split=split, fs=fs, channel_labels=channel_labels)


def save_preprocess_info(path, montage, stats, window, stride, seg_len):
    """Record the preprocessing contract next to the epoch archives."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["montage"] = {
        "n_channels": str(montage.n_channels),
        "scale": str(montage.scale),
        "lr_indices": ",".join(str(i) for i in montage.lr_indices),
        "hr_indices": ",".join(str(i) for i in montage.hr_indices),
    }
    cp["normalization"] = {"mu": repr(stats.mu), "sigma": repr(stats.sigma)}
    cp["epoching"] = {
        "window": str(window),
        "stride": str(stride),
        "seg_len": str(seg_len),
    }
    with open(path, "w") as fh:
        cp.write(fh)


def load_preprocess_info(path):
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"preprocessing info not found: {path}")
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read(path)
        montage = MontageSplit(
            n_channels=int(cp["montage"]["n_channels"]),
            scale=int(cp["montage"]["scale"]),
            lr_indices=tuple(int(i) for i in cp["montage"]["lr_indices"].split(",")),
            hr_indices=tuple(int(i) for i in cp["montage"]["hr_indices"].split(",")),
        )
        stats = NormStats(
            mu=float(cp["normalization"]["mu"]), sigma=float(cp["normalization"]["sigma"])
        )
        epoching = {
            "window": int(cp["epoching"]["window"]),
            "stride": int(cp["epoching"]["stride"]),
            "seg_len": int(cp["epoching"]["seg_len"]),
        }
    except (KeyError, ValueError, configparser.Error) as exc:
        raise ArtifactError(f"{path}: corrupt preprocessing info ({exc})") from exc
    return montage, stats, epoching
