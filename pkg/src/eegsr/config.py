"""Run configuration: a typed INI schema with defaults and strict parsing.

Unknown sections or keys are rejected rather than ignored, so a typo in a
config file fails fast instead of silently running defaults. The resolved
configuration (defaults + file + command-line overrides) can be written
back out; rerunning from that file reproduces the run.
"""
from __future__ import annotations

import configparser
from pathlib import Path

from .data import SyntheticConfig
from .errors import ConfigError
from .gan import TrainConfig
from .models import ClassifierConfig, DiscriminatorConfig, GeneratorConfig
from .psd import ClassifierTrainConfig


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v != "")


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v != "")


# section -> key -> (parse, default). Parse functions take the raw string.
SCHEMA = {
    "run": {
        "seed": (int, 0),
        "precision": (str, "f32"),
    },
    "synth": {
        "n_channels": (int, 32),
        "n_samples": (int, 8544),
        "fs": (float, 512.0),
        "n_sources": (int, 4),
        "band_low": (float, 7.0),
        "band_high": (float, 30.0),
        "sines_per_source": (int, 3),
        "amplitude": (float, 10.0),
        "noise_sigma": (float, 1.0),
        "mixing_seed": (int, 90),
        "n_classes": (int, 1),
        "class_ids": (_ints, (2, 3, 7)),
        "class_band_offsets": (_floats, (0.0, 6.0, -4.0)),
        "label_block": (int, 2048),
        "subject": (str, "s01"),
    },
    "preprocess": {
        "scale": (int, 2),
        "window": (int, 512),
        "stride": (int, 32),
        "seg_len": (int, 64),
        "ratio_train": (float, 0.75),
        "ratio_val": (float, 0.20),
        "ratio_test": (float, 0.05),
    },
    "model": {
        "width": (float, 1.0),
        "gen_dropout": (float, 0.1),
        "disc_dropout": (float, 0.25),
        "elu_alpha": (float, 1.0),
    },
    "train": {
        "pretrain_epochs": (int, 50),
        "gan_epochs": (int, 20),
        "batch_size": (int, 64),
        "lr": (float, 1e-4),
        "beta1": (float, 0.5),
        "beta2": (float, 0.9),
        "gp_weight": (float, 10.0),
        "training_ratio": (int, 3),
        "adv_weight": (float, 1e-2),
        "loss_mode": (str, "wgan_gp"),
        "real_label": (float, 0.9),
        "checkpoint_every": (int, 1),
    },
    "classifier": {
        "epochs": (int, 30),
        "batch_size": (int, 32),
        "lr": (float, 1e-3),
        "beta1": (float, 0.9),
        "beta2": (float, 0.99),
    },
}

PRECISIONS = ("f32", "f64")


class RunConfig:
    """Resolved configuration values, addressable as cfg[section][key]."""

    def __init__(self, values=None):
        self.values = {s: dict((k, d) for k, (_, d) in keys.items())
                       for s, keys in SCHEMA.items()}
        if values:
            for section, keys in values.items():
                for key, val in keys.items():
                    self.set(section, key, val)
        self._validate()

    def __getitem__(self, section):
        try:
            return self.values[section]
        except KeyError:
            raise ConfigError(f"unknown config section [{section}]") from None

    def set(self, section, key, value):
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in section [{section}]")
        parse = SCHEMA[section][key][0]
        if isinstance(value, str):
            try:
                value = parse(value)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: cannot parse {value!r} ({exc})") from None
        self.values[section][key] = value

    def _validate(self):
        if self["run"]["precision"] not in PRECISIONS:
            raise ConfigError(
                f"precision must be one of {PRECISIONS}, got {self['run']['precision']!r}"
            )
        pp = self["preprocess"]
        ratios = (pp["ratio_train"], pp["ratio_val"], pp["ratio_test"])
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must sum to 1, got {ratios}")
        if pp["window"] % pp["seg_len"] != 0:
            raise ConfigError(
                f"window {pp['window']} must divide evenly into segments of {pp['seg_len']}"
            )
        # Constructing the derived configs runs their own validation.
        self.synth_config()
        self.train_config()
        self.classifier_train_config()

    # -- derived, domain-specific config objects --

    def synth_config(self):
        s = self["synth"]
        try:
            return SyntheticConfig(
                n_channels=s["n_channels"], n_samples=s["n_samples"], fs=s["fs"],
                n_sources=s["n_sources"], band=(s["band_low"], s["band_high"]),
                sines_per_source=s["sines_per_source"], amplitude=s["amplitude"],
                noise_sigma=s["noise_sigma"], mixing_seed=s["mixing_seed"],
                n_classes=s["n_classes"], class_ids=tuple(s["class_ids"]),
                class_band_offsets=tuple(s["class_band_offsets"]),
                label_block=s["label_block"],
            )
        except Exception as exc:
            raise ConfigError(f"invalid [synth] config: {exc}") from exc

    def generator_config(self):
        pp, m = self["preprocess"], self["model"]
        c_lr = self["synth"]["n_channels"] // pp["scale"]
        try:
            return GeneratorConfig(
                c_lr=c_lr, scale=pp["scale"], seg_len=pp["seg_len"],
                dropout_rate=m["gen_dropout"], elu_alpha=m["elu_alpha"],
                width=m["width"],
            )
        except Exception as exc:
            raise ConfigError(f"invalid generator config: {exc}") from exc

    def discriminator_config(self):
        gen = self.generator_config()
        m = self["model"]
        try:
            return DiscriminatorConfig(
                c_hr=gen.c_hr, seg_len=gen.seg_len, dropout_rate=m["disc_dropout"],
                elu_alpha=m["elu_alpha"], width=m["width"],
            )
        except Exception as exc:
            raise ConfigError(f"invalid critic config: {exc}") from exc

    def classifier_config(self):
        ids = tuple(self["synth"]["class_ids"])[: max(self["synth"]["n_classes"], 2)]
        try:
            return ClassifierConfig(class_ids=ids)
        except Exception as exc:
            raise ConfigError(f"invalid classifier config: {exc}") from exc

    def train_config(self):
        t = self["train"]
        try:
            return TrainConfig(
                pretrain_epochs=t["pretrain_epochs"], gan_epochs=t["gan_epochs"],
                batch_size=t["batch_size"], lr=t["lr"], beta1=t["beta1"],
                beta2=t["beta2"], gp_weight=t["gp_weight"],
                training_ratio=t["training_ratio"], adv_weight=t["adv_weight"],
                loss_mode=t["loss_mode"], real_label=t["real_label"],
                checkpoint_every=t["checkpoint_every"], seed=self["run"]["seed"],
            )
        except Exception as exc:
            raise ConfigError(f"invalid [train] config: {exc}") from exc

    def classifier_train_config(self):
        c = self["classifier"]
        try:
            return ClassifierTrainConfig(
                epochs=c["epochs"], batch_size=c["batch_size"], lr=c["lr"],
                beta1=c["beta1"], beta2=c["beta2"], seed=self["run"]["seed"],
            )
        except Exception as exc:
            raise ConfigError(f"invalid [classifier] config: {exc}") from exc

    def dtype(self):
        import numpy as np

        return np.float64 if self["run"]["precision"] == "f64" else np.float32


def _format_value(value):
    if isinstance(value, tuple):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_config(path=None, overrides=None):
    """Build a RunConfig from defaults, an optional INI file and overrides.

    `overrides` maps "section.key" to raw string values (as from command
    line flags). Unknown names anywhere raise ConfigError.
    """
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
        cp.optionxform = str
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: cannot parse config ({exc})") from exc
        for section in cp.sections():
            for key, raw in cp[section].items():
                cfg.set(section, key, raw)
    for name, raw in (overrides or {}).items():
        if "." not in name:
            raise ConfigError(f"override {name!r} must look like section.key")
        section, key = name.split(".", 1)
        cfg.set(section, key, raw)
    cfg._validate()
    return cfg


def save_config(path, cfg):
    """Write the resolved configuration in schema order."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    for section, keys in SCHEMA.items():
        cp[section] = {k: _format_value(cfg[section][k]) for k in keys}
    with open(path, "w") as fh:
        cp.write(fh)
