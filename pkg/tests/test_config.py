"""Configuration loading, overrides, validation and round-tripping."""
import numpy as np
import pytest

from eegsr.config import RunConfig, SCHEMA, load_config, save_config
from eegsr.errors import ConfigError


def test_defaults():
    cfg = load_config()
    assert cfg["run"]["seed"] == 0
    assert cfg["run"]["precision"] == "f32"
    assert cfg["synth"]["n_channels"] == 32
    assert cfg["preprocess"]["scale"] == 2
    assert cfg["preprocess"]["window"] == 512
    assert cfg["preprocess"]["seg_len"] == 64
    assert cfg["model"]["width"] == 1.0
    assert cfg["train"]["lr"] == 1e-4
    assert cfg["train"]["beta1"] == 0.5
    assert cfg["train"]["beta2"] == 0.9
    assert cfg["train"]["gp_weight"] == 10.0
    assert cfg["train"]["training_ratio"] == 3
    assert cfg["train"]["adv_weight"] == 1e-2
    assert cfg["classifier"]["lr"] == 1e-3


def test_defaults_cover_schema():
    cfg = RunConfig()
    for section, keys in SCHEMA.items():
        for key in keys:
            assert key in cfg[section]


def test_file_values_applied(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[train]\nlr = 0.001\nbatch_size = 16  # inline comment\n"
                    "[run]\nprecision = f64\n")
    cfg = load_config(path)
    assert cfg["train"]["lr"] == 0.001
    assert cfg["train"]["batch_size"] == 16
    assert cfg["run"]["precision"] == "f64"
    assert cfg.dtype() is np.float64


def test_overrides_beat_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[train]\nlr = 0.001\n")
    cfg = load_config(path, overrides={"train.lr": "0.01", "run.seed": "5"})
    assert cfg["train"]["lr"] == 0.01
    assert cfg["run"]["seed"] == 5


def test_unknown_names_rejected(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[nosuch]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown config section"):
        load_config(path)
    path.write_text("[train]\nnosuch = 1\n")
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(path)
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(overrides={"train.nosuch": "1"})
    with pytest.raises(ConfigError, match="section.key"):
        load_config(overrides={"justakey": "1"})
    with pytest.raises(ConfigError):
        RunConfig()["nosuch"]


def test_parse_and_validation_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot parse"):
        load_config(overrides={"train.lr": "abc"})
    with pytest.raises(ConfigError, match="precision"):
        load_config(overrides={"run.precision": "f16"})
    with pytest.raises(ConfigError, match="sum to 1"):
        load_config(overrides={"preprocess.ratio_train": "0.9"})
    with pytest.raises(ConfigError, match="divide evenly"):
        load_config(overrides={"preprocess.seg_len": "60"})
    with pytest.raises(ConfigError, match="train"):
        load_config(overrides={"train.training_ratio": "0"})
    with pytest.raises(ConfigError, match="train"):
        load_config(overrides={"train.loss_mode": "hinge"})
    with pytest.raises(ConfigError, match="file not found"):
        load_config(tmp_path / "absent.ini")


def test_save_load_roundtrip(tmp_path):
    cfg = load_config(overrides={
        "train.lr": "0.0001", "model.width": "0.015625", "run.seed": "42",
        "synth.class_band_offsets": "0.5,-1.25,3.0", "synth.class_ids": "1,4,6",
    })
    path = tmp_path / "resolved.ini"
    save_config(path, cfg)
    back = load_config(path)
    assert back.values == cfg.values


def test_derived_configs():
    cfg = load_config(overrides={"preprocess.scale": "4", "model.width": "0.5"})
    gen = cfg.generator_config()
    assert gen.c_lr == 8
    assert gen.c_hr == 24
    assert gen.scale == 4
    disc = cfg.discriminator_config()
    assert disc.c_hr == 24
    assert cfg.dtype() is np.float32
    sy = cfg.synth_config()
    assert sy.n_channels == 32
    tr = cfg.train_config()
    assert tr.seed == cfg["run"]["seed"]
    cl = cfg.classifier_train_config()
    assert cl.seed == cfg["run"]["seed"]


def test_classifier_config_class_count():
    cfg = load_config(overrides={"synth.n_classes": "3"})
    assert cfg.classifier_config().class_ids == (2, 3, 7)
    # single-class synthesis still yields a 2-way head so training is defined
    cfg1 = load_config()
    assert len(cfg1.classifier_config().class_ids) == 2
