"""End-to-end command-line pipeline at toy scale, plus exit-code contract."""
import csv

import numpy as np
import pytest

from eegsr import archive, psd
from eegsr.cli import FEATURE_HEADER, main, read_features_csv, write_features_csv
from eegsr.errors import ArtifactError

OVERRIDES = [
    "--set", "synth.n_samples=1216",
    "--set", "synth.n_classes=3",
    "--set", "synth.label_block=256",
    "--set", "model.width=0.015625",
    "--set", "train.pretrain_epochs=2",
    "--set", "train.gan_epochs=3",
    "--set", "train.batch_size=16",
    "--set", "classifier.epochs=3",
    "--seed", "7",
]


def run(*argv):
    rc = main(list(argv) + OVERRIDES)
    assert rc == 0, f"command {argv[0]} exited {rc}"


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    paths = {
        "rec": root / "rec.csv",
        "data": root / "data",
        "pre": root / "pre",
        "adv": root / "adv",
        "base": root / "base",
        "sr": root / "sr",
        "feats": root / "feats",
        "clf": root / "clf",
        "metrics": root / "metrics",
        "report": root / "report",
    }
    run("synth", "--out", str(paths["rec"]))
    run("preprocess", "--recording", str(paths["rec"]), "--out", str(paths["data"]))
    run("pretrain", "--data", str(paths["data"]), "--out", str(paths["pre"]))
    run("gan-train", "--data", str(paths["data"]), "--out", str(paths["adv"]),
        "--init", str(paths["pre"] / "last"))
    run("baseline", "--data", str(paths["data"]), "--out", str(paths["base"]))
    run("sr-infer", "--data", str(paths["data"]),
        "--checkpoint", str(paths["adv"] / "best"), "--out", str(paths["sr"]))
    run("features", "--data", str(paths["data"]), "--sr", str(paths["sr"]),
        "--out", str(paths["feats"]))
    run("train-clf", "--features", str(paths["feats"]), "--out", str(paths["clf"]))
    run("evaluate", "--data", str(paths["data"]), "--baseline", str(paths["base"]),
        "--sr", str(paths["sr"]), "--features", str(paths["feats"]),
        "--classifier", str(paths["clf"]), "--out", str(paths["metrics"]))
    rc = main(["report", "--metrics", str(paths["metrics"]),
               "--out", str(paths["report"])])
    assert rc == 0
    return paths


def test_synth_and_preprocess_artifacts(pipeline):
    assert pipeline["rec"].is_file()
    assert pipeline["rec"].with_suffix(".config.txt").is_file()
    for split in ("train", "val", "test"):
        for side in ("lr", "hr"):
            d = pipeline["data"] / f"{split}_{side}"
            assert (d / "values.bin").is_file()
            assert (d / "meta.csv").is_file()
    assert (pipeline["data"] / "info.txt").is_file()
    assert (pipeline["data"] / "config.txt").is_file()
    # 1216 samples, window 512, stride 32 -> 23 epochs; 8 segments each
    lr = archive.load_epoch_set(pipeline["data"] / "train_lr")
    hr = archive.load_epoch_set(pipeline["data"] / "train_hr")
    assert len(lr) == 17 * 8
    assert lr.epoch_shape == (16, 64)
    assert hr.epoch_shape == (16, 64)


def test_training_artifacts(pipeline):
    for stage in ("pre", "adv"):
        out = pipeline[stage]
        assert (out / "history.csv").is_file()
        assert (out / "config.txt").is_file()
        for name in ("best", "last"):
            assert (out / name / "manifest.txt").is_file()


def test_reconstruction_artifacts(pipeline):
    for stage in ("base", "sr"):
        for split in ("val", "test"):
            pred = archive.load_epoch_set(pipeline[stage] / split)
            assert pred.epoch_shape == (16, 64)
    assert len(archive.load_epoch_set(pipeline["base"] / "val")) == 4 * 8
    assert len(archive.load_epoch_set(pipeline["base"] / "test")) == 2 * 8


def test_feature_tables(pipeline):
    counts = {"train_hr": 17, "val_hr": 4, "test_hr": 2, "val_sr": 4, "test_sr": 2}
    for name, expect in counts.items():
        feats = read_features_csv(pipeline["feats"] / f"{name}.csv")
        assert len(feats) == expect
        assert feats[0].values.shape == (psd.N_FEATURES,)
        assert all(f.label in (2, 3, 7) for f in feats)


def test_classifier_artifacts(pipeline):
    assert (pipeline["clf"] / "model" / "manifest.txt").is_file()
    with open(pipeline["clf"] / "loss.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "loss"]
    assert len(rows) == 1 + 3


def test_metric_tables(pipeline):
    with open(pipeline["metrics"] / "reconstruction.csv") as fh:
        rows = list(csv.reader(fh))
    # header + (val, test) x (bicubic, wgan)
    assert len(rows) == 5
    methods = {(r[0], r[2]) for r in rows[1:]}
    assert methods == {("val", "bicubic"), ("val", "wgan"),
                       ("test", "bicubic"), ("test", "wgan")}
    assert (pipeline["metrics"] / "classification.csv").is_file()


def test_report_files(pipeline):
    names = sorted(p.name for p in pipeline["report"].iterdir())
    assert names == ["classification.csv", "classification.md",
                     "reconstruction.csv", "reconstruction.md"]
    text = (pipeline["report"] / "reconstruction.md").read_text()
    assert "| Dataset | Scale |" in text


def test_pretrain_resume_noop(pipeline):
    # resuming a finished run performs no further steps and exits cleanly
    rc = main(["pretrain", "--data", str(pipeline["data"]),
               "--out", str(pipeline["pre"]),
               "--resume", str(pipeline["pre"] / "last")] + OVERRIDES)
    assert rc == 0


def test_exit_codes(tmp_path, pipeline):
    assert main(["preprocess", "--recording", str(tmp_path / "absent.csv"),
                 "--out", str(tmp_path / "o")]) == 2
    assert main(["sr-infer", "--data", str(pipeline["data"]),
                 "--checkpoint", str(tmp_path / "absent"),
                 "--out", str(tmp_path / "o")]) == 2
    assert main(["synth", "--out", str(tmp_path / "r.csv"),
                 "--set", "train.lr=abc"]) == 3
    assert main(["synth", "--out", str(tmp_path / "r.csv"),
                 "--set", "train.nosuch=1"]) == 3
    assert main(["synth", "--out", str(tmp_path / "r.csv"),
                 "--set", "run.precision=f16"]) == 3
    assert main(["synth", "--out", str(tmp_path / "r.csv"),
                 "--set", "baditem"]) == 3


def test_scale_mismatch_rejected(tmp_path, pipeline):
    # archive was made at scale 2; asking for scale 4 must fail, not misread
    rc = main(["pretrain", "--data", str(pipeline["data"]),
               "--out", str(tmp_path / "o"), "--scale", "4"] + OVERRIDES)
    assert rc == 3
    rc = main(["sr-infer", "--data", str(pipeline["data"]),
               "--checkpoint", str(pipeline["adv"] / "best"),
               "--out", str(tmp_path / "o"), "--scale", "4"] + OVERRIDES)
    assert rc == 3


def test_features_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    feats = [
        psd.PsdFeature(rng.exponential(size=psd.N_FEATURES), label=2, subject_id="s01",
                       origin_index=5),
        psd.PsdFeature(rng.exponential(size=psd.N_FEATURES), label=None,
                       subject_id="s02", origin_index=9),
    ]
    path = tmp_path / "f.csv"
    write_features_csv(path, feats)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    assert header == FEATURE_HEADER
    back = read_features_csv(path)
    assert len(back) == 2
    for a, b in zip(feats, back):
        assert np.array_equal(a.values, b.values)
        assert (a.label, a.subject_id, a.origin_index) == (b.label, b.subject_id,
                                                           b.origin_index)


def test_features_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("a,b,c\n")
    with pytest.raises(ArtifactError):
        read_features_csv(path)
