import json

import numpy as np
import pytest

from statloss.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from statloss.data import load_csv

TWO_CLASS = {
    "classes": [
        {"mean": [0.0, 0.0], "cov": [[1.0, 0.3], [0.3, 1.0]], "count": 40},
        {"mean": [1.0, 1.0], "cov": [[1.0, 0.0], [0.0, 2.0]], "count": 40},
    ],
    "train_per_class": 20,
}

SEPARABLE = {
    "classes": [
        {"mean": [0.0, 0.0, 0.0], "cov": [[0.1, 0, 0], [0, 0.1, 0], [0, 0, 0.1]], "count": 30},
        {"mean": [5.0, 5.0, 5.0], "cov": [[0.1, 0, 0], [0, 0.1, 0], [0, 0, 0.1]], "count": 30},
    ],
    "train_per_class": 15,
}


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def two_class(tmp_path):
    cfg = write_json(tmp_path / "synth.json", TWO_CLASS)
    assert main(["synth", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "d")]) == EXIT_OK
    return tmp_path / "d"


def _train(tmp_path, data, name, *extra):
    out = tmp_path / name
    argv = ["train", "--train", str(data / "train.csv"), "--test", str(data / "test.csv"),
            "--out", str(out), "--iterations", "40", "--batch-size", "8", "--hidden-dims", "5,3", *extra]
    assert main(argv) == EXIT_OK
    return out


def test_synth_is_deterministic(tmp_path, two_class):
    cfg = write_json(tmp_path / "synth.json", TWO_CLASS)
    assert main(["synth", "--config", cfg, "--seed", "7", "--out", str(tmp_path / "again")]) == EXIT_OK
    for name in ("train.csv", "test.csv", "manifest.json"):
        assert (two_class / name).read_bytes() == (tmp_path / "again" / name).read_bytes()
    train = load_csv(two_class / "train.csv")
    assert list(train.class_counts()) == [20, 20]


def test_synth_manifest_records_mean_distance(two_class):
    manifest = json.loads((two_class / "manifest.json").read_text())
    assert manifest["seed"] == 7
    assert manifest["mean_distance"][0][1] == pytest.approx(np.sqrt(2.0), abs=1e-15)
    assert manifest["mean_distance"][0][0] == 0.0


def test_synth_non_psd_exits_2(tmp_path, capsys):
    doc = {"classes": [{"mean": [0, 0], "cov": [[1, 2], [2, 1]], "count": 5}] * 2, "train_per_class": 2}
    assert main(["synth", "--config", write_json(tmp_path / "c.json", doc), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "NotPositiveDefinite" in capsys.readouterr().err


def test_train_writes_artifacts(tmp_path, two_class):
    out = _train(tmp_path, two_class, "run", "--grad-mode", "exact")
    rows = (out / "loss_log.csv").read_text().splitlines()
    assert rows[0] == "iteration,l_joint,l_s,l_stat" and len(rows) == 41
    it, l_joint, l_s, l_stat = map(float, rows[1].split(","))
    assert it == 1 and l_joint == pytest.approx(l_s + l_stat, rel=1e-12)
    doc = json.loads((out / "metrics.json").read_text())
    for key in ("oa", "kappa", "intra_class_trace", "mean_t2"):
        assert key in doc["test"]
    assert json.loads((out / "checkpoint.json").read_text())["dims"] == [2, 5, 3, 2]


def test_beta_zero_logs_softmax_only(tmp_path, two_class):
    out = _train(tmp_path, two_class, "soft", "--beta", "0")
    for row in (out / "loss_log.csv").read_text().splitlines()[1:]:
        _, l_joint, l_s, _ = row.split(",")
        assert l_joint == l_s


def test_train_is_byte_deterministic(tmp_path, two_class):
    a = _train(tmp_path, two_class, "a", "--seed", "3")
    b = _train(tmp_path, two_class, "b", "--seed", "3")
    for name in ("loss_log.csv", "checkpoint.json", "metrics.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_flags_override_config(tmp_path, two_class):
    cfg = write_json(tmp_path / "t.json", {"iterations": 5, "lr": 0.5, "grad_mode": "exact"})
    out = tmp_path / "o"
    assert main(["train", "--config", cfg, "--iterations", "3", "--train", str(two_class / "train.csv"),
                 "--batch-size", "6", "--out", str(out)]) == EXIT_OK
    assert len((out / "loss_log.csv").read_text().splitlines()) == 4


@pytest.mark.parametrize("doc, code", [
    ({"bogus": 1}, EXIT_CONFIG),
    ({"hinge": "yes"}, EXIT_CONFIG),
    ({"grad_mode": "approx"}, EXIT_CONFIG),
    ({"delta": 0}, EXIT_CONFIG),
    ({"init_std": "wide"}, EXIT_CONFIG),
])
def test_config_errors(tmp_path, two_class, doc, code):
    cfg = write_json(tmp_path / "bad.json", doc)
    assert main(["train", "--config", cfg, "--train", str(two_class / "train.csv"), "--out", str(tmp_path)]) == code


def test_io_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  'x': 1\n}")
    assert main(["train", "--config", str(bad)]) == EXIT_IO
    ragged = tmp_path / "r.csv"
    ragged.write_text("1,2,0\n1,0\n")
    assert main(["train", "--train", str(ragged), "--out", str(tmp_path)]) == EXIT_IO
    assert "r.csv:2" in capsys.readouterr().err
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.json"), "--data", str(ragged)]) == EXIT_IO


def test_usage_error_exits_2():
    assert main(["frobnicate"]) == EXIT_CONFIG
    assert main(["train", "--lr", "fast"]) == EXIT_CONFIG


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--batches", "8", "--seed", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS" in out and "l_div paper/exact: pairs=" in out


def test_gradcheck_without_lambda(capsys):
    assert main(["gradcheck", "--batches", "3", "--lambda", "0"]) == EXIT_OK
    assert "no pairs checked" in capsys.readouterr().out


def test_gradcheck_tolerance_failure_exits_1():
    assert main(["gradcheck", "--batches", "3", "--tolerance", "1e-15"]) == EXIT_CHECK


def test_eval_separable_and_baseline(tmp_path, capsys):
    cfg = write_json(tmp_path / "s.json", SEPARABLE)
    data = tmp_path / "d"
    assert main(["synth", "--config", cfg, "--seed", "2", "--out", str(data)]) == EXIT_OK
    out = tmp_path / "run"
    assert main(["train", "--train", str(data / "train.csv"), "--out", str(out), "--iterations", "300",
                 "--batch-size", "10", "--lr", "0.01", "--init-std", "fan_in", "--hinge", "--beta", "0"]) == EXIT_OK
    ckpt = str(out / "checkpoint.json")
    capsys.readouterr()
    assert main(["eval", "--checkpoint", ckpt, "--data", str(data / "train.csv"), "--baseline", ckpt,
                 "--out", str(tmp_path / "ev")]) == EXIT_OK
    text = capsys.readouterr().out
    assert "oa=1.000000" in text and "mcnemar_f=0.000000" in text
    assert json.loads((tmp_path / "ev" / "eval.json").read_text())["mcnemar_f"] == 0.0


def test_eval_dim_mismatch(tmp_path, two_class, capsys):
    out = _train(tmp_path, two_class, "run")
    wide = tmp_path / "wide.csv"
    wide.write_text("1,2,3,0\n4,5,6,1\n")
    assert main(["eval", "--checkpoint", str(out / "checkpoint.json"), "--data", str(wide)]) == EXIT_CONFIG
    assert "expected 2 features, found 3" in capsys.readouterr().err
