import json
import subprocess
import sys

import pytest

from weakvid.cli import build_parser, main

SYNTH_SET = ["--set", "n_classes=3", "--set", "videos_per_class=4", "--set", "frames_per_video=6",
             "--set", "frame_width=40", "--set", "frame_height=32", "--set", "patch_width=14",
             "--set", "patch_height=16"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    steps = [
        ["synth", "-o", d / "corpus", "--seed", 5, *SYNTH_SET],
        ["ingest", "--detections", d / "corpus/detections.jsonl", "--manifest", d / "corpus/manifest.csv",
         "-o", d / "best.jsonl"],
        ["build", "--variant", "roi,s0", "--manifest", d / "corpus/manifest.csv",
         "--detections", d / "best.jsonl", "-o", d / "ds"],
        ["split", "--mode", "video", "--manifest", d / "corpus/manifest.csv", "-o", d / "split.json"],
        ["split", "--mode", "kfold", "--dataset", d / "ds/dataset.json", "--k", 3, "-o", d / "folds.json"],
        ["features", "--dataset", d / "ds/dataset.json", "-o", d / "feat.csv"],
        ["fit", "--features", d / "feat.csv", "--algo", "rf", "--param", "n_trees=5", "--split", d / "split.json",
         "--png", "-o", d / "fit"],
        ["cross-validate", "--features", d / "feat.csv", "--algo", "knn", "--param", "k=1",
         "--folds", d / "folds.json", "-o", d / "cv.json"],
        ["train-nn", "--dataset", d / "ds/dataset.json", "--split", d / "split.json", "--epochs", 2,
         "--input-size", 16, "--widths", "4,8", "--batch-size", 8, "-o", d / "nn"],
        ["eval", "--model", d / "fit/model.json", "--features", d / "feat.csv", "--split", d / "split.json",
         "-o", d / "eval"],
        ["eval", "--checkpoint", d / "nn", "--dataset", d / "ds/dataset.json", "-o", d / "eval_nn"],
        ["report", d / "fit/result.json", d / "cv.json", d / "nn/result.json", "-o", d / "report"],
    ]
    for argv in steps:
        assert run(*argv) == 0, argv
    return d, steps


def test_pipeline_outputs(pipeline):
    d, _ = pipeline
    for rel in ("corpus/manifest.csv", "best.jsonl", "best.jsonl.json", "ds/dataset.json", "feat.csv", "feat.json",
                "fit/model.json", "fit/result.json", "fit/confusion_test.csv", "fit/confusion_test.png",
                "nn/weights.npz", "nn/checkpoint.json", "nn/curves.csv", "eval/predictions.csv",
                "eval/metrics.json", "eval_nn/confusion.csv", "report/report.txt", "report/report.csv",
                "report/report.json"):
        assert (d / rel).is_file(), rel
    fit_doc = json.loads((d / "fit/result.json").read_text())
    assert fit_doc["dataset"] == "ROI,S0" and fit_doc["command"]["subcommand"] == "fit"
    assert set(fit_doc["parts"]) == {"train", "val", "test"}
    ev = json.loads((d / "eval/metrics.json").read_text())
    assert ev["metrics"]["accuracy"] == fit_doc["parts"]["test"]["accuracy"]
    cv = json.loads((d / "cv.json").read_text())
    assert cv["protocol"] == "cv" and cv["folds"]["k"] == 3
    text = (d / "report/report.txt").read_text()
    assert "RF" in text and "KNN" in text and "CNN-fine_tune-ce" in text
    assert json.loads((d / "split.json").read_text())["command"]["mode"] == "video"


def test_reruns_are_byte_identical(pipeline):
    d, steps = pipeline
    files = [p for p in sorted(d.rglob("*")) if p.is_file()]
    before = {p: p.read_bytes() for p in files}
    for argv in steps:
        assert run(*argv) == 0
    changed = [str(p.relative_to(d)) for p in files if p.read_bytes() != before[p]]
    assert changed == []


def test_module_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "d.jsonl"
    bad.write_text('{"video_id": "a", "frame": 0, "bbox": [0, 0, 5, 5], "score": 2.0}\n')
    assert run("ingest", "--detections", bad, "-o", tmp_path / "o.jsonl") == 1
    line = capsys.readouterr().err.strip().splitlines()[-1]
    assert line.startswith("error: ")
    doc = json.loads(line[len("error: "):])
    assert doc["module"] == "ingest" and doc["error"] == "ScoreOutOfRange" and doc["message"]


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["ingest", "--detections", "/nonexistent/file.jsonl", "-o", "x"],
    ["build", "--variant", "box,s0", "--manifest", __file__, "--detections", __file__, "-o", "x"],
    ["split", "--mode", "video", "--manifest", __file__, "--ratios", "0.5,0.5"],
])
def test_usage_errors_exit_two(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_kfold_without_dataset_is_usage_error(tmp_path):
    assert run("split", "--mode", "kfold", "--manifest", __file__, "-o", tmp_path / "f.json") == 2


@pytest.mark.parametrize("command, flags", [
    ("train-nn", ["--mode", "--loss", "--epochs", "--lr", "--lr-step", "--batch-size", "--seed", "--threads"]),
    ("features", ["--hist-bins", "--hist-mode", "--glcm-levels", "--hu-log"]),
    ("split", ["--mode", "--ratios", "--k", "--seed"]),
])
def test_help_lists_flags(command, flags, capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args([command, "--help"])
    out = capsys.readouterr().out
    assert all(f in out for f in flags)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "weakvid", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip().endswith("0.1.0")
