"""CLI pipeline tests run the real subcommands in-process via main()."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from drscreen.cli import main
from drscreen.dataset import ManifestEntry, DatasetManifest, Severity, save_manifest
from drscreen.synthetic import generate_corpus_files

TABLE_COUNTS = (1805, 370, 999, 193, 295)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def result_line(stdout: str, command: str) -> dict:
    for line in stdout.splitlines():
        if line.startswith(f"RESULT {command} "):
            return json.loads(line.split(" ", 2)[2])
    raise AssertionError(f"no RESULT line for {command} in {stdout!r}")


def write_counts_manifest(path: Path, counts) -> None:
    entries = []
    for label, count in enumerate(counts):
        for i in range(count):
            name = f"c{label}_{i:04d}"
            entries.append(ManifestEntry(name, f"images/{name}.ppm", Severity(label)))
    save_manifest(DatasetManifest(entries), path)


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    generate_corpus_files(root, n=80, side=64, seed=5)
    return root


def test_prepare_table2_targets(tmp_path, capsys):
    manifest = tmp_path / "m.csv"
    write_counts_manifest(manifest, TABLE_COUNTS)
    code, out, _ = run_cli(
        capsys,
        "prepare",
        "--manifest", str(manifest),
        "--out", str(tmp_path / "prep"),
        "--table2-targets",
    )
    assert code == 0
    summary = result_line(out, "prepare")
    assert summary["originals"] == list(TABLE_COUNTS)
    assert summary["synthetic"] == [0, 530, 201, 707, 705]
    assert summary["after_counts"] == [1805, 900, 1200, 900, 1000]
    assert summary["total_after"] == 5805
    assert (tmp_path / "prep" / "split.csv").is_file()
    assert (tmp_path / "prep" / "folds.csv").is_file()
    assert (tmp_path / "prep" / "plan.csv").is_file()


def test_prepare_is_idempotent_per_seed(tmp_path, capsys):
    manifest = tmp_path / "m.csv"
    write_counts_manifest(manifest, (30, 20, 10, 8, 6))
    for name in ("a", "b"):
        code, _, _ = run_cli(
            capsys,
            "prepare",
            "--manifest", str(manifest),
            "--out", str(tmp_path / name),
            "--seed", "42",
            "--folds", "5",
        )
        assert code == 0
    for fname in ("split.csv", "folds.csv"):
        assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()


def test_unknown_subcommand_exits_2(capsys):
    code, _, err = run_cli(capsys, "frobnicate")
    assert code == 2


def test_missing_required_flag_exits_2(capsys):
    code, _, _ = run_cli(capsys, "prepare", "--out", "/tmp/x")
    assert code == 2


def test_bench_resnet18_flops(tmp_path, capsys):
    code, out, _ = run_cli(
        capsys,
        "bench",
        "--config", "resnet18_226",
        "--input", "226x226",
        "--out", str(tmp_path / "bench.json"),
    )
    assert code == 0
    payload = result_line(out, "bench")
    assert abs(payload["total_macs"] - 1.8e9) / 1.8e9 <= 0.15
    saved = json.loads((tmp_path / "bench.json").read_text())
    assert saved["total_macs"] == payload["total_macs"]
    assert saved["convention"] == "MACs"


def test_bench_latency_runs(capsys):
    code, out, _ = run_cli(
        capsys, "bench", "--config", "micro", "--runs", "5", "--warmup", "2", "--seed", "3"
    )
    assert code == 0
    payload = result_line(out, "bench")
    lat = payload["latency"]
    assert lat["runs"] == 5
    assert lat["p50_ms"] <= lat["p95_ms"]
    # same seed, same checksum
    code, out2, _ = run_cli(
        capsys, "bench", "--config", "micro", "--runs", "5", "--warmup", "2", "--seed", "3"
    )
    assert result_line(out2, "bench")["latency"]["input_checksum"] == lat["input_checksum"]


def test_bench_needs_exactly_one_source(capsys):
    code, _, err = run_cli(capsys, "bench", "--config", "micro", "--model", "x.rcnn1")
    assert code == 2
    assert "exactly one" in err


def test_full_pipeline_train_quantize_eval_bench(corpus_dir, tmp_path, capsys):
    manifest = corpus_dir / "manifest.csv"
    model = tmp_path / "model.rcnn1"
    qmodel = tmp_path / "model.rcnq1"

    code, out, err = run_cli(
        capsys,
        "train",
        "--manifest", str(manifest),
        "--out", str(model),
        "--config", "micro",
        "--epochs", "2",
        "--batch-size", "16",
        "--seed", "1",
    )
    assert code == 0, err
    summary = result_line(out, "train")
    assert summary["epochs_run"] <= 2
    assert model.is_file()
    history = Path(summary["history"])
    assert history.is_file()
    rows = list(csv.reader(history.open()))
    assert rows[0] == ["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr"]

    code, out, err = run_cli(
        capsys,
        "quantize",
        "--model", str(model),
        "--manifest", str(manifest),
        "--out", str(qmodel),
        "--calib-count", "32",
    )
    assert code == 0, err
    qsummary = result_line(out, "quantize")
    assert qmodel.is_file()
    assert qsummary["size_ratio"] <= 0.30
    assert 0.0 <= qsummary["top1_agreement"] <= 1.0

    code, out, err = run_cli(
        capsys,
        "eval",
        "--manifest", str(manifest),
        "--qmodel", str(qmodel),
        "--out", str(tmp_path / "report.json"),
        "--seed", "0",
    )
    assert code == 0, err
    esummary = result_line(out, "eval")
    report = json.loads((tmp_path / "report.json").read_text())
    assert 0.0 <= report["overall_accuracy"] <= 1.0
    assert esummary["samples"] > 0

    code, out, err = run_cli(
        capsys, "bench", "--qmodel", str(qmodel), "--runs", "3"
    )
    assert code == 0, err
    assert "latency" in result_line(out, "bench")


def test_train_determinism_byte_identical_history(corpus_dir, tmp_path, capsys):
    manifest = corpus_dir / "manifest.csv"
    histories = []
    for name in ("m1", "m2"):
        model = tmp_path / f"{name}.rcnn1"
        code, _, err = run_cli(
            capsys,
            "train",
            "--manifest", str(manifest),
            "--out", str(model),
            "--config", "micro",
            "--epochs", "2",
            "--batch-size", "16",
            "--seed", "7",
        )
        assert code == 0, err
        histories.append((tmp_path / f"{name}.rcnn1.history.csv").read_bytes())
        assert model.read_bytes()
    assert histories[0] == histories[1]
    assert (tmp_path / "m1.rcnn1").read_bytes() == (tmp_path / "m2.rcnn1").read_bytes()


def test_eval_requires_exactly_one_model(corpus_dir, tmp_path, capsys):
    code, _, err = run_cli(
        capsys,
        "eval",
        "--manifest", str(corpus_dir / "manifest.csv"),
        "--out", str(tmp_path / "r.json"),
    )
    assert code == 2
    assert "exactly one" in err
