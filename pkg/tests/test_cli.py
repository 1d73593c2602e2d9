import json
from pathlib import Path

import numpy as np
import pytest

import drivexplain as dx
from drivexplain.cli import main, run_command
from drivexplain.errors import FingerprintMismatchError


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen-data -> split -> train -> eval over a small 16x16 dataset."""
    base = tmp_path_factory.mktemp("pipeline")
    data = base / "data"
    run = base / "run"
    run_command("gen-data", {"n": 40, "resolution": 16}, seed=8, out=data)
    run_command("split", {"dataset": str(data)}, seed=1, out=run)
    train_cfg = {
        "dataset": str(data),
        "splits": str(run / "splits.json"),
        "model": {"resolution": 16, "patch": 8, "d_v": 16, "d_t": 16, "d_fused": 16,
                  "d_dec": 16, "video_heads": 2, "text_heads": 2, "dec_heads": 2},
        "train": {"epochs": 2, "learning_rate": 1e-3},
    }
    run_command("train", train_cfg, seed=4, out=run)
    eval_cfg = {
        "dataset": str(data),
        "splits": str(run / "splits.json"),
        "checkpoint": str(run / "checkpoint"),
        "split": "test",
    }
    run_command("eval", eval_cfg, seed=4, out=run)
    return base, data, run, train_cfg, eval_cfg


def test_gen_data_writes_expected_layout(pipeline):
    _, data, *_ = pipeline
    assert (data / "manifest.json").exists()
    assert (data / "frames" / "s000000.rgb").exists()
    assert (data / "meta" / "s000000.json").exists()
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["schema_version"] == 1
    assert len(manifest["samples"]) == 40


def test_run_manifest_records_hashes(pipeline):
    _, data, run, *_ = pipeline
    manifest = json.loads((run / "run_manifest.json").read_text())
    assert manifest["code_version"] == dx.__version__
    assert manifest["config_sha256"]
    assert manifest["dataset_sha256"]
    from drivexplain.dataset import dataset_fingerprint

    assert manifest["dataset_sha256"] == dataset_fingerprint(data)


def test_eval_outputs_complete(pipeline):
    _, _, run, *_ = pipeline
    for name in ("metrics.json", "confusion.csv", "confusion.pgm", "distribution.csv", "train_log.jsonl"):
        assert (run / name).exists(), name
    metrics = json.loads((run / "metrics.json").read_text())
    assert set(metrics) >= {"accuracy", "bleu4_corpus", "confusion", "action_distribution"}
    assert list(metrics) == sorted(metrics)  # sorted keys for golden-file diffs


def test_explain_emits_structured_record(pipeline):
    base, data, run, *_ = pipeline
    out = base / "explain"
    record = run_command(
        "explain",
        {"checkpoint": str(run / "checkpoint"), "dataset": str(data),
         "sample_id": "s000002", "attention": True},
        seed=0,
        out=out,
    )
    assert record["sample_id"] == "s000002"
    assert record["action"] in dx.ACTION_NAMES
    assert abs(sum(record["probabilities"].values()) - 1.0) < 1e-5
    assert isinstance(record["explanation"], str)
    assert record["latency_ms"] > 0
    assert (out / "explanation.json").exists()
    attn = sorted(p.name for p in out.glob("attention_*.csv"))
    assert attn  # one file per (modality, layer)
    # every exported map is a normalized distribution
    for path in out.glob("attention_*.csv"):
        rows = path.read_text().splitlines()
        shape = tuple(int(v) for v in rows[0].split(","))
        grid = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        assert grid.shape == shape
        assert abs(grid.sum() - 1.0) < 1e-5


def test_explain_fingerprint_mismatch_rejected(pipeline):
    base, data, run, *_ = pipeline
    with pytest.raises(FingerprintMismatchError):
        run_command(
            "explain",
            {"checkpoint": str(run / "checkpoint"), "dataset": str(data),
             "sample_id": "s000002", "expected_vocab_fingerprint": "deadbeef"},
            seed=0,
            out=base / "explain_bad",
        )


def test_explain_from_raw_files(pipeline):
    base, data, run, *_ = pipeline
    record = run_command(
        "explain",
        {"checkpoint": str(run / "checkpoint"),
         "frames": str(data / "frames" / "s000005.rgb"),
         "meta": str(data / "meta" / "s000005.json")},
        seed=0,
        out=base / "explain_raw",
    )
    assert record["sample_id"] == "s000005"


def test_report_consolidates_run(pipeline):
    base, _, run, *_ = pipeline
    out = base / "report"
    summary = run_command("report", {"run": str(run)}, seed=0, out=out)
    assert "report.md" in summary["produced"]
    text = (out / "report.md").read_text()
    assert "Training loss" in text and "Evaluation" in text
    curve = (out / "loss_curve.csv").read_text().splitlines()
    assert curve[0].startswith("epoch,iteration")
    assert len(curve) > 2


def test_grad_check_command(tmp_path):
    out = tmp_path / "gc"
    summary = run_command(
        "grad-check",
        {"model": {"resolution": 16, "patch": 8, "d_v": 16, "d_t": 16, "d_fused": 16,
                   "d_dec": 16, "video_heads": 2, "text_heads": 2, "dec_heads": 2},
         "coords_per_array": 1, "probe_samples": 2},
        seed=0,
        out=out,
    )
    assert summary["max_rel_err"] < 1e-4
    payload = json.loads((out / "grad_check.json").read_text())
    assert payload["max_rel_err"] == summary["max_rel_err"]
    assert len(payload["per_array"]) == summary["arrays"]


def test_cli_main_entry(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"n": 20, "resolution": 16}))
    rc = main(["gen-data", str(cfg_path), "--seed", "3", "--out", str(tmp_path / "data")])
    assert rc == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["n"] == 20
    assert (tmp_path / "data" / "manifest.json").exists()


def test_ablate_command_small(tmp_path):
    data = tmp_path / "data"
    run = tmp_path / "run"
    run_command("gen-data", {"n": 30, "resolution": 16}, seed=2, out=data)
    run_command("split", {"dataset": str(data)}, seed=2, out=run)
    summary = run_command(
        "ablate",
        {"dataset": str(data), "splits": str(run / "splits.json"),
         "model": {"resolution": 16, "patch": 8, "d_v": 16, "d_t": 16, "d_fused": 16,
                   "d_dec": 16, "video_heads": 2, "text_heads": 2, "dec_heads": 2},
         "train": {"epochs": 1},
         "configurations": ["full", "wo_text", "simple_concat"]},
        seed=2,
        out=run,
    )
    assert set(summary) == {"full", "wo_text", "simple_concat"}
    assert summary["wo_text"]["bleu4"] is None
    rows = (run / "ablation.csv").read_text().splitlines()
    assert rows[0] == "configuration,accuracy_pct,bleu4"
    assert len(rows) == 4
    assert rows[2].startswith("wo_text,") and rows[2].endswith(",N/A")
    assert (run / "full" / "checkpoint" / "tensors.bin").exists()
