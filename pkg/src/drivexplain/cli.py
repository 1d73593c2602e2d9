"""Command-line surface.

Every subcommand takes a JSON config file plus --seed / --out, and writes a
run_manifest.json into the output directory recording the config hash, the
dataset hash (when a dataset is involved), and the package version.

    drivexplain gen-data cfg.json --out data/
    drivexplain split cfg.json --seed 0 --out run/
    drivexplain train cfg.json --out run/
    drivexplain eval cfg.json --out run/
    drivexplain ablate cfg.json --out run/
    drivexplain explain cfg.json --out run/
    drivexplain grad-check cfg.json --out run/
    drivexplain report cfg.json --out run/
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, actions
from .ablation import ABLATION_ORDER, run_ablation, write_ablation_csv
from .config import ModelConfig, RenderConfig, TrainConfig
from .dataset import (
    DEFAULT_DISTRIBUTION,
    dataset_fingerprint,
    generate_dataset,
    load_dataset,
    read_manifest,
)
from .encoders import AttentionRecord, export_attention, text_encode, video_encode
from .errors import FingerprintMismatchError
from .metrics import (
    MetricsReport,
    confusion,
    action_distribution,
    write_confusion_csv,
    write_confusion_pgm,
    write_distribution_csv,
)
from .model import make_batch, forward
from .fusion import beam_search
from .layers import softmax
from .preprocess import SplitAssignment, ids_to_text, normalize_clip, split_dataset, tokenize, apply_sensor_norm
from .scenarios import Sample, SensorReading
from .training import (
    Checkpoint,
    evaluate_samples,
    grad_check,
    load_checkpoint,
    save_checkpoint,
    train,
)


def _sha256_of(data) -> str:
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode("utf-8")).hexdigest()


def _write_run_manifest(out: Path, command: str, cfg: dict, seed, dataset_path=None, extra=None):
    manifest = {
        "command": command,
        "seed": seed,
        "config": cfg,
        "config_sha256": _sha256_of(cfg),
        "dataset_sha256": dataset_fingerprint(dataset_path) if dataset_path else None,
        "code_version": __version__,
    }
    if extra:
        manifest.update(extra)
    (out / "run_manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1), encoding="utf-8")


def _load_samples(dataset_path):
    return {s.id: s for s in load_dataset(dataset_path)}


def _model_config(cfg: dict, seed) -> ModelConfig:
    model_cfg = ModelConfig.from_dict(cfg.get("model", {}))
    if seed is not None:
        model_cfg = dataclasses.replace(model_cfg, seed=seed)
    return model_cfg.validate()


def _train_config(cfg: dict, seed) -> TrainConfig:
    train_cfg = TrainConfig.from_dict(cfg.get("train", {}))
    if seed is not None:
        train_cfg = dataclasses.replace(train_cfg, shuffle_seed=seed)
    return train_cfg.validate()


def _splits(cfg: dict) -> SplitAssignment:
    return SplitAssignment.from_dict(json.loads(Path(cfg["splits"]).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_data(cfg: dict, seed, out: Path) -> dict:
    seed = cfg.get("seed", 0) if seed is None else seed
    render = RenderConfig(resolution=cfg.get("resolution", 64))
    manifest = generate_dataset(
        n=cfg["n"],
        seed=seed,
        out_path=out,
        distribution=cfg.get("distribution", DEFAULT_DISTRIBUTION),
        render_cfg=render,
    )
    _write_run_manifest(out, "gen-data", cfg, seed, dataset_path=out)
    return {"n": manifest.n, "class_counts": manifest.class_counts, "path": str(out)}


def cmd_split(cfg: dict, seed, out: Path) -> dict:
    seed = cfg.get("seed", 0) if seed is None else seed
    manifest = read_manifest(cfg["dataset"])
    assignment = split_dataset(manifest, seed)
    (out / "splits.json").write_text(
        json.dumps(assignment.to_dict(), sort_keys=True, indent=1), encoding="utf-8"
    )
    _write_run_manifest(out, "split", cfg, seed, dataset_path=cfg["dataset"])
    return {"train": len(assignment.train), "val": len(assignment.val), "test": len(assignment.test)}


def cmd_train(cfg: dict, seed, out: Path) -> dict:
    model_cfg = _model_config(cfg, seed)
    train_cfg = _train_config(cfg, seed)
    splits = _splits(cfg)
    samples = _load_samples(cfg["dataset"])
    drop = frozenset(cfg.get("drop_modalities", ()))
    ckpt, log = train(model_cfg, train_cfg, splits, samples, drop=drop, explanation="text" not in drop)
    save_checkpoint(ckpt, out / "checkpoint")
    log.to_jsonl(out / "train_log.jsonl")
    _write_run_manifest(out, "train", cfg, seed, dataset_path=cfg["dataset"])
    return {
        "best_epoch": ckpt.epoch,
        "val_accuracy": ckpt.metrics["val_accuracy"],
        "val_bleu4": ckpt.metrics["val_bleu4"],
        "checkpoint": str(out / "checkpoint"),
    }


def _emit_metrics(out: Path, ev: dict, config_fp: str, dataset_fp: str):
    labels = ev["labels"]
    cm = confusion(ev["predictions"], labels)
    report = MetricsReport(
        accuracy=ev["accuracy"],
        bleu4_corpus=ev["bleu4"],
        per_sentence_bleu=ev.get("per_sentence_bleu", []),
        confusion=cm,
        distribution=action_distribution(labels),
        config_fingerprint=config_fp,
        dataset_fingerprint=dataset_fp,
    )
    report.save(out / "metrics.json")
    write_confusion_csv(cm, out / "confusion.csv")
    write_confusion_pgm(cm, out / "confusion.pgm")
    write_distribution_csv(report.distribution, out / "distribution.csv")
    return report


def cmd_eval(cfg: dict, seed, out: Path) -> dict:
    ckpt = load_checkpoint(cfg["checkpoint"])
    splits = _splits(cfg)
    samples = _load_samples(cfg["dataset"])
    split_name = cfg.get("split", "test")
    subset = [samples[i] for i in getattr(splits, split_name)]
    drop = frozenset(cfg.get("drop_modalities", ()))
    ev = evaluate_samples(
        ckpt.params, ckpt.model_cfg, subset, ckpt.vocab, ckpt.stats,
        drop=drop, with_bleu=cfg.get("with_bleu", True) and "text" not in drop,
        beams=cfg.get("beams"),
    )
    report = _emit_metrics(out, ev, _sha256_of(cfg), dataset_fingerprint(cfg["dataset"]))
    _write_run_manifest(out, "eval", cfg, seed, dataset_path=cfg["dataset"])
    return {"split": split_name, "accuracy": report.accuracy, "bleu4": report.bleu4_corpus}


def cmd_ablate(cfg: dict, seed, out: Path) -> dict:
    model_cfg = _model_config(cfg, seed)
    train_cfg = _train_config(cfg, seed)
    splits = _splits(cfg)
    samples = _load_samples(cfg["dataset"])
    configurations = cfg.get("configurations", list(ABLATION_ORDER))
    results, checkpoints = run_ablation(
        model_cfg, train_cfg, splits, samples,
        configurations=configurations, eval_split=cfg.get("split", "test"),
    )
    write_ablation_csv(results, out / "ablation.csv")
    for name, ckpt in checkpoints.items():
        save_checkpoint(ckpt, out / name / "checkpoint")
    _write_run_manifest(out, "ablate", cfg, seed, dataset_path=cfg["dataset"])
    return {
        res.name: ("FAILED: " + res.error if res.error else {"accuracy": res.accuracy, "bleu4": res.bleu4})
        for res in results
    }


def _read_raw_sample(cfg: dict) -> Sample:
    meta = json.loads(Path(cfg["meta"]).read_text(encoding="utf-8"))
    payload = Path(cfg["frames"]).read_bytes()
    resolution = cfg.get("resolution") or round((len(payload) / (16 * 3)) ** 0.5)
    clip = np.frombuffer(payload, dtype=np.uint8).reshape(16, resolution, resolution, 3).copy()
    return Sample(
        id=meta.get("id", "raw"),
        clip=clip,
        sensor=SensorReading(**meta["sensor"]),
        description=meta["description"],
        action=actions.action_code(meta.get("action", "stop")),
        explanation=meta.get("explanation", "n/a"),
    )


def explain_sample(ckpt: Checkpoint, sample: Sample, beams=None, record_attention=False, drop=frozenset()):
    """Preprocess with the checkpoint's vocab/stats, run the model, decode.

    Returns the structured record plus (optionally) attention records.
    """
    t0 = time.perf_counter()
    cfg = ckpt.model_cfg
    params = ckpt.params
    batch = make_batch([sample], ckpt.vocab, ckpt.stats, cfg)
    out, _ = forward(params, cfg, batch, drop=drop, with_decoder=False)
    probs = softmax(out["action_logits"][0])
    best = beam_search(out["fused"][0], params, cfg, beams=beams)
    latency_ms = 1000.0 * (time.perf_counter() - t0)

    records = {}
    if record_attention:
        clip = normalize_clip(sample.clip, resolution=cfg.resolution)
        _, records["video"] = video_encode(clip, params, cfg, record=True)
        seq = tokenize(sample.description, ckpt.vocab, cfg.max_len, add_cls=True)
        _, records["text"] = text_encode(seq, params, cfg, record=True)

    record = {
        "sample_id": sample.id,
        "action": actions.action_name(int(np.argmax(probs))),
        "probabilities": {name: float(probs[i]) for i, name in enumerate(actions.ACTION_NAMES)},
        "explanation": ids_to_text(best.ids, ckpt.vocab),
        "explanation_logprob": best.logp,
        "latency_ms": latency_ms,
    }
    return record, records


def cmd_explain(cfg: dict, seed, out: Path) -> dict:
    ckpt = load_checkpoint(cfg["checkpoint"])
    expected_vocab = cfg.get("expected_vocab_fingerprint")
    if expected_vocab and expected_vocab != ckpt.vocab.fingerprint():
        raise FingerprintMismatchError(
            f"vocabulary fingerprint {expected_vocab} does not match checkpoint {ckpt.vocab.fingerprint()}"
        )
    from .training import _stats_fingerprint

    expected_stats = cfg.get("expected_stats_fingerprint")
    if expected_stats and expected_stats != _stats_fingerprint(ckpt.stats):
        raise FingerprintMismatchError("sensor-stats fingerprint does not match checkpoint")

    if "sample_id" in cfg:
        sample = next(iter(load_dataset(cfg["dataset"], ids=[cfg["sample_id"]])))
        dataset_path = cfg["dataset"]
    else:
        sample = _read_raw_sample(cfg)
        dataset_path = None
    record, attn = explain_sample(
        ckpt, sample,
        beams=cfg.get("beams"),
        record_attention=cfg.get("attention", False),
        drop=frozenset(cfg.get("drop_modalities", ())),
    )
    if attn:
        record["attention_files"] = []
        for rec in attn.values():
            record["attention_files"].extend(export_attention(rec, out))
    (out / "explanation.json").write_text(json.dumps(record, sort_keys=True, indent=1), encoding="utf-8")
    _write_run_manifest(out, "explain", cfg, seed, dataset_path=dataset_path)
    return record


def cmd_grad_check(cfg: dict, seed, out: Path) -> dict:
    from .dataset import plan_scenarios
    from .scenarios import generate_scenario
    from .preprocess import build_vocab, fit_sensor_stats

    seed = cfg.get("seed", 0) if seed is None else seed
    model_cfg = _model_config(cfg, seed)
    render = RenderConfig(resolution=model_cfg.resolution)
    n = cfg.get("probe_samples", 4)
    specs = plan_scenarios(max(n, 20), seed, DEFAULT_DISTRIBUTION)[:n]
    probe = [generate_scenario(spec, render) for spec in specs]
    for i, s in enumerate(probe):
        s.id = f"probe{i}"
    vocab = build_vocab([s.description for s in probe] + [s.explanation for s in probe])
    stats = fit_sensor_stats(probe)
    model_cfg = dataclasses.replace(model_cfg, vocab_size=len(vocab), dtype="float64")
    from .params import init_params

    params = init_params(model_cfg)
    batch = make_batch(probe, vocab, stats, model_cfg)
    report = grad_check(
        params, model_cfg, batch,
        coords_per_array=cfg.get("coords_per_array", 3),
        eps=cfg.get("eps", 1e-5),
        seed=seed,
    )
    worst = max(report.values(), key=lambda r: r["max_rel_err"])["max_rel_err"]
    payload = {"per_array": report, "max_rel_err": worst}
    (out / "grad_check.json").write_text(json.dumps(payload, sort_keys=True, indent=1), encoding="utf-8")
    _write_run_manifest(out, "grad-check", cfg, seed)
    return {"max_rel_err": worst, "arrays": len(report)}


def cmd_report(cfg: dict, seed, out: Path) -> dict:
    """Consolidate a run directory into loss curves and table analogues."""
    run = Path(cfg["run"])
    lines = ["# Run report", ""]
    produced = []

    log_path = run / "train_log.jsonl"
    if log_path.exists():
        iters = []
        epochs = []
        with open(log_path, encoding="utf-8") as fh:
            for raw in fh:
                rec = json.loads(raw)
                (iters if rec["type"] == "iteration" else epochs).append(rec)
        with open(out / "loss_curve.csv", "w", encoding="utf-8") as fh:
            fh.write("epoch,iteration,loss_total,loss_action,loss_explanation\n")
            for rec in iters:
                fh.write(
                    f"{rec['epoch']},{rec['iteration']},{rec['loss_total']!r},"
                    f"{rec['loss_action']!r},{rec['loss_explanation']!r}\n"
                )
        produced.append("loss_curve.csv")
        if iters:
            lines += [
                "## Training loss",
                "",
                f"- first iteration total loss: {iters[0]['loss_total']:.4f}",
                f"- last iteration total loss: {iters[-1]['loss_total']:.4f}",
                "",
            ]
        if epochs:
            lines.append("| epoch | train loss | val accuracy | val BLEU-4 |")
            lines.append("|---|---|---|---|")
            for rec in epochs:
                acc = "-" if rec["val_accuracy"] is None else f"{100 * rec['val_accuracy']:.1f}%"
                bleu = "-" if rec["val_bleu4"] is None else f"{rec['val_bleu4']:.4f}"
                lines.append(f"| {rec['epoch']} | {rec['train_loss']:.4f} | {acc} | {bleu} |")
            lines.append("")

    metrics_path = run / "metrics.json"
    if metrics_path.exists():
        data = json.loads(metrics_path.read_text(encoding="utf-8"))
        lines += [
            "## Evaluation",
            "",
            f"- accuracy: {100 * data['accuracy']:.1f}%",
            f"- corpus BLEU-4: {data['bleu4_corpus']}",
            "",
            "Normalized confusion matrix (%):",
            "",
        ]
        header = "| truth\\pred | " + " | ".join(actions.ACTION_NAMES) + " |"
        lines.append(header)
        lines.append("|" + "---|" * 6)
        for i, name in enumerate(actions.ACTION_NAMES):
            row = data["confusion"]["normalized_pct"][i]
            lines.append(f"| {name} | " + " | ".join(f"{v:.1f}" for v in row) + " |")
        lines.append("")
        dist = data["action_distribution"]
        lines.append("Action distribution: " + ", ".join(f"{k} {100 * v:.0f}%" for k, v in sorted(dist.items())))
        lines.append("")

    ablation_path = run / "ablation.csv"
    if ablation_path.exists():
        lines += ["## Ablations", "", "```", ablation_path.read_text(encoding="utf-8").rstrip(), "```", ""]

    (out / "report.md").write_text("\n".join(lines), encoding="utf-8")
    produced.append("report.md")
    _write_run_manifest(out, "report", cfg, seed)
    return {"produced": produced}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

COMMANDS = {
    "gen-data": cmd_gen_data,
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "explain": cmd_explain,
    "grad-check": cmd_grad_check,
    "report": cmd_report,
}


def run_command(command: str, cfg: dict, seed=None, out="run") -> dict:
    out_path = Path(out)
    out_path.mkdir(parents=True, exist_ok=True)
    return COMMANDS[command](cfg, seed, out_path)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="drivexplain", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the JSON config file")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    summary = run_command(args.command, cfg, seed=args.seed, out=args.out)
    json.dump(summary, sys.stdout, sort_keys=True, indent=1)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
