"""Training loop, Adam with decoupled weight decay, checkpoints, and the
finite-difference gradient verifier.

Every run is a pure function of (data, init seed, shuffle seed, config):
batches follow a seeded per-epoch reshuffle, gradient reduction order is
fixed, and the best checkpoint is selected by validation accuracy with ties
broken by validation BLEU-4 and then the earlier epoch.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ModelConfig, TrainConfig
from .errors import (
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from .fusion import beam_search
from .metrics import accuracy as accuracy_metric
from .metrics import bleu4
from .model import compute_loss, forward, loss_and_grads, make_batch, predict_batch
from .params import cast_params, init_params, is_decayed, zero_grads
from .preprocess import SensorStats, Vocabulary, build_vocab, fit_sensor_stats, ids_to_text

CHECKPOINT_FORMAT_VERSION = 1
EVAL_BATCH = 32


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

def adam_step(params: dict, grads: dict, moments, t: int, cfg: TrainConfig):
    """One bias-corrected Adam update (in place), decay decoupled.

    moments is the (m, v) dict pair; t is the 1-based step count after this
    update. Weight decay is subtracted as lr * wd * w and only touches 2-D
    weight matrices (never biases, gains, or embedding tables).
    """
    m, v = moments
    if set(params) != set(grads):
        raise ValueError("parameter/gradient name sets differ")
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name in sorted(params):
        g = grads[name]
        w = params[name]
        if g.shape != w.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {w.shape}")
        m[name] = b1 * m[name] + (1.0 - b1) * g
        v[name] = b2 * v[name] + (1.0 - b2) * g * g
        update = cfg.learning_rate * (m[name] / c1) / (np.sqrt(v[name] / c2) + cfg.eps)
        if cfg.weight_decay > 0 and is_decayed(name, w.shape):
            update = update + cfg.learning_rate * cfg.weight_decay * w
        params[name] = w - update
    return params, (m, v)


def init_moments(params: dict):
    return zero_grads(params), zero_grads(params)


# ---------------------------------------------------------------------------
# train log
# ---------------------------------------------------------------------------

@dataclass
class TrainLog:
    iterations: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    wall_clock: float = 0.0

    def log_iteration(self, epoch, iteration, losses):
        self.iterations.append(
            {
                "type": "iteration",
                "epoch": epoch,
                "iteration": iteration,
                "loss_total": losses["total"],
                "loss_action": losses["action"],
                "loss_explanation": losses["explanation"],
            }
        )

    def log_epoch(self, epoch, train_loss, val_accuracy, val_bleu4, seconds):
        self.epochs.append(
            {
                "type": "epoch",
                "epoch": epoch,
                "train_loss": train_loss,
                "val_accuracy": val_accuracy,
                "val_bleu4": val_bleu4,
                "seconds": seconds,
            }
        )

    def to_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.iterations:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            for rec in self.epochs:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# evaluation helpers
# ---------------------------------------------------------------------------

def predict_actions(params, cfg, samples, vocab, stats, drop=frozenset()):
    preds = []
    for lo in range(0, len(samples), EVAL_BATCH):
        batch = make_batch(samples[lo : lo + EVAL_BATCH], vocab, stats, cfg)
        logits, _ = predict_batch(params, cfg, batch, drop=drop)
        preds.extend(int(i) for i in np.argmax(logits, axis=1))
    return preds


def decode_explanations(params, cfg, samples, vocab, stats, drop=frozenset(), beams=None):
    hyps = []
    for lo in range(0, len(samples), EVAL_BATCH):
        batch = make_batch(samples[lo : lo + EVAL_BATCH], vocab, stats, cfg)
        out, _ = forward(params, cfg, batch, drop=drop, with_decoder=False)
        for row in out["fused"]:
            best = beam_search(row, params, cfg, beams=beams)
            hyps.append(ids_to_text(best.ids, vocab))
    return hyps


def evaluate_samples(params, cfg, samples, vocab, stats, drop=frozenset(), with_bleu=True, beams=None):
    """Accuracy (and optionally corpus BLEU-4) over a sample list."""
    labels = [s.action for s in samples]
    preds = predict_actions(params, cfg, samples, vocab, stats, drop=drop)
    result = {
        "accuracy": accuracy_metric(preds, labels),
        "predictions": preds,
        "labels": labels,
    }
    if with_bleu:
        hyps = decode_explanations(params, cfg, samples, vocab, stats, drop=drop, beams=beams)
        refs = [s.explanation for s in samples]
        corpus, per_sentence = bleu4(hyps, refs)
        result.update({"bleu4": corpus, "per_sentence_bleu": per_sentence, "hypotheses": hyps, "references": refs})
    else:
        result.update({"bleu4": None})
    return result


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    params: dict
    moments: tuple  # (m, v)
    adam_t: int
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    epoch: int
    metrics: dict
    vocab: Vocabulary
    stats: SensorStats
    format_version: int = CHECKPOINT_FORMAT_VERSION


def _array_entries(ckpt: Checkpoint):
    m, v = ckpt.moments
    named = [("param/" + k, arr) for k, arr in ckpt.params.items()]
    named += [("adam_m/" + k, arr) for k, arr in m.items()]
    named += [("adam_v/" + k, arr) for k, arr in v.items()]
    return sorted(named, key=lambda kv: kv[0])


def save_checkpoint(ckpt: Checkpoint, path):
    """Write checkpoint.json + tensors.bin (little-endian, manifest order)."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    blobs = []
    for name, arr in _array_entries(ckpt):
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        blob = le.tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": str(arr.dtype),
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    manifest = {
        "format_version": ckpt.format_version,
        "epoch": ckpt.epoch,
        "adam_t": ckpt.adam_t,
        "metrics": ckpt.metrics,
        "model_config": ckpt.model_cfg.to_dict(),
        "train_config": ckpt.train_cfg.to_dict(),
        "vocab": ckpt.vocab.token_to_id,
        "sensor_stats": ckpt.stats.to_dict(),
        "fingerprints": {"vocab": ckpt.vocab.fingerprint(), "sensor_stats": _stats_fingerprint(ckpt.stats)},
        "arrays": entries,
    }
    (out / "checkpoint.json").write_text(json.dumps(manifest, sort_keys=True, indent=1), encoding="utf-8")
    (out / "tensors.bin").write_bytes(b"".join(blobs))
    return out


def _stats_fingerprint(stats: SensorStats) -> str:
    import hashlib

    return hashlib.sha256(json.dumps(stats.to_dict(), sort_keys=True).encode()).hexdigest()


def load_checkpoint(path) -> Checkpoint:
    root = Path(path)
    manifest = json.loads((root / "checkpoint.json").read_text(encoding="utf-8"))
    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version!r} unsupported (expected {CHECKPOINT_FORMAT_VERSION})"
        )
    blob = (root / "tensors.bin").read_bytes()
    arrays = {}
    for entry in manifest["arrays"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        want = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if want != entry["nbytes"]:
            raise CheckpointShapeError(
                f"{entry['name']}: shape {shape} x {dtype} needs {want} bytes, manifest records {entry['nbytes']}"
            )
        end = entry["offset"] + entry["nbytes"]
        if end > len(blob):
            raise CheckpointTruncatedError(
                f"{entry['name']}: needs bytes up to {end}, tensors.bin holds {len(blob)}"
            )
        arrays[entry["name"]] = (
            np.frombuffer(blob, dtype=dtype.newbyteorder("<"), count=int(np.prod(shape, dtype=np.int64)), offset=entry["offset"])
            .reshape(shape)
            .astype(dtype)
        )
    params = {k[len("param/") :]: v for k, v in arrays.items() if k.startswith("param/")}
    m = {k[len("adam_m/") :]: v for k, v in arrays.items() if k.startswith("adam_m/")}
    v2 = {k[len("adam_v/") :]: v for k, v in arrays.items() if k.startswith("adam_v/")}
    return Checkpoint(
        params=params,
        moments=(m, v2),
        adam_t=manifest["adam_t"],
        model_cfg=ModelConfig.from_dict(manifest["model_config"]),
        train_cfg=TrainConfig.from_dict(manifest["train_config"]),
        epoch=manifest["epoch"],
        metrics=manifest["metrics"],
        vocab=Vocabulary(manifest["vocab"]),
        stats=SensorStats.from_dict(manifest["sensor_stats"]),
        format_version=version,
    )


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _copy_params(params: dict) -> dict:
    return {k: v.copy() for k, v in params.items()}


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    splits,
    samples_by_id: dict,
    drop=frozenset(),
    explanation: bool = True,
    init_seed: int | None = None,
):
    """Run the full schedule; returns (best Checkpoint, TrainLog).

    Vocabulary and sensor stats are fitted on the train split only. The
    checkpoint with the highest validation accuracy wins (ties: higher
    validation BLEU-4, then earlier epoch).
    """
    t_start = time.perf_counter()
    train_cfg.validate()
    train_samples = [samples_by_id[i] for i in splits.train]
    val_samples = [samples_by_id[i] for i in splits.val]

    corpus = [s.description for s in train_samples] + [s.explanation for s in train_samples]
    vocab = build_vocab(corpus)
    stats = fit_sensor_stats(train_samples)
    cfg = dataclasses.replace(model_cfg, vocab_size=len(vocab)).validate()
    params = init_params(cfg, seed=cfg.seed if init_seed is None else init_seed)
    moments = init_moments(params)

    log = TrainLog()
    best = None
    best_key = None
    adam_t = 0
    n_train = len(train_samples)
    bs = train_cfg.batch_size

    for epoch in range(1, train_cfg.epochs + 1):
        e_start = time.perf_counter()
        order = np.random.default_rng(
            np.random.SeedSequence([train_cfg.shuffle_seed & 0xFFFFFFFFFFFFFFFF, epoch])
        ).permutation(n_train)
        epoch_losses = []
        for it, lo in enumerate(range(0, n_train, bs)):
            chunk = [train_samples[i] for i in order[lo : lo + bs]]
            batch = make_batch(chunk, vocab, stats, cfg)
            losses, grads = loss_and_grads(params, cfg, batch, drop=drop, explanation=explanation)
            if not np.isfinite(losses["total"]):
                raise RuntimeError(
                    f"non-finite loss {losses['total']} at epoch {epoch} iteration {it} "
                    f"(samples {batch['ids']})"
                )
            adam_t += 1
            adam_step(params, grads, moments, adam_t, train_cfg)
            log.log_iteration(epoch, it, losses)
            epoch_losses.append(losses["total"])

        val_acc = val_bleu = None
        if val_samples and epoch % train_cfg.eval_every == 0:
            ev = evaluate_samples(params, cfg, val_samples, vocab, stats, drop=drop, with_bleu=explanation)
            val_acc = ev["accuracy"]
            val_bleu = ev["bleu4"]
        log.log_epoch(epoch, float(np.mean(epoch_losses)), val_acc, val_bleu, time.perf_counter() - e_start)

        key = (
            val_acc if val_acc is not None else -1.0,
            val_bleu if val_bleu is not None else -1.0,
            -epoch,
        )
        if best_key is None or key > best_key:
            best_key = key
            best = Checkpoint(
                params=_copy_params(params),
                moments=(_copy_params(moments[0]), _copy_params(moments[1])),
                adam_t=adam_t,
                model_cfg=cfg,
                train_cfg=train_cfg,
                epoch=epoch,
                metrics={"val_accuracy": val_acc, "val_bleu4": val_bleu},
                vocab=vocab,
                stats=stats,
            )

    log.wall_clock = time.perf_counter() - t_start
    if train_cfg.checkpoint_dir:
        save_checkpoint(best, train_cfg.checkpoint_dir)
    return best, log


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

def grad_check(
    params: dict,
    cfg: ModelConfig,
    batch: dict,
    coords_per_array: int = 3,
    eps: float = 1e-5,
    seed: int = 0,
    names=None,
    drop=frozenset(),
    explanation: bool = True,
    grad_transform=None,
):
    """Central-difference check of every named gradient array (float64).

    Returns {name: {"max_rel_err": float, "checked": int}}. grad_transform,
    if given, may corrupt the analytic gradients (detector self-test).
    """
    cfg64 = dataclasses.replace(cfg, dtype="float64")
    p64 = cast_params(params, np.float64)
    batch = dict(batch)
    batch["clips"] = batch["clips"].astype(np.float64)
    batch["sensors"] = batch["sensors"].astype(np.float64)

    _, grads = loss_and_grads(p64, cfg64, batch, drop=drop, explanation=explanation)
    if grad_transform is not None:
        grads = grad_transform(grads)

    def loss_at(p):
        return compute_loss(p, cfg64, batch, drop=drop, explanation=explanation)["total"]

    rng = np.random.default_rng(seed)
    report = {}
    for name in sorted(p64) if names is None else sorted(names):
        arr = p64[name]
        k = min(coords_per_array, arr.size)
        flat_idx = rng.choice(arr.size, size=k, replace=False)
        max_rel = 0.0
        for fi in flat_idx:
            idx = np.unravel_index(fi, arr.shape)
            orig = arr[idx]
            arr[idx] = orig + eps
            up = loss_at(p64)
            arr[idx] = orig - eps
            down = loss_at(p64)
            arr[idx] = orig
            numeric = (up - down) / (2.0 * eps)
            analytic = grads[name][idx]
            denom = max(abs(analytic), abs(numeric))
            rel = 0.0 if denom < 1e-10 else abs(analytic - numeric) / denom
            max_rel = max(max_rel, rel)
        report[name] = {"max_rel_err": max_rel, "checked": int(k)}
    return report
