"""Modality-ablation harness: retrains the model per configuration with
identical seeds and schedules, then scores each variant on the same split.

Configurations: full, wo_video, wo_sensor, wo_text, simple_concat. A dropped
modality is zero-filled during training AND evaluation; wo_text additionally
trains without the explanation loss and reports no BLEU; simple_concat
bypasses the fusion projection (heads are sized to the raw concat width).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .config import FUSION_SIMPLE_CONCAT, ModelConfig, TrainConfig
from .training import evaluate_samples, train

ABLATION_ORDER = ("full", "wo_video", "wo_sensor", "wo_text", "simple_concat")

_SETUPS = {
    "full": {"drop": frozenset(), "explanation": True, "fusion_mode": None},
    "wo_video": {"drop": frozenset({"video"}), "explanation": True, "fusion_mode": None},
    "wo_sensor": {"drop": frozenset({"sensor"}), "explanation": True, "fusion_mode": None},
    "wo_text": {"drop": frozenset({"text"}), "explanation": False, "fusion_mode": None},
    "simple_concat": {"drop": frozenset(), "explanation": True, "fusion_mode": FUSION_SIMPLE_CONCAT},
}


@dataclass
class AblationResult:
    name: str
    accuracy: float | None
    bleu4: float | None  # None for wo_text (no explanation head trained)
    error: str | None = None

    def to_row(self):
        acc = "FAILED" if self.error else f"{100.0 * self.accuracy:.1f}"
        if self.error:
            bleu = "FAILED"
        else:
            bleu = "N/A" if self.bleu4 is None else f"{self.bleu4:.4f}"
        return f"{self.name},{acc},{bleu}"


def run_ablation(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    splits,
    samples_by_id: dict,
    configurations=ABLATION_ORDER,
    eval_split: str = "test",
):
    """Train and score every configuration; failures yield marked rows.

    Returns (results, checkpoints) in the requested configuration order.
    """
    eval_samples = [samples_by_id[i] for i in getattr(splits, eval_split)]
    results = []
    checkpoints = {}
    for name in configurations:
        if name not in _SETUPS:
            raise ValueError(f"unknown ablation configuration {name!r}; expected one of {ABLATION_ORDER}")
        setup = _SETUPS[name]
        cfg = model_cfg
        if setup["fusion_mode"]:
            cfg = dataclasses.replace(model_cfg, fusion_mode=setup["fusion_mode"])
        try:
            ckpt, _ = train(
                cfg,
                train_cfg,
                splits,
                samples_by_id,
                drop=setup["drop"],
                explanation=setup["explanation"],
            )
            ev = evaluate_samples(
                ckpt.params,
                ckpt.model_cfg,
                eval_samples,
                ckpt.vocab,
                ckpt.stats,
                drop=setup["drop"],
                with_bleu=setup["explanation"],
            )
            results.append(AblationResult(name=name, accuracy=ev["accuracy"], bleu4=ev["bleu4"]))
            checkpoints[name] = ckpt
        except Exception as exc:  # partial results with failure markers
            results.append(AblationResult(name=name, accuracy=None, bleu4=None, error=str(exc)))
    return results, checkpoints


def write_ablation_csv(results, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("configuration,accuracy_pct,bleu4\n")
        for res in results:
            fh.write(res.to_row() + "\n")
