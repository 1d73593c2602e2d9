"""Evaluation metrics and their file emitters.

BLEU-4 is implemented from first principles: modified n-gram precision with
reference clipping, uniform 1/4 weights, and the exp(1 - r/c) brevity
penalty. The corpus score is the headline number; per-sentence scores with
add-one smoothing on zero-numerator precisions are diagnostic only.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import actions


def accuracy(predictions, labels) -> float:
    """Exact fraction of correct predictions."""
    preds = list(predictions)
    labs = list(labels)
    if len(preds) != len(labs):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(labs)} labels")
    if not preds:
        raise ValueError("cannot score an empty prediction list")
    correct = sum(1 for p, y in zip(preds, labs) if p == y)
    return correct / len(preds)


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

def _as_tokens(text):
    return text.split() if isinstance(text, str) else list(text)


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped_counts(hyp_tokens, ref_tokens, n):
    hyp_ngrams = _ngrams(hyp_tokens, n)
    ref_ngrams = _ngrams(ref_tokens, n)
    matched = sum(min(c, ref_ngrams[g]) for g, c in hyp_ngrams.items())
    total = max(0, len(hyp_tokens) - n + 1)
    return matched, total


def brevity_penalty(c: int, r: int) -> float:
    if c == 0:
        return 0.0
    return math.exp(1.0 - r / c) if c < r else 1.0


def sentence_bleu(hypothesis, reference) -> float:
    """Diagnostic BLEU-4 with add-one smoothing on zero-numerator precisions."""
    hyp = _as_tokens(hypothesis)
    ref = _as_tokens(reference)
    log_sum = 0.0
    for n in range(1, 5):
        matched, total = _clipped_counts(hyp, ref, n)
        p = matched / total if matched > 0 else (matched + 1) / (total + 1)
        log_sum += 0.25 * math.log(p)
    return brevity_penalty(len(hyp), len(ref)) * math.exp(log_sum)


def bleu4(hypotheses, references):
    """Corpus BLEU-4 in [0, 1] plus the per-sentence smoothed diagnostics.

    Exactly one reference per hypothesis.
    """
    hyps = [_as_tokens(h) for h in hypotheses]
    refs = [_as_tokens(r) for r in references]
    if not hyps:
        raise ValueError("cannot score an empty hypothesis set")
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses vs {len(refs)} references")

    per_sentence = [sentence_bleu(h, r) for h, r in zip(hyps, refs)]

    log_sum = 0.0
    for n in range(1, 5):
        matched = total = 0
        for h, r in zip(hyps, refs):
            m, t = _clipped_counts(h, r, n)
            matched += m
            total += t
        if matched == 0 or total == 0:
            return 0.0, per_sentence
        log_sum += 0.25 * math.log(matched / total)
    c = sum(len(h) for h in hyps)
    r = sum(len(r_) for r_ in refs)
    return brevity_penalty(c, r) * math.exp(log_sum), per_sentence


def bleu4_corpus(hypotheses, references) -> float:
    score, _ = bleu4(hypotheses, references)
    return score


# ---------------------------------------------------------------------------
# confusion matrix / distribution
# ---------------------------------------------------------------------------

@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (5, 5) int, rows = truth, cols = prediction
    empty_rows: list = field(default_factory=list)

    @property
    def normalized(self) -> np.ndarray:
        """Row percentages; empty rows render as zeros (and are flagged)."""
        sums = self.counts.sum(axis=1, keepdims=True)
        safe = np.where(sums == 0, 1, sums)
        return 100.0 * self.counts / safe

    @property
    def accuracy(self) -> float:
        return int(np.trace(self.counts)) / int(self.counts.sum())

    def to_dict(self):
        return {
            "counts": self.counts.tolist(),
            "normalized_pct": self.normalized.tolist(),
            "empty_rows": self.empty_rows,
            "labels": list(actions.ACTION_NAMES),
        }


def confusion(predictions, labels) -> ConfusionMatrix:
    counts = np.zeros((actions.NUM_ACTIONS, actions.NUM_ACTIONS), dtype=np.int64)
    for p, y in zip(predictions, labels, strict=True):
        if not (0 <= y < actions.NUM_ACTIONS and 0 <= p < actions.NUM_ACTIONS):
            raise ValueError(f"label/prediction out of range: truth={y} pred={p}")
        counts[y, p] += 1
    empty = [i for i in range(actions.NUM_ACTIONS) if counts[i].sum() == 0]
    return ConfusionMatrix(counts=counts, empty_rows=empty)


def action_distribution(labels) -> dict:
    labs = list(labels)
    if not labs:
        raise ValueError("cannot compute a distribution over zero labels")
    n = len(labs)
    return {name: sum(1 for y in labs if y == code) / n for code, name in enumerate(actions.ACTION_NAMES)}


# ---------------------------------------------------------------------------
# report assembly and file emission
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    accuracy: float
    bleu4_corpus: float | None
    per_sentence_bleu: list
    confusion: ConfusionMatrix
    distribution: dict
    config_fingerprint: str
    dataset_fingerprint: str

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "bleu4_corpus": self.bleu4_corpus,
            "per_sentence_bleu": self.per_sentence_bleu,
            "confusion": self.confusion.to_dict(),
            "action_distribution": self.distribution,
            "config_fingerprint": self.config_fingerprint,
            "dataset_fingerprint": self.dataset_fingerprint,
        }

    def save(self, path):
        Path(path).write_text(
            json.dumps(self.to_dict(), sort_keys=True, indent=1), encoding="utf-8"
        )


def write_confusion_csv(cm: ConfusionMatrix, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("truth\\pred," + ",".join(actions.ACTION_NAMES) + "\n")
        for i, name in enumerate(actions.ACTION_NAMES):
            fh.write(name + "," + ",".join(str(int(c)) for c in cm.counts[i]) + "\n")
        fh.write("# normalized percentages\n")
        for i, name in enumerate(actions.ACTION_NAMES):
            fh.write(name + "," + ",".join(f"{v:.6f}" for v in cm.normalized[i]) + "\n")


def write_confusion_pgm(cm: ConfusionMatrix, path):
    """Grayscale heatmap of the normalized matrix, plain PGM (P2)."""
    norm = cm.normalized
    scaled = np.rint(norm * 255.0 / 100.0).astype(int)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("P2\n")
        fh.write(f"{norm.shape[1]} {norm.shape[0]}\n255\n")
        for row in scaled:
            fh.write(" ".join(str(v) for v in row) + "\n")


def write_distribution_csv(dist: dict, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("action,fraction\n")
        for name in actions.ACTION_NAMES:
            fh.write(f"{name},{dist[name]!r}\n")
