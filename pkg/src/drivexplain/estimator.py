"""Scikit-learn style estimator wrapping the full train/predict/explain
pipeline, so the model composes with sklearn tooling (clone, grid search,
cross-validation over sample lists).

X is a list of Sample records; y defaults to the action labels embedded in
the samples. Fitted state lives in trailing-underscore attributes.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator

from .config import TrainConfig, toy_model_config
from .model import make_batch, predict_batch
from .layers import softmax
from .training import decode_explanations, evaluate_samples, train
from .validation import check_is_fitted, check_labels, check_samples


class DrivingExplainer(BaseEstimator):
    """Multimodal action classifier with a natural-language explanation head.

    Parameters
    ----------
    model_config : ModelConfig, optional
        Architecture settings; defaults to the toy preset.
    train_config : TrainConfig, optional
        Optimization schedule; defaults to the standard recipe
        (Adam 1e-4, weight decay 1e-5, batch 4, 5 epochs).
    val_fraction : float
        Fraction of the fit data held out for checkpoint selection when no
        explicit validation set is passed.
    drop_modalities : tuple
        Modalities to zero-fill during fit and inference (ablation studies).
    seed : int
        Controls initialization, shuffling, and the internal validation split.
    """

    def __init__(self, model_config=None, train_config=None, val_fraction=0.1, drop_modalities=(), seed=0):
        self.model_config = model_config
        self.train_config = train_config
        self.val_fraction = val_fraction
        self.drop_modalities = drop_modalities
        self.seed = seed

    # -- helpers -----------------------------------------------------------

    def _configs(self):
        model_cfg = self.model_config if self.model_config is not None else toy_model_config()
        model_cfg = dataclasses.replace(model_cfg, seed=self.seed).validate()
        train_cfg = self.train_config if self.train_config is not None else TrainConfig()
        train_cfg = dataclasses.replace(train_cfg, shuffle_seed=self.seed).validate()
        return model_cfg, train_cfg

    # -- sklearn surface ----------------------------------------------------

    def fit(self, X, y=None, val=None):
        """Train on X; val (list of Sample) overrides the internal split."""
        samples = check_samples(X)
        if y is not None:
            labels = check_labels(y, len(samples))
            samples = [dataclasses.replace(s, action=int(lab)) for s, lab in zip(samples, labels)]
        model_cfg, train_cfg = self._configs()

        if val is not None:
            val_samples = check_samples(val)
            train_ids = [s.id for s in samples]
            val_ids = [s.id for s in val_samples]
            by_id = {s.id: s for s in samples + val_samples}
        else:
            by_id = {s.id: s for s in samples}
            if len(by_id) != len(samples):
                raise ValueError("sample ids must be unique")
            n_val = max(1, int(self.val_fraction * len(samples)))
            order = np.random.default_rng(self.seed).permutation(len(samples))
            val_ids = [samples[i].id for i in order[:n_val]]
            train_ids = [samples[i].id for i in order[n_val:]]

        splits = _Splits(train=train_ids, val=val_ids)
        drop = frozenset(self.drop_modalities)
        self.checkpoint_, self.train_log_ = train(
            model_cfg, train_cfg, splits, by_id, drop=drop, explanation="text" not in drop
        )
        self.classes_ = np.arange(self.checkpoint_.model_cfg.num_actions)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self)
        samples = check_samples(X)
        logits = self._logits(samples)
        return np.argmax(logits, axis=1)

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self)
        samples = check_samples(X)
        return softmax(self._logits(samples))

    def explain(self, X, beams=None) -> list:
        """Beam-decoded explanation strings, one per sample."""
        check_is_fitted(self)
        samples = check_samples(X)
        ckpt = self.checkpoint_
        return decode_explanations(
            ckpt.params, ckpt.model_cfg, samples, ckpt.vocab, ckpt.stats,
            drop=frozenset(self.drop_modalities), beams=beams,
        )

    def score(self, X, y=None) -> float:
        """Action-prediction accuracy."""
        samples = check_samples(X)
        labels = check_labels(y, len(samples)) if y is not None else [s.action for s in samples]
        preds = self.predict(samples)
        return float(np.mean(np.asarray(labels) == preds))

    def evaluate(self, X, with_bleu=True) -> dict:
        """Full metrics dict (accuracy, BLEU-4, predictions, hypotheses)."""
        check_is_fitted(self)
        samples = check_samples(X)
        ckpt = self.checkpoint_
        return evaluate_samples(
            ckpt.params, ckpt.model_cfg, samples, ckpt.vocab, ckpt.stats,
            drop=frozenset(self.drop_modalities), with_bleu=with_bleu,
        )

    def _logits(self, samples):
        ckpt = self.checkpoint_
        chunks = []
        for lo in range(0, len(samples), 32):
            batch = make_batch(samples[lo : lo + 32], ckpt.vocab, ckpt.stats, ckpt.model_cfg)
            logits, _ = predict_batch(ckpt.params, ckpt.model_cfg, batch, drop=frozenset(self.drop_modalities))
            chunks.append(logits)
        return np.concatenate(chunks, axis=0)


class _Splits:
    """Minimal split container matching the training loop's expectations."""

    def __init__(self, train, val, test=()):
        self.train = list(train)
        self.val = list(val)
        self.test = list(test)
