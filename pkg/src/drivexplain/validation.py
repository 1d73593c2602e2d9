"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .scenarios import Sample


def check_samples(X) -> list:
    """Validate a sample collection and return it as a list."""
    samples = list(X)
    if not samples:
        raise ValueError("expected a non-empty collection of samples")
    for i, s in enumerate(samples):
        if not isinstance(s, Sample):
            raise TypeError(f"X[{i}] is {type(s).__name__}, expected Sample")
        s.validate()
    return samples


def check_labels(y, n: int) -> np.ndarray:
    labels = np.asarray(y, dtype=np.int64)
    if labels.shape != (n,):
        raise ValueError(f"y must have shape ({n},), got {labels.shape}")
    if labels.min() < 0 or labels.max() > 4:
        raise ValueError("labels must be action codes in [0, 4]")
    return labels


def check_is_fitted(estimator, attributes=("checkpoint_",)):
    missing = [a for a in attributes if not hasattr(estimator, a)]
    if missing:
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted yet; call fit() before using {missing[0]}"
        )
