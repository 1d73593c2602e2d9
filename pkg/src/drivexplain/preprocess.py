"""Input preprocessing: clip normalization, sensor standardization,
word-level tokenization, and dataset splitting.

Sensor statistics and the vocabulary are always fitted on the training split
only. The tokenizer is a word-level stand-in whose contract (reserved ids,
max length, truncation from the tail) any subword scheme could also satisfy.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass
from collections import Counter

import numpy as np

from .config import BOS, CLS, EOS, PAD, UNK

STD_FLOOR = 1e-8

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")

RESERVED_TOKENS = {"<pad>": PAD, "<bos>": BOS, "<eos>": EOS, "<unk>": UNK, "<cls>": CLS}


def resize_nearest(clip: np.ndarray, resolution: int) -> np.ndarray:
    """Nearest-neighbor resize of every frame to resolution x resolution."""
    _, h, w, _ = clip.shape
    if h == resolution and w == resolution:
        return clip
    rows = (np.arange(resolution) * h) // resolution
    cols = (np.arange(resolution) * w) // resolution
    return clip[:, rows][:, :, cols]


def normalize_clip(clip: np.ndarray, resolution: int | None = None) -> np.ndarray:
    """Scale raw 8-bit frames into [0, 1], resizing first if requested."""
    if clip.ndim != 4 or clip.shape[0] != 16:
        raise ValueError(f"clip must have shape (16, H, W, 3), got {clip.shape}")
    if clip.dtype != np.uint8:
        mx = float(clip.max()) if clip.size else 0.0
        mn = float(clip.min()) if clip.size else 0.0
        if mn < 0 or mx > 255:
            raise ValueError("raw clip values must lie in [0, 255]")
    if resolution is not None:
        clip = resize_nearest(clip, resolution)
    return clip.astype(np.float64) / 255.0


@dataclass(frozen=True)
class SensorStats:
    mean: np.ndarray  # (3,)
    std: np.ndarray  # (3,)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["mean"], dtype=np.float64), np.asarray(data["std"], dtype=np.float64))


def fit_sensor_stats(train_samples) -> SensorStats:
    """Per-channel mean and population std over the training split."""
    values = np.stack([s.sensor.as_array() for s in train_samples])
    if values.shape[0] < 2:
        raise ValueError("need at least 2 training samples to fit sensor stats")
    mean = values.mean(axis=0)
    std = values.std(axis=0)  # population std: matches unit variance literally
    floored = std < STD_FLOOR
    if floored.any():
        warnings.warn(
            f"constant sensor channel(s) {np.nonzero(floored)[0].tolist()}: std floored at {STD_FLOOR}",
            RuntimeWarning,
            stacklevel=2,
        )
        std = np.where(floored, STD_FLOOR, std)
    return SensorStats(mean=mean, std=std)


def apply_sensor_norm(reading, stats: SensorStats) -> np.ndarray:
    x = reading if isinstance(reading, np.ndarray) else reading.as_array()
    out = (x - stats.mean) / stats.std
    if not np.all(np.isfinite(out)):
        raise ValueError("normalized sensor reading is non-finite")
    return out


def invert_sensor_norm(z: np.ndarray, stats: SensorStats) -> np.ndarray:
    return z * stats.std + stats.mean


class Vocabulary:
    """token -> id map with fixed reserved ids PAD=0, BOS=1, EOS=2, UNK=3, CLS=4."""

    def __init__(self, token_to_id: dict):
        for tok, expected in RESERVED_TOKENS.items():
            if token_to_id.get(tok) != expected:
                raise ValueError(f"reserved token {tok} must map to id {expected}")
        ids = list(token_to_id.values())
        if len(set(ids)) != len(ids):
            raise ValueError("vocabulary ids must be unique")
        if sorted(ids) != list(range(len(ids))):
            raise ValueError("vocabulary ids must be contiguous from 0")
        self.token_to_id = dict(token_to_id)
        self.id_to_token = {i: t for t, i in token_to_id.items()}

    def __len__(self):
        return len(self.token_to_id)

    @property
    def size(self):
        return len(self.token_to_id)

    def id_for(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def to_json(self) -> str:
        return json.dumps(self.token_to_id, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        return cls(json.loads(text))

    def fingerprint(self) -> str:
        import hashlib

        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def word_tokens(text: str) -> list[str]:
    """Lowercase split on whitespace and punctuation boundaries."""
    return _TOKEN_RE.findall(text.lower())


def build_vocab(corpus, min_count: int = 1) -> Vocabulary:
    """Frequency-ordered vocabulary (count desc, then lexicographic)."""
    counts = Counter()
    n_texts = 0
    for text in corpus:
        n_texts += 1
        counts.update(word_tokens(text))
    if n_texts == 0 or not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    mapping = dict(RESERVED_TOKENS)
    for offset, tok in enumerate(kept):
        mapping[tok] = len(RESERVED_TOKENS) + offset
    return Vocabulary(mapping)


@dataclass
class TokenSequence:
    ids: np.ndarray  # (max_len,) int64, PAD-padded
    length: int  # number of non-PAD positions

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.ids.shape[0], dtype=bool)
        m[: self.length] = True
        return m

    def valid_ids(self) -> list[int]:
        return self.ids[: self.length].tolist()


def tokenize(text: str, vocab: Vocabulary, max_len: int = 50, add_cls: bool = False) -> TokenSequence:
    """Encode text, truncating from the tail so the leading tokens survive.

    add_cls=True produces encoder input ([CLS] w1 w2 ...); otherwise the
    sequence is framed for the decoder ([BOS] w1 ... [EOS]). Total length
    including special tokens never exceeds max_len.
    """
    words = word_tokens(text)
    if add_cls:
        body = [vocab.id_for(w) for w in words[: max_len - 1]]
        ids = [CLS] + body
    else:
        body = [vocab.id_for(w) for w in words[: max_len - 2]]
        ids = [BOS] + body + [EOS]
    length = len(ids)
    out = np.full(max_len, PAD, dtype=np.int64)
    out[:length] = ids
    return TokenSequence(ids=out, length=length)


def detokenize(seq: TokenSequence, vocab: Vocabulary) -> str:
    return ids_to_text(seq.valid_ids(), vocab)


def ids_to_text(ids, vocab: Vocabulary) -> str:
    words = [vocab.id_to_token[i] for i in ids if i not in (PAD, BOS, EOS, CLS)]
    return " ".join(words)


@dataclass
class SplitAssignment:
    train: list
    val: list
    test: list
    seed: int

    def to_dict(self):
        return {"train": self.train, "val": self.val, "test": self.test, "seed": self.seed}

    @classmethod
    def from_dict(cls, data):
        return cls(train=list(data["train"]), val=list(data["val"]), test=list(data["test"]), seed=data["seed"])


def split_dataset(sample_ids, seed: int) -> SplitAssignment:
    """Deterministic 80:20 train/test split, then 10% of train held out as val.

    Floors the 80% and 10% quotas; remainders accrue to test and train
    respectively (n=21,113 therefore yields the published 4,223 test
    samples). Validation keeps at least one sample so every split is
    populated for all n >= 10.
    """
    ids = list(sample_ids.sample_ids if hasattr(sample_ids, "sample_ids") else sample_ids)
    n = len(ids)
    if n < 10:
        raise ValueError(f"need at least 10 samples to populate all splits, got {n}")
    order = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, 0x5B111])).permutation(n)
    shuffled = [ids[i] for i in order]
    n_trainval = int(np.floor(0.8 * n))
    n_val = max(1, int(np.floor(0.1 * n_trainval)))
    val = shuffled[:n_val]
    train = shuffled[n_val:n_trainval]
    test = shuffled[n_trainval:]
    return SplitAssignment(train=train, val=val, test=test, seed=seed)
