"""Modality fusion, the action head, and the conditioned explanation decoder.

Fusion concatenates the three modality features (absent ones zero-filled so
the concat width is constant across ablations) and projects through a ReLU
layer; ``simple_concat`` mode bypasses the projection and sizes both heads to
the raw concat width. The decoder is a causal transformer conditioned by
adding the projected fused vector to the input embedding at every position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import BOS, EOS, FUSION_SIMPLE_CONCAT, PAD, ModelConfig
from .layers import (
    block_bwd,
    block_fwd,
    causal_mask,
    linear_bwd,
    linear_fwd,
    log_softmax,
    relu_bwd,
    relu_fwd,
    softmax,
)

MODALITIES = ("video", "sensor", "text")


@dataclass
class FusedFeature:
    vector: np.ndarray
    present: tuple  # provenance flags (video, sensor, text)


@dataclass
class ActionDistribution:
    probs: np.ndarray
    logits: np.ndarray

    @property
    def argmax(self) -> int:
        # np.argmax breaks ties toward the lowest index
        return int(np.argmax(self.probs))


# ---------------------------------------------------------------------------
# fusion
# ---------------------------------------------------------------------------

def fuse_forward(v, s, t, params: dict, cfg: ModelConfig, drop=frozenset()):
    """Batched fuse: feature blocks (B, d_*) or None -> (B, fused_dim).

    ``drop`` lists modalities to zero-fill on top of any that arrive as None.
    """
    supplied = [x for x in (v, s, t) if x is not None]
    if not supplied:
        raise ValueError("at least one modality must be present")
    b = supplied[0].shape[0]
    dtype = params["action.W"].dtype
    blocks = []
    present = []
    for name, x, width in (("video", v, cfg.d_v), ("sensor", s, cfg.d_s), ("text", t, cfg.d_t)):
        if x is None or name in drop:
            blocks.append(np.zeros((b, width), dtype=dtype))
            present.append(False)
        else:
            blocks.append(x)
            present.append(True)
    if not any(present):
        raise ValueError("at least one modality must be present")
    cat = np.concatenate(blocks, axis=1)
    if cfg.fusion_mode == FUSION_SIMPLE_CONCAT:
        return cat, tuple(present), ("identity", None, None)
    z, c_lin = linear_fwd(cat, params["fusion.W"], params["fusion.b"])
    f, c_relu = relu_fwd(z)
    return f, tuple(present), ("full", c_lin, c_relu)


def fuse_backward(df, cache, grads: dict, cfg: ModelConfig):
    """Returns (dv, ds, dt) slices of the concat gradient."""
    mode, c_lin, c_relu = cache
    if mode == "identity":
        dcat = df
    else:
        dz = relu_bwd(df, c_relu)
        dcat, dW, db = linear_bwd(dz, c_lin)
        grads["fusion.W"] += dW
        grads["fusion.b"] += db
    dv = dcat[:, : cfg.d_v]
    ds = dcat[:, cfg.d_v : cfg.d_v + cfg.d_s]
    dt = dcat[:, cfg.d_v + cfg.d_s :]
    return dv, ds, dt


def fuse(v, s, t, params: dict, cfg: ModelConfig, drop=frozenset()) -> FusedFeature:
    """Fuse one sample's modality features (None marks an absent modality)."""
    args = [x if x is None else np.asarray(x, dtype=params["action.W"].dtype)[None] for x in (v, s, t)]
    f, present, _ = fuse_forward(*args, params=params, cfg=cfg, drop=drop)
    return FusedFeature(vector=f[0], present=present)


# ---------------------------------------------------------------------------
# action head
# ---------------------------------------------------------------------------

def action_forward(f: np.ndarray, params: dict):
    logits, cache = linear_fwd(f, params["action.W"], params["action.b"])
    return logits, cache


def predict_action(f, params: dict) -> ActionDistribution:
    vec = f.vector if isinstance(f, FusedFeature) else np.asarray(f)
    logits, _ = action_forward(vec[None].astype(params["action.W"].dtype), params)
    return ActionDistribution(probs=softmax(logits[0]), logits=logits[0])


# ---------------------------------------------------------------------------
# explanation decoder
# ---------------------------------------------------------------------------

def decoder_forward(f: np.ndarray, target_ids: np.ndarray, params: dict, cfg: ModelConfig):
    """Teacher-forced decode.

    f: (B, fused_dim); target_ids: (B, L) framed [BOS, w..., EOS, PAD...].
    Returns logits (B, L, V): position i predicts target_ids[:, i + 1].
    """
    if target_ids.shape[1] > cfg.max_len:
        raise ValueError(f"target length {target_ids.shape[1]} exceeds max_len {cfg.max_len}")
    dtype = params["decoder.tok"].dtype
    l = target_ids.shape[1]
    cond, c_cond = linear_fwd(f, params["cond.W"], params["cond.b"])
    emb = params["decoder.tok"][target_ids] + params["decoder.pos"][:l] + cond[:, None, :]
    mask = causal_mask(l, dtype)
    x = emb
    caches = []
    for i in range(cfg.dec_layers):
        x, _, cache = block_fwd(x, params, f"decoder.block{i}", cfg.dec_heads, attn_mask=mask)
        caches.append(cache)
    logits, c_out = linear_fwd(x, params["decoder.out.W"], params["decoder.out.b"])
    return logits, {"ids": target_ids, "cond": c_cond, "blocks": caches, "out": c_out, "length": l}


def decoder_backward(dlogits: np.ndarray, cache: dict, params: dict, grads: dict, cfg: ModelConfig):
    """Returns df, the gradient w.r.t. the fused feature batch."""
    dx, dWo, dbo = linear_bwd(dlogits, cache["out"])
    grads["decoder.out.W"] += dWo
    grads["decoder.out.b"] += dbo
    for i in reversed(range(cfg.dec_layers)):
        dx = block_bwd(dx, cache["blocks"][i], grads, f"decoder.block{i}")
    l = cache["length"]
    np.add.at(grads["decoder.tok"], cache["ids"].reshape(-1), dx.reshape(-1, dx.shape[-1]))
    grads["decoder.pos"][:l] += dx.sum(axis=0)
    dcond = dx.sum(axis=1)
    df, dWc, dbc = linear_bwd(dcond, cache["cond"])
    grads["cond.W"] += dWc
    grads["cond.b"] += dbc
    return df


def decode_teacher_forced(f, target, params: dict, cfg: ModelConfig) -> np.ndarray:
    """Single-sample teacher-forced logits over the full target frame."""
    vec = f.vector if isinstance(f, FusedFeature) else np.asarray(f)
    ids = target.ids if hasattr(target, "ids") else np.asarray(target, dtype=np.int64)
    logits, _ = decoder_forward(vec[None].astype(params["cond.W"].dtype), ids[None], params, cfg)
    return logits[0]


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def action_loss(dist, label: int) -> float:
    probs = dist.probs if isinstance(dist, ActionDistribution) else np.asarray(dist)
    return float(-np.log(probs[label]))


def explanation_loss(logits: np.ndarray, target) -> float:
    """Mean token-level cross-entropy over non-PAD target positions.

    logits[i] predicts target[i + 1]; PAD positions are excluded.
    """
    ids = target.ids if hasattr(target, "ids") else np.asarray(target, dtype=np.int64)
    next_ids = ids[1:]
    valid = next_ids != PAD
    logp = log_softmax(logits[: len(next_ids)])
    picked = logp[np.arange(len(next_ids)), next_ids]
    return float(-(picked[valid]).mean())


def total_loss(action_term: float, explanation_term: float) -> float:
    return action_term + explanation_term


def batch_action_loss_grad(logits: np.ndarray, labels: np.ndarray):
    """Batch-mean action cross-entropy and dloss/dlogits."""
    b = logits.shape[0]
    logp = log_softmax(logits)
    loss = float(-logp[np.arange(b), labels].mean())
    dlogits = softmax(logits)
    dlogits[np.arange(b), labels] -= 1.0
    return loss, dlogits / b


def batch_explanation_loss_grad(logits: np.ndarray, target_ids: np.ndarray):
    """Per-sample token-mean cross-entropy averaged over the batch, + grad."""
    b, l, _ = logits.shape
    next_ids = target_ids[:, 1:]
    valid = next_ids != PAD
    counts = valid.sum(axis=1)
    if np.any(counts == 0):
        raise ValueError("every target must contain at least one non-PAD position")
    pred = logits[:, : l - 1, :]
    logp = log_softmax(pred)
    rows = np.arange(b)[:, None], np.arange(l - 1)[None, :], next_ids
    picked = logp[rows]
    per_sample = -(picked * valid).sum(axis=1) / counts
    loss = float(per_sample.mean())

    dpred = softmax(pred)
    onehot_sub = np.zeros_like(dpred)
    onehot_sub[rows] = 1.0
    dpred = (dpred - onehot_sub) * valid[:, :, None]
    dpred /= counts[:, None, None] * b
    dlogits = np.zeros_like(logits)
    dlogits[:, : l - 1, :] = dpred
    return loss, dlogits


# ---------------------------------------------------------------------------
# beam search
# ---------------------------------------------------------------------------

@dataclass
class BeamHypothesis:
    ids: list  # token ids, starting with BOS
    logp: float
    finished: bool

    def sort_key(self):
        # best first: higher logp, then shorter, then lexicographic ids
        return (-self.logp, len(self.ids), tuple(self.ids))


def beam_search(
    f,
    params: dict | None = None,
    cfg: ModelConfig | None = None,
    beams: int | None = None,
    max_len: int | None = None,
    step_fn=None,
) -> BeamHypothesis:
    """Breadth-limited best-first decoding, no length penalty.

    Each step expands every live beam over the full vocabulary and keeps the
    top ``beams`` candidates by cumulative log-probability. A hypothesis
    finishes on EOS or at max_len; the best finished hypothesis wins, with
    ties broken toward shorter then lexicographically smaller sequences.

    step_fn, when given, replaces the model decoder: it maps a (B, L) prefix
    batch to (B, V) next-token log-probabilities.
    """
    beams = (cfg.beams if cfg is not None else None) if beams is None else beams
    max_len = (cfg.max_len if cfg is not None else None) if max_len is None else max_len
    if beams is None or max_len is None:
        raise ValueError("beams and max_len are required when no model config is given")
    if beams < 1:
        raise ValueError(f"beams must be >= 1, got {beams}")
    if step_fn is None:
        vec = f.vector if isinstance(f, FusedFeature) else np.asarray(f)
        vec = vec.astype(params["cond.W"].dtype)

        def step_fn(batch_ids):
            fb = np.repeat(vec[None], batch_ids.shape[0], axis=0)
            logits, _ = decoder_forward(fb, batch_ids, params, cfg)
            return log_softmax(logits[:, -1, :].astype(np.float64))

    live = [BeamHypothesis(ids=[BOS], logp=0.0, finished=False)]
    done: list[BeamHypothesis] = []
    while live:
        batch_ids = np.array([h.ids for h in live], dtype=np.int64)
        steplogp = step_fn(batch_ids)
        candidates = []
        for h, row in zip(live, steplogp):
            for tok in range(row.shape[0]):
                candidates.append(
                    BeamHypothesis(ids=h.ids + [tok], logp=h.logp + float(row[tok]), finished=tok == EOS)
                )
        candidates.sort(key=BeamHypothesis.sort_key)
        kept = candidates[:beams]
        live = []
        for h in kept:
            if h.finished:
                done.append(h)
            elif len(h.ids) >= max_len:
                h.finished = True
                done.append(h)
            else:
                live.append(h)
    return min(done, key=BeamHypothesis.sort_key)


def greedy_decode(f, params: dict, cfg: ModelConfig, max_len: int | None = None) -> BeamHypothesis:
    return beam_search(f, params, cfg, beams=1, max_len=max_len)
