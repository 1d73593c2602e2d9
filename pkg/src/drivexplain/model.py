"""Joint forward/backward over preprocessed batches, plus batch assembly.

A preprocessed batch is a dict of arrays:

    clips    (B, 16, H, W, 3) in [0, 1], model dtype
    sensors  (B, 3) standardized
    desc_ids (B, L) with leading CLS, desc_valid (B, L) bool
    expl_ids (B, L) framed [BOS ... EOS PAD...]
    labels   (B,) action codes

Dropped modalities are skipped entirely (their features are zero-filled by
the fusion layer and their parameters receive zero gradient).
"""

from __future__ import annotations

import numpy as np

from .config import ModelConfig
from .encoders import (
    sensor_forward,
    sensor_backward,
    text_forward,
    text_backward,
    video_forward,
    video_backward,
)
from .fusion import (
    action_forward,
    batch_action_loss_grad,
    batch_explanation_loss_grad,
    decoder_backward,
    decoder_forward,
    fuse_backward,
    fuse_forward,
)
from .layers import linear_bwd
from .params import zero_grads
from .preprocess import SensorStats, Vocabulary, apply_sensor_norm, normalize_clip, tokenize


def make_batch(samples, vocab: Vocabulary, stats: SensorStats, cfg: ModelConfig) -> dict:
    """Preprocess raw samples into model-ready arrays."""
    dtype = cfg.np_dtype()
    clips = np.stack([normalize_clip(s.clip, resolution=cfg.resolution) for s in samples]).astype(dtype)
    sensors = np.stack([apply_sensor_norm(s.sensor, stats) for s in samples]).astype(dtype)
    desc = [tokenize(s.description, vocab, cfg.max_len, add_cls=True) for s in samples]
    expl = [tokenize(s.explanation, vocab, cfg.max_len, add_cls=False) for s in samples]
    d_len = max(t.length for t in desc)
    e_len = max(t.length for t in expl)
    return {
        "clips": clips,
        "sensors": sensors,
        "desc_ids": np.stack([t.ids[:d_len] for t in desc]),
        "desc_valid": np.stack([t.mask[:d_len] for t in desc]),
        "expl_ids": np.stack([t.ids[:e_len] for t in expl]),
        "labels": np.array([s.action for s in samples], dtype=np.int64),
        "ids": [s.id for s in samples],
    }


def forward(params: dict, cfg: ModelConfig, batch: dict, drop=frozenset(), with_decoder: bool = True):
    """Full forward pass; returns outputs and caches for backward."""
    caches = {}
    v = s = t = None
    if "video" not in drop:
        v, caches["video"] = video_forward(batch["clips"], params, cfg)
    if "sensor" not in drop:
        s, caches["sensor"] = sensor_forward(batch["sensors"], params)
    if "text" not in drop:
        t, caches["text"] = text_forward(batch["desc_ids"], batch["desc_valid"], params, cfg)
    f, present, caches["fuse"] = fuse_forward(v, s, t, params, cfg, drop=drop)
    action_logits, caches["action"] = action_forward(f, params)
    out = {"fused": f, "present": present, "action_logits": action_logits}
    if with_decoder:
        dec_logits, caches["decoder"] = decoder_forward(f, batch["expl_ids"], params, cfg)
        out["dec_logits"] = dec_logits
    return out, caches


def loss_and_grads(
    params: dict,
    cfg: ModelConfig,
    batch: dict,
    drop=frozenset(),
    explanation: bool = True,
):
    """Batch-mean losses and analytic gradients for every parameter array.

    Returns (losses, grads) where losses has keys total/action/explanation.
    """
    out, caches = forward(params, cfg, batch, drop=drop, with_decoder=explanation)
    a_loss, d_action_logits = batch_action_loss_grad(out["action_logits"], batch["labels"])
    grads = zero_grads(params)

    df_dec = 0.0
    e_loss = 0.0
    if explanation:
        e_loss, d_dec_logits = batch_explanation_loss_grad(out["dec_logits"], batch["expl_ids"])
        df_dec = decoder_backward(d_dec_logits, caches["decoder"], params, grads, cfg)

    df_action, dW, db = linear_bwd(d_action_logits, caches["action"])
    grads["action.W"] += dW
    grads["action.b"] += db

    df = df_action + df_dec
    dv, ds, dt = fuse_backward(df, caches["fuse"], grads, cfg)
    if "video" in caches:
        video_backward(dv, caches["video"], params, grads, cfg)
    if "sensor" in caches:
        sensor_backward(ds, caches["sensor"], grads)
    if "text" in caches:
        text_backward(dt, caches["text"], params, grads, cfg)

    losses = {
        "action": a_loss,
        "explanation": float(e_loss),
        "total": a_loss + float(e_loss),
    }
    return losses, grads


def predict_batch(params: dict, cfg: ModelConfig, batch: dict, drop=frozenset()):
    """Action logits (and fused features) without decoder work."""
    out, _ = forward(params, cfg, batch, drop=drop, with_decoder=False)
    return out["action_logits"], out["fused"]


def compute_loss(params: dict, cfg: ModelConfig, batch: dict, drop=frozenset(), explanation: bool = True):
    """Forward-only batch losses (used by the finite-difference verifier)."""
    out, _ = forward(params, cfg, batch, drop=drop, with_decoder=explanation)
    a_loss, _ = batch_action_loss_grad(out["action_logits"], batch["labels"])
    e_loss = 0.0
    if explanation:
        e_loss, _ = batch_explanation_loss_grad(out["dec_logits"], batch["expl_ids"])
    return {"action": a_loss, "explanation": float(e_loss), "total": a_loss + float(e_loss)}
