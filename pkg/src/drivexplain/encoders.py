"""The three modality encoders.

Video: tubelet patch embedding + learned positions + pre-norm transformer,
mean-pooled over all tokens. Text: token + position embeddings + bidirectional
transformer with PAD keys masked, read out at the leading CLS position.
Sensor: two fully connected ReLU layers (3 -> 64 -> 128).

Batched forwards return a cache consumed by the matching backward; the
single-sample wrappers expose the public interface.
"""

from __future__ import annotations

import numpy as np

from .config import CLS, ModelConfig
from .layers import (
    block_bwd,
    block_fwd,
    key_padding_mask,
    linear_bwd,
    linear_fwd,
    relu_bwd,
    relu_fwd,
)


# ---------------------------------------------------------------------------
# video
# ---------------------------------------------------------------------------

def clip_tokens(clips: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    """(B, 16, H, W, 3) -> (B, tokens, tubelet*patch*patch*3).

    Token order is temporal-major, then row-major over the patch grid, so a
    token sequence reshapes back to (temporal, grid, grid).
    """
    b, f, h, w, _ = clips.shape
    if f != cfg.frames or h != cfg.resolution or w != cfg.resolution:
        raise ValueError(
            f"clip batch shape {clips.shape[1:]} incompatible with config "
            f"({cfg.frames}, {cfg.resolution}, {cfg.resolution}, 3)"
        )
    tf, p, g = cfg.tubelet_frames, cfg.patch, cfg.grid
    x = clips.reshape(b, cfg.temporal_tokens, tf, g, p, g, p, 3)
    x = x.transpose(0, 1, 3, 5, 2, 4, 6, 7)
    return x.reshape(b, cfg.video_tokens, cfg.token_dim)


def video_forward(clips: np.ndarray, params: dict, cfg: ModelConfig, record: bool = False):
    """Batched video encoding: (B, 16, H, W, 3) normalized -> (B, d_v)."""
    tokens = clip_tokens(clips, cfg)
    x, c_patch = linear_fwd(tokens, params["video.patch.W"], params["video.patch.b"])
    x = x + params["video.pos"]
    caches, attn = [], []
    for i in range(cfg.video_layers):
        x, probs, cache = block_fwd(x, params, f"video.block{i}", cfg.video_heads)
        caches.append(cache)
        if record:
            attn.append(probs)
    feat = x.mean(axis=1)
    return feat, {"patch": c_patch, "blocks": caches, "tokens": cfg.video_tokens, "attn": attn}


def video_backward(dfeat: np.ndarray, cache: dict, params: dict, grads: dict, cfg: ModelConfig):
    t = cache["tokens"]
    dx = np.repeat(dfeat[:, None, :] / t, t, axis=1)
    for i in reversed(range(cfg.video_layers)):
        dx = block_bwd(dx, cache["blocks"][i], grads, f"video.block{i}")
    grads["video.pos"] += dx.sum(axis=0)
    _, dW, db = linear_bwd(dx, cache["patch"])
    grads["video.patch.W"] += dW
    grads["video.patch.b"] += db


def video_encode(clip: np.ndarray, params: dict, cfg: ModelConfig, record: bool = False):
    """Encode one normalized clip; optionally return the attention record."""
    feat, cache = video_forward(clip[None].astype(cfg.np_dtype()), params, cfg, record=record)
    if record:
        return feat[0], AttentionRecord("video", cfg, cache["attn"], valid=None)
    return feat[0]


# ---------------------------------------------------------------------------
# sensor
# ---------------------------------------------------------------------------

def sensor_forward(x: np.ndarray, params: dict):
    """(B, 3) normalized -> (B, 128), ReLU after both layers."""
    z1, c1 = linear_fwd(x, params["sensor.W1"], params["sensor.b1"])
    a1, r1 = relu_fwd(z1)
    z2, c2 = linear_fwd(a1, params["sensor.W2"], params["sensor.b2"])
    a2, r2 = relu_fwd(z2)
    return a2, (c1, r1, c2, r2)


def sensor_backward(dout: np.ndarray, cache, grads: dict):
    c1, r1, c2, r2 = cache
    dz2 = relu_bwd(dout, r2)
    da1, dW2, db2 = linear_bwd(dz2, c2)
    grads["sensor.W2"] += dW2
    grads["sensor.b2"] += db2
    dz1 = relu_bwd(da1, r1)
    dx, dW1, db1 = linear_bwd(dz1, c1)
    grads["sensor.W1"] += dW1
    grads["sensor.b1"] += db1
    return dx


def sensor_encode(x: np.ndarray, params: dict) -> np.ndarray:
    """Encode one normalized sensor triple into the 128-dim feature."""
    x = np.asarray(x, dtype=params["sensor.W1"].dtype)
    if x.shape != (3,):
        raise ValueError(f"sensor input must have shape (3,), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("sensor input must be finite")
    out, _ = sensor_forward(x[None], params)
    return out[0]


# ---------------------------------------------------------------------------
# text
# ---------------------------------------------------------------------------

def text_forward(ids: np.ndarray, valid: np.ndarray, params: dict, cfg: ModelConfig, record: bool = False):
    """Batched text encoding: (B, L) ids + validity mask -> (B, d_t) at CLS."""
    dtype = params["text.tok"].dtype
    emb = params["text.tok"][ids] + params["text.pos"][: ids.shape[1]]
    mask = key_padding_mask(valid, dtype)
    x = emb
    caches, attn = [], []
    for i in range(cfg.text_layers):
        x, probs, cache = block_fwd(x, params, f"text.block{i}", cfg.text_heads, attn_mask=mask)
        caches.append(cache)
        if record:
            attn.append(probs)
    feat = x[:, 0, :]
    return feat, {"ids": ids, "blocks": caches, "length": ids.shape[1], "attn": attn, "valid": valid}


def text_backward(dfeat: np.ndarray, cache: dict, params: dict, grads: dict, cfg: ModelConfig):
    b, l = cache["ids"].shape
    dx = np.zeros((b, l, dfeat.shape[-1]), dtype=dfeat.dtype)
    dx[:, 0, :] = dfeat
    for i in reversed(range(cfg.text_layers)):
        dx = block_bwd(dx, cache["blocks"][i], grads, f"text.block{i}")
    np.add.at(grads["text.tok"], cache["ids"].reshape(-1), dx.reshape(-1, dx.shape[-1]))
    grads["text.pos"][:l] += dx.sum(axis=0)


def text_encode(seq, params: dict, cfg: ModelConfig, record: bool = False):
    """Encode one tokenized description (must start with CLS)."""
    if seq.length < 1 or seq.ids[0] != CLS:
        raise ValueError("text encoder input must start with the CLS token")
    ids = seq.ids[None]
    valid = seq.mask[None]
    feat, cache = text_forward(ids, valid, params, cfg, record=record)
    if record:
        return feat[0], AttentionRecord("text", cfg, cache["attn"], valid=seq.mask)
    return feat[0]


# ---------------------------------------------------------------------------
# attention export
# ---------------------------------------------------------------------------

class AttentionRecord:
    """Per-layer attention probabilities captured during a recorded encode."""

    def __init__(self, modality: str, cfg: ModelConfig, per_layer_probs, valid):
        if not per_layer_probs:
            raise ValueError("attention recording was not enabled for this encode")
        self.modality = modality
        self.cfg = cfg
        self.per_layer = [p[0] for p in per_layer_probs]  # (heads, T, T), batch stripped
        self.valid = valid

    def maps(self) -> list[np.ndarray]:
        """Head-averaged attention from the pooled query, one map per layer.

        Video: the query-averaged key distribution, summed over the temporal
        axis into the (grid, grid) spatial plane; entries total 1. Text: the
        CLS row restricted to valid positions; entries total 1.
        """
        out = []
        for probs in self.per_layer:
            mean_heads = probs.mean(axis=0)  # (T, T)
            if self.modality == "video":
                pooled = mean_heads.mean(axis=0)  # query-averaged, sums to 1
                grid = self.cfg.grid
                cube = pooled.reshape(self.cfg.temporal_tokens, grid, grid)
                out.append(cube.sum(axis=0))
            else:
                n = int(self.valid.sum())
                out.append(mean_heads[0, :n])
        return out


def export_attention(record: AttentionRecord, out_dir) -> list[str]:
    """Write one CSV per layer; first line carries the grid shape."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for layer, grid in enumerate(record.maps()):
        grid = np.atleast_2d(grid)
        path = out_dir / f"attention_{record.modality}_layer{layer}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{grid.shape[0]},{grid.shape[1]}\n")
            for row in grid:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")
        written.append(str(path))
    return written
