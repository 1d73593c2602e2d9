"""Parameter allocation, deterministic initialization, and naming.

Parameters live in a flat name -> array dict. Names are hierarchical
(``video.block0.attn.Wq``) and the sorted name order is the canonical
enumeration used for initialization, checkpoint layout, and gradient
verification.
"""

from __future__ import annotations

import numpy as np

from .config import FUSION_FULL, ModelConfig
from .errors import ConfigError


def _block_shapes(prefix: str, d: int, mlp_ratio: float) -> dict:
    hidden = int(d * mlp_ratio)
    return {
        f"{prefix}.ln1.g": (d,),
        f"{prefix}.ln1.b": (d,),
        f"{prefix}.attn.Wq": (d, d),
        f"{prefix}.attn.bq": (d,),
        f"{prefix}.attn.Wk": (d, d),
        f"{prefix}.attn.bk": (d,),
        f"{prefix}.attn.Wv": (d, d),
        f"{prefix}.attn.bv": (d,),
        f"{prefix}.attn.Wo": (d, d),
        f"{prefix}.attn.bo": (d,),
        f"{prefix}.ln2.g": (d,),
        f"{prefix}.ln2.b": (d,),
        f"{prefix}.mlp.W1": (d, hidden),
        f"{prefix}.mlp.b1": (hidden,),
        f"{prefix}.mlp.W2": (hidden, d),
        f"{prefix}.mlp.b2": (d,),
    }


def param_shapes(cfg: ModelConfig) -> dict:
    """Every learnable array and its shape, keyed by canonical name."""
    if cfg.vocab_size < 5:
        raise ConfigError("vocab_size must be set (>= the 5 reserved ids) before allocating parameters")
    shapes = {
        "video.patch.W": (cfg.token_dim, cfg.d_v),
        "video.patch.b": (cfg.d_v,),
        "video.pos": (cfg.video_tokens, cfg.d_v),
        "text.tok": (cfg.vocab_size, cfg.d_t),
        "text.pos": (cfg.max_len, cfg.d_t),
        "sensor.W1": (3, cfg.d_s_hidden),
        "sensor.b1": (cfg.d_s_hidden,),
        "sensor.W2": (cfg.d_s_hidden, cfg.d_s),
        "sensor.b2": (cfg.d_s,),
        "action.W": (cfg.fused_dim, cfg.num_actions),
        "action.b": (cfg.num_actions,),
        "cond.W": (cfg.fused_dim, cfg.d_dec),
        "cond.b": (cfg.d_dec,),
        "decoder.tok": (cfg.vocab_size, cfg.d_dec),
        "decoder.pos": (cfg.max_len, cfg.d_dec),
        "decoder.out.W": (cfg.d_dec, cfg.vocab_size),
        "decoder.out.b": (cfg.vocab_size,),
    }
    if cfg.fusion_mode == FUSION_FULL:
        shapes["fusion.W"] = (cfg.concat_dim, cfg.d_fused)
        shapes["fusion.b"] = (cfg.d_fused,)
    for i in range(cfg.video_layers):
        shapes.update(_block_shapes(f"video.block{i}", cfg.d_v, cfg.mlp_ratio))
    for i in range(cfg.text_layers):
        shapes.update(_block_shapes(f"text.block{i}", cfg.d_t, cfg.mlp_ratio))
    for i in range(cfg.dec_layers):
        shapes.update(_block_shapes(f"decoder.block{i}", cfg.d_dec, cfg.mlp_ratio))
    return shapes


def is_positional(name: str) -> bool:
    return name.endswith(".pos") or name.endswith(".tok")


def is_gain(name: str) -> bool:
    return name.endswith(".g")


def is_bias(name: str) -> bool:
    return name.endswith((".b", ".b1", ".b2", ".bq", ".bk", ".bv", ".bo"))


def is_decayed(name: str, shape) -> bool:
    """Weight decay targets 2-D weight matrices, never biases, gains, or
    token/positional embedding tables."""
    return len(shape) == 2 and not is_positional(name)


def init_params(cfg: ModelConfig, seed: int | None = None) -> dict:
    """Deterministic initialization.

    Weight matrices are Xavier-uniform (a = sqrt(6 / (fan_in + fan_out))),
    biases zero, layer-norm gains one, positional/token embeddings N(0, 0.02),
    all drawn from one seeded stream in sorted-name order.
    """
    cfg.validate()
    shapes = param_shapes(cfg)
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    dtype = cfg.np_dtype()
    params = {}
    for name in sorted(shapes):
        shape = shapes[name]
        if is_bias(name):
            arr = np.zeros(shape)
        elif is_gain(name):
            arr = np.ones(shape)
        elif name.endswith(".pos"):
            arr = rng.normal(0.0, 0.02, size=shape)
        else:
            fan_in, fan_out = shape[0], shape[1] if len(shape) > 1 else shape[0]
            a = np.sqrt(6.0 / (fan_in + fan_out))
            arr = rng.uniform(-a, a, size=shape)
        params[name] = arr.astype(dtype)
    return params


def zero_grads(params: dict) -> dict:
    return {name: np.zeros_like(arr) for name, arr in params.items()}


def cast_params(params: dict, dtype) -> dict:
    return {name: arr.astype(dtype) for name, arr in params.items()}


def check_shapes(params: dict, cfg: ModelConfig):
    expected = param_shapes(cfg)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ConfigError(f"parameter set mismatch: missing={missing[:4]} extra={extra[:4]}")
    for name, arr in params.items():
        if tuple(arr.shape) != tuple(expected[name]):
            raise ConfigError(f"{name}: shape {arr.shape} != expected {expected[name]}")
