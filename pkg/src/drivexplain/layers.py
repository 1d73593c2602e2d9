"""Batched neural-network primitives with explicit forward/backward pairs.

Every forward returns (output, cache); the matching backward consumes the
cache and returns input gradients plus a dict of parameter gradients. All
gradients are exact analytic derivatives, verified against central finite
differences by the gradient-check harness.
"""

from __future__ import annotations

import numpy as np

NEG_INF = -1e30  # additive mask value; exp() underflows to exactly 0

_GELU_C = 0.7978845608028654  # sqrt(2 / pi)
_GELU_A = 0.044715


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def relu_fwd(x):
    return np.maximum(x, 0), x > 0


def relu_bwd(dy, cache):
    return dy * cache


def gelu_fwd(x):
    t = x * x
    t *= _GELU_A
    t += 1.0
    t *= x
    t *= _GELU_C
    np.tanh(t, out=t)
    y = t + 1.0
    y *= x
    y *= 0.5
    return y, (x, t)


def gelu_bwd(dy, cache):
    x, t = cache
    du = x * x
    du *= 3.0 * _GELU_A
    du += 1.0
    du *= _GELU_C
    du *= 1.0 - t * t
    du *= 0.5 * x
    du += 0.5 * (1.0 + t)
    du *= dy
    return du


# ---------------------------------------------------------------------------
# linear
# ---------------------------------------------------------------------------

def linear_fwd(x, W, b):
    return x @ W + b, (x, W)


def linear_bwd(dy, cache):
    x, W = cache
    dx = dy @ W.T
    k = W.shape[0]
    dW = x.reshape(-1, k).T @ dy.reshape(-1, W.shape[1])
    db = dy.reshape(-1, W.shape[1]).sum(axis=0)
    return dx, dW, db


# ---------------------------------------------------------------------------
# layer norm (over the last axis)
# ---------------------------------------------------------------------------

LN_EPS = 1e-5


def layernorm_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv, g)


def layernorm_bwd(dy, cache):
    xhat, inv, g = cache
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    db = dy.reshape(-1, xhat.shape[-1]).sum(axis=0)
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dg, db


# ---------------------------------------------------------------------------
# softmax / cross-entropy
# ---------------------------------------------------------------------------

def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_inplace(x):
    """Row softmax over the last axis, overwriting x."""
    np.subtract(x, x.max(axis=-1, keepdims=True), out=x)
    np.exp(x, out=x)
    np.divide(x, x.sum(axis=-1, keepdims=True), out=x)
    return x


def softmax_bwd(dp, p):
    return p * (dp - (dp * p).sum(axis=-1, keepdims=True))


def softmax_bwd_inplace(dp, p):
    """Backward through a row softmax, overwriting dp."""
    s = np.einsum("...k,...k->...", dp, p)[..., None]
    np.subtract(dp, s, out=dp)
    np.multiply(dp, p, out=dp)
    return dp


def log_softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


# ---------------------------------------------------------------------------
# multi-head self-attention
# ---------------------------------------------------------------------------

def _split_heads(x, heads):
    b, t, d = x.shape
    return x.reshape(b, t, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, hd = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * hd)


def attention_fwd(x, p, prefix, heads, attn_mask=None):
    """Self-attention over x (B, T, D).

    attn_mask, if given, is additive with shape broadcastable to
    (B, 1, T, T); masked entries hold NEG_INF.
    """
    q, cq = linear_fwd(x, p[prefix + ".Wq"], p[prefix + ".bq"])
    k, ck = linear_fwd(x, p[prefix + ".Wk"], p[prefix + ".bk"])
    v, cv = linear_fwd(x, p[prefix + ".Wv"], p[prefix + ".bv"])
    qh, kh, vh = (_split_heads(a, heads) for a in (q, k, v))
    scale = 1.0 / np.sqrt(qh.shape[-1])
    scores = np.matmul(qh, kh.transpose(0, 1, 3, 2))
    scores *= scale
    if attn_mask is not None:
        scores += attn_mask
    probs = softmax_inplace(scores)
    ctx = np.matmul(probs, vh)
    merged = _merge_heads(ctx)
    out, co = linear_fwd(merged, p[prefix + ".Wo"], p[prefix + ".bo"])
    cache = (cq, ck, cv, co, qh, kh, vh, probs, scale, heads)
    return out, probs, cache


def attention_bwd(dout, cache, grads, prefix):
    cq, ck, cv, co, qh, kh, vh, probs, scale, heads = cache
    dmerged, dWo, dbo = linear_bwd(dout, co)
    grads[prefix + ".Wo"] += dWo
    grads[prefix + ".bo"] += dbo
    dctx = _split_heads(dmerged, heads)
    dprobs = np.matmul(dctx, vh.transpose(0, 1, 3, 2))
    dvh = np.matmul(probs.transpose(0, 1, 3, 2), dctx)
    dscores = softmax_bwd_inplace(dprobs, probs)
    dscores *= scale
    dqh = np.matmul(dscores, kh)
    dkh = np.matmul(dscores.transpose(0, 1, 3, 2), qh)
    dx = np.zeros_like(cq[0])
    for d_split, lin_cache, wname, bname in (
        (dqh, cq, ".Wq", ".bq"),
        (dkh, ck, ".Wk", ".bk"),
        (dvh, cv, ".Wv", ".bv"),
    ):
        dxi, dW, db = linear_bwd(_merge_heads(d_split), lin_cache)
        grads[prefix + wname] += dW
        grads[prefix + bname] += db
        dx += dxi
    return dx


# ---------------------------------------------------------------------------
# pre-norm transformer block: x + Attn(LN1(x)), then h + MLP(LN2(h))
# ---------------------------------------------------------------------------

def block_fwd(x, p, prefix, heads, attn_mask=None):
    ln1, c_ln1 = layernorm_fwd(x, p[prefix + ".ln1.g"], p[prefix + ".ln1.b"])
    attn_out, probs, c_attn = attention_fwd(ln1, p, prefix + ".attn", heads, attn_mask)
    h = x + attn_out
    ln2, c_ln2 = layernorm_fwd(h, p[prefix + ".ln2.g"], p[prefix + ".ln2.b"])
    z1, c_fc1 = linear_fwd(ln2, p[prefix + ".mlp.W1"], p[prefix + ".mlp.b1"])
    a1, c_act = gelu_fwd(z1)
    z2, c_fc2 = linear_fwd(a1, p[prefix + ".mlp.W2"], p[prefix + ".mlp.b2"])
    y = h + z2
    cache = (c_ln1, c_attn, c_ln2, c_fc1, c_act, c_fc2)
    return y, probs, cache


def block_bwd(dy, cache, grads, prefix):
    c_ln1, c_attn, c_ln2, c_fc1, c_act, c_fc2 = cache
    da1, dW2, db2 = linear_bwd(dy, c_fc2)
    grads[prefix + ".mlp.W2"] += dW2
    grads[prefix + ".mlp.b2"] += db2
    dz1 = gelu_bwd(da1, c_act)
    dln2, dW1, db1 = linear_bwd(dz1, c_fc1)
    grads[prefix + ".mlp.W1"] += dW1
    grads[prefix + ".mlp.b1"] += db1
    dh, dg2, dbeta2 = layernorm_bwd(dln2, c_ln2)
    grads[prefix + ".ln2.g"] += dg2
    grads[prefix + ".ln2.b"] += dbeta2
    dh = dh + dy
    dln1 = attention_bwd(dh, c_attn, grads, prefix + ".attn")
    dx, dg1, dbeta1 = layernorm_bwd(dln1, c_ln1)
    grads[prefix + ".ln1.g"] += dg1
    grads[prefix + ".ln1.b"] += dbeta1
    return dx + dh


# ---------------------------------------------------------------------------
# masks
# ---------------------------------------------------------------------------

def key_padding_mask(valid: np.ndarray, dtype) -> np.ndarray:
    """(B, T) validity -> additive (B, 1, 1, T) mask blocking PAD keys."""
    mask = np.zeros(valid.shape, dtype=dtype)
    mask[~valid] = NEG_INF
    return mask[:, None, None, :]


def causal_mask(t: int, dtype) -> np.ndarray:
    mask = np.triu(np.full((t, t), NEG_INF, dtype=dtype), k=1)
    return mask[None, None, :, :]
