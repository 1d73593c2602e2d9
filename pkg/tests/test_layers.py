import numpy as np
import pytest

from drivexplain import layers


def numeric_grad(f, x, eps=1e-6):
    """Central differences of scalar f w.r.t. array x."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + eps
        up = f()
        x[idx] = orig - eps
        down = f()
        x[idx] = orig
        g[idx] = (up - down) / (2 * eps)
        it.iternext()
    return g


def test_linear_backward_matches_numeric(rng):
    x = rng.normal(size=(3, 4, 5))
    W = rng.normal(size=(5, 6))
    b = rng.normal(size=6)
    dy = rng.normal(size=(3, 4, 6))

    y, cache = layers.linear_fwd(x, W, b)
    dx, dW, db = layers.linear_bwd(dy, cache)

    loss = lambda: float((layers.linear_fwd(x, W, b)[0] * dy).sum())
    np.testing.assert_allclose(dx, numeric_grad(loss, x), atol=1e-7)
    np.testing.assert_allclose(dW, numeric_grad(loss, W), atol=1e-7)
    np.testing.assert_allclose(db, numeric_grad(loss, b), atol=1e-7)


def test_layernorm_backward_matches_numeric(rng):
    x = rng.normal(size=(2, 3, 8))
    g = rng.normal(size=8)
    b = rng.normal(size=8)
    dy = rng.normal(size=(2, 3, 8))

    _, cache = layers.layernorm_fwd(x, g, b)
    dx, dg, db = layers.layernorm_bwd(dy, cache)

    loss = lambda: float((layers.layernorm_fwd(x, g, b)[0] * dy).sum())
    np.testing.assert_allclose(dx, numeric_grad(loss, x), atol=1e-6)
    np.testing.assert_allclose(dg, numeric_grad(loss, g), atol=1e-6)
    np.testing.assert_allclose(db, numeric_grad(loss, b), atol=1e-6)


def test_layernorm_output_is_standardized(rng):
    x = rng.normal(size=(4, 6, 16)) * 3 + 2
    y, _ = layers.layernorm_fwd(x, np.ones(16), np.zeros(16))
    np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=-1), 1.0, atol=1e-4)


def test_gelu_backward_matches_numeric(rng):
    x = rng.normal(size=(5, 7))
    dy = rng.normal(size=(5, 7))
    _, cache = layers.gelu_fwd(x.copy())
    dx = layers.gelu_bwd(dy, cache)
    loss = lambda: float((layers.gelu_fwd(x.copy())[0] * dy).sum())
    np.testing.assert_allclose(dx, numeric_grad(loss, x), atol=1e-7)


def test_gelu_reference_values():
    # against the tanh-approximation closed form at a few points
    x = np.array([0.0, 1.0, -1.0, 2.5])
    y, _ = layers.gelu_fwd(x.copy())
    u = np.sqrt(2 / np.pi) * (x + 0.044715 * x**3)
    np.testing.assert_allclose(y, 0.5 * x * (1 + np.tanh(u)), atol=1e-12)


def test_softmax_rows_sum_to_one(rng):
    x = rng.normal(size=(3, 4, 9)) * 5
    p = layers.softmax(x)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-9)
    q = layers.softmax_inplace(x.copy())
    np.testing.assert_allclose(q, p, atol=1e-12)


def test_softmax_bwd_inplace_matches_reference(rng):
    p = layers.softmax(rng.normal(size=(2, 5, 7)))
    dp = rng.normal(size=(2, 5, 7))
    ref = layers.softmax_bwd(dp.copy(), p)
    got = layers.softmax_bwd_inplace(dp.copy(), p)
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_attention_backward_matches_numeric(rng):
    d, heads, t, b = 8, 2, 5, 2
    x = rng.normal(size=(b, t, d))
    p = {}
    for nm in ("Wq", "Wk", "Wv", "Wo"):
        p[f"a.{nm}"] = rng.normal(size=(d, d)) * 0.3
    for nm in ("bq", "bk", "bv", "bo"):
        p[f"a.{nm}"] = rng.normal(size=d) * 0.1
    dy = rng.normal(size=(b, t, d))

    out, probs, cache = layers.attention_fwd(x, p, "a", heads)
    np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-9)
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    dx = layers.attention_bwd(dy, cache, grads, "a")

    loss = lambda: float((layers.attention_fwd(x, p, "a", heads)[0] * dy).sum())
    np.testing.assert_allclose(dx, numeric_grad(loss, x), atol=1e-6)
    for name in p:
        np.testing.assert_allclose(grads[name], numeric_grad(loss, p[name]), atol=1e-6, err_msg=name)


def test_block_backward_matches_numeric(rng):
    d, heads, t, b, hidden = 6, 2, 4, 2, 12
    x = rng.normal(size=(b, t, d))
    p = {
        "blk.ln1.g": np.ones(d), "blk.ln1.b": np.zeros(d),
        "blk.ln2.g": np.ones(d), "blk.ln2.b": np.zeros(d),
        "blk.mlp.W1": rng.normal(size=(d, hidden)) * 0.3, "blk.mlp.b1": np.zeros(hidden),
        "blk.mlp.W2": rng.normal(size=(hidden, d)) * 0.3, "blk.mlp.b2": np.zeros(d),
    }
    for nm in ("Wq", "Wk", "Wv", "Wo"):
        p[f"blk.attn.{nm}"] = rng.normal(size=(d, d)) * 0.3
    for nm in ("bq", "bk", "bv", "bo"):
        p[f"blk.attn.{nm}"] = rng.normal(size=d) * 0.1
    dy = rng.normal(size=(b, t, d))

    _, _, cache = layers.block_fwd(x, p, "blk", heads)
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    dx = layers.block_bwd(dy, cache, grads, "blk")

    loss = lambda: float((layers.block_fwd(x, p, "blk", heads)[0] * dy).sum())
    np.testing.assert_allclose(dx, numeric_grad(loss, x), atol=1e-6)
    for name in ("blk.attn.Wq", "blk.mlp.W1", "blk.ln1.g"):
        np.testing.assert_allclose(grads[name], numeric_grad(loss, p[name]), atol=1e-6, err_msg=name)


def test_key_padding_mask_blocks_exactly(rng):
    valid = np.array([[True, True, False]])
    mask = layers.key_padding_mask(valid, np.float64)
    scores = rng.normal(size=(1, 1, 3, 3)) + mask
    probs = layers.softmax(scores)
    assert np.all(probs[..., 2] == 0.0)
    np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)


def test_causal_mask_is_strictly_upper():
    mask = layers.causal_mask(4, np.float64)[0, 0]
    assert np.all(mask[np.triu_indices(4, k=1)] == layers.NEG_INF)
    assert np.all(mask[np.tril_indices(4)] == 0.0)
