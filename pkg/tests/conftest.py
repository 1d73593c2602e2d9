import dataclasses

import numpy as np
import pytest

import drivexplain as dx
from drivexplain.dataset import DEFAULT_DISTRIBUTION, plan_scenarios
from drivexplain.model import make_batch
from drivexplain.scenarios import generate_scenario


def build_samples(n, seed=0, resolution=32, distribution=None):
    """In-memory sample list with unique ids."""
    render = dx.RenderConfig(resolution=resolution)
    specs = plan_scenarios(max(n, 20), seed, distribution or DEFAULT_DISTRIBUTION)[:n]
    samples = []
    for i, spec in enumerate(specs):
        s = generate_scenario(spec, render)
        s.id = f"s{i:05d}"
        samples.append(s)
    return samples


def small_model_config(**overrides):
    """Cheap but complete config for unit tests (16x16 clips, 16-dim)."""
    base = dict(
        resolution=16, patch=8, d_v=16, d_t=16, d_fused=16, d_dec=16,
        video_heads=2, text_heads=2, dec_heads=2, video_layers=2,
        text_layers=2, dec_layers=2,
    )
    base.update(overrides)
    return dx.toy_model_config(**base)


@pytest.fixture(scope="session")
def tiny_samples():
    return build_samples(24, seed=7, resolution=16)


@pytest.fixture(scope="session")
def fitted_context(tiny_samples):
    """(cfg, params, vocab, stats) for a small untrained model."""
    vocab = dx.build_vocab(
        [s.description for s in tiny_samples] + [s.explanation for s in tiny_samples]
    )
    cfg = dataclasses.replace(small_model_config(), vocab_size=len(vocab))
    params = dx.init_params(cfg, seed=3)
    stats = dx.fit_sensor_stats(tiny_samples)
    return cfg, params, vocab, stats


@pytest.fixture(scope="session")
def tiny_batch(tiny_samples, fitted_context):
    cfg, params, vocab, stats = fitted_context
    return make_batch(tiny_samples[:3], vocab, stats, cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
