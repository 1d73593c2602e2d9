from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import drivexplain as dx
from drivexplain.config import BOS, CLS, EOS, PAD, UNK
from drivexplain.preprocess import (
    SensorStats,
    detokenize,
    ids_to_text,
    invert_sensor_norm,
    resize_nearest,
    word_tokens,
)
from drivexplain.scenarios import SensorReading


class _FakeSample:
    def __init__(self, speed, lat, lon):
        self.sensor = SensorReading(speed, lat, lon)


# ---------------------------------------------------------------------------
# clip normalization
# ---------------------------------------------------------------------------

def test_normalize_zero_and_full_scale():
    zeros = np.zeros((16, 16, 16, 3), dtype=np.uint8)
    full = np.full((16, 16, 16, 3), 255, dtype=np.uint8)
    assert np.all(dx.normalize_clip(zeros) == 0.0)
    assert np.all(dx.normalize_clip(full) == 1.0)


def test_normalize_midpoint_value():
    clip = np.full((16, 16, 16, 3), 128, dtype=np.uint8)
    out = dx.normalize_clip(clip)
    assert out[0, 0, 0, 0] == pytest.approx(128 / 255, abs=1e-12)


def test_normalize_stays_in_unit_interval():
    rng = np.random.default_rng(0)
    clip = rng.integers(0, 256, size=(16, 20, 20, 3), dtype=np.uint8)
    out = dx.normalize_clip(clip, resolution=16)
    assert out.shape == (16, 16, 16, 3)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_normalize_rejects_wrong_frame_count():
    with pytest.raises(ValueError, match="16, H, W, 3"):
        dx.normalize_clip(np.zeros((8, 16, 16, 3), dtype=np.uint8))


def test_resize_nearest_identity_and_downscale():
    clip = np.arange(16 * 32 * 32 * 3, dtype=np.uint8).reshape(16, 32, 32, 3)
    assert resize_nearest(clip, 32) is clip
    small = resize_nearest(clip, 16)
    assert small.shape == (16, 16, 16, 3)
    assert np.array_equal(small[0, 0, 0], clip[0, 0, 0])


# ---------------------------------------------------------------------------
# sensor stats
# ---------------------------------------------------------------------------

def test_two_point_population_std():
    samples = [_FakeSample(10, 0, 0), _FakeSample(20, 0, 0)]
    with pytest.warns(RuntimeWarning):
        stats = dx.fit_sensor_stats(samples)
    assert stats.mean[0] == pytest.approx(15.0)
    assert stats.std[0] == pytest.approx(5.0)


def test_constant_channel_floored_with_warning():
    samples = [_FakeSample(s, 1.5, 7.0) for s in (1.0, 2.0, 3.0)]
    with pytest.warns(RuntimeWarning, match="floored"):
        stats = dx.fit_sensor_stats(samples)
    assert stats.mean[1] == pytest.approx(1.5)
    assert stats.std[1] == 1e-8


def test_stats_match_welford_oracle():
    rng = np.random.default_rng(42)
    values = rng.normal([5, 40, -70], [2, 0.5, 0.3], size=(1000, 3))
    samples = [_FakeSample(*row) for row in values]
    stats = dx.fit_sensor_stats(samples)

    # independent streaming oracle (Welford)
    mean = np.zeros(3)
    m2 = np.zeros(3)
    for i, row in enumerate(values, start=1):
        delta = row - mean
        mean += delta / i
        m2 += delta * (row - mean)
    np.testing.assert_allclose(stats.mean, mean, atol=1e-9)
    np.testing.assert_allclose(stats.std, np.sqrt(m2 / len(values)), atol=1e-9)


def test_apply_norm_closed_forms():
    stats = SensorStats(mean=np.array([1.0, 2.0, 3.0]), std=np.array([2.0, 4.0, 8.0]))
    z = dx.apply_sensor_norm(np.array([1.0, 2.0, 3.0]), stats)
    np.testing.assert_allclose(z, 0.0)
    z = dx.apply_sensor_norm(stats.mean + stats.std, stats)
    np.testing.assert_allclose(z, 1.0)


def test_renormalized_train_split_is_standardized():
    rng = np.random.default_rng(7)
    values = rng.normal([9, 42, -71], [3, 0.2, 0.4], size=(500, 3))
    samples = [_FakeSample(*row) for row in values]
    stats = dx.fit_sensor_stats(samples)
    z = np.stack([dx.apply_sensor_norm(s.sensor.as_array(), stats) for s in samples])
    assert np.all(np.abs(z.mean(axis=0)) < 1e-6)
    np.testing.assert_allclose(z.var(axis=0), 1.0, atol=1e-4)


def test_norm_is_invertible():
    stats = SensorStats(mean=np.array([5.0, 40.0, -70.0]), std=np.array([2.0, 0.5, 0.25]))
    x = np.array([9.0, 39.7, -70.4])
    z = dx.apply_sensor_norm(x, stats)
    np.testing.assert_allclose(invert_sensor_norm(z, stats), x, rtol=1e-9)


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------

def test_vocab_frequency_then_lexicographic_order():
    vocab = dx.build_vocab(["stop stop go"])
    assert vocab.id_for("stop") < vocab.id_for("go")
    assert vocab.id_for("stop") == 5  # first id after the 5 reserved


def test_vocab_min_count_filters_to_unk():
    vocab = dx.build_vocab(["stop stop go"], min_count=2)
    assert "stop" in vocab.token_to_id
    assert vocab.id_for("go") == UNK


def test_vocab_matches_bruteforce_counter(tiny_samples):
    corpus = [s.description for s in tiny_samples] + [s.explanation for s in tiny_samples]
    vocab = dx.build_vocab(corpus)

    counts = Counter()
    for text in corpus:
        counts.update(word_tokens(text))
    expected_order = sorted(counts, key=lambda t: (-counts[t], t))
    got_order = sorted(
        (t for t in vocab.token_to_id if t not in ("<pad>", "<bos>", "<eos>", "<unk>", "<cls>")),
        key=vocab.id_for,
    )
    assert got_order == expected_order
    # bijective over non-reserved tokens
    ids = list(vocab.token_to_id.values())
    assert len(set(ids)) == len(ids)


def test_empty_corpus_rejected():
    with pytest.raises(ValueError, match="empty corpus"):
        dx.build_vocab([])


def test_vocab_json_round_trip():
    vocab = dx.build_vocab(["slow down ahead"])
    clone = dx.Vocabulary.from_json(vocab.to_json())
    assert clone.token_to_id == vocab.token_to_id
    assert clone.fingerprint() == vocab.fingerprint()


# ---------------------------------------------------------------------------
# tokenization
# ---------------------------------------------------------------------------

def test_empty_text_with_cls():
    vocab = dx.build_vocab(["stop"])
    seq = dx.tokenize("", vocab, add_cls=True)
    assert seq.length == 1
    assert seq.ids[0] == CLS
    assert np.all(seq.ids[1:] == PAD)


def test_long_text_truncates_to_max_len():
    vocab = dx.build_vocab(["w"])
    text = " ".join(f"w" for _ in range(60))
    seq = dx.tokenize(text, vocab, max_len=50, add_cls=True)
    assert seq.length == 50
    assert seq.ids.shape == (50,)
    assert seq.ids[0] == CLS
    assert np.all(seq.ids[1:50] == vocab.id_for("w"))  # leading tokens kept


def test_decoder_framing_bos_eos():
    vocab = dx.build_vocab(["slow down"])
    seq = dx.tokenize("slow down", vocab, add_cls=False)
    assert seq.ids[0] == BOS
    assert seq.ids[seq.length - 1] == EOS
    assert seq.valid_ids() == [BOS, vocab.id_for("slow"), vocab.id_for("down"), EOS]


def test_round_trip_for_in_vocab_text():
    vocab = dx.build_vocab(["reduce speed due to pedestrian ahead"])
    text = "reduce speed due to pedestrian"
    assert detokenize(dx.tokenize(text, vocab, add_cls=True), vocab) == text
    assert detokenize(dx.tokenize(text, vocab, add_cls=False), vocab) == text


def test_oov_maps_to_unk():
    vocab = dx.build_vocab(["stop"])
    seq = dx.tokenize("stop zebra", vocab, add_cls=True)
    assert seq.valid_ids() == [CLS, vocab.id_for("stop"), UNK]
    assert ids_to_text(seq.valid_ids(), vocab) == "stop <unk>"


@settings(max_examples=50, deadline=None)
@given(st.text(max_size=200), st.booleans(), st.integers(min_value=4, max_value=60))
def test_tokenize_respects_bounds(text, add_cls, max_len):
    vocab = dx.build_vocab(["the car slows for a red light"])
    seq = dx.tokenize(text, vocab, max_len=max_len, add_cls=add_cls)
    assert seq.ids.shape == (max_len,)
    assert seq.length <= max_len
    assert seq.ids.max() < len(vocab)
    assert seq.ids.min() >= 0
    # no PAD before a non-PAD token
    valid = seq.ids != PAD
    assert not np.any(~valid[:-1] & valid[1:])


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def test_split_100_gives_72_8_20():
    ids = [f"s{i}" for i in range(100)]
    split = dx.split_dataset(ids, seed=0)
    assert (len(split.train), len(split.val), len(split.test)) == (72, 8, 20)


def test_split_21113_matches_published_test_count():
    ids = list(range(21113))
    split = dx.split_dataset(ids, seed=1)
    assert len(split.test) == 4223
    assert len(split.val) == 1689
    assert len(split.train) == 15201


def test_split_deterministic():
    ids = [f"s{i}" for i in range(57)]
    a = dx.split_dataset(ids, seed=9)
    b = dx.split_dataset(ids, seed=9)
    assert a.to_dict() == b.to_dict()
    c = dx.split_dataset(ids, seed=10)
    assert c.to_dict() != a.to_dict()


def test_split_too_small_rejected():
    with pytest.raises(ValueError, match="at least 10"):
        dx.split_dataset(list(range(9)), seed=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=10, max_value=400))
def test_splits_disjoint_and_exhaustive(n):
    ids = [f"s{i}" for i in range(n)]
    split = dx.split_dataset(ids, seed=5)
    train, val, test = set(split.train), set(split.val), set(split.test)
    assert train | val | test == set(ids)
    assert not (train & val or train & test or val & test)
    assert min(len(split.train), len(split.val), len(split.test)) >= 1
