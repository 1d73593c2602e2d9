import json
import math
from fractions import Fraction

import numpy as np
import pytest

import drivexplain as dx
from drivexplain.metrics import (
    ConfusionMatrix,
    brevity_penalty,
    sentence_bleu,
    write_confusion_csv,
    write_confusion_pgm,
    write_distribution_csv,
)


# ---------------------------------------------------------------------------
# accuracy
# ---------------------------------------------------------------------------

def test_accuracy_all_correct():
    assert dx.accuracy([1, 2, 3], [1, 2, 3]) == 1.0


def test_accuracy_headline_37_of_40():
    labels = [0] * 40
    preds = [0] * 37 + [1] * 3
    assert dx.accuracy(preds, labels) == 0.925


def test_accuracy_rejects_mismatch():
    with pytest.raises(ValueError, match="length mismatch"):
        dx.accuracy([1], [1, 2])
    with pytest.raises(ValueError, match="empty"):
        dx.accuracy([], [])


def test_accuracy_random_labels_near_chance():
    rng = np.random.default_rng(0)
    preds = rng.integers(0, 5, size=10_000)
    labels = rng.integers(0, 5, size=10_000)
    # binomial: p=0.2, sd = sqrt(.2*.8/10000) ~ 0.004; 0.02 is a 5-sigma band
    assert abs(dx.accuracy(preds.tolist(), labels.tolist()) - 0.2) < 0.02


# ---------------------------------------------------------------------------
# BLEU: hand-computed oracle values (exact rational arithmetic)
# ---------------------------------------------------------------------------

def oracle_corpus_bleu(pairs):
    """Independent corpus BLEU-4 with Fraction n-gram bookkeeping."""
    from collections import Counter

    def ngrams(toks, n):
        return Counter(tuple(toks[i : i + n]) for i in range(len(toks) - n + 1))

    log_sum = 0.0
    for n in range(1, 5):
        num = den = 0
        for hyp, ref in pairs:
            h, r = hyp.split(), ref.split()
            hn, rn = ngrams(h, n), ngrams(r, n)
            num += sum(min(c, rn[g]) for g, c in hn.items())
            den += max(0, len(h) - n + 1)
        if num == 0 or den == 0:
            return 0.0
        log_sum += 0.25 * math.log(Fraction(num, den))
    c = sum(len(h.split()) for h, _ in pairs)
    r = sum(len(r.split()) for _, r in pairs)
    bp = 1.0 if c >= r else math.exp(1 - Fraction(r, c))
    return bp * math.exp(log_sum)


ORACLE_PAIRS = [
    ("the cat sat on the mat", "the cat sat on the mat"),
    ("the cat sat on the mat today", "the cat sat on the mat"),
    ("a cat sat on the mat", "the cat sat on the mat"),
    ("the cat sat", "the cat sat on the mat"),
    ("stop at red light ahead", "stop because of red light"),
    ("slow down due to sharp curve ahead", "reduce speed because of sharp curve"),
    ("the the the the the the", "the cat sat on the mat"),
    ("switch to right lane for merging traffic", "change lane right due to merging"),
    ("turn left at the intersection now", "turn left at the intersection"),
    ("accelerate on the clear road ahead", "accelerate on the clear road ahead"),
]


def test_corpus_bleu_matches_oracle_on_fixed_pairs():
    # oracle evaluated pair-by-pair as single-sentence corpora
    for hyp, ref in ORACLE_PAIRS:
        got, _ = dx.bleu4([hyp], [ref])
        want = oracle_corpus_bleu([(hyp, ref)])
        assert got == pytest.approx(want, abs=1e-9), (hyp, ref)
    # and over the pooled 10-pair corpus
    hyps = [h for h, _ in ORACLE_PAIRS]
    refs = [r for _, r in ORACLE_PAIRS]
    got, _ = dx.bleu4(hyps, refs)
    assert got == pytest.approx(oracle_corpus_bleu(ORACLE_PAIRS), abs=1e-9)


def test_corpus_bleu_frozen_values():
    # frozen from the exact-rational oracle above
    got, _ = dx.bleu4(["the cat sat on the mat"], ["the cat sat on the mat"])
    assert got == pytest.approx(1.0, abs=1e-12)
    got, _ = dx.bleu4(["the cat sat"], ["the cat sat on the mat"])
    # p=(3/3,2/2,1/1,0 -> score 0 via empty 4-gram denominator)
    assert got == 0.0
    got, _ = dx.bleu4(["a cat sat on the mat"], ["the cat sat on the mat"])
    # p1=5/6 p2=4/5 p3=3/4 p4=2/3, bp=1
    want = (Fraction(5, 6) * Fraction(4, 5) * Fraction(3, 4) * Fraction(2, 3)) ** 0.25
    assert got == pytest.approx(float(want), abs=1e-9)


def test_bleu_identity_and_annihilation():
    corpus = ["slow down ahead", "stop at red light", "turn left now"]
    score, per = dx.bleu4(corpus, corpus)
    assert score == pytest.approx(1.0, abs=1e-12)
    assert all(p == pytest.approx(1.0, abs=1e-12) for p in per)
    # no shared 4-gram anywhere -> corpus precision_4 = 0 -> score 0
    score, _ = dx.bleu4(["a b c d e"], ["f g h i j"])
    assert score == 0.0


def test_repeated_token_clipping_case():
    hyp = "the the the the the the"
    ref = "the cat sat on the mat"
    score, per = dx.bleu4([hyp], [ref])
    assert score == 0.0  # p1 = 2/6 clipped, p2..p4 = 0
    # smoothed per-sentence diagnostic: p1=2/6, p2=1/6, p3=1/5, p4=1/4, bp=1
    want = (Fraction(2, 6) * Fraction(1, 6) * Fraction(1, 5) * Fraction(1, 4)) ** 0.25
    assert per[0] == pytest.approx(float(want), abs=1e-9)
    assert sentence_bleu(hyp, ref) == per[0]


def test_brevity_penalty_cases():
    assert brevity_penalty(10, 5) == 1.0
    assert brevity_penalty(5, 10) == pytest.approx(math.exp(1 - 2.0), abs=1e-12)
    assert brevity_penalty(0, 5) == 0.0


def test_bleu_corpus_reordering_invariance():
    hyps = ["stop at red light ahead", "slow down due to curve", "turn left at the intersection"]
    refs = ["stop because of red light", "reduce speed because of curve", "turn left at the intersection"]
    a, _ = dx.bleu4(hyps, refs)
    b, _ = dx.bleu4(hyps[::-1], refs[::-1])
    assert a == pytest.approx(b, abs=1e-12)


def test_bleu_rejects_empty_or_mismatched():
    with pytest.raises(ValueError, match="empty"):
        dx.bleu4([], [])
    with pytest.raises(ValueError, match="hypotheses"):
        dx.bleu4(["a"], ["a", "b"])


# ---------------------------------------------------------------------------
# confusion matrix
# ---------------------------------------------------------------------------

def test_perfect_predictions_identity_pattern():
    labels = [0, 1, 2, 3, 4] * 3
    cm = dx.confusion(labels, labels)
    assert np.array_equal(np.diag(cm.counts), [3, 3, 3, 3, 3])
    np.testing.assert_allclose(np.diag(cm.normalized), 100.0)
    assert cm.empty_rows == []


def test_headline_stop_row_percentage():
    # 200 stop samples, 187 predicted stop -> 93.5% diagonal
    stop = dx.action_code("stop")
    decel = dx.action_code("decelerate")
    labels = [stop] * 200
    preds = [stop] * 187 + [decel] * 13
    cm = dx.confusion(preds, labels)
    assert cm.normalized[stop, stop] == pytest.approx(93.5)


def test_normalized_rows_sum_to_100():
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 5, size=500).tolist()
    preds = rng.integers(0, 5, size=500).tolist()
    cm = dx.confusion(preds, labels)
    sums = cm.normalized.sum(axis=1)
    for i in range(5):
        if i not in cm.empty_rows:
            assert sums[i] == pytest.approx(100.0, abs=1e-6)


def test_accuracy_equals_trace_ratio_exactly():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        labels = rng.integers(0, 5, size=n).tolist()
        preds = rng.integers(0, 5, size=n).tolist()
        cm = dx.confusion(preds, labels)
        assert dx.accuracy(preds, labels) == cm.accuracy


def test_empty_rows_flagged():
    cm = dx.confusion([0, 0], [0, 0])
    assert cm.empty_rows == [1, 2, 3, 4]
    assert np.all(cm.normalized[1:] == 0.0)


# ---------------------------------------------------------------------------
# distribution + emitters
# ---------------------------------------------------------------------------

def test_action_distribution_fractions():
    labels = [dx.action_code("stop")] * 3 + [dx.action_code("accelerate")]
    dist = dx.action_distribution(labels)
    assert dist["stop"] == 0.75
    assert dist["accelerate"] == 0.25
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)


def test_single_class_distribution_is_one():
    dist = dx.action_distribution([2, 2, 2])
    assert dist["turn_left"] == 1.0


def test_emitters_write_parseable_files(tmp_path):
    labels = [0, 1, 2, 3, 4, 0, 1]
    preds = [0, 1, 2, 3, 4, 1, 1]
    cm = dx.confusion(preds, labels)
    write_confusion_csv(cm, tmp_path / "confusion.csv")
    write_confusion_pgm(cm, tmp_path / "confusion.pgm")
    write_distribution_csv(dx.action_distribution(labels), tmp_path / "dist.csv")

    lines = (tmp_path / "confusion.csv").read_text().splitlines()
    assert lines[0].startswith("truth\\pred")
    assert len(lines) == 1 + 5 + 1 + 5

    pgm = (tmp_path / "confusion.pgm").read_text().splitlines()
    assert pgm[0] == "P2"
    assert pgm[1] == "5 5"
    assert pgm[2] == "255"
    values = [int(v) for row in pgm[3:] for v in row.split()]
    assert len(values) == 25 and max(values) <= 255

    dist_lines = (tmp_path / "dist.csv").read_text().splitlines()
    assert dist_lines[0] == "action,fraction"
    assert len(dist_lines) == 6


def test_metrics_report_json_sorted_and_stable(tmp_path):
    from drivexplain.metrics import MetricsReport

    cm = dx.confusion([0, 1], [0, 1])
    report = MetricsReport(
        accuracy=1.0,
        bleu4_corpus=0.5,
        per_sentence_bleu=[0.5, 0.5],
        confusion=cm,
        distribution=dx.action_distribution([0, 1]),
        config_fingerprint="cfg",
        dataset_fingerprint="data",
    )
    report.save(tmp_path / "metrics.json")
    report.save(tmp_path / "metrics2.json")
    a = (tmp_path / "metrics.json").read_bytes()
    assert a == (tmp_path / "metrics2.json").read_bytes()
    data = json.loads(a)
    assert list(data) == sorted(data)
