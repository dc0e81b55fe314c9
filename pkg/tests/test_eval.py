"""Tests for strict-match evaluation and its breakdowns."""

import json

import numpy as np
import pytest

from disconer.corpus import Category, Fragment, Mention
from disconer.evaluation import (eval_by_category, eval_disc_only,
                                 eval_disc_sentences, evaluate,
                                 recall_by_length, strict_prf)


def m(etype, *frags):
    return Mention(etype, tuple(Fragment(s, e) for s, e in frags))


def test_strict_prf_exact():
    gold = [frozenset({m("T", (0, 2)), m("T", (3, 4))}), frozenset()]
    pred = [frozenset({m("T", (0, 2)), m("U", (3, 4))}), frozenset({m("T", (0, 1))})]
    p, r, f = strict_prf(gold, pred)
    assert p == pytest.approx(1 / 3)
    assert r == pytest.approx(1 / 2)
    assert f == pytest.approx(2 * (1 / 3) * (1 / 2) / (1 / 3 + 1 / 2))


def test_strict_prf_zero_conventions():
    assert strict_prf([frozenset()], [frozenset()]) == (0.0, 0.0, 0.0)
    assert strict_prf([frozenset({m("T", (0, 1))})], [frozenset()]) == (0.0, 0.0, 0.0)


def test_strict_prf_type_must_match():
    gold = [frozenset({m("T", (0, 2))})]
    pred = [frozenset({m("U", (0, 2))})]
    assert strict_prf(gold, pred)[2] == 0.0


def test_length_mismatch_raises():
    with pytest.raises(ValueError):
        strict_prf([frozenset()], [])


def test_eval_disc_sentences_filters_sentences():
    gold = [frozenset({m("T", (0, 1), (3, 4))}), frozenset({m("T", (0, 2))})]
    pred = [frozenset({m("T", (0, 1), (3, 4))}), frozenset()]
    # second sentence (no disc gold) is excluded entirely
    assert eval_disc_sentences(gold, pred) == (1.0, 1.0, 1.0)


def test_eval_disc_only_filters_both_sides():
    gold = [frozenset({m("T", (0, 1), (3, 4)), m("T", (5, 7))})]
    pred = [frozenset({m("T", (0, 1), (3, 4)), m("T", (5, 7)), m("U", (8, 9))})]
    assert eval_disc_only(gold, pred) == (1.0, 1.0, 1.0)


def test_eval_by_category_buckets():
    disc = m("T", (0, 1), (4, 5))
    flat = m("T", (0, 2))
    gold = [frozenset({disc, flat})]
    pred = [frozenset({disc, flat})]
    table = eval_by_category(gold, pred)
    assert table[Category.LEFT_OVERLAP]["gold"] == 1
    assert table[Category.LEFT_OVERLAP]["f1"] == 1.0
    assert table[Category.NO_OVERLAP]["gold"] == 0


def test_recall_by_length_buckets():
    gold = [frozenset({m("T", (0, 1)), m("T", (2, 4), (6, 7)), m("T", (8, 9), (14, 15))})]
    pred = [frozenset({m("T", (0, 1)), m("T", (2, 4), (6, 7))})]
    out = recall_by_length(gold, pred)
    assert out["mention_length"]["1"] == {"gold": 1, "matched": 1, "recall": 1.0}
    assert out["mention_length"]["3"]["gold"] == 1
    assert out["interval_length"]["0"]["recall"] == 1.0
    assert out["interval_length"]["2"]["recall"] == 1.0
    assert out["interval_length"]["4+"] == {"gold": 1, "matched": 0, "recall": 0.0}


def test_report_serializations():
    gold = [frozenset({m("T", (0, 1), (3, 4))})]
    pred = [frozenset({m("T", (0, 1), (3, 4))})]
    report = evaluate(gold, pred)
    data = json.loads(report.to_json())
    assert set(data) == {"overall", "disc_sentences", "disc_only",
                         "by_category", "by_length"}
    assert data["overall"]["f1"] == 1.0
    text = report.to_text()
    assert "overall" in text and "no_overlap" in text


def _random_pairs(n, seed):
    """Random small gold/pred mention-set pairs with some agreement."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n):
        sent_len = int(rng.integers(4, 10))

        def rand_mention():
            etype = ("T", "U")[int(rng.integers(2))]
            if rng.random() < 0.5:
                s = int(rng.integers(0, sent_len - 1))
                return m(etype, (s, s + int(rng.integers(1, 3))))
            s = int(rng.integers(0, sent_len - 3))
            g = s + 1 + int(rng.integers(1, 2))
            return m(etype, (s, s + 1), (g + 1, g + 2))

        gold = frozenset(rand_mention() for _ in range(int(rng.integers(0, 4))))
        pred = frozenset(x for x in gold if rng.random() < 0.6) | frozenset(
            rand_mention() for _ in range(int(rng.integers(0, 3))))
        pairs.append((gold, pred))
    return pairs


def test_strict_prf_matches_brute_force():
    pairs = _random_pairs(100, seed=13)
    gold = [g for g, _ in pairs]
    pred = [p for _, p in pairs]
    tp = fp = fn = 0
    for g, p in pairs:
        for x in p:
            if x in g:
                tp += 1
            else:
                fp += 1
        for x in g:
            if x not in p:
                fn += 1
    p_, r_, f_ = strict_prf(gold, pred)
    assert p_ == (tp / (tp + fp) if tp + fp else 0.0)
    assert r_ == (tp / (tp + fn) if tp + fn else 0.0)
