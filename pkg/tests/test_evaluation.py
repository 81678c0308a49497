from __future__ import annotations

import itertools
import random

import pytest

from llmsqa.dataset import NON_VULNERABLE, VULNERABLE
from llmsqa.errors import EmptyInput, LengthMismatch, ZeroBaseline
from llmsqa.evaluation import (
    classification_metrics,
    format_delta,
    intersection_table,
    metrics_from_counts,
    relative_delta,
    rounded_delta,
    topk_counts,
    topk_success,
    valid_lines,
)

V, NV = VULNERABLE, NON_VULNERABLE


def test_topk_rule():
    assert topk_success([5, 2, 9], {2, 7}, 1) is False
    assert topk_success([5, 2, 9], {2, 7}, 2) is True
    assert not any(topk_success([], {1}, k) for k in (1, 2, 3))
    with pytest.raises(ValueError):
        topk_success([1], {1}, 0)


def test_topk_matches_brute_force():
    rng = random.Random(8)
    for _ in range(500):
        final = rng.sample(range(1, 20), rng.randint(0, 5))
        truth = set(rng.sample(range(1, 20), rng.randint(1, 3)))
        for k in (1, 2, 3):
            assert topk_success(final, truth, k) == bool(set(final[:k]) & truth)


def test_out_of_range_lines_are_dropped():
    assert valid_lines([0, 3, 12, 5], 10) == [3, 5]
    # line 12 is dropped, so line 2 moves up to rank 2
    assert topk_success([12, 1, 2], {2}, 2, line_count=10) is True
    assert topk_counts([([1, 2], {2}), ([3], {3})]) == {1: 1, 2: 2, 3: 2}


def test_paper_classification_row():
    # 193 vulnerable of 386; TP=71 FN=122 FP=22 TN=171 gives P=.763 R=.368
    preds = [V] * 71 + [NV] * 122 + [V] * 22 + [NV] * 171
    labels = [V] * 193 + [NV] * 193
    m = classification_metrics(preds, labels)
    assert m.precision == pytest.approx(0.763, abs=0.001)
    assert m.recall == pytest.approx(0.368, abs=0.001)
    assert m.f1 == pytest.approx(0.497, abs=0.001)
    assert m.f0_5 == pytest.approx(0.628, abs=0.001)
    assert (m.tp, m.fn, m.fp, m.tn) == (71, 122, 22, 171)


def test_perfect_and_all_positive():
    labels = [V, NV, V, NV]
    perfect = classification_metrics(labels, labels)
    assert (perfect.accuracy, perfect.precision, perfect.recall, perfect.f1, perfect.f0_5) == (1, 1, 1, 1, 1)
    allpos = classification_metrics([V] * 4, labels)
    assert (allpos.accuracy, allpos.recall, allpos.precision) == (0.5, 1.0, 0.5)


def test_unparseable_prediction_counts_as_wrong():
    m = classification_metrics([None, None], [V, NV])
    assert (m.tp, m.fn, m.fp, m.tn) == (0, 1, 1, 0)


def test_zero_denominators_flagged():
    m = metrics_from_counts(0, 0, 5, 0)
    assert m.precision == 0.0 and "precision" in m.undefined
    assert m.to_dict()["undefined"] == ["precision", "recall", "f1", "f0_5"]


def test_metric_errors():
    with pytest.raises(LengthMismatch):
        classification_metrics([V], [V, NV])
    with pytest.raises(EmptyInput):
        classification_metrics([], [])


@pytest.mark.parametrize("value,base,expected", [(221, 197, 12.18), (220, 197, 11.68), (197, 197, 0.0)])
def test_rounded_delta(value, base, expected):
    assert rounded_delta(value, base) == expected


def test_relative_delta_gemma_row_within_display_precision():
    # exact value is -15.2284...; the published -15.22 is a truncation (see README)
    assert abs(relative_delta(167, 197) - (-15.22)) < 0.01
    assert rounded_delta(167, 197) == -15.23


def test_delta_zero_baseline_and_format():
    with pytest.raises(ZeroBaseline):
        relative_delta(1, 0)
    with pytest.raises(ZeroBaseline):
        rounded_delta(1, 0)
    assert format_delta(12.18) == "+12.18%"
    assert format_delta(-15.23) == "-15.23%"


def test_rounding_is_half_up_on_exact_values():
    # 100 * 1 / 8 = 12.5 and 100 * -7 / 8 = -87.5 exactly; ties round away from zero
    assert rounded_delta(9, 8, places=0) == 13.0
    assert rounded_delta(1, 8, places=0) == -88.0


def test_intersection_small_cases():
    assert intersection_table({"m1": {"a", "b"}}).counts == {frozenset({"m1"}): 2}
    table = intersection_table({"m1": {"a", "b"}, "m2": {"a", "b"}})
    assert table.counts == {frozenset({"m1", "m2"}): 2}


def brute_intersection(success):
    models = list(success)
    universe = set().union(*success.values())
    out = {}
    for r in range(1, len(models) + 1):
        for subset in itertools.combinations(models, r):
            inside = set.intersection(*(success[m] for m in subset))
            outside = set().union(*(success[m] for m in models if m not in subset))
            n = len(inside - outside)
            if n:
                out[frozenset(subset)] = n
    return out, universe


def test_intersection_matches_brute_force_and_partitions():
    rng = random.Random(4)
    for _ in range(100):
        models = [f"m{i}" for i in range(rng.randint(2, 5))]
        samples = [f"s{i}" for i in range(50)]
        success = {m: {s for s in samples if rng.random() < rng.random()} for m in models}
        table = intersection_table(success)
        expected, universe = brute_intersection(success)
        assert table.counts == expected
        assert table.total() == len(universe)


def test_intersection_display_filter():
    table = intersection_table({"a": {1, 2, 3}, "b": {3, 4}, "c": {3}})
    assert table.counts[frozenset({"a", "b", "c"})] == 1
    shown = table.filtered(min_count=1)
    assert frozenset({"a", "b", "c"}) not in shown
    assert frozenset({"a"}) in shown and frozenset({"b"}) in shown
    assert table.rows()[0] == (["a"], 2)
