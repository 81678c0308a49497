"""Scoring: best-case Top-K, classification metrics, relative deltas, intersections."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .dataset import VULNERABLE
from .errors import EmptyInput, LengthMismatch, ZeroBaseline

log = logging.getLogger(__name__)

TOP_KS = (1, 2, 3)
CLASSIFICATION_METRICS = ("accuracy", "precision", "recall", "f1", "f0_5")


def valid_lines(lines: Sequence[int], line_count: int | None) -> list[int]:
    """Drop predicted lines outside 1..line_count (with a warning)."""
    if line_count is None:
        return list(lines)
    kept = [n for n in lines if 1 <= n <= line_count]
    if len(kept) != len(lines):
        log.warning("dropped out-of-range predicted lines %s", sorted(set(lines) - set(kept)))
    return kept


def topk_success(
    final_lines: Sequence[int], ground_truth: Iterable[int], k: int, line_count: int | None = None
) -> bool:
    """Best case: a hit if any of the first ``k`` predicted lines is a faulty line."""
    if k < 1:
        raise ValueError("k must be >= 1")
    truth = set(ground_truth)
    return any(n in truth for n in valid_lines(final_lines, line_count)[:k])


def topk_counts(
    results: Iterable[tuple[Sequence[int], Iterable[int]]], ks: Sequence[int] = TOP_KS
) -> dict[int, int]:
    counts = {k: 0 for k in ks}
    for lines, truth in results:
        truth = set(truth)
        for k in ks:
            counts[k] += topk_success(lines, truth, k)
    return counts


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    f0_5: float
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    # metrics whose denominator was zero; they are reported as 0.0
    undefined: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "f0_5": self.f0_5,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "undefined": list(self.undefined),
        }


def _ratio(num: float, den: float, name: str, undefined: list[str]) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def metrics_from_counts(tp: int, fp: int, tn: int, fn: int) -> ClassificationMetrics:
    undefined: list[str] = []
    acc = _ratio(tp + tn, tp + tn + fp + fn, "accuracy", undefined)
    p = _ratio(tp, tp + fp, "precision", undefined)
    r = _ratio(tp, tp + fn, "recall", undefined)
    f1 = _ratio(2 * p * r, p + r, "f1", undefined)
    f05 = _ratio(1.25 * p * r, 0.25 * p + r, "f0_5", undefined)
    return ClassificationMetrics(acc, p, r, f1, f05, tp, fp, tn, fn, tuple(undefined))


def classification_metrics(
    preds: Sequence[str | None], labels: Sequence[str]
) -> ClassificationMetrics:
    """Accuracy, precision, recall, F1 and F0.5 with "vulnerable" as the positive class.

    A ``None`` prediction (unparseable answer) is scored as wrong: a false
    negative on a vulnerable sample, a false positive otherwise.
    """
    if len(preds) != len(labels):
        raise LengthMismatch(f"{len(preds)} predictions for {len(labels)} labels")
    if not labels:
        raise EmptyInput("no predictions to score")
    tp = fp = tn = fn = 0
    for pred, label in zip(preds, labels):
        positive = label == VULNERABLE
        if pred is None:
            pred_positive = not positive
        else:
            pred_positive = pred == VULNERABLE
        if pred_positive and positive:
            tp += 1
        elif pred_positive:
            fp += 1
        elif positive:
            fn += 1
        else:
            tn += 1
    return metrics_from_counts(tp, fp, tn, fn)


def relative_delta(value: float, baseline: float) -> float:
    """Signed percent change of ``value`` relative to ``baseline``."""
    if baseline == 0:
        raise ZeroBaseline("relative delta against a zero baseline")
    return 100.0 * (value - baseline) / baseline


def rounded_delta(value: float, baseline: float, places: int = 2) -> float:
    """``relative_delta`` rounded half-up to ``places`` decimals.

    Integer counts are handled with exact rational arithmetic so the rounding
    is never perturbed by binary floating point.
    """
    if baseline == 0:
        raise ZeroBaseline("relative delta against a zero baseline")
    frac = Fraction(str(value)) * 100 / Fraction(str(baseline)) - 100
    exact = Decimal(frac.numerator) / Decimal(frac.denominator)
    return float(exact.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


def format_delta(delta: float) -> str:
    return f"{delta:+.2f}%"


@dataclass
class IntersectionTable:
    models: tuple[str, ...]
    counts: dict[frozenset, int] = field(default_factory=dict)

    def total(self) -> int:
        return sum(self.counts.values())

    def filtered(self, min_count: int = 0, keep_singletons: bool = True) -> dict[frozenset, int]:
        """Display filter: sets above ``min_count``, plus single-model sets if asked."""
        return {
            s: c
            for s, c in self.counts.items()
            if c > min_count or (keep_singletons and len(s) == 1 and c > 0)
        }

    def rows(self, min_count: int = 0, keep_singletons: bool = True) -> list[tuple[list[str], int]]:
        order = {m: i for i, m in enumerate(self.models)}
        items = [
            (sorted(s, key=order.__getitem__), c)
            for s, c in self.filtered(min_count, keep_singletons).items()
        ]
        items.sort(key=lambda t: (-t[1], len(t[0]), [order[m] for m in t[0]]))
        return items

    def to_dict(self, min_count: int = 0) -> list[dict]:
        return [{"models": m, "count": c} for m, c in self.rows(min_count)]


def intersection_table(success: Mapping[str, Iterable[str]]) -> IntersectionTable:
    """Count samples solved by exactly each subset of models.

    Every sample solved by at least one model lands in exactly one subset,
    so the counts partition the union of the success sets.
    """
    models = tuple(success)
    solved = {m: set(s) for m, s in success.items()}
    counts: dict[frozenset, int] = {}
    for sample in set().union(*solved.values()) if solved else ():
        key = frozenset(m for m in models if sample in solved[m])
        counts[key] = counts.get(key, 0) + 1
    return IntersectionTable(models, counts)
