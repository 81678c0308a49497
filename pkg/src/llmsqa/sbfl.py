"""Spectrum-based suspiciousness scoring and the Top-N hint block."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable

from .errors import LengthMismatch, MissingField

Formula = Callable[[int, int, int], float]


def ochiai_score(e_f: int, n_f: int, e_p: int) -> float:
    """Ochiai suspiciousness, ``e_f / sqrt((e_f + n_f) * (e_f + e_p))``.

    A zero denominator yields 0.0 so the function is total.
    """
    denom = (e_f + n_f) * (e_f + e_p)
    if denom == 0:
        return 0.0
    return e_f / math.sqrt(denom)


# Display name -> scoring function. Other formulas can be added here; the
# scoring signature is (e_f, n_f, e_p).
FORMULAS: dict[str, Formula] = {"Ochiai": ochiai_score}


def _ochiai_order_key(e_f: int, n_f: int, e_p: int) -> Fraction:
    # The squared score as an exact rational. Scores that are mathematically
    # equal (1/sqrt(8) vs 2/sqrt(32)) can differ in the last float bit; ordering
    # on this key makes them tie exactly so the line-number tie-break applies.
    denom = (e_f + n_f) * (e_f + e_p)
    return Fraction(0) if denom == 0 else Fraction(e_f * e_f, denom)


# Exact ordering keys, where a formula has one; others sort on the float score.
ORDER_KEYS: dict[str, Callable[[int, int, int], Fraction]] = {"Ochiai": _ochiai_order_key}


@dataclass(frozen=True)
class CoverageSpectrum:
    """Per-line coverage counts for one sample (1-based lines)."""

    line_count: int
    failing_total: int
    passing_total: int
    e_f: tuple[int, ...]
    e_p: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.line_count < 1:
            raise ValueError("line_count must be positive")
        if len(self.e_f) != self.line_count or len(self.e_p) != self.line_count:
            raise LengthMismatch("counter arrays must have line_count entries")
        for ef, ep in zip(self.e_f, self.e_p):
            if not (0 <= ef <= self.failing_total and 0 <= ep <= self.passing_total):
                raise ValueError("coverage counts exceed test totals")

    def n_f(self, line: int) -> int:
        return self.failing_total - self.e_f[line - 1]

    def n_p(self, line: int) -> int:
        return self.passing_total - self.e_p[line - 1]

    @classmethod
    def from_dict(cls, data: dict) -> CoverageSpectrum:
        for key in ("line_count", "failing_total", "passing_total", "lines"):
            if key not in data:
                raise MissingField(key, "spectrum")
        n = int(data["line_count"])
        e_f = [0] * n
        e_p = [0] * n
        for entry in data["lines"]:
            line = int(entry["line"])
            if not 1 <= line <= n:
                raise ValueError(f"spectrum line {line} outside 1..{n}")
            e_f[line - 1] = int(entry.get("e_f", 0))
            e_p[line - 1] = int(entry.get("e_p", 0))
        return cls(n, int(data["failing_total"]), int(data["passing_total"]), tuple(e_f), tuple(e_p))

    def to_dict(self) -> dict:
        lines = [
            {"line": i + 1, "e_f": ef, "e_p": ep}
            for i, (ef, ep) in enumerate(zip(self.e_f, self.e_p))
            if ef or ep
        ]
        return {
            "line_count": self.line_count,
            "failing_total": self.failing_total,
            "passing_total": self.passing_total,
            "lines": lines,
        }


def load_spectrum(path: str | Path) -> CoverageSpectrum:
    with open(path, encoding="utf-8") as fh:
        return CoverageSpectrum.from_dict(json.load(fh))


@dataclass(frozen=True)
class RankedLine:
    line: int
    code: str
    score: float


@dataclass(frozen=True)
class SuspiciousnessRanking:
    entries: tuple[RankedLine, ...]
    technique_name: str = "Ochiai"

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def lines(self) -> list[int]:
        return [e.line for e in self.entries]


def rank_lines(
    spectrum: CoverageSpectrum, source_code: str, technique: str = "Ochiai"
) -> SuspiciousnessRanking:
    """Score every line and sort by score descending, ties by line ascending."""
    source_lines = source_code.splitlines()
    if spectrum.line_count != len(source_lines):
        raise LengthMismatch(
            f"spectrum covers {spectrum.line_count} lines, source has {len(source_lines)}"
        )
    formula = FORMULAS[technique]
    order_key = ORDER_KEYS.get(technique, formula)
    keyed = []
    for line in range(1, spectrum.line_count + 1):
        counts = (spectrum.e_f[line - 1], spectrum.n_f(line), spectrum.e_p[line - 1])
        entry = RankedLine(line, source_lines[line - 1].strip(), formula(*counts))
        keyed.append((order_key(*counts), entry))
    keyed.sort(key=lambda t: (-t[0], t[1].line))
    return SuspiciousnessRanking(tuple(e for _, e in keyed), technique)


def top_n_hints(ranking: SuspiciousnessRanking, n: int = 5) -> SuspiciousnessRanking:
    if n < 1:
        raise ValueError("n must be >= 1")
    return SuspiciousnessRanking(ranking.entries[:n], ranking.technique_name)
