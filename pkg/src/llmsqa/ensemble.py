"""Combining answers from several models: majority voting and cross-validation."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .dataset import NON_VULNERABLE, VULNERABLE
from .errors import NoAnswers
from .gateway import Gateway, ModelConfig
from .parsing import FLAnswer, VDAnswer, try_parse
from .prompting import EnsureClause, PromptBundle, build_validation


@dataclass
class EnsembleVerdict:
    task: str
    final_lines: list[int] | None = None
    final_verdict: str | None = None
    # rank -> candidate -> voting model ids (in priority order)
    tally: dict[int, dict] = field(default_factory=dict)
    tiebreaks_fired: list[tuple[int, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "final_lines": self.final_lines,
            "final_verdict": self.final_verdict,
            "tally": {
                str(rank): {str(c): voters for c, voters in cands.items()}
                for rank, cands in self.tally.items()
            },
            "tiebreaks_fired": [list(t) for t in self.tiebreaks_fired],
        }


def _priority_index(priority: Sequence[str], models) -> dict[str, int]:
    index = {m: i for i, m in enumerate(priority)}
    if len(index) != len(priority):
        raise ValueError("priority order lists a model twice")
    missing = [m for m in models if m not in index]
    if missing:
        raise ValueError(f"models missing from priority order: {missing}")
    return index


def vote_fl(
    answers: Mapping[str, FLAnswer | None], priority: Sequence[str], k_max: int = 3
) -> EnsembleVerdict:
    """Rank-wise majority vote over fault locations.

    Each rank is decided on its own from the models' rank-r lines. The most
    voted candidate wins; among equally voted candidates the one backed by
    the highest-priority model wins. A candidate already chosen at an earlier
    rank is skipped in favour of the next one in that order. Losing
    candidates are not carried over to later ranks.
    """
    order = _priority_index(priority, answers)
    parsed = {m: a for m, a in answers.items() if a is not None}
    if not parsed:
        raise NoAnswers("no parseable fault-localization answers")
    models = sorted(parsed, key=order.__getitem__)

    verdict = EnsembleVerdict("fl", final_lines=[])
    for rank in range(1, k_max + 1):
        voters: dict[int, list[str]] = {}
        for model in models:
            lines = parsed[model].lines
            if len(lines) >= rank:
                voters.setdefault(lines[rank - 1], []).append(model)
        if not voters:
            break
        verdict.tally[rank] = voters

        eligible = [c for c in voters if c not in verdict.final_lines]
        if not eligible:
            continue
        # voters lists are priority-sorted, so voters[c][0] is c's best backer
        eligible.sort(key=lambda c: (-len(voters[c]), order[voters[c][0]]))
        winner = eligible[0]
        if sum(1 for c in eligible if len(voters[c]) == len(voters[winner])) > 1:
            verdict.tiebreaks_fired.append((rank, voters[winner][0]))
        verdict.final_lines.append(winner)
    return verdict


def vote_vd(answers: Mapping[str, VDAnswer | None], priority: Sequence[str]) -> EnsembleVerdict:
    """Majority verdict; an exact tie goes to the highest-priority parseable model."""
    order = _priority_index(priority, answers)
    parsed = {m: a for m, a in answers.items() if a is not None}
    if not parsed:
        raise NoAnswers("no parseable vulnerability answers")
    models = sorted(parsed, key=order.__getitem__)
    counts = Counter(parsed[m].verdict for m in models)
    verdict = EnsembleVerdict("vd")
    verdict.tally[1] = {
        v: [m for m in models if parsed[m].verdict == v]
        for v in (VULNERABLE, NON_VULNERABLE)
        if counts[v]
    }
    if counts[VULNERABLE] != counts[NON_VULNERABLE]:
        verdict.final_verdict = VULNERABLE if counts[VULNERABLE] > counts[NON_VULNERABLE] else NON_VULNERABLE
    else:
        head = models[0]
        verdict.final_verdict = parsed[head].verdict
        verdict.tiebreaks_fired.append((1, head))
    return verdict


def vote(task: str, answers: Mapping, priority: Sequence[str]) -> EnsembleVerdict:
    return vote_fl(answers, priority) if task == "fl" else vote_vd(answers, priority)


# -- cross-validation ---------------------------------------------------------


@dataclass
class RefinedAnswer:
    """One side of an A<=B exchange: A's answer after seeing B's."""

    model_id: str
    other_id: str
    initial_raw: str | None = None
    final_raw: str | None = None
    answer: FLAnswer | VDAnswer | None = None
    fingerprints: list[str] = field(default_factory=list)
    error: str | None = None

    @property
    def label(self) -> str:
        return f"{self.model_id}<={self.other_id}"


def cross_validate(
    task: str,
    initial: PromptBundle,
    model_a: ModelConfig,
    model_b: ModelConfig,
    gateway: Gateway,
    rounds: int = 1,
    explain: bool = True,
    repeat: int = 0,
) -> tuple[RefinedAnswer, RefinedAnswer]:
    """Run A<=B and B<=A.

    Both models answer the initial prompt (usually a cache hit). Each round,
    every side gets a validation bundle with its own latest raw answer as
    history and the other side's latest raw answer to consider. Failures stay
    confined to the side they happen on.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    ensure = EnsureClause.for_task(task)
    sides = (RefinedAnswer(model_a.model_id, model_b.model_id), RefinedAnswer(model_b.model_id, model_a.model_id))
    cfgs = (model_a, model_b)

    latest: list[str | None] = [None, None]
    for i, (side, cfg) in enumerate(zip(sides, cfgs)):
        resp = gateway.try_complete(initial, cfg, repeat)
        side.fingerprints.append(resp.request_fingerprint)
        if resp.ok:
            side.initial_raw = latest[i] = resp.text
        else:
            side.error = f"initial {resp.error_type}: {resp.error}"

    for _ in range(rounds):
        new_latest: list[str | None] = [None, None]
        for i, (side, cfg) in enumerate(zip(sides, cfgs)):
            own, other = latest[i], latest[1 - i]
            if own is None or other is None:
                side.error = side.error or f"no answer available from {side.other_id}"
                continue
            bundle = build_validation(task, initial, own, other, ensure)
            resp = gateway.try_complete(bundle, cfg, repeat)
            side.fingerprints.append(resp.request_fingerprint)
            if resp.ok:
                new_latest[i] = resp.text
            else:
                side.error = f"validation {resp.error_type}: {resp.error}"
        latest = new_latest

    for i, side in enumerate(sides):
        side.final_raw = latest[i]
        if side.final_raw is not None:
            side.answer, side.error = try_parse(task, side.final_raw, explain)
    return sides
