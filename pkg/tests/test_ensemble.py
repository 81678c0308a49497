from __future__ import annotations

import random

import pytest

from conftest import tiny_fl_sample
from llmsqa.dataset import NON_VULNERABLE, VULNERABLE
from llmsqa.ensemble import cross_validate, vote, vote_fl, vote_vd
from llmsqa.errors import NoAnswers
from llmsqa.gateway import RECORD, Gateway, ModelConfig, ResponseCache
from llmsqa.mockmodels import MockBackend, MockScript
from llmsqa.parsing import FaultLocation, FLAnswer, VDAnswer, format_fl_answer
from llmsqa.prompting import build_fl_initial

V, NV = VULNERABLE, NON_VULNERABLE


def fl(*lines):
    return FLAnswer(tuple(FaultLocation(n) for n in lines))


def vd(verdict):
    return VDAnswer(verdict)


def brute_force_vote(rankings: dict, priority: list, k_max: int = 3) -> list[int]:
    """Independent voter: per rank, scan candidates and keep the best by (votes, best backer)."""
    chosen: list[int] = []
    for rank in range(k_max):
        stats = {}  # candidate -> [votes, position of highest-priority backer]
        for pos, model in enumerate(priority):
            lines = rankings.get(model)
            if lines is None or len(lines) <= rank:
                continue
            cand = lines[rank]
            if cand not in stats:
                stats[cand] = [0, pos]
            stats[cand][0] += 1
        best = None
        for cand, (votes, pos) in stats.items():
            if cand in chosen:
                continue
            if best is None or votes > best[1] or (votes == best[1] and pos < best[2]):
                best = (cand, votes, pos)
        if best is not None:
            chosen.append(best[0])
    return chosen


def test_paper_voting_walkthrough():
    answers = {"m1": fl(2), "m2": fl(3), "m3": fl(2), "m4": fl(2)}
    verdict = vote_fl(answers, ["m1", "m2", "m3", "m4"])
    assert verdict.final_lines[0] == 2
    assert verdict.tally[1] == {2: ["m1", "m3", "m4"], 3: ["m2"]}
    assert verdict.tiebreaks_fired == []


def test_two_way_tie_goes_to_priority_head():
    answers = {"gpt-4o": fl(9), "llama": fl(4), "gemma": fl(9), "mixtral": fl(4)}
    verdict = vote_fl(answers, ["gpt-4o", "llama", "gemma", "mixtral"])
    assert verdict.final_lines == [9]
    assert verdict.tiebreaks_fired == [(1, "gpt-4o")]


def test_unanimous_rankings():
    answers = {m: fl(5, 1, 8) for m in "abc"}
    assert vote_fl(answers, list("abc")).final_lines == [5, 1, 8]


def test_already_chosen_line_is_skipped():
    # rank 1: a->1, b->3, c->2, a three-way tie won by the head model a (line 1)
    # rank 2: a->2, b->1, c->1; line 1 has most votes but is taken, so 2 wins
    answers = {"a": fl(1, 2), "b": fl(3, 1), "c": fl(2, 1)}
    verdict = vote_fl(answers, ["a", "b", "c"])
    assert verdict.final_lines == [1, 2]
    assert verdict.tiebreaks_fired == [(1, "a")]


def test_unparseable_answers_are_ignored():
    answers = {"a": None, "b": fl(4), "c": fl(4)}
    assert vote_fl(answers, ["a", "b", "c"]).final_lines == [4]
    with pytest.raises(NoAnswers):
        vote_fl({"a": None}, ["a"])


def test_vote_fl_matches_brute_force():
    rng = random.Random(2024)
    for _ in range(1000):
        models = [f"m{i}" for i in range(rng.randint(1, 6))]
        rankings = {m: rng.sample(range(1, 11), rng.randint(1, 3)) for m in models}
        priority = models[:]
        rng.shuffle(priority)
        got = vote_fl({m: fl(*r) for m, r in rankings.items()}, priority).final_lines
        assert got == brute_force_vote(rankings, priority)


def test_vote_fl_invariants():
    rng = random.Random(5)
    for _ in range(300):
        models = [f"m{i}" for i in range(rng.randint(1, 6))]
        rankings = {m: rng.sample(range(1, 11), rng.randint(1, 3)) for m in models}
        verdict = vote_fl({m: fl(*r) for m, r in rankings.items()}, models)
        assert len(verdict.final_lines) == len(set(verdict.final_lines)) <= 3
        proposed = {n for r in rankings.values() for n in r}
        assert set(verdict.final_lines) <= proposed


def test_vote_vd_paper_example_and_ties():
    order = ["m1", "m2", "m3", "m4"]
    assert vote_vd({"m1": vd(V), "m2": vd(V), "m3": vd(NV), "m4": vd(V)}, order).final_verdict == V
    tie = vote_vd({"m1": vd(NV), "m2": vd(V)}, ["m1", "m2"])
    assert tie.final_verdict == NV and tie.tiebreaks_fired == [(1, "m1")]
    assert vote_vd({m: vd(NV) for m in order}, order).final_verdict == NV
    # the head being unparseable hands the tie to the next model in priority order
    assert vote_vd({"m1": None, "m2": vd(V), "m3": vd(NV)}, ["m1", "m2", "m3"]).final_verdict == V


def test_vote_dispatch_and_serialization():
    verdict = vote("vd", {"a": vd(V)}, ["a"])
    assert verdict.to_dict()["final_verdict"] == V
    with pytest.raises(NoAnswers):
        vote("vd", {"a": None}, ["a"])


# -- cross-validation -----------------------------------------------------------


def crossval_gateway(tmp_path, scripts: dict[str, MockScript]) -> Gateway:
    return Gateway(ResponseCache(tmp_path), RECORD, {"mock": MockBackend(scripts)})


def mock(model_id):
    return ModelConfig(model_id, provider="mock")


def initial_bundle():
    s = tiny_fl_sample()
    return build_fl_initial(s, s.hints())


def test_stubborn_model_keeps_its_answer(tmp_path):
    a_initial = format_fl_answer(fl(2, 4))
    scripts = {
        "A": MockScript.from_dict({"rules": [{"when": {"stage": "validation"}, "respond": {"echo": "own_previous"}}],
                                   "default": {"text": a_initial}}),
        "B": MockScript.constant(format_fl_answer(fl(7))),
    }
    a_side, b_side = cross_validate("fl", initial_bundle(), mock("A"), mock("B"), crossval_gateway(tmp_path, scripts))
    assert a_side.final_raw == a_initial
    assert a_side.answer.lines == [2, 4]
    assert a_side.label == "A<=B" and b_side.label == "B<=A"
    assert len(a_side.fingerprints) == 2


def test_conceding_model_adopts_other_answer(tmp_path):
    b_initial = format_fl_answer(fl(7, 3))
    scripts = {
        "A": MockScript.from_dict({"rules": [{"when": {"stage": "validation"}, "respond": {"echo": "other_answer"}}],
                                   "default": {"fault_lines": [2]}}),
        "B": MockScript.constant(b_initial),
    }
    a_side, b_side = cross_validate("fl", initial_bundle(), mock("A"), mock("B"), crossval_gateway(tmp_path, scripts))
    assert a_side.final_raw == b_initial
    assert a_side.answer.lines[0] == b_side.answer.lines[0] == 7


def test_identical_answers_still_validated(tmp_path):
    same = format_fl_answer(fl(2))
    scripts = {"A": MockScript.constant(same), "B": MockScript.constant(same)}
    gw = crossval_gateway(tmp_path, scripts)
    a_side, b_side = cross_validate("fl", initial_bundle(), mock("A"), mock("B"), gw)
    assert gw.stats.live_calls == 4
    assert a_side.answer.lines == b_side.answer.lines == [2]


def test_failure_is_confined_to_one_side(tmp_path):
    scripts = {
        "A": MockScript.constant(format_fl_answer(fl(2))),
        "B": MockScript.from_dict({"rules": [{"when": {"stage": "validation"}, "respond": {"text": "no json"}}],
                                   "default": {"fault_lines": [5]}}),
    }
    a_side, b_side = cross_validate("fl", initial_bundle(), mock("A"), mock("B"), crossval_gateway(tmp_path, scripts))
    assert a_side.error is None and a_side.answer.lines == [2]
    assert b_side.answer is None and b_side.error.startswith("NoFaultLocFound")


def test_missing_backend_script_is_reported_per_side(tmp_path):
    scripts = {"A": MockScript.constant(format_fl_answer(fl(2)))}
    a_side, b_side = cross_validate("fl", initial_bundle(), mock("A"), mock("B"), crossval_gateway(tmp_path, scripts))
    assert b_side.error.startswith("initial GatewayError")
    assert a_side.answer is None and "no answer available" in a_side.error


def test_multiple_rounds(tmp_path):
    scripts = {
        "A": MockScript.from_dict({"rules": [{"when": {"stage": "validation"}, "respond": {"echo": "other_answer"}}],
                                   "default": {"fault_lines": [1]}}),
        "B": MockScript.from_dict({"rules": [{"when": {"stage": "validation"}, "respond": {"echo": "other_answer"}}],
                                   "default": {"fault_lines": [2]}}),
    }
    a_side, b_side = cross_validate("fl", initial_bundle(), mock("A"), mock("B"),
                                    crossval_gateway(tmp_path, scripts), rounds=2)
    # two swaps bring each side back to its own initial answer
    assert a_side.answer.lines == [1] and b_side.answer.lines == [2]
    assert len(a_side.fingerprints) == 3
