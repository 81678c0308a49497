from __future__ import annotations

import json

import pytest

from conftest import tiny_fl_sample
from llmsqa.errors import GatewayError
from llmsqa.gateway import Gateway, ModelConfig, ResponseCache
from llmsqa.mockmodels import MockBackend, MockScript, Rule, mock_complete
from llmsqa.parsing import parse_fl, parse_vd
from llmsqa.prompting import Message, PromptBundle, build_fl_initial, build_validation


def vd_bundle(text="The code is int f(void);"):
    return PromptBundle((Message("user", text),), "vd_initial")


def test_constant_vulnerable_script():
    resp = mock_complete(vd_bundle(), MockScript.constant("this code is vulnerable"))
    assert parse_vd(resp.text).verdict == "vulnerable"


def test_first_matching_rule_wins_and_default_is_total():
    script = MockScript.from_dict(
        {
            "rules": [
                {"when": {"contains": "f(void)"}, "respond": {"verdict": "vulnerable"}},
                {"when": {"contains": "int"}, "respond": {"verdict": "non-vulnerable"}},
            ],
            "default": {"text": "fallback"},
        }
    )
    assert script.respond(vd_bundle()) == "this code is vulnerable"
    assert script.respond(vd_bundle("The code is int g(void);")) == "this code is non-vulnerable"
    assert script.respond(vd_bundle("nothing")) == "fallback"


def test_regex_groups_are_substituted():
    script = MockScript((Rule({"regex": r"The code is (?P<fn>\w+ \w+)"}, {"text": "saw ${fn}"}),))
    assert script.respond(vd_bundle()) == "saw int f"


def test_fault_lines_response_parses():
    script = MockScript.from_dict({"default": {"fault_lines": [3, 1], "explanation": "why"}})
    ans = parse_fl(script.respond(vd_bundle()))
    assert ans.lines == [3, 1]
    assert ans.locations[0].explanation == "why"


def test_echo_rules_on_validation_bundles():
    sample = tiny_fl_sample()
    initial = build_fl_initial(sample, sample.hints())
    val = build_validation("fl", initial, "MY ANSWER", "THEIR ANSWER")
    stubborn = MockScript.from_dict({"rules": [{"when": {"stage": "validation"}, "respond": {"echo": "own_previous"}}]})
    concede = MockScript.from_dict({"rules": [{"when": {"template": "fl_validation"}, "respond": {"echo": "other_answer"}}]})
    assert stubborn.respond(val) == "MY ANSWER"
    assert concede.respond(val) == "THEIR ANSWER"
    # nothing to echo on an initial prompt: the fallback applies
    echo_initial = MockScript.from_dict({"default": {"echo": "own_previous", "fallback": {"text": "first"}}})
    assert echo_initial.respond(initial) == "first"


def test_mock_backend_loads_script_from_config(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps({"default": {"verdict": "non-vulnerable"}}))
    gw = Gateway(ResponseCache(tmp_path / "cache"), "record", {"mock": MockBackend()})
    resp = gw.complete(vd_bundle(), ModelConfig("m", provider="mock", script=str(path)))
    assert resp.text == "this code is non-vulnerable"
    with pytest.raises(GatewayError):
        gw.complete(vd_bundle(), ModelConfig("nos", provider="mock"))


def test_mock_is_deterministic():
    script = MockScript.constant("x")
    assert mock_complete(vd_bundle(), script).text == mock_complete(vd_bundle(), script).text
