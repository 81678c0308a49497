"""Scriptable fake models for offline runs and tests.

A script is a JSON file::

    {
      "rules": [
        {"when": {"template": "fl_validation"}, "respond": {"echo": "other_answer"}},
        {"when": {"contains": "def sample_03"}, "respond": {"fault_lines": [4, 2]}},
        {"when": {"regex": "The code is (?P<fn>\\\\w+)"}, "respond": {"text": "saw ${fn}"}}
      ],
      "default": {"verdict": "non-vulnerable"}
    }

``when`` keys (all optional, all must hold): ``template`` (template id or
list of ids), ``stage`` (``initial`` / ``validation``), ``contains`` (substring
or list of substrings of the task prompt), ``regex`` (searched in the task
prompt; named groups become placeholders).

``respond`` forms: ``text`` (``${own_previous}``, ``${other_answer}`` and
regex groups are substituted), ``echo`` (``own_previous`` or
``other_answer``), ``fault_lines`` (canonical faultLoc JSON), ``verdict``.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from string import Template

from .errors import GatewayError
from .gateway import LIVE, ModelConfig, RawResponse, _now, fingerprint
from .parsing import FaultLocation, FLAnswer, format_fl_answer, format_vd_answer
from .prompting import GenerationParams, PromptBundle, extract_other_answer, own_previous_answer

MOCK_PROVIDER = "mock"


@dataclass(frozen=True)
class Rule:
    when: dict = field(default_factory=dict)
    respond: dict = field(default_factory=dict)

    def match(self, bundle: PromptBundle) -> dict | None:
        """Placeholder values when the rule applies, else None."""
        when = self.when
        prompt = bundle.initial_text
        if "template" in when:
            allowed = when["template"]
            allowed = [allowed] if isinstance(allowed, str) else allowed
            if bundle.template_id not in allowed:
                return None
        if "stage" in when:
            stage = "validation" if bundle.template_id.endswith("_validation") else "initial"
            if stage != when["stage"]:
                return None
        if "contains" in when:
            needles = when["contains"]
            needles = [needles] if isinstance(needles, str) else needles
            if not all(n in prompt for n in needles):
                return None
        groups: dict = {}
        if "regex" in when:
            m = re.search(when["regex"], prompt, re.DOTALL)
            if m is None:
                return None
            groups = {k: v for k, v in m.groupdict().items() if v is not None}
        return groups


@dataclass(frozen=True)
class MockScript:
    rules: tuple[Rule, ...] = ()
    default: dict = field(default_factory=lambda: {"text": ""})

    @classmethod
    def from_dict(cls, data: dict) -> MockScript:
        rules = tuple(Rule(r.get("when", {}), r["respond"]) for r in data.get("rules", []))
        return cls(rules, data.get("default", {"text": ""}))

    @classmethod
    def load(cls, path: str | Path) -> MockScript:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def constant(cls, text: str) -> MockScript:
        return cls((), {"text": text})

    def respond(self, bundle: PromptBundle) -> str:
        for rule in self.rules:
            groups = rule.match(bundle)
            if groups is not None:
                return render_response(rule.respond, bundle, groups)
        return render_response(self.default, bundle, {})


def render_response(spec: dict, bundle: PromptBundle, groups: dict) -> str:
    own = own_previous_answer(bundle)
    other = extract_other_answer(bundle)
    if "echo" in spec:
        source = spec["echo"]
        value = own if source == "own_previous" else other if source == "other_answer" else None
        if value is not None:
            return value
        # initial prompts have nothing to echo; fall back to the fallback/text form
        spec = spec.get("fallback", {"text": ""})
        return render_response(spec, bundle, groups)
    if "fault_lines" in spec:
        explanation = spec.get("explanation")
        locs = tuple(FaultLocation(int(n), "", explanation) for n in spec["fault_lines"])
        return format_fl_answer(FLAnswer(locs))
    if "verdict" in spec:
        return format_vd_answer(spec["verdict"])
    values = dict(groups)
    values.setdefault("own_previous", own or "")
    values.setdefault("other_answer", other or "")
    return Template(spec.get("text", "")).safe_substitute(values)


def mock_complete(bundle: PromptBundle, script: MockScript, model_id: str = "mock") -> RawResponse:
    fp = fingerprint(model_id, bundle.messages, bundle.params)
    return RawResponse(model_id, fp, script.respond(bundle), 0, _now(), LIVE)


class MockBackend:
    """Chat backend for ``provider = "mock"``; the script comes from ``cfg.script``."""

    def __init__(self, scripts: dict[str, MockScript] | None = None) -> None:
        self._scripts: dict[str, MockScript] = dict(scripts or {})
        self._lock = threading.Lock()

    def add(self, model_id: str, script: MockScript) -> None:
        with self._lock:
            self._scripts[model_id] = script

    def script_for(self, cfg: ModelConfig) -> MockScript:
        with self._lock:
            script = self._scripts.get(cfg.model_id)
            if script is None:
                if not cfg.script:
                    raise GatewayError(f"mock model {cfg.model_id} has no script")
                script = MockScript.load(cfg.script)
                self._scripts[cfg.model_id] = script
            return script

    def chat(self, cfg: ModelConfig, bundle: PromptBundle, params: GenerationParams) -> str:
        return self.script_for(cfg).respond(bundle)
