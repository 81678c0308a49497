"""Turn raw model text into structured answers."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .dataset import NON_VULNERABLE, VULNERABLE
from .errors import MalformedEntry, NoFaultLocFound, NoVerdictFound, ParseError

_decoder = json.JSONDecoder()


@dataclass(frozen=True)
class FaultLocation:
    line: int
    code: str = ""
    explanation: str | None = None


@dataclass(frozen=True)
class FLAnswer:
    locations: tuple[FaultLocation, ...]
    raw_text: str = ""

    @property
    def lines(self) -> list[int]:
        return [loc.line for loc in self.locations]


@dataclass(frozen=True)
class VDAnswer:
    verdict: str
    explanation: str | None = None
    raw_text: str = ""


def _find_faultloc_object(raw: str) -> dict:
    pos = raw.find("{")
    while pos != -1:
        try:
            obj, _ = _decoder.raw_decode(raw, pos)
        except (ValueError, RecursionError):
            obj = None
        if isinstance(obj, dict) and isinstance(obj.get("faultLoc"), list):
            return obj
        pos = raw.find("{", pos + 1)
    raise NoFaultLocFound("no JSON object with a faultLoc array in response")


def _coerce_line(value, index: int) -> int:
    if isinstance(value, bool):
        raise MalformedEntry(index, f"faultyLine is a boolean ({value!r})")
    if isinstance(value, int):
        line = value
    elif isinstance(value, float) and value.is_integer():
        line = int(value)
    elif isinstance(value, str) and value.strip().lstrip("+").isdigit():
        line = int(value.strip())
    else:
        raise MalformedEntry(index, f"faultyLine {value!r} is not an integer")
    if line < 1:
        raise MalformedEntry(index, f"faultyLine {line} is not positive")
    return line


def parse_fl(raw: str) -> FLAnswer:
    """Extract the first ``{"faultLoc": [...]}`` object from ``raw``.

    Surrounding prose and code fences are ignored. Duplicate lines keep their
    first occurrence; array order is preserved. Lines beyond the sample's
    length are kept here and filtered during evaluation.
    """
    obj = _find_faultloc_object(raw)
    seen: set[int] = set()
    locations = []
    for index, entry in enumerate(obj["faultLoc"]):
        if not isinstance(entry, dict):
            raise MalformedEntry(index, "entry is not an object")
        if "faultyLine" not in entry:
            raise MalformedEntry(index, "missing faultyLine")
        line = _coerce_line(entry["faultyLine"], index)
        if line in seen:
            continue
        seen.add(line)
        code = entry.get("code")
        explanation = entry.get("explanation")
        locations.append(
            FaultLocation(
                line,
                "" if code is None else str(code),
                None if explanation is None else str(explanation),
            )
        )
    return FLAnswer(tuple(locations), raw)


def format_fl_answer(answer: FLAnswer) -> str:
    """Render an answer in the faultLoc JSON shape the initial prompt requests."""
    entries = []
    for loc in answer.locations:
        entry = {"faultyLine": loc.line, "code": loc.code}
        if loc.explanation is not None:
            entry["explanation"] = loc.explanation
        entries.append(entry)
    return json.dumps({"faultLoc": entries}, ensure_ascii=False)


# "non-vulnerable" is listed first: "this code is vulnerable" is a substring of
# the longer phrase, so the longer alternative must be tried first.
_VERDICT_RE = re.compile(r"this\s+code\s+is\s+(non-vulnerable|vulnerable)", re.IGNORECASE)


def parse_vd(raw: str, explain: bool = True) -> VDAnswer:
    """Find the verdict phrase; if several appear, the last one wins.

    With ``explain`` the remaining text (minus the deciding phrase) becomes the
    explanation.
    """
    matches = list(_VERDICT_RE.finditer(raw))
    if not matches:
        raise NoVerdictFound("no verdict phrase in response")
    last = matches[-1]
    verdict = NON_VULNERABLE if last.group(1).lower() == "non-vulnerable" else VULNERABLE
    explanation = None
    if explain:
        rest = (raw[: last.start()] + raw[last.end():]).strip(" \t\r\n.'\"`")
        explanation = rest or None
    return VDAnswer(verdict, explanation, raw)


def format_vd_answer(verdict: str) -> str:
    return f"this code is {verdict}"


def try_parse(task: str, raw: str, explain: bool = True):
    """``(answer, None)`` on success, ``(None, "ErrorType: message")`` on failure."""
    try:
        answer = parse_fl(raw) if task == "fl" else parse_vd(raw, explain)
    except ParseError as exc:
        return None, f"{type(exc).__name__}: {exc}"
    return answer, None
