"""Prompt builders for the initial and validation prompts.

Template text lives in ``templates/<version>/`` as plain-text resources with
``${name}`` placeholders. Builders are pure: identical inputs give
byte-identical bundles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from string import Template

from .dataset import VULNERABLE, ErrorOutcome, FLSample, VDSample
from .errors import EmptyHints, EnsureTaskMismatch
from .retrieval import ExampleSelection
from .sbfl import SuspiciousnessRanking

TEMPLATE_VERSION = "v1"
TEMPLATE_IDS = ("fl_initial", "vd_initial", "vd_initial_cot", "fl_validation", "vd_validation")

USER = "user"
ASSISTANT = "assistant"


@lru_cache(maxsize=None)
def load_template(name: str, version: str = TEMPLATE_VERSION) -> str:
    path = resources.files("llmsqa") / "templates" / version / f"{name}.txt"
    return path.read_text(encoding="utf-8").rstrip("\n")


def _render(name: str, **values: str) -> str:
    return Template(load_template(name)).substitute(values)


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    def to_dict(self) -> dict:
        return {"temperature": self.temperature, "max_tokens": self.max_tokens}


@dataclass(frozen=True)
class Message:
    role: str
    text: str


@dataclass(frozen=True)
class PromptBundle:
    messages: tuple[Message, ...]
    template_id: str
    params: GenerationParams = field(default_factory=GenerationParams)
    template_version: str = TEMPLATE_VERSION

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("a prompt bundle needs at least one message")
        if self.messages[0].role != USER:
            raise ValueError("the first message must come from the user")
        if self.template_id not in TEMPLATE_IDS:
            raise ValueError(f"unknown template id {self.template_id!r}")

    @property
    def initial_text(self) -> str:
        return self.messages[0].text

    @property
    def last_user_text(self) -> str:
        return next(m.text for m in reversed(self.messages) if m.role == USER)

    def render(self) -> str:
        """Human-readable form: bare text for one message, role headers otherwise."""
        if len(self.messages) == 1:
            return self.messages[0].text + "\n"
        blocks = [f"### {m.role.capitalize()}\n{m.text}" for m in self.messages]
        return "\n\n".join(blocks) + "\n"


@dataclass(frozen=True)
class EnsureClause:
    task: str
    text: str

    @classmethod
    def for_task(cls, task: str) -> EnsureClause:
        if task not in ("fl", "vd"):
            raise ValueError(f"unknown task {task!r}")
        return cls(task, load_template(f"ensure_{task}"))


# -- fault localization -------------------------------------------------------


def format_test_outcome(outcome) -> str:
    if isinstance(outcome, ErrorOutcome):
        return (
            f"  - Running the function as follows '{outcome.input_repr}' generate an "
            f"'{outcome.error_name}' in line {outcome.line} '{outcome.code_content}'."
        )
    return (
        f"  - Running the function as follows '{outcome.input_repr}' yields "
        f"'{outcome.actual}' instead of the expected '{outcome.expected}'."
    )


def format_hint(rank: int, line: int, code: str, technique: str, score: float) -> str:
    return f"  {rank}. Line {line} '{code}', {technique} score: {score:.4f}"


def build_fl_initial(
    sample: FLSample, hints: SuspiciousnessRanking, params: GenerationParams | None = None
) -> PromptBundle:
    if len(hints) == 0:
        raise EmptyHints(f"sample {sample.id}: no SBFL hints to embed")
    tests = "\n".join(format_test_outcome(o) for o in sample.test_results)
    sbfl = "\n".join(
        format_hint(i, e.line, e.code, hints.technique_name, e.score)
        for i, e in enumerate(hints, 1)
    )
    text = _render(
        "fl_initial",
        code=sample.source_code.rstrip("\n"),
        description=sample.code_description,
        test_results=tests,
        sbfl_results=sbfl,
    )
    return PromptBundle((Message(USER, text),), "fl_initial", params or GenerationParams())


# -- vulnerability detection ------------------------------------------------------


def label_display(label: str) -> str:
    return "Vulnerable" if label == VULNERABLE else "Non-vulnerable"


def _example_block(examples) -> str:
    return "\n".join(
        f"Example{i}: {ex.code}, Label{i}: this code is {label_display(ex.label)}."
        for i, ex in enumerate(examples, 1)
    )


def build_vd_initial(
    sample: VDSample,
    selection: ExampleSelection,
    cot: bool = False,
    params: GenerationParams | None = None,
) -> PromptBundle:
    text = _render(
        "vd_initial",
        random_examples=_example_block(selection.random_examples),
        similar_examples=_example_block(selection.similar_examples),
        code=sample.source_code.rstrip("\n"),
    )
    template_id = "vd_initial"
    if cot:
        text = f"{text}\n{load_template('cot_instruction')}"
        template_id = "vd_initial_cot"
    return PromptBundle((Message(USER, text),), template_id, params or GenerationParams())


# -- validation -----------------------------------------------------------------


def build_validation(
    task: str,
    initial: PromptBundle,
    own_answer_raw: str,
    other_answer_raw: str,
    ensure: EnsureClause | None = None,
) -> PromptBundle:
    """Ask the model to confirm or revise its answer given another model's answer.

    The initial exchange is embedded as a User/Assistant pair so stateless
    backends see the full history.
    """
    ensure = ensure or EnsureClause.for_task(task)
    if ensure.task != task:
        raise EnsureTaskMismatch(f"ensure clause is for {ensure.task!r}, task is {task!r}")
    text = _render("validation", other_answer=other_answer_raw, ensure=ensure.text)
    messages = (
        Message(USER, initial.initial_text),
        Message(ASSISTANT, own_answer_raw),
        Message(USER, text),
    )
    return PromptBundle(messages, f"{task}_validation", initial.params, initial.template_version)


VALIDATION_PREFIX = load_template("validation").split("${other_answer}")[0]
VALIDATION_SUFFIX = load_template("validation").split("${other_answer}")[1].split("\n")[0]


def extract_other_answer(bundle: PromptBundle) -> str | None:
    """Recover the other model's raw answer from a validation bundle."""
    text = bundle.last_user_text
    if not text.startswith(VALIDATION_PREFIX):
        return None
    rest = text[len(VALIDATION_PREFIX):]
    end = rest.rfind(VALIDATION_SUFFIX)
    return rest[:end] if end >= 0 else None


def own_previous_answer(bundle: PromptBundle) -> str | None:
    for m in reversed(bundle.messages):
        if m.role == ASSISTANT:
            return m.text
    return None
