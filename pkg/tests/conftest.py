from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from llmsqa.dataset import (
    NON_VULNERABLE,
    VULNERABLE,
    ErrorOutcome,
    FLSample,
    VDCorpus,
    VDSample,
    VDTrainingPool,
    WrongOutputOutcome,
)
from llmsqa.sbfl import CoverageSpectrum

SYNTHETIC = Path(str(resources.files("llmsqa") / "data" / "synthetic"))
GOLDEN = Path(__file__).parent / "golden"


def tiny_fl_sample(sample_id: str = "tiny-1") -> FLSample:
    code = "def tiny(xs):\n    total = 1\n    for x in xs:\n        total += x\n    return total\n"
    spectrum = CoverageSpectrum(5, 2, 3, (2, 2, 2, 1, 2), (3, 0, 3, 3, 3))
    tests = (
        WrongOutputOutcome("tiny([1, 2])", "4", "3"),
        ErrorOutcome("tiny(None)", "TypeError", 3, "for x in xs:"),
    )
    return FLSample(sample_id, code, "Sum the numbers in xs.", tests, frozenset({2}), spectrum)


def tiny_vd_corpus() -> VDCorpus:
    pool = tuple(
        VDSample(
            f"p{i}",
            f"int pool_{i}(void) {{ return {i}; }}",
            VULNERABLE if i % 2 else NON_VULNERABLE,
            None,
            (float(i), 1.0, float(i % 3)),
        )
        for i in range(1, 9)
    )
    test = (
        VDSample("t1", "void golden_vd(char *s) { char b[4]; strcpy(b, s); }", VULNERABLE, "CWE-787", (3.0, 1.0, 0.5)),
        VDSample("t2", "int safe_vd(int x) { return x + 1; }", NON_VULNERABLE, None, (1.0, 2.0, 1.0)),
    )
    return VDCorpus(test, VDTrainingPool(pool, 3), {VULNERABLE: 1, NON_VULNERABLE: 1})


@pytest.fixture
def synthetic_dir() -> Path:
    return SYNTHETIC


# Lines recorded by the acceptance suite, echoed in the terminal summary so
# they appear even when pytest captures output.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
