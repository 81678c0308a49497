"""Regenerate the bundled synthetic corpora, mock scripts and example configs.

    python3 scripts/make_synthetic_corpus.py [OUT_DIR]

OUT_DIR defaults to ``src/llmsqa/data/synthetic``. Output is fully
deterministic: running the script twice produces identical files.

Layout::

    fl/           10 fault-localization samples (5 with spectra, 5 with shipped hints)
    vd/           10 vulnerability-detection samples + a 12-example training pool
    mocks/        one JSON script per (task, model)
    configs/      TOML run files for every mode
"""

from __future__ import annotations

import json
import random
import sys
from pathlib import Path

from llmsqa.dataset import (
    NON_VULNERABLE,
    VULNERABLE,
    ErrorOutcome,
    FLSample,
    VDCorpus,
    VDSample,
    VDTrainingPool,
    WrongOutputOutcome,
    write_fl_corpus,
    write_vd_corpus,
)
from llmsqa.sbfl import CoverageSpectrum, rank_lines, top_n_hints

SEED = 20240501
EMBEDDING_DIM = 8

# model id -> (priority rank, chance the rank-1 line is right, validation behaviour)
MODELS = {
    "gpt-4o": (1, 0.8, "stubborn"),
    "llama-3-70b": (2, 0.6, "concede"),
    "gemma-7b": (3, 0.4, "stubborn"),
    "mixtral": (4, 0.5, "concede"),
}

# (code, description, tests, faulty lines)
FL_PROGRAMS = [
    (
        "def sample_01(xs):\n"
        "    total = 1\n"
        "    for x in xs:\n"
        "        total += x\n"
        "    return total\n",
        "Return the sum of the numbers in xs.",
        [("sample_01([1, 2])", "4", "3"), ("sample_01([])", "1", "0")],
        [2],
    ),
    (
        "def sample_02(xs):\n"
        "    best = xs[0]\n"
        "    for x in xs[1:]:\n"
        "        if x < best:\n"
        "            best = x\n"
        "    return best\n",
        "Return the largest element of a non-empty list.",
        [("sample_02([3, 9, 4])", "3", "9")],
        [4],
    ),
    (
        "def sample_03(n):\n"
        "    result = 1\n"
        "    for i in range(1, n):\n"
        "        result *= i\n"
        "    return result\n",
        "Return n factorial.",
        [("sample_03(3)", "2", "6"), ("sample_03(4)", "6", "24")],
        [3],
    ),
    (
        "def sample_04(text):\n"
        "    words = text.split(' ')\n"
        "    counts = {}\n"
        "    for w in words:\n"
        "        counts[w] += 1\n"
        "    return counts\n",
        "Count how often each space-separated word occurs in text.",
        [("sample_04('a b a')", "KeyError", 5)],
        [5],
    ),
    (
        "def sample_05(s):\n"
        "    out = ''\n"
        "    for ch in s:\n"
        "        out = out + ch\n"
        "    return out\n",
        "Return s reversed.",
        [("sample_05('abc')", "abc", "cba")],
        [4],
    ),
    (
        "def sample_06(xs):\n"
        "    if len(xs) == 0:\n"
        "        return 0\n"
        "    mean = sum(xs) / len(xs) + 1\n"
        "    return mean\n",
        "Return the arithmetic mean of xs, or 0 for an empty list.",
        [("sample_06([2, 4])", "4.0", "3.0")],
        [4],
    ),
    (
        "def sample_07(n):\n"
        "    if n < 2:\n"
        "        return True\n"
        "    for d in range(2, n):\n"
        "        if n % d == 0:\n"
        "            return True\n"
        "    return True\n",
        "Return whether n is a prime number.",
        [("sample_07(4)", "True", "False"), ("sample_07(1)", "True", "False")],
        [3, 6],
    ),
    (
        "def sample_08(items, k):\n"
        "    chunks = []\n"
        "    for i in range(0, len(items), k):\n"
        "        chunks.append(items[i:i + k - 1])\n"
        "    return chunks\n",
        "Split items into consecutive chunks of size k.",
        [("sample_08([1, 2, 3, 4], 2)", "[[1], [3]]", "[[1, 2], [3, 4]]")],
        [4],
    ),
    (
        "def sample_09(d, key):\n"
        "    value = d.get(key)\n"
        "    if value is None:\n"
        "        value = d[key]\n"
        "    return value\n",
        "Look key up in d and return None when it is missing.",
        [("sample_09({}, 'x')", "KeyError", 4)],
        [4],
    ),
    (
        "def sample_10(a, b):\n"
        "    while b:\n"
        "        a, b = b, a % b\n"
        "    return b\n",
        "Return the greatest common divisor of a and b.",
        [("sample_10(12, 8)", "0", "4"), ("sample_10(7, 3)", "0", "1")],
        [4],
    ),
]

VD_SNIPPETS = [
    ("void vd_case_01(char *src) { char buf[16]; strcpy(buf, src); }", VULNERABLE, "CWE-787"),
    ("int vd_case_02(int *a, int n) { int s = 0; for (int i = 0; i < n; i++) s += a[i]; return s; }", NON_VULNERABLE, None),
    ("void vd_case_03(char *p) { free(p); printf(\"%s\", p); }", VULNERABLE, "CWE-416"),
    ("int vd_case_04(int x) { return x > 0 ? x : -x; }", NON_VULNERABLE, None),
    ("void vd_case_05(char *fmt) { printf(fmt); }", VULNERABLE, "CWE-134"),
    ("size_t vd_case_06(const char *s) { size_t n = 0; while (s && s[n]) n++; return n; }", NON_VULNERABLE, None),
    ("int vd_case_07(int *a, int i) { return a[i]; }", VULNERABLE, "CWE-125"),
    ("void vd_case_08(char *dst, const char *src, size_t n) { strncpy(dst, src, n - 1); dst[n - 1] = 0; }", NON_VULNERABLE, None),
    ("void *vd_case_09(size_t n, size_t m) { return malloc(n * m); }", VULNERABLE, "CWE-190"),
    ("int vd_case_10(const int *p) { if (!p) return -1; return *p; }", NON_VULNERABLE, None),
]

POOL_SNIPPETS = [
    ("void pool_fn_01(char *s) { char b[8]; sprintf(b, \"%s\", s); }", VULNERABLE, "CWE-787"),
    ("int pool_fn_02(int a, int b) { return a < b ? a : b; }", NON_VULNERABLE, None),
    ("void pool_fn_03(int *p) { free(p); free(p); }", VULNERABLE, "CWE-415"),
    ("int pool_fn_04(const char *s) { return s ? (int)strlen(s) : 0; }", NON_VULNERABLE, None),
    ("void pool_fn_05(char *q) { system(q); }", VULNERABLE, "CWE-78"),
    ("void pool_fn_06(int *a, int n) { for (int i = 0; i < n; i++) a[i] = 0; }", NON_VULNERABLE, None),
    ("char pool_fn_07(char *s, int i) { return s[i + 1]; }", VULNERABLE, "CWE-125"),
    ("int pool_fn_08(int x) { return x * 2; }", NON_VULNERABLE, None),
    ("void pool_fn_09(char *d, char *s) { while ((*d++ = *s++)); }", VULNERABLE, "CWE-787"),
    ("bool pool_fn_10(const int *p) { return p != NULL && *p > 0; }", NON_VULNERABLE, None),
    ("void pool_fn_11(char *p) { free(p); p[0] = 0; }", VULNERABLE, "CWE-416"),
    ("unsigned pool_fn_12(unsigned a) { return a & 0xff; }", NON_VULNERABLE, None),
]


def _spectrum(code: str, faulty: list[int], rng: random.Random) -> CoverageSpectrum:
    n = len(code.splitlines())
    failing, passing = rng.randint(2, 3), rng.randint(3, 6)
    e_f, e_p = [], []
    for line in range(1, n + 1):
        if line == 1:
            e_f.append(failing)
            e_p.append(passing)
        elif line in faulty:
            e_f.append(failing)
            e_p.append(rng.randint(0, 2))
        else:
            e_f.append(rng.randint(0, failing))
            e_p.append(rng.randint(1, passing))
    return CoverageSpectrum(n, failing, passing, tuple(e_f), tuple(e_p))


def _outcome(test):
    inp, got, expected = test
    if isinstance(expected, int):
        return ErrorOutcome(inp, got, expected, "")
    return WrongOutputOutcome(inp, got, expected)


def build_fl(rng: random.Random) -> list[FLSample]:
    samples = []
    for i, (code, desc, tests, faulty) in enumerate(FL_PROGRAMS, 1):
        lines = code.splitlines()
        outcomes = []
        for t in tests:
            o = _outcome(t)
            if isinstance(o, ErrorOutcome):
                o = ErrorOutcome(o.input_repr, o.error_name, o.line, lines[o.line - 1].strip())
            outcomes.append(o)
        spectrum = _spectrum(code, faulty, rng)
        sample = FLSample(f"fl-{i:02d}", code, desc, tuple(outcomes), frozenset(faulty), spectrum)
        if i % 2 == 0:
            # even samples ship precomputed hints instead of a spectrum
            hints = top_n_hints(rank_lines(spectrum, code), 5)
            sample = FLSample(sample.id, code, desc, sample.test_results, sample.ground_truth_lines, None, hints)
        samples.append(sample)
    return samples


def _embedding(rng: random.Random, label: str) -> tuple[float, ...]:
    # loosely separable clusters so similarity retrieval is meaningful
    center = 1.0 if label == VULNERABLE else -1.0
    vec = [round(rng.gauss(center if d < 3 else 0.0, 0.6), 4) for d in range(EMBEDDING_DIM)]
    return tuple(vec)


def build_vd(rng: random.Random) -> VDCorpus:
    test = tuple(
        VDSample(f"vd-{i:02d}", code, label, cwe, _embedding(rng, label))
        for i, (code, label, cwe) in enumerate(VD_SNIPPETS, 1)
    )
    pool = tuple(
        VDSample(f"pool-{i:02d}", code, label, cwe, _embedding(rng, label))
        for i, (code, label, cwe) in enumerate(POOL_SNIPPETS, 1)
    )
    counts = {lab: sum(1 for s in test if s.label == lab) for lab in (VULNERABLE, NON_VULNERABLE)}
    return VDCorpus(test, VDTrainingPool(pool, EMBEDDING_DIM), counts)


def _validation_rules(task: str, behaviour: str) -> list[dict]:
    source = "other_answer" if behaviour == "concede" else "own_previous"
    return [{"when": {"template": f"{task}_validation"}, "respond": {"echo": source}}]


def fl_answers(samples: list[FLSample], rng: random.Random) -> dict[str, dict[str, list[int]]]:
    answers: dict[str, dict[str, list[int]]] = {m: {} for m in MODELS}
    for s in samples:
        n = s.line_count
        truth = sorted(s.ground_truth_lines)
        for model, (_, skill, _) in MODELS.items():
            wrong = [x for x in range(2, n + 1) if x not in s.ground_truth_lines]
            rng.shuffle(wrong)
            if rng.random() < skill:
                lines = [truth[0]] + wrong[:2]
            elif rng.random() < 0.5:
                lines = wrong[:1] + [truth[0]] + wrong[1:2]
            else:
                lines = wrong[:3]
            answers[model][s.id] = lines
    # the four-model vote from the voting walk-through: rank-1 lines 2, 3, 2, 2
    answers["gpt-4o"]["fl-01"] = [2, 4, 3]
    answers["llama-3-70b"]["fl-01"] = [3, 2, 4]
    answers["gemma-7b"]["fl-01"] = [2, 3, 5]
    answers["mixtral"]["fl-01"] = [2, 4, 5]
    return answers


def fl_script(model: str, answers: dict[str, list[int]]) -> dict:
    rules = _validation_rules("fl", MODELS[model][2])
    for sid, lines in answers.items():
        fn = "sample_" + sid.split("-")[1]
        rules.append({"when": {"contains": f"def {fn}("}, "respond": {"fault_lines": lines}})
    if model == "gemma-7b":
        # one unparseable reply exercises the failure path
        rules.insert(1, {"when": {"contains": "def sample_09("}, "respond": {"text": "I am not sure."}})
    return {"rules": rules, "default": {"text": "no idea"}}


def vd_verdicts(corpus: VDCorpus, rng: random.Random) -> dict[str, dict[str, str]]:
    verdicts: dict[str, dict[str, str]] = {m: {} for m in MODELS}
    for s in corpus.test:
        for model, (_, skill, _) in MODELS.items():
            right = rng.random() < skill + 0.1
            other = NON_VULNERABLE if s.label == VULNERABLE else VULNERABLE
            verdicts[model][s.id] = s.label if right else other
    # the example vote from the voting walk-through: V, V, NV, V
    verdicts["gpt-4o"]["vd-01"] = VULNERABLE
    verdicts["llama-3-70b"]["vd-01"] = VULNERABLE
    verdicts["gemma-7b"]["vd-01"] = NON_VULNERABLE
    verdicts["mixtral"]["vd-01"] = VULNERABLE
    return verdicts


def vd_script(model: str, verdicts: dict[str, str]) -> dict:
    rules = _validation_rules("vd", MODELS[model][2])
    for sid, verdict in verdicts.items():
        fn = "vd_case_" + sid.split("-")[1]
        rules.append(
            {
                "when": {"template": "vd_initial_cot", "contains": fn},
                "respond": {"text": f"Step 1: read {fn}. Step 2: check memory and input handling.\nthis code is {verdict}"},
            }
        )
        rules.append({"when": {"contains": fn}, "respond": {"verdict": verdict}})
    return {"rules": rules, "default": {"verdict": NON_VULNERABLE}}


def _toml_models(task: str) -> str:
    blocks = []
    for model, (rank, _, _) in MODELS.items():
        blocks.append(
            "[[models]]\n"
            f'model_id = "{model}"\n'
            'provider = "mock"\n'
            f'script = "../mocks/{task}_{model}.json"\n'
            f"priority_rank = {rank}\n"
        )
    return "\n".join(blocks)


def config_text(task: str, mode: str, extra: str = "") -> str:
    head = (
        f"# {task.upper()} run over the bundled synthetic corpus with scripted mock models.\n"
        "# Paths are relative to this file; cache_dir and out default to the working directory.\n"
        f'name = "{task}-{mode}"\n'
        f'task = "{task}"\n'
        f'corpus = "../{task}"\n'
        f'mode = "{mode}"\n'
        "seed = 0\n"
        'baseline = "gpt-4o"\n'
        'priority = ["gpt-4o", "llama-3-70b", "gemma-7b", "mixtral"]\n'
    )
    return head + extra + "\n" + _toml_models(task)


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def generate(out: Path) -> None:
    rng = random.Random(SEED)
    fl = build_fl(rng)
    vd = build_vd(rng)
    write_fl_corpus(fl, out / "fl")
    write_vd_corpus(vd, out / "vd")

    for model, answers in fl_answers(fl, rng).items():
        write_json(out / "mocks" / f"fl_{model}.json", fl_script(model, answers))
    for model, verdicts in vd_verdicts(vd, rng).items():
        write_json(out / "mocks" / f"vd_{model}.json", vd_script(model, verdicts))

    configs = out / "configs"
    configs.mkdir(parents=True, exist_ok=True)
    pairs = 'pairs = ["llama-3-70b<=gpt-4o", "mixtral<=gemma-7b"]\n'
    for task in ("fl", "vd"):
        (configs / f"{task}_single.toml").write_text(config_text(task, "single"), encoding="utf-8")
        (configs / f"{task}_vote.toml").write_text(config_text(task, "vote"), encoding="utf-8")
        (configs / f"{task}_crossval.toml").write_text(config_text(task, "crossval", pairs), encoding="utf-8")
    (configs / "vd_cot.toml").write_text(
        config_text("vd", "single", "cot = true\n").replace('"vd-single"', '"vd-cot"'), encoding="utf-8"
    )


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    default = Path(__file__).resolve().parent.parent / "src" / "llmsqa" / "data" / "synthetic"
    out = Path(argv[0]) if argv else default
    generate(out)
    print(f"wrote synthetic corpora to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
