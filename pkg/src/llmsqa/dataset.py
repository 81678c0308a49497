"""Corpus ingestion for the fault-localization and vulnerability-detection tasks.

A corpus directory holds ``manifest.json``, ``samples.jsonl`` and, depending
on the task, ``pool.jsonl`` (VD few-shot pool) and ``spectra/<id>.json``
(FL coverage spectra). Lines are 1-based everywhere.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Union

from .errors import (
    CorpusError,
    DuplicateId,
    EmbeddingDimMismatch,
    LineOutOfRange,
    MissingField,
    PoolTooSmall,
)
from .sbfl import CoverageSpectrum, RankedLine, SuspiciousnessRanking, rank_lines, top_n_hints

log = logging.getLogger(__name__)

VULNERABLE = "vulnerable"
NON_VULNERABLE = "non-vulnerable"
LABELS = (VULNERABLE, NON_VULNERABLE)
MIN_POOL_SIZE = 6


def line_count(source_code: str) -> int:
    return len(source_code.splitlines())


@dataclass(frozen=True)
class ErrorOutcome:
    input_repr: str
    error_name: str
    line: int
    code_content: str

    kind = "error"


@dataclass(frozen=True)
class WrongOutputOutcome:
    input_repr: str
    actual: str
    expected: str

    kind = "wrong_output"


TestOutcome = Union[ErrorOutcome, WrongOutputOutcome]


@dataclass(frozen=True)
class FLSample:
    id: str
    source_code: str
    code_description: str
    test_results: tuple[TestOutcome, ...]
    ground_truth_lines: frozenset[int]
    spectrum: CoverageSpectrum | None = None
    sbfl_hints: SuspiciousnessRanking | None = None

    @property
    def line_count(self) -> int:
        return line_count(self.source_code)

    def hints(self, n: int = 5) -> SuspiciousnessRanking:
        """Top-``n`` SBFL hints; shipped hints take precedence over the spectrum."""
        if self.sbfl_hints is not None:
            return top_n_hints(self.sbfl_hints, n)
        assert self.spectrum is not None
        return top_n_hints(rank_lines(self.spectrum, self.source_code), n)


@dataclass(frozen=True)
class VDSample:
    id: str
    source_code: str
    label: str | None
    cwe: str | None = None
    embedding: tuple[float, ...] | None = None

    @property
    def is_vulnerable(self) -> bool:
        return self.label == VULNERABLE


@dataclass(frozen=True)
class VDTrainingPool:
    examples: tuple[VDSample, ...]
    embedding_dim: int

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[VDSample]:
        return iter(self.examples)


@dataclass(frozen=True)
class VDCorpus:
    test: tuple[VDSample, ...]
    pool: VDTrainingPool
    label_counts: dict[str, int] = field(default_factory=dict)

    def __iter__(self):
        # allows ``test, pool = load_vd_corpus(path)``
        return iter((self.test, self.pool))


# -- parsing helpers ----------------------------------------------------------


def _require(obj: dict, key: str, where: str):
    if key not in obj or obj[key] is None:
        raise MissingField(key, where)
    return obj[key]


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
    return rows


def read_manifest(path: str | Path) -> dict:
    manifest_path = Path(path) / "manifest.json"
    if not manifest_path.exists():
        raise CorpusError(f"{manifest_path} not found")
    with manifest_path.open(encoding="utf-8") as fh:
        manifest = json.load(fh)
    _require(manifest, "task", "manifest.json")
    return manifest


def _outcome_from_dict(d: dict, where: str) -> TestOutcome:
    kind = _require(d, "kind", where)
    if kind == "error":
        return ErrorOutcome(
            input_repr=str(_require(d, "input", where)),
            error_name=str(_require(d, "error_name", where)),
            line=int(_require(d, "line", where)),
            code_content=str(d.get("code_content", "")),
        )
    if kind == "wrong_output":
        return WrongOutputOutcome(
            input_repr=str(_require(d, "input", where)),
            actual=str(_require(d, "actual", where)),
            expected=str(_require(d, "expected", where)),
        )
    raise CorpusError(f"{where}: unknown test outcome kind {kind!r}")


def _outcome_to_dict(o: TestOutcome) -> dict:
    if isinstance(o, ErrorOutcome):
        return {
            "kind": "error",
            "input": o.input_repr,
            "error_name": o.error_name,
            "line": o.line,
            "code_content": o.code_content,
        }
    return {"kind": "wrong_output", "input": o.input_repr, "actual": o.actual, "expected": o.expected}


def _fl_sample_from_dict(d: dict, spectra_dir: Path) -> FLSample:
    sid = str(_require(d, "id", "sample"))
    where = f"sample {sid}"
    code = str(_require(d, "source_code", where))
    n_lines = line_count(code)
    truth = [int(x) for x in _require(d, "ground_truth_lines", where)]
    if not truth:
        raise MissingField("ground_truth_lines", where)
    for line in truth:
        if not 1 <= line <= n_lines:
            raise LineOutOfRange(sid, line, n_lines)
    outcomes = tuple(_outcome_from_dict(t, where) for t in d.get("test_results", []))
    for o in outcomes:
        if isinstance(o, ErrorOutcome) and not 1 <= o.line <= n_lines:
            raise LineOutOfRange(sid, o.line, n_lines)

    hints = None
    if d.get("sbfl_hints"):
        entries = []
        technique = None
        for h in d["sbfl_hints"]:
            line = int(_require(h, "line", where))
            if not 1 <= line <= n_lines:
                raise LineOutOfRange(sid, line, n_lines)
            technique = technique or str(h.get("technique", "Ochiai"))
            entries.append(RankedLine(line, str(h.get("code", "")), float(_require(h, "score", where))))
        hints = SuspiciousnessRanking(tuple(entries), technique or "Ochiai")

    spectrum = None
    spectrum_file = spectra_dir / f"{sid}.json"
    if spectrum_file.exists():
        with spectrum_file.open(encoding="utf-8") as fh:
            spectrum = CoverageSpectrum.from_dict(json.load(fh))
        if spectrum.line_count != n_lines:
            raise LineOutOfRange(sid, spectrum.line_count, n_lines)
    if spectrum is None and hints is None:
        raise MissingField("spectrum or sbfl_hints", where)

    return FLSample(
        id=sid,
        source_code=code,
        code_description=str(d.get("code_description", "")),
        test_results=outcomes,
        ground_truth_lines=frozenset(truth),
        spectrum=spectrum,
        sbfl_hints=hints,
    )


def _vd_sample_from_dict(d: dict, where: str, need_label: bool, need_embedding: bool) -> VDSample:
    sid = str(_require(d, "id", where))
    where = f"{where} {sid}"
    label = d.get("label")
    if need_label:
        label = _require(d, "label", where)
    if label is not None:
        label = str(label).lower()
        if label not in LABELS:
            raise CorpusError(f"{where}: unknown label {label!r}")
    emb = d.get("embedding")
    if need_embedding and emb is None:
        raise MissingField("embedding", where)
    return VDSample(
        id=sid,
        source_code=str(_require(d, "source_code", where)),
        label=label,
        cwe=d.get("cwe"),
        embedding=tuple(float(x) for x in emb) if emb is not None else None,
    )


def _check_unique(ids: list[str]) -> None:
    seen: set[str] = set()
    for sid in ids:
        if sid in seen:
            raise DuplicateId(sid)
        seen.add(sid)


# -- public API -----------------------------------------------------------------


def load_fl_corpus(path: str | Path) -> list[FLSample]:
    root = Path(path)
    manifest = read_manifest(root)
    if manifest["task"] != "fl":
        raise CorpusError(f"{root} is a {manifest['task']!r} corpus, expected 'fl'")
    samples = [_fl_sample_from_dict(d, root / "spectra") for d in _read_jsonl(root / "samples.jsonl")]
    _check_unique([s.id for s in samples])
    if "count" in manifest and manifest["count"] != len(samples):
        log.warning("manifest count %s != %d samples in %s", manifest["count"], len(samples), root)
    return samples


def load_vd_corpus(path: str | Path) -> VDCorpus:
    root = Path(path)
    manifest = read_manifest(root)
    if manifest["task"] != "vd":
        raise CorpusError(f"{root} is a {manifest['task']!r} corpus, expected 'vd'")
    pool_path = root / "pool.jsonl"
    if not pool_path.exists():
        raise CorpusError(f"{pool_path} not found")

    test = [
        _vd_sample_from_dict(d, "sample", need_label=True, need_embedding=False)
        for d in _read_jsonl(root / "samples.jsonl")
    ]
    _check_unique([s.id for s in test])
    pool_examples = [
        _vd_sample_from_dict(d, "pool example", need_label=True, need_embedding=True)
        for d in _read_jsonl(pool_path)
    ]
    _check_unique([s.id for s in pool_examples])

    dim = manifest.get("embedding_dim")
    if dim is None and pool_examples:
        dim = len(pool_examples[0].embedding)
    for s in pool_examples + test:
        if s.embedding is not None and len(s.embedding) != dim:
            raise EmbeddingDimMismatch(
                f"{s.id}: embedding has dim {len(s.embedding)}, expected {dim}"
            )
    if len(pool_examples) < MIN_POOL_SIZE:
        raise PoolTooSmall(len(pool_examples), MIN_POOL_SIZE)

    counts = {label: sum(1 for s in test if s.label == label) for label in LABELS}
    log.info("loaded %d VD samples from %s: %s", len(test), root, counts)
    return VDCorpus(tuple(test), VDTrainingPool(tuple(pool_examples), int(dim)), counts)


def load_corpus(path: str | Path):
    """Load either corpus kind, dispatching on the manifest's task field."""
    task = read_manifest(path)["task"]
    return load_fl_corpus(path) if task == "fl" else load_vd_corpus(path)


def corpus_hash(path: str | Path) -> str:
    """SHA-256 over every corpus file, in sorted relative-path order."""
    root = Path(path)
    digest = hashlib.sha256()
    for file in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(file.relative_to(root).as_posix().encode("utf-8"))
        digest.update(b"\0")
        digest.update(file.read_bytes())
        digest.update(b"\0")
    return digest.hexdigest()


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def write_fl_corpus(samples: list[FLSample], path: str | Path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for s in samples:
        row = {
            "id": s.id,
            "source_code": s.source_code,
            "code_description": s.code_description,
            "test_results": [_outcome_to_dict(o) for o in s.test_results],
            "ground_truth_lines": sorted(s.ground_truth_lines),
        }
        if s.sbfl_hints is not None:
            row["sbfl_hints"] = [
                {"line": e.line, "code": e.code, "technique": s.sbfl_hints.technique_name, "score": e.score}
                for e in s.sbfl_hints
            ]
        if s.spectrum is not None:
            (root / "spectra").mkdir(exist_ok=True)
            with (root / "spectra" / f"{s.id}.json").open("w", encoding="utf-8") as fh:
                json.dump(s.spectrum.to_dict(), fh, indent=1)
        rows.append(row)
    _write_jsonl(root / "samples.jsonl", rows)
    with (root / "manifest.json").open("w", encoding="utf-8") as fh:
        json.dump({"task": "fl", "count": len(samples)}, fh, indent=2)


def _vd_row(s: VDSample) -> dict:
    row = {"id": s.id, "source_code": s.source_code, "label": s.label}
    if s.cwe is not None:
        row["cwe"] = s.cwe
    if s.embedding is not None:
        row["embedding"] = list(s.embedding)
    return row


def write_vd_corpus(corpus: VDCorpus, path: str | Path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    _write_jsonl(root / "samples.jsonl", [_vd_row(s) for s in corpus.test])
    _write_jsonl(root / "pool.jsonl", [_vd_row(s) for s in corpus.pool])
    manifest = {"task": "vd", "count": len(corpus.test), "embedding_dim": corpus.pool.embedding_dim}
    with (root / "manifest.json").open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
