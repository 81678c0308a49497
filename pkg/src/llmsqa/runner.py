"""Experiment orchestration: corpus -> prompts -> models -> answers -> scores -> files."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import RunConfig
from .dataset import FLSample, VDSample, corpus_hash, load_fl_corpus, load_vd_corpus
from .ensemble import cross_validate, vote
from .errors import ConfigInvalid, CorpusMismatch, NoAnswers, UnknownBaseline
from .evaluation import (
    CLASSIFICATION_METRICS,
    TOP_KS,
    classification_metrics,
    format_delta,
    intersection_table,
    rounded_delta,
    topk_success,
    valid_lines,
)
from .gateway import Gateway, ResponseCache
from .parsing import FLAnswer, VDAnswer, try_parse
from .prompting import PromptBundle, build_fl_initial, build_vd_initial
from .retrieval import PrecomputedEmbeddings, SerializedProvider, select_examples

log = logging.getLogger(__name__)

RESULTS_FILE = "results.jsonl"
MANIFEST_FILE = "manifest.json"
REPORT_JSON = "report.json"
REPORT_MD = "report.md"


@dataclass
class RunResult:
    out: Path
    manifest: dict
    records: list[dict]
    report: dict

    @property
    def failures(self) -> int:
        return sum(self.manifest["failures"].values())


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


# -- building prompts ---------------------------------------------------------------


def _fl_bundles(cfg: RunConfig, samples: Sequence[FLSample]) -> list[PromptBundle]:
    return [build_fl_initial(s, s.hints(cfg.top_n_hints)) for s in samples]


def _vd_bundles(cfg: RunConfig, corpus) -> list[PromptBundle]:
    if cfg.embedding_provider != "precomputed":
        raise ConfigInvalid(f"unknown embedding provider {cfg.embedding_provider!r}")
    provider = SerializedProvider(PrecomputedEmbeddings.from_samples(corpus.test, corpus.pool))
    bundles = []
    for s in corpus.test:
        query = s.embedding if s.embedding is not None else provider.embed(s.source_code)
        selection = select_examples(corpus.pool, s, query, cfg.seed)
        bundles.append(build_vd_initial(s, selection, cfg.cot))
    return bundles


# -- scoring one answer ---------------------------------------------------------------


def _score_fl(answer: FLAnswer | None, lines: list[int] | None, sample: FLSample) -> dict:
    if lines is None:
        lines = answer.lines if answer is not None else []
    kept = valid_lines(lines, sample.line_count)
    return {
        "lines": kept,
        "hits": [topk_success(kept, sample.ground_truth_lines, k) for k in TOP_KS],
    }


def _score_vd(verdict: str | None, sample: VDSample) -> dict:
    return {"verdict": verdict, "correct": verdict is not None and verdict == sample.label}


def _unique_pairs(pairs: Sequence[tuple[str, str]]) -> list[tuple[str, str]]:
    seen: set[frozenset] = set()
    out = []
    for left, right in pairs:
        key = frozenset((left, right))
        if key not in seen:
            seen.add(key)
            out.append((left, right))
    return out


def run(cfg: RunConfig, gateway: Gateway | None = None) -> RunResult:
    """Execute one configured experiment and write its output files.

    Writes ``results.jsonl`` (one record per sample, in corpus order),
    ``manifest.json``, ``report.json`` and ``report.md`` into ``cfg.out``.
    Per-request failures are recorded and scored as incorrect; they never
    abort the run.
    """
    started = _utcnow()
    if cfg.task == "fl":
        samples = load_fl_corpus(cfg.corpus)
        bundles = _fl_bundles(cfg, samples)
    else:
        corpus = load_vd_corpus(cfg.corpus)
        samples = list(corpus.test)
        bundles = _vd_bundles(cfg, corpus)
    chash = corpus_hash(cfg.corpus)

    if gateway is None:
        gateway = Gateway(ResponseCache(cfg.cache_dir), cfg.cache_mode)
    explain = cfg.task == "fl" or cfg.cot

    requests = [(bundle, m) for bundle in bundles for m in cfg.models]
    responses = gateway.complete_batch(requests, cfg.parallelism, cfg.repeat)

    n_models = len(cfg.models)
    records: list[dict] = []
    for i, (sample, bundle) in enumerate(zip(samples, bundles)):
        configs: dict[str, dict] = {}
        answers: dict = {}
        for j, m in enumerate(cfg.models):
            resp = responses[i * n_models + j]
            entry = {"kind": "single", "model_id": m.model_id, "fingerprints": [resp.request_fingerprint]}
            answer = None
            if resp.ok:
                entry["raw"] = resp.text
                answer, entry["error"] = try_parse(cfg.task, resp.text, explain)
            else:
                entry["raw"] = None
                entry["error"] = f"{resp.error_type}: {resp.error}"
            answers[m.model_id] = answer
            entry.update(_score_answer(cfg.task, answer, sample))
            configs[m.model_id] = entry

        if cfg.mode == "vote":
            configs["vote"] = _vote_entry(cfg, answers, configs, sample)
        records.append(_base_record(cfg, sample, bundle) | {"configs": configs})

    if cfg.mode == "crossval":
        pairs = _unique_pairs(cfg.pairs)

        def exchange(i: int) -> dict:
            out = {}
            for left, right in pairs:
                for side in cross_validate(
                    cfg.task, bundles[i], cfg.model(left), cfg.model(right), gateway,
                    cfg.rounds, explain, cfg.repeat,
                ):
                    entry = {
                        "kind": "crossval",
                        "model_id": side.model_id,
                        "other_id": side.other_id,
                        "fingerprints": side.fingerprints,
                        "raw": side.final_raw,
                        "error": side.error,
                    }
                    entry.update(_score_answer(cfg.task, side.answer, samples[i]))
                    out[side.label] = entry
            return out

        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            for record, extra in zip(records, pool.map(exchange, range(len(samples)))):
                record["configs"].update(extra)

    outcomes, kinds = _collect_outcomes(cfg.task, records)
    failures = {
        name: sum(1 for r in records if r["configs"][name]["error"]) for name in kinds
    }
    labels = {s.id: s.label for s in samples} if cfg.task == "vd" else None
    report = build_report(
        cfg.task, chash, [r["sample_id"] for r in records], outcomes, kinds, cfg.baseline, labels, failures
    )
    manifest = {
        "tool": "llmsqa",
        "tool_version": __version__,
        "config": cfg.snapshot() | {"cache_dir": str(cfg.cache_dir), "out": str(cfg.out)},
        "corpus_hash": chash,
        "cache": gateway.stats.to_dict(),
        "started_at": started,
        "finished_at": _utcnow(),
        "task": cfg.task,
        "samples": [r["sample_id"] for r in records],
        "labels": labels,
        "kinds": kinds,
        "outcomes": outcomes,
        "failures": failures,
    }
    out = Path(cfg.out)
    write_outputs(out, records, manifest, report)
    return RunResult(out, manifest, records, report)


def _score_answer(task: str, answer, sample) -> dict:
    if task == "fl":
        return _score_fl(answer, None, sample)
    verdict = answer.verdict if isinstance(answer, VDAnswer) else None
    scored = _score_vd(verdict, sample)
    if isinstance(answer, VDAnswer) and answer.explanation:
        scored["explanation"] = answer.explanation
    return scored


def _vote_entry(cfg: RunConfig, answers: dict, configs: dict, sample) -> dict:
    entry = {
        "kind": "vote",
        "model_id": "vote",
        "fingerprints": [fp for c in configs.values() for fp in c["fingerprints"]],
        "raw": None,
    }
    try:
        verdict = vote(cfg.task, answers, cfg.priority)
    except NoAnswers as exc:
        entry["error"] = f"NoAnswers: {exc}"
        entry.update(_score_answer(cfg.task, None, sample))
        return entry
    entry["error"] = None
    entry["tally"] = verdict.to_dict()["tally"]
    entry["tiebreaks_fired"] = verdict.to_dict()["tiebreaks_fired"]
    if cfg.task == "fl":
        entry.update(_score_fl(None, verdict.final_lines, sample))
    else:
        entry.update(_score_vd(verdict.final_verdict, sample))
    return entry


def _base_record(cfg: RunConfig, sample, bundle: PromptBundle) -> dict:
    record = {
        "sample_id": sample.id,
        "task": cfg.task,
        "template_id": bundle.template_id,
        "template_version": bundle.template_version,
    }
    if cfg.task == "fl":
        record["ground_truth"] = sorted(sample.ground_truth_lines)
        record["line_count"] = sample.line_count
    else:
        record["label"] = sample.label
        record["cwe"] = sample.cwe
    return record


def _collect_outcomes(task: str, records: list[dict]) -> tuple[dict, dict]:
    outcomes: dict[str, dict] = {}
    kinds: dict[str, dict] = {}
    for r in records:
        for name, entry in r["configs"].items():
            kinds.setdefault(name, {k: entry[k] for k in ("kind", "model_id", "other_id") if k in entry})
            if task == "fl":
                outcomes.setdefault(name, {})[r["sample_id"]] = {"hits": entry["hits"]}
            else:
                outcomes.setdefault(name, {})[r["sample_id"]] = {"pred": entry["verdict"]}
    return outcomes, kinds


# -- reporting -------------------------------------------------------------------------


def _primary(task: str) -> str:
    return "top1" if task == "fl" else "accuracy"


def _row(task: str, name: str, outcome: dict, sample_ids: list[str], labels: dict | None) -> dict:
    if task == "fl":
        row = {"config": name}
        for k_idx, k in enumerate(TOP_KS):
            row[f"top{k}"] = sum(1 for sid in sample_ids if outcome[sid]["hits"][k_idx])
        return row
    preds = [outcome[sid]["pred"] for sid in sample_ids]
    metrics = classification_metrics(preds, [labels[sid] for sid in sample_ids])
    return {"config": name, **metrics.to_dict()}


def _solved(task: str, outcome: dict, labels: dict | None) -> set[str]:
    if task == "fl":
        return {sid for sid, o in outcome.items() if o["hits"][0]}
    return {sid for sid, o in outcome.items() if o["pred"] is not None and o["pred"] == labels[sid]}


def build_report(
    task: str,
    chash: str,
    sample_ids: list[str],
    outcomes: dict[str, dict],
    kinds: dict[str, dict],
    baseline: str | None = None,
    labels: dict | None = None,
    failures: dict | None = None,
) -> dict:
    """Rows of metrics per configuration, deltas against ``baseline``, intersections."""
    rows = [_row(task, name, outcomes[name], sample_ids, labels) for name in outcomes]
    by_name = {r["config"]: r for r in rows}
    metric_names = [f"top{k}" for k in TOP_KS] if task == "fl" else list(CLASSIFICATION_METRICS)
    primary = _primary(task)

    if baseline is not None:
        if baseline not in by_name:
            raise UnknownBaseline(baseline)
        base = by_name[baseline]
        for row in rows:
            row["deltas"] = {
                m: rounded_delta(row[m], base[m]) if base[m] else None for m in metric_names
            }
    for row in rows:
        kind = kinds.get(row["config"], {})
        if kind.get("kind") == "crossval":
            for side, model in (("delta_left", kind["model_id"]), ("delta_right", kind["other_id"])):
                ref = by_name.get(model)
                if ref is not None and ref[primary]:
                    row[side] = rounded_delta(row[primary], ref[primary])

    table = intersection_table({name: _solved(task, outcomes[name], labels) for name in outcomes})
    return {
        "task": task,
        "corpus_hash": chash,
        "samples": len(sample_ids),
        "baseline": baseline,
        "primary_metric": primary,
        "rows": rows,
        "failures": failures or {},
        "intersection": table.to_dict(),
        "solved_by_any": table.total(),
    }


def render_markdown(report: dict, min_count: int = 0) -> str:
    task = report["task"]
    base = report["baseline"]
    lines = []
    if task == "fl":
        header = ["Technique", "Top-1", "Top-2", "Top-3"]
    else:
        header = ["Technique", "Acc", "Prec", "Rec", "F1", "F0.5"]
    if base:
        header.append(f"Δ {base}")
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "|".join("---" for _ in header) + "|")
    primary = report["primary_metric"]
    for row in report["rows"]:
        if task == "fl":
            cells = [row["config"], str(row["top1"]), str(row["top2"]), str(row["top3"])]
        else:
            cells = [row["config"]] + [f"{100 * row[m]:.1f}" for m in CLASSIFICATION_METRICS]
        if base:
            delta = row["deltas"][primary]
            cells.append("-" if row["config"] == base else ("n/a" if delta is None else format_delta(delta)))
        lines.append("| " + " | ".join(cells) + " |")

    lines.append("")
    title = "solved at Top-1" if task == "fl" else "correctly predicted"
    lines.append(f"Samples {title} by exactly these configurations (total {report['solved_by_any']}):")
    lines.append("")
    lines.append("| Configurations | Count |")
    lines.append("|---|---|")
    for item in report["intersection"]:
        if item["count"] > min_count or len(item["models"]) == 1:
            lines.append(f"| {', '.join(item['models'])} | {item['count']} |")
    if any(report["failures"].values()):
        lines.append("")
        lines.append("Failures (scored as incorrect): " + ", ".join(
            f"{k}: {v}" for k, v in report["failures"].items() if v
        ))
    return "\n".join(lines) + "\n"


def write_outputs(out: Path, records: list[dict], manifest: dict, report: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with (out / RESULTS_FILE).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(_dump(record) + "\n")
    with (out / MANIFEST_FILE).open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, ensure_ascii=False, sort_keys=True, indent=2)
    with (out / REPORT_JSON).open("w", encoding="utf-8") as fh:
        json.dump(report, fh, ensure_ascii=False, sort_keys=True, indent=2)
    (out / REPORT_MD).write_text(render_markdown(report), encoding="utf-8")


def load_manifest(path: str | Path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_FILE
    with path.open(encoding="utf-8") as fh:
        return json.load(fh)


def report_from_manifests(manifests: Sequence[dict], baseline: str | None = None) -> dict:
    """Merge several runs over the same corpus into one report.

    Configuration names that repeat across runs get an ``@<run name>``
    suffix (run name defaults to the manifest's position).
    """
    if not manifests:
        raise ValueError("no manifests given")
    first = manifests[0]
    for m in manifests[1:]:
        if m["task"] != first["task"] or m["corpus_hash"] != first["corpus_hash"]:
            raise CorpusMismatch("manifests cover different tasks or corpora")
    outcomes: dict[str, dict] = {}
    kinds: dict[str, dict] = {}
    failures: dict[str, int] = {}
    for idx, m in enumerate(manifests):
        run_name = m.get("config", {}).get("name") or str(idx + 1)
        for name, outcome in m["outcomes"].items():
            key = name if name not in outcomes else f"{name}@{run_name}"
            outcomes[key] = outcome
            kinds[key] = m.get("kinds", {}).get(name, {})
            failures[key] = m.get("failures", {}).get(name, 0)
    return build_report(
        first["task"], first["corpus_hash"], first["samples"], outcomes, kinds,
        baseline, first.get("labels"), failures,
    )
