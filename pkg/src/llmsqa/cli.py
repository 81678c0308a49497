"""Command-line entry point: ``llmsqa run | report | cache stats | validate-corpus | render-prompt``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import MODES, TASKS, load_config
from .dataset import load_fl_corpus, load_vd_corpus, read_manifest
from .errors import ConfigInvalid, CorpusError, CorpusMismatch, LLMSQAError, UnknownBaseline
from .gateway import CACHE_MODES, ResponseCache
from .prompting import build_fl_initial, build_validation, build_vd_initial
from .retrieval import PrecomputedEmbeddings, select_examples
from .runner import REPORT_JSON, REPORT_MD, load_manifest, render_markdown, report_from_manifests, run

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_USAGE = 2


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run file")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--corpus", help="corpus directory")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--models", help="comma-separated roster ids, or ID=mock:SCRIPT entries")
    p.add_argument("--priority", help="comma-separated tie-break order, highest first")
    p.add_argument("--pairs", help="cross-validation pairs, e.g. gpt-4o<=llama-3")
    p.add_argument("--cot", action="store_true", default=None, help="append the step-by-step instruction (VD)")
    p.add_argument("--seed", type=int)
    p.add_argument("--cache", choices=CACHE_MODES, help="record (default), replay or bypass")
    p.add_argument("--cache-dir")
    p.add_argument("--out", help="output directory")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--rounds", type=int, help="cross-validation rounds")
    p.add_argument("--repeat", type=int, help="repetition label mixed into cache keys")
    p.add_argument("--baseline", help="configuration used for relative deltas")
    p.add_argument("--strict", action="store_true", help="exit 1 if any request or parse failed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llmsqa", description=__doc__)
    parser.add_argument("--version", action="version", version=f"llmsqa {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment")
    _add_run_flags(p_run)

    p_rep = sub.add_parser("report", help="merge run manifests into one report")
    p_rep.add_argument("manifests", nargs="+", help="manifest.json files or run directories")
    p_rep.add_argument("--baseline")
    p_rep.add_argument("--out", help="write report.json and report.md here")
    p_rep.add_argument("--min-count", type=int, default=0, help="hide intersection rows at or below this count")

    p_cache = sub.add_parser("cache", help="inspect the response cache")
    cache_sub = p_cache.add_subparsers(dest="cache_command", required=True)
    p_stats = cache_sub.add_parser("stats")
    p_stats.add_argument("--cache-dir", default="cache")

    p_val = sub.add_parser("validate-corpus", help="load a corpus and report problems")
    p_val.add_argument("corpus")

    p_render = sub.add_parser("render-prompt", help="print a built prompt")
    p_render.add_argument("--corpus", required=True)
    p_render.add_argument("--sample", required=True, help="sample id")
    p_render.add_argument("--cot", action="store_true")
    p_render.add_argument("--seed", type=int, default=0)
    p_render.add_argument("--hints", type=int, default=5, help="number of SBFL hints (FL)")
    p_render.add_argument("--own", help="file with the model's own answer; renders the validation prompt")
    p_render.add_argument("--other", help="file with the other model's answer")
    return parser


def _cmd_run(args) -> int:
    overrides = {
        "task": args.task,
        "corpus": args.corpus,
        "mode": args.mode,
        "models": args.models,
        "priority": args.priority,
        "pairs": args.pairs,
        "cot": args.cot,
        "seed": args.seed,
        "cache": args.cache,
        "cache_dir": args.cache_dir,
        "out": args.out,
        "parallelism": args.parallelism,
        "rounds": args.rounds,
        "repeat": args.repeat,
        "baseline": args.baseline,
    }
    cfg = load_config(args.config, overrides)
    result = run(cfg)
    sys.stdout.write(render_markdown(result.report))
    print(f"wrote {result.out}")
    if result.failures:
        print(f"{result.failures} failed answers (scored as incorrect)", file=sys.stderr)
        if args.strict:
            return EXIT_FAILURES
    return EXIT_OK


def _cmd_report(args) -> int:
    manifests = [load_manifest(p) for p in args.manifests]
    report = report_from_manifests(manifests, args.baseline)
    md = render_markdown(report, args.min_count)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / REPORT_JSON).write_text(json.dumps(report, sort_keys=True, indent=2), encoding="utf-8")
        (out / REPORT_MD).write_text(md, encoding="utf-8")
    sys.stdout.write(md)
    return EXIT_OK


def _cmd_cache(args) -> int:
    print(json.dumps(ResponseCache(args.cache_dir).stats(), sort_keys=True, indent=2))
    return EXIT_OK


def _cmd_validate(args) -> int:
    task = read_manifest(args.corpus)["task"]
    if task == "fl":
        samples = load_fl_corpus(args.corpus)
        with_spectra = sum(1 for s in samples if s.spectrum is not None)
        print(f"fl corpus: {len(samples)} samples, {with_spectra} with coverage spectra")
    else:
        corpus = load_vd_corpus(args.corpus)
        counts = ", ".join(f"{k}={v}" for k, v in sorted(corpus.label_counts.items()))
        print(f"vd corpus: {len(corpus.test)} samples ({counts}), pool of {len(corpus.pool)}")
    return EXIT_OK


def _cmd_render(args) -> int:
    task = read_manifest(args.corpus)["task"]
    if task == "fl":
        samples = {s.id: s for s in load_fl_corpus(args.corpus)}
        sample = _pick(samples, args.sample)
        bundle = build_fl_initial(sample, sample.hints(args.hints))
    else:
        corpus = load_vd_corpus(args.corpus)
        sample = _pick({s.id: s for s in corpus.test}, args.sample)
        query = sample.embedding
        if query is None:
            query = PrecomputedEmbeddings.from_samples(corpus.test, corpus.pool).embed(sample.source_code)
        bundle = build_vd_initial(sample, select_examples(corpus.pool, sample, query, args.seed), args.cot)
    if args.own is not None or args.other is not None:
        if args.own is None or args.other is None:
            raise ConfigInvalid("--own and --other must be given together")
        own = Path(args.own).read_text(encoding="utf-8")
        other = Path(args.other).read_text(encoding="utf-8")
        bundle = build_validation(task, bundle, own, other)
    sys.stdout.write(bundle.render())
    return EXIT_OK


def _pick(samples: dict, sample_id: str):
    try:
        return samples[sample_id]
    except KeyError:
        raise ConfigInvalid(f"no sample {sample_id!r} in corpus") from None


COMMANDS = {
    "run": _cmd_run,
    "report": _cmd_report,
    "cache": _cmd_cache,
    "validate-corpus": _cmd_validate,
    "render-prompt": _cmd_render,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except (ConfigInvalid, CorpusError, CorpusMismatch, UnknownBaseline, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LLMSQAError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURES


if __name__ == "__main__":
    sys.exit(main())
