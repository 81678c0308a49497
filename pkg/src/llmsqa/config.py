"""Run configuration: a TOML file plus command-line overrides (flags win)."""

from __future__ import annotations

import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ConfigInvalid
from .gateway import CACHE_MODES, ModelConfig
from .prompting import TEMPLATE_VERSION, GenerationParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TASKS = ("fl", "vd")
MODES = ("single", "vote", "crossval")


@dataclass(frozen=True)
class RunConfig:
    task: str
    corpus: Path
    models: tuple[ModelConfig, ...]
    mode: str = "single"
    priority: tuple[str, ...] = ()
    pairs: tuple[tuple[str, str], ...] = ()
    cot: bool = False
    seed: int = 0
    cache_mode: str = "record"
    cache_dir: Path = Path("cache")
    out: Path = Path("run")
    template_version: str = TEMPLATE_VERSION
    parallelism: int = 4
    rounds: int = 1
    repeat: int = 0
    top_n_hints: int = 5
    baseline: str | None = None
    embedding_provider: str = "precomputed"
    name: str = ""

    def __post_init__(self) -> None:
        if not self.priority:
            ranked = sorted(self.models, key=lambda m: m.priority_rank)
            object.__setattr__(self, "priority", tuple(m.model_id for m in ranked))
        self.validate()

    @property
    def model_ids(self) -> list[str]:
        return [m.model_id for m in self.models]

    def model(self, model_id: str) -> ModelConfig:
        for m in self.models:
            if m.model_id == model_id:
                return m
        raise KeyError(model_id)

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigInvalid(f"task must be one of {TASKS}, got {self.task!r}")
        if self.mode not in MODES:
            raise ConfigInvalid(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.cache_mode not in CACHE_MODES:
            raise ConfigInvalid(f"cache mode must be one of {CACHE_MODES}, got {self.cache_mode!r}")
        if not self.models:
            raise ConfigInvalid("the model roster is empty")
        ids = self.model_ids
        if len(set(ids)) != len(ids):
            raise ConfigInvalid("model ids must be unique")
        ranks = [m.priority_rank for m in self.models]
        if len(set(ranks)) != len(ranks):
            raise ConfigInvalid("priority ranks must be unique")
        if sorted(self.priority) != sorted(ids):
            raise ConfigInvalid("priority order must list every roster model exactly once")
        for left, right in self.pairs:
            for m in (left, right):
                if m not in ids:
                    raise ConfigInvalid(f"pair {left}<={right} references unknown model {m!r}")
            if left == right:
                raise ConfigInvalid(f"pair {left}<={right} pairs a model with itself")
        if self.mode == "crossval" and not self.pairs:
            raise ConfigInvalid("mode 'crossval' needs at least one pair")
        if self.template_version != TEMPLATE_VERSION:
            raise ConfigInvalid(
                f"template version {self.template_version!r} pinned, this build ships {TEMPLATE_VERSION!r}"
            )
        if self.parallelism < 1 or self.rounds < 1 or self.top_n_hints < 1:
            raise ConfigInvalid("parallelism, rounds and top_n_hints must be >= 1")
        if self.seed < 0:
            raise ConfigInvalid("seed must be non-negative")
        if self.baseline is not None and self.baseline not in ids and self.baseline != "vote":
            if not any(self.baseline == f"{l}<={r}" or self.baseline == f"{r}<={l}" for l, r in self.pairs):
                raise ConfigInvalid(f"baseline {self.baseline!r} is not a configuration of this run")

    def snapshot(self) -> dict:
        """Serializable copy for manifests. Holds env var names only, never secrets."""
        return {
            "name": self.name,
            "task": self.task,
            "corpus": str(self.corpus),
            "mode": self.mode,
            "models": [m.to_dict() for m in self.models],
            "priority": list(self.priority),
            "pairs": [f"{l}<={r}" for l, r in self.pairs],
            "cot": self.cot,
            "seed": self.seed,
            "cache_mode": self.cache_mode,
            "template_version": self.template_version,
            "rounds": self.rounds,
            "repeat": self.repeat,
            "top_n_hints": self.top_n_hints,
            "baseline": self.baseline,
            "embedding_provider": self.embedding_provider,
        }


def parse_pairs(spec: str | list) -> tuple[tuple[str, str], ...]:
    items = spec.split(",") if isinstance(spec, str) else spec
    pairs = []
    for item in items:
        item = item.strip()
        if not item:
            continue
        if "<=" not in item:
            raise ConfigInvalid(f"pair {item!r} must look like LEFT<=RIGHT")
        left, right = (p.strip() for p in item.split("<=", 1))
        pairs.append((left, right))
    return tuple(pairs)


def _split(value) -> list[str]:
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    return list(value)


def model_from_dict(d: dict, base: Path, default_rank: int) -> ModelConfig:
    if "model_id" not in d:
        raise ConfigInvalid("every [[models]] entry needs a model_id")
    params = None
    if "temperature" in d or "max_tokens" in d:
        params = GenerationParams(float(d.get("temperature", 0.0)), int(d.get("max_tokens", 1024)))
    script = d.get("script")
    if script is not None:
        script = str((base / script).resolve())
    return ModelConfig(
        model_id=str(d["model_id"]),
        provider=str(d.get("provider", "openai")),
        endpoint=str(d.get("endpoint", "")),
        api_key_env=d.get("api_key_env"),
        api_model=d.get("api_model"),
        params=params,
        priority_rank=int(d.get("priority_rank", default_rank)),
        context_window=d.get("context_window"),
        script=script,
    )


def _adhoc_model(spec: str, rank: int) -> ModelConfig:
    # "id=mock:path/to/script.json"
    model_id, _, target = spec.partition("=")
    provider, _, script = target.partition(":")
    if provider != "mock" or not script:
        raise ConfigInvalid(f"ad-hoc model {spec!r} must look like ID=mock:SCRIPT")
    return ModelConfig(model_id.strip(), "mock", priority_rank=rank, script=str(Path(script).resolve()))


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Read a TOML run file (optional) and apply ``overrides`` on top."""
    data: dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            with path.open("rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
        base = path.parent.resolve()
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    models = [model_from_dict(m, base, i + 1) for i, m in enumerate(data.get("models", []))]
    narrowed = "models" in overrides
    if narrowed:
        selected = []
        known = {m.model_id: m for m in models}
        for i, spec in enumerate(_split(overrides.pop("models"))):
            if "=" in spec:
                selected.append(_adhoc_model(spec, i + 1))
            elif spec in known:
                selected.append(known[spec])
            else:
                raise ConfigInvalid(f"model {spec!r} is not in the config roster")
        models = selected

    def rel(p) -> Path:
        # config-file values are relative to the config file, flag values to cwd
        return (base / p).resolve()

    merged = {**data, **overrides}
    if narrowed and "priority" not in overrides and "priority" in data:
        # a file-level priority order narrows to the models picked on the command line
        ids = [m.model_id for m in models]
        kept = [p for p in _split(data["priority"]) if p in ids]
        merged["priority"] = kept + [i for i in ids if i not in kept]
    for key in ("corpus", "cache_dir", "out"):
        if key in overrides:
            merged[key] = Path(overrides[key]).resolve()
        elif key in data:
            merged[key] = rel(data[key])
    if "corpus" not in merged:
        raise ConfigInvalid("no corpus given")
    if "task" not in merged:
        raise ConfigInvalid("no task given")

    try:
        return RunConfig(
            task=str(merged["task"]),
            corpus=Path(merged["corpus"]),
            models=tuple(models),
            mode=str(merged.get("mode", "single")),
            priority=tuple(_split(merged.get("priority", ()))),
            pairs=parse_pairs(merged.get("pairs", ())),
            cot=bool(merged.get("cot", False)),
            seed=int(merged.get("seed", 0)),
            cache_mode=str(merged.get("cache", merged.get("cache_mode", "record"))),
            cache_dir=Path(merged.get("cache_dir", Path.cwd() / "cache")),
            out=Path(merged.get("out", Path.cwd() / "run")),
            template_version=str(merged.get("template_version", TEMPLATE_VERSION)),
            parallelism=int(merged.get("parallelism", 4)),
            rounds=int(merged.get("rounds", 1)),
            repeat=int(merged.get("repeat", 0)),
            top_n_hints=int(merged.get("top_n_hints", 5)),
            baseline=merged.get("baseline"),
            embedding_provider=str(merged.get("embedding_provider", "precomputed")),
            name=str(merged.get("name", "")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        raise ConfigInvalid(str(exc)) from exc


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes)
