"""Few-shot example selection for the vulnerability-detection prompt."""

from __future__ import annotations

import hashlib
import math
import random
import threading
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

from .dataset import VDSample, VDTrainingPool
from .errors import DimMismatch, PoolTooSmall, ZeroVector


@dataclass(frozen=True)
class Example:
    code: str
    label: str
    id: str = ""


@dataclass(frozen=True)
class SimilarExample:
    code: str
    label: str
    similarity: float
    id: str = ""


@dataclass(frozen=True)
class ExampleSelection:
    random_examples: tuple[Example, ...]
    similar_examples: tuple[SimilarExample, ...]


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    if len(u) != len(v) or len(u) == 0:
        raise DimMismatch(f"cannot compare vectors of dims {len(u)} and {len(v)}")
    nu = math.sqrt(math.fsum(x * x for x in u))
    nv = math.sqrt(math.fsum(x * x for x in v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine similarity undefined for a zero vector")
    sim = math.fsum(a * b for a, b in zip(u, v)) / (nu * nv)
    return max(-1.0, min(1.0, sim))


def derive_seed(run_seed: int, sample_id: str) -> int:
    """Per-sample seed so random examples are resampled per test item but replayable."""
    digest = hashlib.sha256(f"{run_seed}:{sample_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _eligible(pool: VDTrainingPool, exclude_id: str | None) -> list[VDSample]:
    return [ex for ex in pool if exclude_id is None or ex.id != exclude_id]


def select_random_examples(
    pool: VDTrainingPool, k: int = 3, seed: int = 0, exclude_id: str | None = None
) -> list[Example]:
    candidates = _eligible(pool, exclude_id)
    if len(candidates) < k:
        raise PoolTooSmall(len(candidates), k)
    rng = random.Random(seed)
    picked = rng.sample(range(len(candidates)), k)
    return [Example(candidates[i].source_code, candidates[i].label, candidates[i].id) for i in picked]


def select_similar_examples(
    pool: VDTrainingPool,
    query_embedding: Sequence[float],
    k: int = 3,
    exclude_id: str | None = None,
) -> list[SimilarExample]:
    """The ``k`` pool entries most cosine-similar to the query; ties keep pool order."""
    candidates = _eligible(pool, exclude_id)
    if len(candidates) < k:
        raise PoolTooSmall(len(candidates), k)
    if len(query_embedding) != pool.embedding_dim:
        raise DimMismatch(f"query dim {len(query_embedding)} != pool dim {pool.embedding_dim}")
    scored = [
        (cosine_similarity(query_embedding, ex.embedding), idx, ex)
        for idx, ex in enumerate(candidates)
    ]
    scored.sort(key=lambda t: (-t[0], t[1]))
    return [SimilarExample(ex.source_code, ex.label, sim, ex.id) for sim, _, ex in scored[:k]]


def select_examples(
    pool: VDTrainingPool,
    sample: VDSample,
    query_embedding: Sequence[float],
    run_seed: int,
    k_random: int = 3,
    k_similar: int = 3,
) -> ExampleSelection:
    return ExampleSelection(
        tuple(select_random_examples(pool, k_random, derive_seed(run_seed, sample.id), sample.id)),
        tuple(select_similar_examples(pool, query_embedding, k_similar, sample.id)),
    )


# -- embedding providers ----------------------------------------------------


class EmbeddingProvider(Protocol):
    name: str

    def embed(self, code: str) -> Sequence[float]: ...


class PrecomputedEmbeddings:
    """Returns vectors shipped with the corpus, looked up by exact code text."""

    name = "precomputed"

    def __init__(self, table: Mapping[str, Sequence[float]]) -> None:
        self._table = dict(table)

    @classmethod
    def from_samples(cls, *groups) -> PrecomputedEmbeddings:
        table = {}
        for group in groups:
            for s in group:
                if s.embedding is not None:
                    table[s.source_code] = s.embedding
        return cls(table)

    def embed(self, code: str) -> Sequence[float]:
        try:
            return self._table[code]
        except KeyError:
            raise LookupError("no precomputed embedding for this code") from None


class SerializedProvider:
    """Wraps a provider that is not safe for concurrent calls."""

    def __init__(self, inner: EmbeddingProvider) -> None:
        self.inner = inner
        self.name = inner.name
        self._lock = threading.Lock()

    def embed(self, code: str) -> Sequence[float]:
        with self._lock:
            return self.inner.embed(code)
