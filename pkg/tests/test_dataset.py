from __future__ import annotations

import json
import os
from pathlib import Path

import pytest

from conftest import tiny_fl_sample, tiny_vd_corpus
from llmsqa.dataset import (
    NON_VULNERABLE,
    VULNERABLE,
    VDCorpus,
    VDTrainingPool,
    corpus_hash,
    load_corpus,
    load_fl_corpus,
    load_vd_corpus,
    write_fl_corpus,
    write_vd_corpus,
)
from llmsqa.errors import (
    DuplicateId,
    EmbeddingDimMismatch,
    LineOutOfRange,
    MissingField,
    PoolTooSmall,
)


def _rewrite_first(path: Path, **changes) -> None:
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    rows[0].update(changes)
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))


def test_fl_roundtrip(tmp_path):
    sample = tiny_fl_sample()
    write_fl_corpus([sample], tmp_path)
    loaded = load_fl_corpus(tmp_path)
    assert loaded == [sample]
    assert loaded[0].line_count == 5
    assert loaded[0].hints(5).lines()[0] == 2


def test_fl_line_out_of_range(tmp_path):
    write_fl_corpus([tiny_fl_sample()], tmp_path)
    _rewrite_first(tmp_path / "samples.jsonl", ground_truth_lines=[9])
    with pytest.raises(LineOutOfRange) as info:
        load_fl_corpus(tmp_path)
    assert info.value.sample_id == "tiny-1"


def test_fl_missing_field_and_duplicates(tmp_path):
    write_fl_corpus([tiny_fl_sample("a"), tiny_fl_sample("b")], tmp_path)
    _rewrite_first(tmp_path / "samples.jsonl", id="b")
    with pytest.raises(DuplicateId):
        load_fl_corpus(tmp_path)
    write_fl_corpus([tiny_fl_sample()], tmp_path)
    _rewrite_first(tmp_path / "samples.jsonl", source_code=None)
    with pytest.raises(MissingField):
        load_fl_corpus(tmp_path)


def test_fl_needs_spectrum_or_hints(tmp_path):
    write_fl_corpus([tiny_fl_sample()], tmp_path)
    (tmp_path / "spectra" / "tiny-1.json").unlink()
    with pytest.raises(MissingField):
        load_fl_corpus(tmp_path)


def test_vd_roundtrip_and_counts(tmp_path):
    corpus = tiny_vd_corpus()
    write_vd_corpus(corpus, tmp_path)
    test, pool = load_vd_corpus(tmp_path)
    assert test == corpus.test
    assert len(pool) == 8
    assert load_vd_corpus(tmp_path).label_counts == {VULNERABLE: 1, NON_VULNERABLE: 1}
    assert isinstance(load_corpus(tmp_path), VDCorpus)


def test_vd_embedding_dim_mismatch(tmp_path):
    write_vd_corpus(tiny_vd_corpus(), tmp_path)
    _rewrite_first(tmp_path / "pool.jsonl", embedding=[1.0, 2.0])
    with pytest.raises(EmbeddingDimMismatch):
        load_vd_corpus(tmp_path)


def test_vd_pool_too_small(tmp_path):
    corpus = tiny_vd_corpus()
    small = VDCorpus(corpus.test, VDTrainingPool(corpus.pool.examples[:5], 3))
    write_vd_corpus(small, tmp_path)
    with pytest.raises(PoolTooSmall):
        load_vd_corpus(tmp_path)


def test_vd_pool_needs_embeddings(tmp_path):
    write_vd_corpus(tiny_vd_corpus(), tmp_path)
    _rewrite_first(tmp_path / "pool.jsonl", embedding=None)
    with pytest.raises(MissingField):
        load_vd_corpus(tmp_path)


def test_corpus_hash_tracks_content(tmp_path):
    write_fl_corpus([tiny_fl_sample()], tmp_path / "a")
    write_fl_corpus([tiny_fl_sample()], tmp_path / "b")
    assert corpus_hash(tmp_path / "a") == corpus_hash(tmp_path / "b")
    _rewrite_first(tmp_path / "b" / "samples.jsonl", code_description="changed")
    assert corpus_hash(tmp_path / "a") != corpus_hash(tmp_path / "b")


def test_bundled_synthetic_corpus_loads(synthetic_dir):
    fl = load_fl_corpus(synthetic_dir / "fl")
    assert len(fl) == 10
    assert sum(s.spectrum is not None for s in fl) == 5
    vd = load_vd_corpus(synthetic_dir / "vd")
    assert len(vd.test) == 10 and len(vd.pool) == 12


FUSEFL = os.environ.get("LLMSQA_FUSEFL_CORPUS")
DEVIGN = os.environ.get("LLMSQA_VD_CORPUS")


@pytest.mark.skipif(not FUSEFL, reason="set LLMSQA_FUSEFL_CORPUS to the converted published FL corpus")
def test_published_fl_corpus_counts():
    samples = load_fl_corpus(FUSEFL)
    assert len(samples) == 324
    assert sum(len(s.ground_truth_lines) for s in samples) == 600


@pytest.mark.skipif(not DEVIGN, reason="set LLMSQA_VD_CORPUS to the converted published VD corpus")
def test_published_vd_corpus_counts():
    corpus = load_vd_corpus(DEVIGN)
    assert len(corpus.test) == 386
    assert corpus.label_counts[VULNERABLE] == 193
