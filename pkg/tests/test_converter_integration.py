"""Cross-package check: the converter's JSONL output is readable through the
corpus interface. The converter is optional; the rest of this suite runs on
bundled fixtures without it."""

from pathlib import Path

import pytest

converter = pytest.importorskip("staqc_converter")

from codesearch.corpus import Origin, build_vocab, read_corpus

FIXTURE = Path(__file__).parent.parent / "staqc_converter" / "tests" / "data" / "mini_staqc"


@pytest.mark.skipif(not FIXTURE.is_dir(), reason="converter fixture not present")
def test_converted_corpus_loads_and_ingests(tmp_path):
    converter.convert(FIXTURE, tmp_path, dev_eval_seed=0)
    train = read_corpus(tmp_path / "train_auto.jsonl")
    dev = read_corpus(tmp_path / "manual_dev.jsonl")
    eval_ = read_corpus(tmp_path / "manual_eval.jsonl")
    assert [p.origin for p in train] == [Origin.TRAIN_AUTO] * 2
    assert [p.origin for p in dev] == [Origin.MANUAL_DEV]
    assert [p.origin for p in eval_] == [Origin.MANUAL_EVAL]
    vocab = build_vocab(train + dev + eval_, min_count=1)
    assert "sorted" in vocab
