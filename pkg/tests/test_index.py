import numpy as np
import pytest

from _synth import keyed_corpus

from codesearch.corpus import QCPair, build_vocab
from codesearch.encoders import CodeSearchModel, EncoderConfig
from codesearch.index import IndexError_, build_index, load_index, query, save_index


@pytest.fixture(scope="module")
def setup():
    corpus = keyed_corpus(10, seed=5)
    vocab = build_vocab(corpus, min_count=1)
    config = EncoderConfig(
        family="cnn",
        shared_weights=True,
        num_filters=6,
        window_size=2,
        embed_dim=5,
        max_len_question=8,
        max_len_code=10,
    )
    model = CodeSearchModel(config, vocab, seed=2)
    return model, corpus


class TestBuildIndex:
    def test_entry_per_pair(self, setup):
        model, corpus = setup
        index = build_index(model, corpus[:3])
        assert len(index) == 3
        assert index.skipped == 0
        assert index.dim == 6

    def test_untokenizable_code_skipped(self, setup):
        model, corpus = setup
        pairs = corpus[:2] + [QCPair(id="odd", question="something", code="+++ ---")]
        index = build_index(model, pairs)
        assert len(index) == 2
        assert index.skipped == 1

    def test_rebuild_bitwise_identical(self, setup, tmp_path):
        model, corpus = setup
        a, b = tmp_path / "a.cnci", tmp_path / "b.cnci"
        save_index(build_index(model, corpus), a)
        save_index(build_index(model, corpus), b)
        assert a.read_bytes() == b.read_bytes()

    def test_empty_corpus_rejected(self, setup):
        model, _ = setup
        with pytest.raises(IndexError_, match="empty"):
            build_index(model, [])


class TestQuery:
    def test_k_larger_than_index_returns_all_sorted(self, setup):
        model, corpus = setup
        index = build_index(model, corpus)
        hits = query(index, model, "how to key1", k=100)
        assert len(hits) == len(corpus)
        scores = [score for _, _, score in hits]
        assert scores == sorted(scores, reverse=True)

    def test_matches_brute_force_scoring(self, setup):
        model, corpus = setup
        index = build_index(model, corpus)
        text = "how to key3 value"
        hits = query(index, model, text, k=len(corpus))
        q_seq = model.question_sequence(text)
        expected = {p.id: model.score(q_seq, model.code_sequence(p.code)) for p in corpus}
        for pair_id, _, score in hits:
            assert abs(score - expected[pair_id]) < 1e-6

    def test_equal_scores_tie_break_by_id(self, setup):
        model, _ = setup
        dup_a = QCPair(id="aa", question="q", code="run shared(x)")
        dup_b = QCPair(id="ab", question="q", code="run shared(x)")
        index = build_index(model, [dup_b, dup_a])
        hits = query(index, model, "how to run shared", k=2)
        assert [h[0] for h in hits] == ["aa", "ab"]
        assert hits[0][2] == hits[1][2]

    def test_empty_query_rejected(self, setup):
        model, corpus = setup
        index = build_index(model, corpus)
        with pytest.raises(IndexError_, match="empty query"):
            query(index, model, "???", k=1)

    def test_stale_index_rejected(self, setup):
        model, corpus = setup
        index = build_index(model, corpus)
        other = CodeSearchModel(model.config, model.vocab, seed=99)
        with pytest.raises(IndexError_, match="stale"):
            query(index, other, "how to key1", k=1)

    def test_scores_within_unit_range(self, setup):
        model, corpus = setup
        index = build_index(model, corpus)
        for _, _, score in query(index, model, "how to key2 value", k=5):
            assert -1.0 <= score <= 1.0


class TestIndexIO:
    def test_round_trip(self, setup, tmp_path):
        model, corpus = setup
        index = build_index(model, corpus)
        path = tmp_path / "index.cnci"
        save_index(index, path)
        loaded = load_index(path)
        assert loaded.model_hash == index.model_hash
        assert loaded.dim == index.dim
        assert len(loaded) == len(index)
        for (id_a, code_a, emb_a), (id_b, code_b, emb_b) in zip(index.entries, loaded.entries):
            assert (id_a, code_a) == (id_b, code_b)
            assert np.array_equal(emb_a, emb_b)
        # a loaded index still answers queries for the same model
        assert query(loaded, model, "how to key1", k=1)

    def test_header_layout(self, setup, tmp_path):
        model, corpus = setup
        path = tmp_path / "index.cnci"
        save_index(build_index(model, corpus[:2]), path)
        raw = path.read_bytes()
        assert raw[:4] == b"CNCI"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert raw[8:40] == model.content_hash()
        assert int.from_bytes(raw[40:48], "little") == 6  # dim
        assert int.from_bytes(raw[48:56], "little") == 2  # entries

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "nope.cnci"
        path.write_bytes(b"WHAT" + b"\x00" * 60)
        with pytest.raises(IndexError_):
            load_index(path)
