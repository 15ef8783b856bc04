import numpy as np
import pytest
from sklearn.base import clone

from _synth import keyed_corpus

from codesearch.estimators import ConvCodeSearch
from codesearch.validation import NotFittedError, check_pairs, check_texts


def fast_params(**overrides):
    params = dict(
        family="cnn",
        shared_weights=True,
        num_filters=16,
        embed_dim=16,
        min_count=1,
        pretrain_epochs=1,
        batch_size=8,
        max_epochs=25,
        learning_rate=0.01,
        train_loss_floor=0.001,
        dev_distractors=5,
        max_len_question=10,
        max_len_code=12,
        seed=0,
    )
    params.update(overrides)
    return params


@pytest.fixture(scope="module")
def fitted():
    est = ConvCodeSearch(**fast_params())
    return est.fit(keyed_corpus(20, seed=3))


class TestSklearnContract:
    def test_get_params_round_trip(self):
        est = ConvCodeSearch(**fast_params())
        params = est.get_params()
        assert params["num_filters"] == 16
        rebuilt = ConvCodeSearch(**params)
        assert rebuilt.get_params() == params

    def test_set_params(self):
        est = ConvCodeSearch()
        est.set_params(num_filters=32, margin=0.1)
        assert est.num_filters == 32
        assert est.margin == 0.1

    def test_clone(self):
        est = ConvCodeSearch(**fast_params())
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_not_fitted_error(self):
        with pytest.raises(NotFittedError):
            ConvCodeSearch().transform(["anything"])


class TestFitAndUse:
    def test_fit_sets_artifacts(self, fitted):
        assert fitted.model_ is not None
        assert fitted.vocab_ is not None
        assert len(fitted.index_) == 20

    def test_transform_shape(self, fitted):
        out = fitted.transform(["how to key1", "how to key2"])
        assert out.shape == (2, 16)

    def test_transform_code_shape(self, fitted):
        out = fitted.transform_code(["run key1(x)"])
        assert out.shape == (1, 16)

    def test_search_returns_ranked_hits(self, fitted):
        hits = fitted.search("how to key1", k=3)
        assert len(hits) == 3
        scores = [s for _, _, s in hits]
        assert scores == sorted(scores, reverse=True)

    def test_predict_memorized_pair(self, fitted):
        corpus = keyed_corpus(20, seed=3)
        predicted = fitted.predict([corpus[0].question, corpus[5].question])
        assert predicted[0] == corpus[0].id
        assert predicted[1] == corpus[5].id

    def test_tuple_input_accepted(self):
        est = ConvCodeSearch(**fast_params(max_epochs=2))
        est.fit([(f"p{i}", f"how to key{i} thing", f"run key{i}(x)") for i in range(8)])
        assert est.model_ is not None


class TestValidationHelpers:
    def test_check_pairs_rejects_garbage(self):
        with pytest.raises(TypeError):
            check_pairs([1, 2, 3])

    def test_check_pairs_rejects_empty(self):
        with pytest.raises(ValueError):
            check_pairs([])

    def test_check_texts_rejects_plain_string(self):
        with pytest.raises(TypeError):
            check_texts("single string")
