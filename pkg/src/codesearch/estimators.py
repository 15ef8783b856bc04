"""Scikit-learn style facade over the full train/search pipeline.

``ConvCodeSearch`` wires vocabulary construction, word-vector pretraining,
triplet training, and snippet indexing behind the familiar fit/transform
surface, so the retriever slots into sklearn tooling (get_params,
set_params, clone) without touching the lower-level modules.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import index as index_mod
from .corpus import build_vocab, split_train_validation
from .encoders import CodeSearchModel, EncoderConfig
from .skipgram import train_skipgram
from .trainer import TrainConfig, fit
from .validation import check_is_fitted, check_pairs, check_texts


class ConvCodeSearch(BaseEstimator):
    """Joint question/code embedding retriever.

    Parameters mirror the encoder and trainer configuration; see
    :class:`~codesearch.encoders.EncoderConfig` and
    :class:`~codesearch.trainer.TrainConfig` for semantics.
    """

    def __init__(
        self,
        family: str = "cnn",
        shared_weights: bool = True,
        batch_norm: bool = False,
        num_filters: int = 500,
        window_size: int = 2,
        embed_dim: int = 100,
        margin: float = 0.05,
        max_len_question: int = 25,
        max_len_code: int = 200,
        min_count: int = 5,
        pretrain_window: int = 5,
        pretrain_negatives: int = 5,
        pretrain_epochs: int = 5,
        batch_size: int = 64,
        max_epochs: int = 500,
        patience: int = 25,
        train_loss_floor: float = 0.0001,
        optimizer: str = "adam",
        learning_rate: float = 0.001,
        dev_distractors: int = 49,
        seed: int = 0,
    ):
        self.family = family
        self.shared_weights = shared_weights
        self.batch_norm = batch_norm
        self.num_filters = num_filters
        self.window_size = window_size
        self.embed_dim = embed_dim
        self.margin = margin
        self.max_len_question = max_len_question
        self.max_len_code = max_len_code
        self.min_count = min_count
        self.pretrain_window = pretrain_window
        self.pretrain_negatives = pretrain_negatives
        self.pretrain_epochs = pretrain_epochs
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.train_loss_floor = train_loss_floor
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.dev_distractors = dev_distractors
        self.seed = seed

    def _encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            family=self.family,
            shared_weights=self.shared_weights,
            batch_norm=self.batch_norm,
            num_filters=self.num_filters,
            window_size=self.window_size,
            embed_dim=self.embed_dim,
            margin=self.margin,
            max_len_question=self.max_len_question,
            max_len_code=self.max_len_code,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            train_loss_floor=self.train_loss_floor,
            optimizer=self.optimizer,
            learning_rate=self.learning_rate,
            seed=self.seed,
            dev_distractors=self.dev_distractors,
        )

    def fit(self, X, y=None, dev=None):
        """Build the vocabulary, pretrain word vectors, and train the towers.

        X is a list of QCPair or (id, question, code) tuples. When `dev`
        is omitted the validation split doubles as the dev set for
        checkpoint selection.
        """
        pairs = check_pairs(X)
        self.vocab_ = build_vocab(pairs, min_count=self.min_count)
        embeddings = train_skipgram(
            pairs,
            self.vocab_,
            dim=self.embed_dim,
            window=self.pretrain_window,
            negatives=self.pretrain_negatives,
            epochs=self.pretrain_epochs,
            seed=self.seed,
        )
        model = CodeSearchModel(self._encoder_config(), self.vocab_, embeddings, seed=self.seed)
        split = split_train_validation(pairs, seed=self.seed)
        dev_pairs = check_pairs(dev) if dev is not None else split.validation
        cfg = self._train_config()
        cfg.dev_distractors = min(cfg.dev_distractors, len(split.train) - 1)
        self.report_, self.model_ = fit(model, split, dev_pairs, cfg)
        self.index_ = index_mod.build_index(self.model_, pairs)
        return self

    def transform(self, X) -> np.ndarray:
        """Embed natural-language queries into the joint space."""
        check_is_fitted(self)
        texts = check_texts(X)
        return np.stack(
            [self.model_.encode_question(self.model_.question_sequence(t)) for t in texts]
        )

    def transform_code(self, X) -> np.ndarray:
        """Embed code snippets into the joint space."""
        check_is_fitted(self)
        texts = check_texts(X)
        return np.stack(
            [self.model_.encode_code(self.model_.code_sequence(t)) for t in texts]
        )

    def search(self, query_text: str, k: int = 10) -> list[tuple[str, str, float]]:
        """Top-k training snippets for a query, as (pair_id, code, score)."""
        check_is_fitted(self)
        return index_mod.query(self.index_, self.model_, query_text, k)

    def predict(self, X) -> np.ndarray:
        """Best-matching training pair id for each query."""
        check_is_fitted(self)
        texts = check_texts(X)
        return np.array([self.search(t, k=1)[0][0] for t in texts])
