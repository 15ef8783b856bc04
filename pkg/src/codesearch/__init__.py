"""Neural code retrieval: joint question/code embeddings with CNN encoders."""

from .corpus import (
    CorpusSplit,
    Origin,
    QCPair,
    TokenSequence,
    Vocabulary,
    build_vocab,
    encode_sequence,
    read_corpus,
    split_train_validation,
    tokenize_code,
    tokenize_question,
    write_corpus,
)
from .encoders import CodeSearchModel, EncoderConfig
from .estimators import ConvCodeSearch
from .evaluation import (
    EvalSummary,
    RandomScorer,
    RankedResult,
    evaluate_protocol,
    export_histogram,
    mrr,
    rank_candidates,
    topk_accuracy,
)
from .index import SnippetIndex, build_index, load_index, query, save_index
from .skipgram import EmbeddingMatrix, nearest_neighbors, train_skipgram
from .trainer import TrainConfig, TrainReport, Triplet, fit, sample_triplets, train_epoch

__version__ = "0.1.0"

__all__ = [
    "CodeSearchModel",
    "ConvCodeSearch",
    "CorpusSplit",
    "EmbeddingMatrix",
    "EncoderConfig",
    "EvalSummary",
    "Origin",
    "QCPair",
    "RandomScorer",
    "RankedResult",
    "SnippetIndex",
    "TokenSequence",
    "TrainConfig",
    "TrainReport",
    "Triplet",
    "Vocabulary",
    "build_index",
    "build_vocab",
    "encode_sequence",
    "evaluate_protocol",
    "export_histogram",
    "fit",
    "load_index",
    "mrr",
    "nearest_neighbors",
    "query",
    "rank_candidates",
    "read_corpus",
    "sample_triplets",
    "save_index",
    "split_train_validation",
    "tokenize_code",
    "tokenize_question",
    "topk_accuracy",
    "train_epoch",
    "train_skipgram",
    "write_corpus",
]
