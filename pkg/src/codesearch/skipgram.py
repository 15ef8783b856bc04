"""Skip-gram word embeddings with negative sampling, trained from scratch.

Questions and code snippets contribute as separate sentences to one stream.
Training is single-threaded and bitwise-deterministic under a fixed seed;
the PAD row stays exactly zero throughout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import (
    PAD_ID,
    UNK_ID,
    QCPair,
    Vocabulary,
    tokenize_code,
    tokenize_question,
)

_MAGIC = b"CNCW"
_VERSION = 1
_MIN_LR_FRACTION = 1e-4


@dataclass
class EmbeddingMatrix:
    """Input-side embedding table (vocab rows by dim columns)."""

    data: np.ndarray
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def _sentences(pairs: list[QCPair], vocab: Vocabulary) -> list[np.ndarray]:
    """Tokenize both streams into id sentences; OOV maps to UNK to keep windows aligned."""
    sentences = []
    for pair in pairs:
        for tokens in (tokenize_question(pair.question), tokenize_code(pair.code)):
            if tokens:
                sentences.append(
                    np.array([vocab.lookup(t) for t in tokens], dtype=np.int64)
                )
    return sentences


def _noise_distribution(vocab: Vocabulary) -> tuple[np.ndarray, np.ndarray]:
    """Unigram^0.75 distribution over real tokens (specials excluded)."""
    ids = np.arange(2, len(vocab))
    counts = np.asarray(vocab.counts[2:], dtype=np.float64)
    weights = counts**0.75
    total = weights.sum()
    if total <= 0:
        raise ValueError("vocabulary has no counted tokens to sample negatives from")
    return ids, np.cumsum(weights / total)


def train_skipgram(
    pairs: list[QCPair],
    vocab: Vocabulary,
    dim: int = 100,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    seed: int = 0,
    learning_rate: float = 0.025,
) -> EmbeddingMatrix:
    """Train skip-gram embeddings over the tokenized corpus.

    Every position predicts the context tokens within +/-`window`, against
    `negatives` samples drawn from the unigram^0.75 distribution. The
    learning rate decays linearly over all (sentence, epoch) progress.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if window < 1:
        raise ValueError("window must be >= 1")
    if negatives < 1:
        raise ValueError("negatives must be >= 1")
    if len(vocab) < negatives + 2:
        raise ValueError("vocabulary smaller than negatives+2")

    rng = np.random.default_rng(seed)
    vecs_in = rng.uniform(-0.5 / dim, 0.5 / dim, size=(len(vocab), dim))
    vecs_in[PAD_ID] = 0.0
    vecs_out = np.zeros((len(vocab), dim))

    matrix = EmbeddingMatrix(data=vecs_in)
    if epochs == 0:
        return matrix

    sentences = _sentences(pairs, vocab)
    if not sentences:
        raise ValueError("empty corpus")
    noise_ids, noise_cdf = _noise_distribution(vocab)

    total_sentences = epochs * len(sentences)
    processed = 0
    for _ in range(epochs):
        epoch_loss = 0.0
        epoch_pairs = 0
        for sent in sentences:
            alpha = learning_rate * max(
                1.0 - processed / total_sentences, _MIN_LR_FRACTION
            )
            processed += 1
            for pos, center in enumerate(sent):
                lo = max(0, pos - window)
                hi = min(len(sent), pos + window + 1)
                for ctx_pos in range(lo, hi):
                    if ctx_pos == pos:
                        continue
                    context = sent[ctx_pos]
                    draws = noise_ids[
                        np.searchsorted(noise_cdf, rng.random(negatives))
                    ]
                    targets = np.concatenate(([context], draws[draws != context]))
                    labels = np.zeros(len(targets))
                    labels[0] = 1.0
                    v = vecs_in[center]
                    outs = vecs_out[targets]
                    sig = 1.0 / (1.0 + np.exp(-(outs @ v)))
                    epoch_loss -= float(
                        np.log(np.clip(np.where(labels == 1.0, sig, 1.0 - sig), 1e-12, None)).sum()
                    )
                    epoch_pairs += 1
                    coeff = alpha * (labels - sig)
                    vecs_in[center] = v + coeff @ outs
                    vecs_out[targets] += np.outer(coeff, v)
        matrix.epoch_losses.append(epoch_loss / max(epoch_pairs, 1))
    return matrix


def nearest_neighbors(
    embeddings: EmbeddingMatrix, vocab: Vocabulary, token: str, k: int
) -> list[tuple[str, float]]:
    """The k most cosine-similar vocabulary tokens, excluding specials and the query."""
    if token not in vocab:
        raise ValueError(f"token {token!r} not in vocabulary")
    if k >= len(vocab):
        raise ValueError("k must be smaller than the vocabulary")
    if k <= 0:
        return []
    query_id = vocab.token_to_id[token]
    query = embeddings.data[query_id]
    query_norm = np.linalg.norm(query)
    candidates = []
    for cand_id in range(2, len(vocab)):
        if cand_id == query_id:
            continue
        vec = embeddings.data[cand_id]
        norm = np.linalg.norm(vec)
        if norm == 0.0 or query_norm == 0.0:
            continue
        sim = float(query @ vec / (query_norm * norm))
        candidates.append((vocab.id_to_token[cand_id], sim))
    candidates.sort(key=lambda item: (-item[1], item[0]))
    return candidates[:k]


def save_embeddings(matrix: EmbeddingMatrix, path: str | Path) -> None:
    """Write the table as little-endian float32 rows behind a small header."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<QQ", matrix.rows, matrix.dim))
        fh.write(matrix.data.astype("<f4").tobytes())


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not an embedding file")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    rows, dim = struct.unpack_from("<QQ", raw, 8)
    data = np.frombuffer(raw, dtype="<f4", count=rows * dim, offset=24)
    return EmbeddingMatrix(data=data.reshape(rows, dim).astype(np.float64))
