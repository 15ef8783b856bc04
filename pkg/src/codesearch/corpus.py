"""Corpus data model: question/code pairs, tokenization, vocabulary, splits.

The corpus unit is a question paired with the code snippet accepted as its
answer. Questions and code share one vocabulary so that encoders with tied
weights can share an embedding table.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_WORD_RE = re.compile(r"\w+", re.UNICODE)

_ORIGINS = ("train_auto", "manual_dev", "manual_eval")


class CorpusError(ValueError):
    """Raised for malformed corpus data or corpus files."""


class Origin(str, Enum):
    """Where a pair came from: mined training data or the manual dev/eval halves."""

    TRAIN_AUTO = "train_auto"
    MANUAL_DEV = "manual_dev"
    MANUAL_EVAL = "manual_eval"


@dataclass(frozen=True)
class QCPair:
    """One question and its annotated answer snippet."""

    id: str
    question: str
    code: str
    origin: Origin = Origin.TRAIN_AUTO

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("pair id must be non-empty")
        if not self.question.strip():
            raise CorpusError(f"pair {self.id!r}: question is empty")
        if not self.code.strip():
            raise CorpusError(f"pair {self.id!r}: code is empty")


@dataclass(eq=False)
class TokenSequence:
    """Fixed-capacity id sequence, truncated or right-padded with PAD."""

    ids: np.ndarray
    true_length: int
    max_len: int


@dataclass
class CorpusSplit:
    """Deterministic train/validation partition of a pair list."""

    train: list[QCPair]
    validation: list[QCPair]
    seed: int


def tokenize_question(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation, dropping the punctuation."""
    return _WORD_RE.findall(text.lower())


def tokenize_code(code: str) -> list[str]:
    """Split code on non-alphanumeric boundaries, preserving identifier case.

    Identifiers are kept whole (no camelCase or snake_case splitting);
    operators and brackets are dropped.
    """
    return _WORD_RE.findall(code)


class Vocabulary:
    """Token-to-id map shared by questions and code.

    PAD and UNK always occupy ids 0 and 1. Real tokens get ids from 2 on,
    ordered by descending corpus frequency with lexicographic tie-break.
    """

    def __init__(self, tokens_with_counts: list[tuple[str, int]], min_count: int):
        self.min_count = min_count
        self.id_to_token: list[str] = [PAD_TOKEN, UNK_TOKEN]
        self.counts: list[int] = [0, 0]
        for token, count in tokens_with_counts:
            self.id_to_token.append(token)
            self.counts.append(count)
        self.token_to_id: dict[str, int] = {
            t: i for i, t in enumerate(self.id_to_token)
        }
        if len(self.token_to_id) != len(self.id_to_token):
            raise CorpusError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def lookup(self, token: str) -> int:
        """Id of `token`, or UNK for out-of-vocabulary tokens."""
        return self.token_to_id.get(token, UNK_ID)

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {"token": tok, "id": i, "count": self.counts[i]},
                ensure_ascii=False,
            )
            for i, tok in enumerate(self.id_to_token)
        ]
        return "\n".join(lines) + "\n"

    def content_hash(self) -> bytes:
        """SHA-256 over the canonical JSONL serialization."""
        return hashlib.sha256(self.to_jsonl().encode("utf-8")).digest()

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_jsonl().encode("utf-8"))

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        vocab = cls.__new__(cls)
        vocab.min_count = 1
        vocab.id_to_token = []
        vocab.counts = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"{path}: bad JSON on line {lineno + 1}") from exc
                if rec["id"] != len(vocab.id_to_token):
                    raise CorpusError(f"{path}: ids must ascend from 0 (line {lineno + 1})")
                vocab.id_to_token.append(rec["token"])
                vocab.counts.append(int(rec["count"]))
        if vocab.id_to_token[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise CorpusError(f"{path}: missing PAD/UNK header rows")
        vocab.token_to_id = {t: i for i, t in enumerate(vocab.id_to_token)}
        return vocab


def build_vocab(pairs: list[QCPair], min_count: int = 5) -> Vocabulary:
    """Count tokens over questions and code jointly and keep the frequent ones.

    Tokens occurring fewer than `min_count` times map to UNK at encode time.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if not pairs:
        raise CorpusError("empty corpus")
    counts: Counter[str] = Counter()
    for pair in pairs:
        counts.update(tokenize_question(pair.question))
        counts.update(tokenize_code(pair.code))
    kept = [(t, c) for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda item: (-item[1], item[0]))
    return Vocabulary(kept, min_count)


def encode_sequence(vocab: Vocabulary, tokens: list[str], max_len: int) -> TokenSequence:
    """Map tokens to ids, truncate at `max_len`, right-pad with PAD."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ids = np.full(max_len, PAD_ID, dtype=np.int64)
    true_length = min(len(tokens), max_len)
    for i in range(true_length):
        ids[i] = vocab.lookup(tokens[i])
    return TokenSequence(ids=ids, true_length=true_length, max_len=max_len)


def split_train_validation(pairs: list[QCPair], seed: int) -> CorpusSplit:
    """Seeded shuffle, then first 70% (floor) to train and the rest to validation."""
    if len(pairs) < 2:
        raise CorpusError("need at least 2 pairs to split")
    order = np.random.default_rng(seed).permutation(len(pairs))
    n_train = (7 * len(pairs)) // 10
    train = [pairs[i] for i in order[:n_train]]
    validation = [pairs[i] for i in order[n_train:]]
    return CorpusSplit(train=train, validation=validation, seed=seed)


def read_corpus(path: str | Path) -> list[QCPair]:
    """Read a JSONL corpus file, validating schema and id uniqueness."""
    pairs: list[QCPair] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: malformed JSON on line {lineno + 1}") from exc
            if not isinstance(rec, dict) or set(rec) != {"id", "question", "code", "origin"}:
                raise CorpusError(
                    f"{path}: line {lineno + 1} must have exactly the keys "
                    "id, question, code, origin"
                )
            if rec["origin"] not in _ORIGINS:
                raise CorpusError(f"{path}: line {lineno + 1}: unknown origin {rec['origin']!r}")
            if rec["id"] in seen:
                raise CorpusError(f"{path}: duplicate id {rec['id']!r}")
            seen.add(rec["id"])
            try:
                pairs.append(
                    QCPair(
                        id=str(rec["id"]),
                        question=str(rec["question"]),
                        code=str(rec["code"]),
                        origin=Origin(rec["origin"]),
                    )
                )
            except CorpusError as exc:
                raise CorpusError(f"{path}: line {lineno + 1}: {exc}") from exc
    return pairs


def write_corpus(pairs: list[QCPair], path: str | Path) -> None:
    """Write pairs as one JSON object per line (UTF-8, LF endings)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in pairs:
            fh.write(
                json.dumps(
                    {
                        "id": pair.id,
                        "question": pair.question,
                        "code": pair.code,
                        "origin": pair.origin.value,
                    },
                    ensure_ascii=False,
                )
            )
            fh.write("\n")
