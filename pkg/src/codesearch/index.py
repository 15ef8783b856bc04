"""Precomputed snippet embeddings with exact brute-force cosine search.

The index stores float32 vectors for every snippet in a corpus together
with a checksum of the model that produced them; queries against a
different model are refused rather than silently returning garbage.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import QCPair, tokenize_code, tokenize_question
from .encoders import CodeSearchModel

_MAGIC = b"CNCI"
_VERSION = 1


class IndexError_(ValueError):
    """Raised for stale indexes, empty queries, and malformed index files."""


@dataclass
class SnippetIndex:
    model_hash: bytes
    dim: int
    entries: list[tuple[str, str, np.ndarray]]
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.entries)


def build_index(model: CodeSearchModel, pairs: list[QCPair]) -> SnippetIndex:
    """Embed every snippet; snippets that tokenize to nothing are skipped and counted."""
    if not pairs:
        raise IndexError_("empty corpus")
    entries: list[tuple[str, str, np.ndarray]] = []
    skipped = 0
    for pair in pairs:
        if not tokenize_code(pair.code):
            skipped += 1
            continue
        emb = model.encode_code(model.code_sequence(pair.code))
        entries.append((pair.id, pair.code, emb.astype(np.float32)))
    return SnippetIndex(
        model_hash=model.content_hash(),
        dim=model.config.output_dim,
        entries=entries,
        skipped=skipped,
    )


def query(
    index: SnippetIndex, model: CodeSearchModel, text: str, k: int
) -> list[tuple[str, str, float]]:
    """Top-k snippets by cosine to the encoded query, ties broken by pair id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if index.model_hash != model.content_hash():
        raise IndexError_("stale index: model checksum does not match")
    if not tokenize_question(text):
        raise IndexError_("empty query")
    q_emb = model.encode_question(model.question_sequence(text))
    q_norm = np.linalg.norm(q_emb)
    if q_norm == 0.0:
        raise IndexError_("degenerate embedding")
    matrix = np.stack([e[2].astype(np.float64) for e in index.entries])
    norms = np.linalg.norm(matrix, axis=1)
    if (norms == 0.0).any():
        raise IndexError_("degenerate embedding")
    scores = np.clip(matrix @ q_emb / (norms * q_norm), -1.0, 1.0)
    ranked = sorted(
        zip(index.entries, scores), key=lambda item: (-item[1], item[0][0])
    )
    return [(entry[0], entry[1], float(score)) for entry, score in ranked[:k]]


def save_index(index: SnippetIndex, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(index.model_hash)
        fh.write(struct.pack("<QQ", index.dim, len(index.entries)))
        for pair_id, code, emb in index.entries:
            id_bytes = pair_id.encode("utf-8")
            code_bytes = code.encode("utf-8")
            fh.write(struct.pack("<Q", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(struct.pack("<Q", len(code_bytes)))
            fh.write(code_bytes)
            fh.write(emb.astype("<f4").tobytes())


def load_index(path: str | Path) -> SnippetIndex:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise IndexError_(f"{path}: not an index file")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != _VERSION:
        raise IndexError_(f"{path}: unsupported version {version}")
    model_hash = raw[8:40]
    dim, count = struct.unpack_from("<QQ", raw, 40)
    offset = 56
    entries = []
    for _ in range(count):
        (id_len,) = struct.unpack_from("<Q", raw, offset)
        offset += 8
        pair_id = raw[offset : offset + id_len].decode("utf-8")
        offset += id_len
        (code_len,) = struct.unpack_from("<Q", raw, offset)
        offset += 8
        code = raw[offset : offset + code_len].decode("utf-8")
        offset += code_len
        emb = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset).copy()
        offset += 4 * dim
        entries.append((pair_id, code, emb))
    return SnippetIndex(model_hash=model_hash, dim=dim, entries=entries)
