"""Synthetic corpora used across the test suite.

Two flavors: a keyed corpus where each pair shares a private token between
question and code (easy to overfit, useful as a memorization oracle), and a
compositional corpus where relevance depends on a verb-noun combination so
that word-order-aware encoders have something real to exploit.
"""

from __future__ import annotations

import random

from codesearch.corpus import Origin, QCPair

_QUESTION_FILLER = ["how", "to", "do", "i", "the", "with", "in", "python", "best", "way"]
_CODE_FILLER = ["def", "run", "return", "x", "y", "data", "result", "import", "print", "for"]


def keyed_corpus(n: int, seed: int = 0) -> list[QCPair]:
    """Pairs whose question and code share one private key token."""
    rng = random.Random(seed)
    pairs = []
    for i in range(n):
        key = f"key{i}"
        q_fill = rng.sample(_QUESTION_FILLER, 3)
        c_fill = rng.sample(_CODE_FILLER, 3)
        pairs.append(
            QCPair(
                id=f"p{i}",
                question=f"{q_fill[0]} {q_fill[1]} {key} {q_fill[2]}",
                code=f"{c_fill[0]} {key}({c_fill[1]}, {c_fill[2]})",
            )
        )
    return pairs


def compositional_corpus(
    n: int,
    n_ops: int = 16,
    seed: int = 0,
    origin: Origin = Origin.TRAIN_AUTO,
    id_prefix: str = "p",
) -> list[QCPair]:
    """Pairs keyed by an ordered combination of two operation tokens.

    Question and code both contain the combination as an adjacent bigram,
    drawn from a small shared pool, so most candidates overlap on unigrams
    and (i, j) is indistinguishable from (j, i) for any encoder that pools
    word embeddings without looking at order. Window-2 filters can match
    the bigram itself.
    """
    rng = random.Random(seed)
    pairs = []
    for i in range(n):
        a = rng.randrange(n_ops)
        b = rng.randrange(n_ops - 1)
        if b >= a:
            b += 1
        q_fill = rng.sample(_QUESTION_FILLER, rng.randint(2, 4))
        c_fill = rng.sample(_CODE_FILLER, rng.randint(2, 4))
        question = f"{q_fill[0]} {q_fill[1]} op{a} op{b} " + " ".join(q_fill[2:])
        code = f"{c_fill[0]} op{a} op{b} " + " ".join(c_fill[1:])
        pairs.append(QCPair(id=f"{id_prefix}{i}", question=question, code=code, origin=origin))
    return pairs


def unrelated_corpus(n: int, seed: int = 0) -> list[QCPair]:
    """Pairs with no lexical tie between question and code.

    Questions draw from one token pool and snippets from a disjoint one, so
    an untrained model has no signal and its ranks are exchangeable."""
    rng = random.Random(seed)
    q_pool = [f"ask{i}" for i in range(30)]
    c_pool = [f"stmt{i}" for i in range(30)]
    pairs = []
    for i in range(n):
        pairs.append(
            QCPair(
                id=f"u{i}",
                question=" ".join(rng.sample(q_pool, rng.randint(3, 6))),
                code=" ".join(rng.sample(c_pool, rng.randint(3, 8))),
            )
        )
    return pairs


def cooccurrence_sentences(n: int = 2000, seed: int = 0) -> list[QCPair]:
    """Corpus where 'file' and 'open' always co-occur and 'qqq' never meets 'file'."""
    rng = random.Random(seed)
    vocab_a = [f"io{i}" for i in range(30)]
    vocab_b = [f"coll{i}" for i in range(30)]
    pairs = []
    for i in range(n):
        if i % 2 == 0:
            extra = rng.sample(vocab_a, 6)
            question = " ".join(extra[:2] + ["file", "open"] + extra[2:4])
            code = " ".join(["file", "open"] + extra[4:])
        else:
            extra = rng.sample(vocab_b, 6)
            question = " ".join(["qqq"] + extra[:3])
            code = " ".join(extra[3:] + ["qqq"])
        pairs.append(QCPair(id=f"s{i}", question=question, code=code))
    return pairs
