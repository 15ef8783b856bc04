import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _synth import keyed_corpus

from codesearch.corpus import QCPair, build_vocab


@pytest.fixture
def tiny_pairs() -> list[QCPair]:
    return [
        QCPair(id="a", question="How to sort a list?", code="sorted(items)"),
        QCPair(id="b", question="how to open a file", code="open(path).read()"),
        QCPair(id="c", question="reverse a string in python", code="s[::-1]"),
    ]


@pytest.fixture
def keyed32():
    return keyed_corpus(32, seed=7)


@pytest.fixture
def keyed32_vocab(keyed32):
    return build_vocab(keyed32, min_count=1)
