"""Input validation helpers shared by the estimator facade and the CLI."""

from __future__ import annotations

from typing import Iterable, Sequence

from .corpus import QCPair


class NotFittedError(RuntimeError):
    pass


def check_pairs(X: Iterable) -> list[QCPair]:
    """Coerce an iterable of QCPair or (id, question, code) tuples to QCPair."""
    pairs: list[QCPair] = []
    for i, item in enumerate(X):
        if isinstance(item, QCPair):
            pairs.append(item)
        elif isinstance(item, (tuple, list)) and len(item) == 3:
            pairs.append(QCPair(id=str(item[0]), question=str(item[1]), code=str(item[2])))
        else:
            raise TypeError(
                f"element {i} must be a QCPair or (id, question, code) tuple, got {type(item).__name__}"
            )
    if not pairs:
        raise ValueError("empty corpus")
    return pairs


def check_texts(X) -> list[str]:
    if isinstance(X, str):
        raise TypeError("expected a sequence of strings, got a single string")
    texts = [str(t) for t in X]
    if not texts:
        raise ValueError("empty text list")
    return texts


def check_is_fitted(estimator, attribute: str = "model_") -> None:
    if getattr(estimator, attribute, None) is None:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
