"""Ranking evaluation: distractor draws, MRR, Top-k, and rank histograms.

Each query is scored against its annotated snippet plus a set of randomly
drawn distractor snippets. Ties are resolved pessimistically (the annotated
snippet is ranked last among equals), so a constant scorer over fifty
candidates gets MRR 1/50 rather than a free ride.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import QCPair, TokenSequence
from .encoders import CodeSearchModel


class EvalError(ValueError):
    """Raised for unusable evaluation inputs (empty results, small pools)."""


@dataclass
class RankedResult:
    """Outcome of ranking one query's candidate list."""

    pair_id: str
    rank_of_annotated: int
    candidate_count: int
    scores: list[float] | None = None


@dataclass
class EvalSummary:
    """Aggregate over all (query, iteration) cells of one protocol run."""

    mrr_mean: float
    mrr_std: float
    topk_accuracy: dict[int, float]
    topk_std: dict[int, float]
    histogram: dict[int, int]
    iterations: int
    candidate_count: int
    num_queries: int

    def to_json(self) -> str:
        payload = {
            "mrr_mean": self.mrr_mean,
            "mrr_std": self.mrr_std,
            "topk_accuracy": {str(k): v for k, v in self.topk_accuracy.items()},
            "topk_std": {str(k): v for k, v in self.topk_std.items()},
            "histogram": {str(k): v for k, v in self.histogram.items()},
            "iterations": self.iterations,
            "candidate_count": self.candidate_count,
            "num_queries": self.num_queries,
        }
        return json.dumps(payload, sort_keys=True, indent=2)


class ModelScorer:
    """Scores pair combinations with cached, normalized embeddings."""

    def __init__(self, model: CodeSearchModel):
        self.model = model
        self._questions: dict[QCPair, np.ndarray] = {}
        self._codes: dict[QCPair, np.ndarray] = {}

    def _unit_question(self, pair: QCPair) -> np.ndarray:
        if pair not in self._questions:
            emb = self.model.encode_question(self.model.question_sequence(pair.question))
            self._questions[pair] = _unit(emb)
        return self._questions[pair]

    def _unit_code(self, pair: QCPair) -> np.ndarray:
        if pair not in self._codes:
            emb = self.model.encode_code(self.model.code_sequence(pair.code))
            self._codes[pair] = _unit(emb)
        return self._codes[pair]

    def score_pair(self, q_pair: QCPair, c_pair: QCPair) -> float:
        return float(np.clip(self._unit_question(q_pair) @ self._unit_code(c_pair), -1.0, 1.0))


class RandomScorer:
    """Uniform-random scores; the calibration baseline for the protocol."""

    def __init__(self, seed: int = 0):
        self._rng = np.random.default_rng(seed)

    def score_pair(self, q_pair: QCPair, c_pair: QCPair) -> float:
        return float(self._rng.random())


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise EvalError("degenerate embedding")
    return vec / norm


def _rank_from_scores(annotated: float, distractors: list[float]) -> int:
    greater = sum(1 for s in distractors if s > annotated)
    ties = sum(1 for s in distractors if s == annotated)
    return 1 + greater + ties


def _id_entropy(pair_id: str) -> int:
    return int.from_bytes(hashlib.sha256(pair_id.encode("utf-8")).digest()[:8], "little")


def rank_candidates(
    model: CodeSearchModel,
    q_seq: TokenSequence,
    annotated: TokenSequence,
    distractors: list[TokenSequence],
    pair_id: str = "",
    keep_scores: bool = False,
) -> RankedResult:
    """Score the annotated snippet against distractors and rank it pessimistically."""
    annotated_score = model.score(q_seq, annotated)
    distractor_scores = [model.score(q_seq, c) for c in distractors]
    return RankedResult(
        pair_id=pair_id,
        rank_of_annotated=_rank_from_scores(annotated_score, distractor_scores),
        candidate_count=1 + len(distractors),
        scores=[annotated_score, *distractor_scores] if keep_scores else None,
    )


def mrr(results: list[RankedResult]) -> float:
    """Mean reciprocal rank of the annotated snippet."""
    if not results:
        raise EvalError("no ranked results")
    return sum(1.0 / r.rank_of_annotated for r in results) / len(results)


def topk_accuracy(results: list[RankedResult], k: int) -> float:
    """Fraction of queries whose annotated snippet ranks within the first k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not results:
        raise EvalError("no ranked results")
    return sum(1 for r in results if r.rank_of_annotated <= k) / len(results)


def evaluate_protocol(
    model,
    eval_pairs: list[QCPair],
    pool: list[QCPair],
    distractor_count: int = 49,
    iterations: int = 20,
    seed: int = 0,
) -> EvalSummary:
    """Run the multi-iteration distractor-ranking protocol.

    Per iteration and per query, `distractor_count` distinct snippets are
    drawn from `pool`, excluding the query's own pair by id; the draw is
    keyed by (seed, iteration, pair id) so parallel and serial evaluation
    would see identical candidate lists.
    """
    if not eval_pairs:
        raise EvalError("no evaluation pairs")
    if len(pool) <= distractor_count:
        raise EvalError(
            f"pool of {len(pool)} is too small for {distractor_count} distractors"
        )
    scorer = ModelScorer(model) if isinstance(model, CodeSearchModel) else model
    candidate_count = distractor_count + 1

    eligible: list[np.ndarray] = []
    for pair in eval_pairs:
        idx = np.array([i for i, p in enumerate(pool) if p.id != pair.id], dtype=np.int64)
        if len(idx) < distractor_count:
            raise EvalError(f"pool too small for pair {pair.id!r} after self-exclusion")
        eligible.append(idx)

    iteration_ranks: list[list[int]] = []
    for iteration in range(iterations):
        ranks: list[int] = []
        for pair, idx in zip(eval_pairs, eligible):
            rng = np.random.default_rng([seed, iteration, _id_entropy(pair.id)])
            if distractor_count:
                chosen = rng.choice(idx, size=distractor_count, replace=False)
            else:
                chosen = np.array([], dtype=np.int64)
            annotated = scorer.score_pair(pair, pair)
            distractors = [scorer.score_pair(pair, pool[i]) for i in chosen]
            ranks.append(_rank_from_scores(annotated, distractors))
        iteration_ranks.append(ranks)

    iter_mrrs = np.array([np.mean([1.0 / r for r in ranks]) for ranks in iteration_ranks])
    topk_mean: dict[int, float] = {}
    topk_std: dict[int, float] = {}
    for k in range(1, candidate_count + 1):
        per_iter = np.array(
            [np.mean([1.0 if r <= k else 0.0 for r in ranks]) for ranks in iteration_ranks]
        )
        topk_mean[k] = float(per_iter.mean())
        topk_std[k] = float(per_iter.std())

    histogram = {pos: 0 for pos in range(1, candidate_count + 1)}
    for ranks in iteration_ranks:
        for r in ranks:
            histogram[r] += 1

    return EvalSummary(
        mrr_mean=float(iter_mrrs.mean()),
        mrr_std=float(iter_mrrs.std()),
        topk_accuracy=topk_mean,
        topk_std=topk_std,
        histogram=histogram,
        iterations=iterations,
        candidate_count=candidate_count,
        num_queries=len(eval_pairs),
    )


def export_histogram(summary: EvalSummary, path: str | Path) -> None:
    """Write the pooled first-position histogram as position,count CSV rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["position", "count"])
        for pos in range(1, summary.candidate_count + 1):
            writer.writerow([pos, summary.histogram.get(pos, 0)])
