"""Triplet construction, minibatch optimization, early stopping, checkpointing.

Training minimizes the hinge loss over (question, correct snippet, sampled
incorrect snippet) triplets. Each epoch resamples one negative per pair,
reports training loss, validation loss over a frozen triplet set, and dev
MRR; the checkpoint with the best dev MRR wins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import CorpusSplit, QCPair, TokenSequence, Vocabulary
from .encoders import CodeSearchModel, EncoderConfig
from .evaluation import evaluate_protocol
from .kernels import Parameter, cosine, hinge_loss

# distinct rng stream tags under one user seed
_STREAM_TRIPLETS = 2
_STREAM_SHUFFLE = 3


class TrainError(ValueError):
    pass


@dataclass
class EncodedPair:
    """A pair pre-encoded to fixed-length id sequences."""

    id: str
    question: TokenSequence
    code: TokenSequence


@dataclass
class Triplet:
    question: TokenSequence
    positive: TokenSequence
    negative: TokenSequence
    pair_id: str


@dataclass
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 25
    train_loss_floor: float = 0.0001
    optimizer: str = "adam"
    learning_rate: float = 0.001
    seed: int = 0
    dev_distractors: int = 49
    dev_iterations: int = 1

    def validate(self) -> None:
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise TrainError("batch_size, max_epochs, and patience must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise TrainError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate < 0:
            raise TrainError("learning_rate must be >= 0")
        if self.train_loss_floor < 0:
            raise TrainError("train_loss_floor must be >= 0")
        if self.dev_distractors < 0 or self.dev_iterations < 1:
            raise TrainError("dev_distractors must be >= 0 and dev_iterations >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    dev_mrr: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord]
    best_epoch: int
    stop_reason: str

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {
                    "epoch": rec.epoch,
                    "train_loss": rec.train_loss,
                    "val_loss": rec.val_loss,
                    "dev_mrr": rec.dev_mrr,
                },
                sort_keys=True,
            )
            for rec in self.epochs
        ]
        return "\n".join(lines) + "\n"


def encode_pairs(
    pairs: list[QCPair], vocab: Vocabulary, config: EncoderConfig
) -> tuple[list[EncodedPair], int]:
    """Encode all pairs; pairs whose question or code tokenizes to nothing are dropped.

    Returns the encoded list and the dropped count.
    """
    from .corpus import encode_sequence, tokenize_code, tokenize_question

    encoded: list[EncodedPair] = []
    skipped = 0
    for pair in pairs:
        q_tokens = tokenize_question(pair.question)
        c_tokens = tokenize_code(pair.code)
        if not q_tokens or not c_tokens:
            skipped += 1
            continue
        encoded.append(
            EncodedPair(
                id=pair.id,
                question=encode_sequence(vocab, q_tokens, config.max_len_question),
                code=encode_sequence(vocab, c_tokens, config.max_len_code),
            )
        )
    return encoded, skipped


def sample_triplets(pairs: list[EncodedPair], epoch: int, seed: int) -> list[Triplet]:
    """One triplet per pair, negative drawn uniformly from the other pairs' code."""
    n = len(pairs)
    if n < 2:
        raise TrainError("need at least 2 pairs to sample negatives")
    rng = np.random.default_rng([seed, _STREAM_TRIPLETS, epoch])
    triplets = []
    for i, pair in enumerate(pairs):
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1
        triplets.append(Triplet(pair.question, pair.code, pairs[j].code, pair.id))
    return triplets


class SGD:
    def __init__(self, params: list[Parameter], lr: float):
        self.params = params
        self.lr = lr

    def step(self) -> None:
        for p in self.params:
            if not p.grad.any():
                continue
            p.value -= self.lr * p.grad


class Adam:
    """Adam with per-parameter step counts; all-zero gradients are skipped
    entirely so that a zero-loss batch provably leaves parameters untouched."""

    def __init__(self, params: list[Parameter], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = {id(p): np.zeros_like(p.value) for p in params}
        self._v = {id(p): np.zeros_like(p.value) for p in params}
        self._t = {id(p): 0 for p in params}

    def step(self) -> None:
        for p in self.params:
            if not p.grad.any():
                continue
            key = id(p)
            self._t[key] += 1
            t = self._t[key]
            m = self._m[key] = self.beta1 * self._m[key] + (1 - self.beta1) * p.grad
            v = self._v[key] = self.beta2 * self._v[key] + (1 - self.beta2) * p.grad**2
            m_hat = m / (1 - self.beta1**t)
            v_hat = v / (1 - self.beta2**t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(cfg: TrainConfig, params: list[Parameter]):
    if cfg.optimizer == "sgd":
        return SGD(params, cfg.learning_rate)
    return Adam(params, cfg.learning_rate)


def train_epoch(
    model: CodeSearchModel,
    triplets: list[Triplet],
    cfg: TrainConfig,
    optimizer=None,
    epoch: int = 0,
) -> float:
    """One pass over shuffled minibatches; returns the epoch-mean hinge loss."""
    if not triplets:
        raise TrainError("empty triplet list")
    if optimizer is None:
        optimizer = make_optimizer(cfg, model.parameters())
    margin = model.config.margin
    rng = np.random.default_rng([cfg.seed, _STREAM_SHUFFLE, epoch])
    order = rng.permutation(len(triplets))
    params = model.parameters()
    total = 0.0
    for start in range(0, len(order), cfg.batch_size):
        chunk = order[start : start + cfg.batch_size]
        batch = [triplets[i] for i in chunk]
        for p in params:
            p.zero_grad()
        q_emb, back_q = model.question_tower.forward_batch([t.question for t in batch], "train")
        pos_emb, back_pos = model.code_tower.forward_batch([t.positive for t in batch], "train")
        neg_emb, back_neg = model.code_tower.forward_batch([t.negative for t in batch], "train")
        dq = np.zeros_like(q_emb)
        dpos = np.zeros_like(pos_emb)
        dneg = np.zeros_like(neg_emb)
        for b in range(len(batch)):
            s_pos, back_cos_pos = cosine(q_emb[b], pos_emb[b])
            s_neg, back_cos_neg = cosine(q_emb[b], neg_emb[b])
            loss, back_hinge = hinge_loss(s_pos, s_neg, margin)
            total += loss
            d_pos, d_neg = back_hinge(1.0 / len(batch))
            if d_pos != 0.0:
                da, db = back_cos_pos(d_pos)
                dq[b] += da
                dpos[b] += db
            if d_neg != 0.0:
                da, db = back_cos_neg(d_neg)
                dq[b] += da
                dneg[b] += db
        back_q(dq)
        back_pos(dpos)
        back_neg(dneg)
        optimizer.step()
    return total / len(triplets)


def _mean_hinge(model: CodeSearchModel, triplets: list[Triplet]) -> float:
    margin = model.config.margin
    total = 0.0
    for t in triplets:
        loss, _ = hinge_loss(model.score(t.question, t.positive), model.score(t.question, t.negative), margin)
        total += loss
    return total / len(triplets)


def fit(
    model: CodeSearchModel,
    split: CorpusSplit,
    dev: list[QCPair],
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> tuple[TrainReport, CodeSearchModel]:
    """Train until the loss floor, patience, or the epoch cap is hit.

    Validation loss uses negatives frozen at the start so early stopping
    compares like with like. The returned model is the checkpoint of the
    epoch with the best dev MRR.
    """
    cfg.validate()
    if not dev:
        raise TrainError("dev set must be non-empty")
    enc_train, _ = encode_pairs(split.train, model.vocab, model.config)
    enc_val, _ = encode_pairs(split.validation, model.vocab, model.config)
    if len(enc_train) < 2 or len(enc_val) < 2:
        raise TrainError("need at least 2 encodable pairs in train and validation")
    # epoch 0 is reserved for the frozen validation negatives; training epochs start at 1
    val_triplets = sample_triplets(enc_val, 0, cfg.seed)

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    optimizer = make_optimizer(cfg, model.parameters())
    records: list[EpochRecord] = []
    best_bytes: bytes | None = None
    best_mrr = -1.0
    best_epoch = 0
    best_val = np.inf
    bad_streak = 0
    stop_reason = "max_epochs"

    for epoch in range(1, cfg.max_epochs + 1):
        triplets = sample_triplets(enc_train, epoch, cfg.seed)
        train_loss = train_epoch(model, triplets, cfg, optimizer, epoch)
        val_loss = _mean_hinge(model, val_triplets)
        dev_mrr = evaluate_protocol(
            model,
            dev,
            pool=split.train,
            distractor_count=cfg.dev_distractors,
            iterations=cfg.dev_iterations,
            seed=cfg.seed,
        ).mrr_mean
        records.append(EpochRecord(epoch, train_loss, val_loss, dev_mrr))

        snapshot = model.to_bytes()
        if out_path is not None:
            (out_path / f"ckpt-epoch{epoch}.cncm").write_bytes(snapshot)
        if dev_mrr > best_mrr:
            best_mrr = dev_mrr
            best_epoch = epoch
            best_bytes = snapshot

        if train_loss < cfg.train_loss_floor:
            stop_reason = "loss_floor"
            break
        if val_loss < best_val:
            best_val = val_loss
            bad_streak = 0
        else:
            bad_streak += 1
            if bad_streak >= cfg.patience:
                stop_reason = "patience"
                break

    report = TrainReport(records, best_epoch=best_epoch, stop_reason=stop_reason)
    if out_path is not None:
        (out_path / "best.cncm").write_bytes(best_bytes)
        (out_path / "report.jsonl").write_text(report.to_jsonl(), encoding="utf-8")
    return report, CodeSearchModel.from_bytes(best_bytes, model.vocab)
