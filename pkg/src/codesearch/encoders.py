"""Encoder families mapping token sequences into one joint embedding space.

Three families are supported: a max-pooled word-embedding baseline, the
average/attention pooling pair ("unif"), and the convolutional encoder with
optional weight sharing and batch normalization. Question and code towers
always produce vectors of the same dimension so cosine similarity between
them is meaningful.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import PAD_ID, TokenSequence, Vocabulary, encode_sequence, tokenize_code, tokenize_question
from .kernels import (
    BatchNormState,
    KernelError,
    Parameter,
    _conv1d,
    _tanh,
    attention_pool,
    avgpool,
    batchnorm,
    cosine,
    embed_lookup,
    maxpool_over_time,
)
from .skipgram import EmbeddingMatrix

FAMILIES = ("embedding", "unif", "cnn")

_MAGIC = b"CNCM"
_VERSION = 1


class ConfigError(ValueError):
    """Raised for invalid encoder configurations."""


@dataclass
class EncoderConfig:
    """Hyperparameters selecting the encoder family and its shape."""

    family: str = "cnn"
    shared_weights: bool = False
    batch_norm: bool = False
    num_filters: int = 500
    window_size: int = 2
    embed_dim: int = 100
    margin: float = 0.05
    max_len_question: int = 25
    max_len_code: int = 200

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.margin <= 0:
            raise ConfigError("margin must be > 0")
        if self.embed_dim < 1 or self.max_len_question < 1 or self.max_len_code < 1:
            raise ConfigError("dimensions and max lengths must be >= 1")
        if self.family == "unif" and self.shared_weights:
            raise ConfigError("unif towers differ structurally and cannot share weights")
        if self.family == "cnn":
            if self.num_filters < 1 or self.window_size < 1:
                raise ConfigError("cnn needs num_filters >= 1 and window_size >= 1")
            if min(self.max_len_question, self.max_len_code) < self.window_size:
                raise ConfigError("max lengths must be >= window_size")
        if self.batch_norm and self.family != "cnn":
            raise ConfigError("batch_norm is only supported for the cnn family")

    @property
    def output_dim(self) -> int:
        return self.num_filters if self.family == "cnn" else self.embed_dim


def _window_mask(positions: int, true_length: int, window: int) -> np.ndarray:
    """Valid convolution positions: full windows within the real tokens.

    Width is true_length - window + 1, so pooled output cannot change when
    padding is appended. Sequences shorter than the window keep exactly
    position 0, whose window runs over the zero-pinned padding rows.
    """
    return np.arange(positions) < max(1, true_length - window + 1)


def _window_extended(ids: np.ndarray, window: int) -> np.ndarray:
    """Pad the id sequence with PAD up to the window size when needed."""
    if len(ids) >= window:
        return ids
    return np.concatenate([ids, np.zeros(window - len(ids), dtype=ids.dtype)])


class _Tower:
    """One encoding pipeline (question side or code side)."""

    def __init__(
        self,
        role: str,
        config: EncoderConfig,
        max_len: int,
        table: Parameter,
        filters: Parameter | None = None,
        bias: Parameter | None = None,
        attention: Parameter | None = None,
        bn_gamma: Parameter | None = None,
        bn_beta: Parameter | None = None,
        bn_state: BatchNormState | None = None,
    ):
        self.role = role
        self.family = config.family
        self.max_len = max_len
        self.table = table
        self.filters = filters
        self.bias = bias
        self.attention = attention
        self.bn_gamma = bn_gamma
        self.bn_beta = bn_beta
        self.bn_state = bn_state

    def forward(self, seq: TokenSequence, mode: str):
        embeddings, back = self.forward_batch([seq], mode)

        def backward(upstream: np.ndarray) -> None:
            back(np.asarray(upstream)[None, :])

        return embeddings[0], backward

    def forward_batch(self, seqs: list[TokenSequence], mode: str):
        """Encode several sequences; batch norm couples them in train mode."""
        for seq in seqs:
            if seq.true_length == 0:
                raise KernelError(f"empty {self.role}")
        if self.family == "cnn" and self.bn_state is not None and mode == "train":
            return self._forward_cnn_bn_train(seqs)
        pairs = [self._forward_single(seq, mode) for seq in seqs]
        outs = np.stack([out for out, _ in pairs])
        backs = [back for _, back in pairs]

        def backward(upstream: np.ndarray) -> None:
            for back, row in zip(backs, upstream):
                back(row)

        return outs, backward

    def _forward_single(self, seq: TokenSequence, mode: str):
        ids = seq.ids
        if self.family == "cnn":
            ids = _window_extended(ids, self.filters.value.shape[1])
        rows, back_embed = embed_lookup(self.table, ids)

        if self.family == "embedding":
            mask = np.arange(seq.max_len) < seq.true_length
            out, back_pool = maxpool_over_time(rows.T, mask)

            def backward(upstream: np.ndarray) -> None:
                back_embed(back_pool(upstream).T)

            return out, backward

        if self.family == "unif":
            if self.role == "question":
                out, back_pool = avgpool(rows, seq.true_length)
            else:
                out, back_pool = attention_pool(rows, self.attention, seq.true_length)

            def backward(upstream: np.ndarray) -> None:
                back_embed(back_pool(upstream))

            return out, backward

        pre, back_conv = _conv1d(rows, self.filters, self.bias)
        mask = _window_mask(pre.shape[1], seq.true_length, self.filters.value.shape[1])
        if self.bn_state is not None:
            normed, back_bn = batchnorm(pre.T, self.bn_gamma, self.bn_beta, self.bn_state, "infer")
            pre = normed.T
        else:
            back_bn = None
        act, back_tanh = _tanh(pre)
        out, back_pool = maxpool_over_time(act, mask)

        def backward(upstream: np.ndarray) -> None:
            dpre = back_tanh(back_pool(upstream))
            if back_bn is not None:
                dpre = back_bn(dpre.T).T
            back_embed(back_conv(dpre))

        return out, backward

    def _forward_cnn_bn_train(self, seqs: list[TokenSequence]):
        """Convolution with batch statistics pooled over all valid positions."""
        backs_embed, backs_conv, pres, masks = [], [], [], []
        for seq in seqs:
            ids = _window_extended(seq.ids, self.filters.value.shape[1])
            rows, back_embed = embed_lookup(self.table, ids)
            pre, back_conv = _conv1d(rows, self.filters, self.bias)
            backs_embed.append(back_embed)
            backs_conv.append(back_conv)
            pres.append(pre)
            masks.append(_window_mask(pre.shape[1], seq.true_length, self.filters.value.shape[1]))

        stacked = np.concatenate(
            [pre[:, mask].T for pre, mask in zip(pres, masks)], axis=0
        )
        normed, back_bn = batchnorm(stacked, self.bn_gamma, self.bn_beta, self.bn_state, "train")

        outs, backs_tanh, backs_pool = [], [], []
        offset = 0
        for pre, mask in zip(pres, masks):
            count = int(mask.sum())
            merged = pre.copy()
            merged[:, mask] = normed[offset : offset + count].T
            offset += count
            act, back_tanh = _tanh(merged)
            out, back_pool = maxpool_over_time(act, mask)
            outs.append(out)
            backs_tanh.append(back_tanh)
            backs_pool.append(back_pool)

        def backward(upstream: np.ndarray) -> None:
            dstacked = np.zeros_like(stacked)
            dpres = []
            offset = 0
            for i, mask in enumerate(masks):
                count = int(mask.sum())
                dmerged = backs_tanh[i](backs_pool[i](upstream[i]))
                dstacked[offset : offset + count] = dmerged[:, mask].T
                offset += count
                dpres.append(dmerged)
            dnormed = back_bn(dstacked)
            offset = 0
            for i, mask in enumerate(masks):
                count = int(mask.sum())
                dpre = np.zeros_like(dpres[i])
                dpre[:, mask] = dnormed[offset : offset + count].T
                offset += count
                backs_embed[i](backs_conv[i](dpre))

        return np.stack(outs), backward


class CodeSearchModel:
    """Question and code encoders sharing one similarity space.

    With ``shared_weights`` the two towers reference the same parameter
    objects, so an update through either view is the same update.
    """

    def __init__(
        self,
        config: EncoderConfig,
        vocab: Vocabulary,
        embeddings: EmbeddingMatrix | None = None,
        seed: int = 0,
    ):
        config.validate()
        self.config = config
        self.vocab = vocab
        self._tensors: dict[str, Parameter] = {}
        self._bn_states: dict[str, BatchNormState] = {}

        rng = np.random.default_rng(seed)
        vocab_size = len(vocab)
        dim = config.embed_dim
        if embeddings is not None and embeddings.data.shape != (vocab_size, dim):
            raise ConfigError(
                f"embedding matrix shape {embeddings.data.shape} does not match "
                f"(|vocab|={vocab_size}, embed_dim={dim})"
            )

        def table(name: str) -> Parameter:
            if embeddings is not None:
                values = embeddings.data.copy()
            else:
                values = rng.uniform(-0.5 / dim, 0.5 / dim, size=(vocab_size, dim))
            values[PAD_ID] = 0.0
            return self._register(Parameter(values, name))

        def filters(name: str) -> Parameter:
            bound = np.sqrt(6.0 / (config.window_size * dim + config.num_filters))
            shape = (config.num_filters, config.window_size, dim)
            return self._register(Parameter(rng.uniform(-bound, bound, size=shape), name))

        def bias(name: str) -> Parameter:
            return self._register(Parameter(np.zeros(config.num_filters), name))

        def bn(prefix: str):
            gamma = self._register(Parameter(np.ones(config.num_filters), f"{prefix}_gamma"))
            beta = self._register(Parameter(np.zeros(config.num_filters), f"{prefix}_beta"))
            state = BatchNormState.create(config.num_filters)
            self._bn_states[prefix] = state
            return gamma, beta, state

        if config.family == "embedding":
            if config.shared_weights:
                shared = table("table")
                q_parts = {"table": shared}
                c_parts = {"table": shared}
            else:
                q_parts = {"table": table("q_table")}
                c_parts = {"table": table("c_table")}
        elif config.family == "unif":
            shared = table("table")
            q_parts = {"table": shared}
            c_parts = {"table": shared, "attention": self._register(Parameter(np.zeros(dim), "attention"))}
        else:
            # batch norm absorbs any constant shift, so those towers carry
            # no conv bias and beta provides the learnable offset instead
            if config.shared_weights:
                shared_parts = {"table": table("table"), "filters": filters("filters")}
                if config.batch_norm:
                    gamma, beta, state = bn("bn")
                    shared_parts.update(bn_gamma=gamma, bn_beta=beta, bn_state=state)
                else:
                    shared_parts["bias"] = bias("bias")
                q_parts = dict(shared_parts)
                c_parts = dict(shared_parts)
            else:
                q_parts = {"table": table("q_table"), "filters": filters("q_filters")}
                c_parts = {"table": table("c_table"), "filters": filters("c_filters")}
                if config.batch_norm:
                    gamma, beta, state = bn("q_bn")
                    q_parts.update(bn_gamma=gamma, bn_beta=beta, bn_state=state)
                    gamma, beta, state = bn("c_bn")
                    c_parts.update(bn_gamma=gamma, bn_beta=beta, bn_state=state)
                else:
                    q_parts["bias"] = bias("q_bias")
                    c_parts["bias"] = bias("c_bias")

        self.question_tower = _Tower("question", config, config.max_len_question, **q_parts)
        self.code_tower = _Tower("code", config, config.max_len_code, **c_parts)

    def _register(self, param: Parameter) -> Parameter:
        self._tensors[param.name] = param
        return param

    def parameters(self) -> list[Parameter]:
        """All unique learnable parameters, in construction order."""
        return list(self._tensors.values())

    # -- encoding ------------------------------------------------------

    def encode_question(self, seq: TokenSequence, mode: str = "infer") -> np.ndarray:
        return self.question_tower.forward(seq, mode)[0]

    def encode_code(self, seq: TokenSequence, mode: str = "infer") -> np.ndarray:
        return self.code_tower.forward(seq, mode)[0]

    def score(self, q_seq: TokenSequence, c_seq: TokenSequence) -> float:
        """Cosine similarity of the two tower outputs in infer mode."""
        sim, _ = cosine(self.encode_question(q_seq), self.encode_code(c_seq))
        return sim

    def question_sequence(self, text: str) -> TokenSequence:
        return encode_sequence(self.vocab, tokenize_question(text), self.config.max_len_question)

    def code_sequence(self, code: str) -> TokenSequence:
        return encode_sequence(self.vocab, tokenize_code(code), self.config.max_len_code)

    # -- persistence ---------------------------------------------------

    def _named_tensors(self) -> dict[str, np.ndarray]:
        tensors: dict[str, np.ndarray] = {name: p.value for name, p in self._tensors.items()}
        for prefix, state in self._bn_states.items():
            tensors[f"{prefix}_mean"] = state.running_mean
            tensors[f"{prefix}_var"] = state.running_var
        return tensors

    def to_bytes(self) -> bytes:
        """Serialize config, vocabulary hash, and all tensors (float32)."""
        header = json.dumps(
            {"config": asdict(self.config), "vocab_hash": self.vocab.content_hash().hex()},
            sort_keys=True,
            separators=(",", ":"),
        ).encode("utf-8")
        chunks = [_MAGIC, struct.pack("<I", _VERSION), struct.pack("<Q", len(header)), header]
        tensors = self._named_tensors()
        chunks.append(struct.pack("<Q", len(tensors)))
        for name in sorted(tensors):
            encoded = name.encode("utf-8")
            value = tensors[name]
            chunks.append(struct.pack("<Q", len(encoded)))
            chunks.append(encoded)
            chunks.append(struct.pack("<Q", value.ndim))
            chunks.append(struct.pack(f"<{value.ndim}Q", *value.shape))
            chunks.append(value.astype("<f4").tobytes())
        return b"".join(chunks)

    def content_hash(self) -> bytes:
        return hashlib.sha256(self.to_bytes()).digest()

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, raw: bytes, vocab: Vocabulary) -> "CodeSearchModel":
        if raw[:4] != _MAGIC:
            raise ValueError("not a model checkpoint")
        (version,) = struct.unpack_from("<I", raw, 4)
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (header_len,) = struct.unpack_from("<Q", raw, 8)
        offset = 16
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
        offset += header_len
        if header["vocab_hash"] != vocab.content_hash().hex():
            raise ValueError("vocabulary hash mismatch: checkpoint was built with a different vocabulary")
        config = EncoderConfig(**header["config"])
        model = cls(config, vocab, embeddings=None, seed=0)

        (count,) = struct.unpack_from("<Q", raw, offset)
        offset += 8
        loaded: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<Q", raw, offset)
            offset += 8
            name = raw[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<Q", raw, offset)
            offset += 8
            shape = struct.unpack_from(f"<{rank}Q", raw, offset)
            offset += 8 * rank
            size = int(np.prod(shape)) if rank else 1
            values = np.frombuffer(raw, dtype="<f4", count=size, offset=offset)
            offset += 4 * size
            loaded[name] = values.reshape(shape).astype(np.float64)

        expected = model._named_tensors()
        if set(loaded) != set(expected):
            raise ValueError("checkpoint tensors do not match the model layout")
        for name, param in model._tensors.items():
            if loaded[name].shape != param.value.shape:
                raise ValueError(f"tensor {name!r} has shape {loaded[name].shape}, expected {param.value.shape}")
            param.value[...] = loaded[name]
        for prefix, state in model._bn_states.items():
            state.running_mean = loaded[f"{prefix}_mean"]
            state.running_var = loaded[f"{prefix}_var"]
        return model

    @classmethod
    def load(cls, path: str | Path, vocab: Vocabulary) -> "CodeSearchModel":
        return cls.from_bytes(Path(path).read_bytes(), vocab)
