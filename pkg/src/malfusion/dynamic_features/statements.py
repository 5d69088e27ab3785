"""Hierarchical attention encoder over API statements.

Two levels: a statement encoder (token embeddings -> bidirectional
recurrence -> attention pool against a token context vector) and a
statement-sequence encoder (statement embeddings -> bidirectional
recurrence -> attention pool against a statement context vector), topped by
a softmax family head. Attention weights sum to one within each softmax
group; padding is masked out of both pooling levels.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import substrate as S
from ..corpus.types import EmptyTraceError, TraceFile, Vocabulary
from ..corpus.vocab import build_vocabulary
from ..features import FeatureVector
from ..seeding import derive_seed

DEFAULT_SEQ_LEN = 200
STATEMENT_TOKEN_CAP = 16
DEFAULT_TOKEN_VOCAB = 500


def attention_pool(hidden, context) -> tuple[np.ndarray, np.ndarray]:
    """Softmax of inner products; pooled = convex combination of hidden rows."""
    h = np.asarray(hidden, dtype=np.float64)
    c = np.asarray(context, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] == 0:
        raise ValueError(f"hidden must be a nonempty (T, D) stack, got shape {h.shape}")
    if c.shape != (h.shape[1],):
        raise ValueError(f"context dim {c.shape} does not match hidden dim {h.shape[1]}")
    scores = h @ c
    scores -= scores.max()
    e = np.exp(scores)
    weights = e / e.sum()
    return weights, weights @ h


def statement_tokens(trace: TraceFile, vocab: Vocabulary, max_statements: int,
                     max_tokens: int = STATEMENT_TOKEN_CAP) -> np.ndarray:
    """(max_statements, max_tokens) token indices; PAD = vocab.size.

    Each row is the API name followed by its parameter tokens, truncated to
    the first ``max_statements`` statements per the truncation policy.
    """
    pad = vocab.size
    out = np.full((max_statements, max_tokens), pad, dtype=np.int64)
    for r, stmt in enumerate(trace.statements[:max_statements]):
        toks = [stmt.api_name, *stmt.params][:max_tokens]
        out[r, : len(toks)] = [vocab.lookup(t) for t in toks]
    return out


def build_token_vocabulary(traces: list[TraceFile],
                           max_named: int = DEFAULT_TOKEN_VOCAB) -> Vocabulary:
    def tokens():
        for t in traces:
            for s in t.statements:
                yield s.api_name
                yield from s.params
    return build_vocabulary(tokens(), max_named)


class StatementEncoderModel(S.Module):
    def __init__(self, vocab: Vocabulary, family_count: int, *,
                 embed_dim: int = 16, hidden: int = 16,
                 max_statements: int = DEFAULT_SEQ_LEN,
                 max_tokens: int = STATEMENT_TOKEN_CAP,
                 rng: np.random.Generator, dtype=np.float64):
        self.vocab = vocab
        self.family_count = family_count
        self.embed_dim = embed_dim
        self.hidden = hidden
        self.max_statements = max_statements
        self.max_tokens = max_tokens
        self.pad = vocab.size
        self.embed = S.Embedding(vocab.size + 1, embed_dim, rng=rng, dtype=dtype)
        self.word_rnn = S.BiLSTM(embed_dim, hidden, rng=rng, dtype=dtype)
        self.u_ap = S.Tensor(rng.uniform(-0.1, 0.1, 2 * hidden).astype(dtype),
                             requires_grad=True)
        self.sent_rnn = S.BiLSTM(2 * hidden, hidden, rng=rng, dtype=dtype)
        self.u_as = S.Tensor(rng.uniform(-0.1, 0.1, 2 * hidden).astype(dtype),
                             requires_grad=True)
        self.head = S.Dense(2 * hidden, family_count, "softmax", rng=rng, dtype=dtype)

    def parameters(self):
        return (self.embed.parameters() + self.word_rnn.parameters() + [self.u_ap]
                + self.sent_rnn.parameters() + [self.u_as] + self.head.parameters())

    def tokenize(self, trace: TraceFile) -> np.ndarray:
        return statement_tokens(trace, self.vocab, self.max_statements, self.max_tokens)

    def encode(self, tokens: np.ndarray, return_weights: bool = False):
        """(B, L, T) indices -> (B, 2*hidden) trace embeddings."""
        b, length, width = tokens.shape
        flat = tokens.reshape(b * length, width)
        token_mask = flat != self.pad
        emb = self.embed(flat)
        word_states = self.word_rnn.run(emb)
        token_w, stmt = S.attention_pool_t(word_states, self.u_ap, token_mask)
        stmts = S.reshape(stmt, (b, length, 2 * self.hidden))
        stmt_mask = token_mask.reshape(b, length, width).any(axis=-1)
        sent_states = self.sent_rnn.run(stmts)
        stmt_w, trace = S.attention_pool_t(sent_states, self.u_as, stmt_mask)
        if return_weights:
            return trace, token_w.data.reshape(b, length, width), stmt_w.data
        return trace

    def forward(self, tokens: np.ndarray, train: bool = False) -> S.Tensor:
        return self.head(self.encode(tokens))

    def save(self, path: str | Path) -> None:
        meta = {"kind": "statement-encoder", "family_count": self.family_count,
                "embed_dim": self.embed_dim, "hidden": self.hidden,
                "max_statements": self.max_statements, "max_tokens": self.max_tokens,
                "vocab": self.vocab.names()}
        arrays = {f"p{i}": p.data for i, p in enumerate(self.parameters())}
        S.save_container(path, meta, arrays)

    @classmethod
    def load(cls, path: str | Path) -> "StatementEncoderModel":
        meta, arrays = S.load_container(path)
        if meta.get("kind") != "statement-encoder":
            raise S.ContainerError(f"{path}: not a statement encoder")
        vocab = Vocabulary({name: i for i, name in enumerate(meta["vocab"])})
        model = cls(vocab, meta["family_count"], embed_dim=meta["embed_dim"],
                    hidden=meta["hidden"], max_statements=meta["max_statements"],
                    max_tokens=meta["max_tokens"], rng=np.random.default_rng(0))
        for i, p in enumerate(model.parameters()):
            p.data = arrays[f"p{i}"]
        return model


def train_statement_encoder(traces: list[TraceFile], labels: np.ndarray,
                            family_count: int, seq_len: int = DEFAULT_SEQ_LEN,
                            hyper: S.Hyperparams | None = None,
                            val: tuple[list[TraceFile], np.ndarray] | None = None,
                            *, embed_dim: int = 16, hidden: int = 16,
                            token_vocab: int = DEFAULT_TOKEN_VOCAB,
                            ) -> tuple[StatementEncoderModel, S.TrainHistory]:
    """Vocabulary and weights are built from the given (training) traces only."""
    if not traces:
        raise ValueError("cannot train on an empty trace list")
    hyper = hyper or S.Hyperparams(epochs=12, batch_size=16)
    vocab = build_token_vocabulary(traces, token_vocab)
    model = StatementEncoderModel(
        vocab, family_count, embed_dim=embed_dim, hidden=hidden,
        max_statements=seq_len,
        rng=np.random.default_rng(derive_seed(hyper.seed, "stmt-init")))
    encoded = np.stack([model.tokenize(t) for t in traces])
    labels = np.asarray(labels, dtype=np.int64)
    if val is None:
        n_val = max(1, len(traces) // 10)
        val_data = (encoded[:n_val], labels[:n_val])
        train_data = (encoded[n_val:], labels[n_val:])
    else:
        val_data = (np.stack([model.tokenize(t) for t in val[0]]),
                    np.asarray(val[1], dtype=np.int64))
        train_data = (encoded, labels)
    hist = S.train(model, train_data, val_data, hyper)
    return model, hist


def statement_embed(model: StatementEncoderModel, trace: TraceFile) -> FeatureVector:
    if len(trace) == 0:
        raise EmptyTraceError(f"{trace.sample_id}: empty trace")
    emb = model.encode(model.tokenize(trace)[None]).data[0]
    return FeatureVector("stmt_embed", emb)
