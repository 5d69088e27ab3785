"""Name-only call-sequence baseline: embeddings -> single-direction
recurrence -> softmax head. Consumes the first m API names, no parameters."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import substrate as S
from ..corpus.types import TraceFile, Vocabulary
from ..corpus.vocab import build_vocabulary
from ..seeding import derive_seed

DEFAULT_CALLSEQ_LEN = 200


class CallSequenceModel(S.Module):
    def __init__(self, vocab: Vocabulary, family_count: int, *,
                 seq_len: int = DEFAULT_CALLSEQ_LEN, embed_dim: int = 16,
                 hidden: int = 32, rng: np.random.Generator, dtype=np.float64):
        self.vocab = vocab
        self.family_count = family_count
        self.seq_len = seq_len
        self.embed_dim = embed_dim
        self.hidden = hidden
        self.pad = vocab.size
        self.embed = S.Embedding(vocab.size + 1, embed_dim, rng=rng, dtype=dtype)
        self.rnn = S.LSTM(embed_dim, hidden, rng=rng, dtype=dtype)
        self.head = S.Dense(hidden, family_count, "softmax", rng=rng, dtype=dtype)

    def parameters(self):
        return self.embed.parameters() + self.rnn.parameters() + self.head.parameters()

    def tokenize(self, trace: TraceFile) -> np.ndarray:
        """First seq_len names, left-padded so the final recurrent state
        always reflects the last real call."""
        idx = [self.vocab.lookup(n) for n in trace.api_names()[: self.seq_len]]
        out = np.full(self.seq_len, self.pad, dtype=np.int64)
        if idx:
            out[self.seq_len - len(idx):] = idx
        return out

    def forward(self, tokens: np.ndarray, train: bool = False) -> S.Tensor:
        emb = self.embed(tokens)
        final = self.rnn.final_state(emb)
        return self.head(final)

    def save(self, path: str | Path) -> None:
        meta = {"kind": "call-sequence", "family_count": self.family_count,
                "seq_len": self.seq_len, "embed_dim": self.embed_dim,
                "hidden": self.hidden, "vocab": self.vocab.names()}
        arrays = {f"p{i}": p.data for i, p in enumerate(self.parameters())}
        S.save_container(path, meta, arrays)

    @classmethod
    def load(cls, path: str | Path) -> "CallSequenceModel":
        meta, arrays = S.load_container(path)
        if meta.get("kind") != "call-sequence":
            raise S.ContainerError(f"{path}: not a call-sequence encoder")
        vocab = Vocabulary({name: i for i, name in enumerate(meta["vocab"])})
        model = cls(vocab, meta["family_count"], seq_len=meta["seq_len"],
                    embed_dim=meta["embed_dim"], hidden=meta["hidden"],
                    rng=np.random.default_rng(0))
        for i, p in enumerate(model.parameters()):
            p.data = arrays[f"p{i}"]
        return model


def train_call_sequence_encoder(traces: list[TraceFile], labels: np.ndarray,
                                family_count: int,
                                seq_len: int = DEFAULT_CALLSEQ_LEN,
                                hyper: S.Hyperparams | None = None,
                                val: tuple[list[TraceFile], np.ndarray] | None = None,
                                *, embed_dim: int = 16, hidden: int = 32,
                                name_vocab: int = 286,
                                ) -> tuple[CallSequenceModel, S.TrainHistory]:
    if not traces:
        raise ValueError("cannot train on an empty trace list")
    hyper = hyper or S.Hyperparams(epochs=12, batch_size=16)
    vocab = build_vocabulary((n for t in traces for n in t.api_names()), name_vocab)
    model = CallSequenceModel(
        vocab, family_count, seq_len=seq_len, embed_dim=embed_dim, hidden=hidden,
        rng=np.random.default_rng(derive_seed(hyper.seed, "callseq-init")))
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
