"""Dynamic pipelines: call frequency, trace embedding, co-occurrence CNN,
hierarchical statement encoder, and the name-only sequence baseline."""

from .frequency import api_call_frequency
from .pv import (
    DEFAULT_PV_DIM,
    DEFAULT_TRACE_VOCAB,
    PvModel,
    pv_embed,
    train_pv,
)
from .cooccurrence import (
    CoocCnnModel,
    CoocMatrix,
    DEFAULT_FEATURE_WIDTH,
    DEFAULT_POOL,
    DEFAULT_WINDOW,
    cooc_features,
    cooccurrence_matrix,
    normalized_cooc,
    row_max_normalize,
    train_cooc_cnn,
)
from .statements import (
    DEFAULT_SEQ_LEN,
    DEFAULT_TOKEN_VOCAB,
    STATEMENT_TOKEN_CAP,
    StatementEncoderModel,
    attention_pool,
    build_token_vocabulary,
    statement_embed,
    statement_tokens,
    train_statement_encoder,
)
from .callseq import (
    CallSequenceModel,
    DEFAULT_CALLSEQ_LEN,
    train_call_sequence_encoder,
)

__all__ = [
    "CallSequenceModel",
    "CoocCnnModel",
    "CoocMatrix",
    "DEFAULT_CALLSEQ_LEN",
    "DEFAULT_FEATURE_WIDTH",
    "DEFAULT_POOL",
    "DEFAULT_PV_DIM",
    "DEFAULT_SEQ_LEN",
    "DEFAULT_TOKEN_VOCAB",
    "DEFAULT_TRACE_VOCAB",
    "DEFAULT_WINDOW",
    "PvModel",
    "STATEMENT_TOKEN_CAP",
    "StatementEncoderModel",
    "api_call_frequency",
    "attention_pool",
    "build_token_vocabulary",
    "cooc_features",
    "cooccurrence_matrix",
    "normalized_cooc",
    "pv_embed",
    "row_max_normalize",
    "statement_embed",
    "statement_tokens",
    "train_call_sequence_encoder",
    "train_cooc_cnn",
    "train_pv",
]
