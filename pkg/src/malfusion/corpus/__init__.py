"""Data model, file formats, synthetic generation, and split protocol."""

from .types import (
    ApiStatement,
    CallGraph,
    CANONICAL_GRAPH_SIZE,
    Corpus,
    CorpusError,
    CorpusSample,
    CorpusSpec,
    DatasetSplit,
    EmptyTraceError,
    MAX_PARAMS_PER_STATEMENT,
    ParseError,
    PeImports,
    SIGNAL_CHANNELS,
    TraceFile,
    UNKNOWN_TOKEN,
    Vocabulary,
)
from .io import (
    canonicalize_adjacency,
    load_corpus,
    normalize_param,
    parse_callgraph,
    parse_imports,
    parse_trace,
    serialize_callgraph,
    serialize_imports,
    serialize_trace,
    write_corpus,
)
from .vocab import build_vocabulary
from .generate import FamilyProfile, build_profiles, family_sizes, generate_corpus
from .splits import DEFAULT_HOLDOUT, make_splits

__all__ = [
    "ApiStatement",
    "CANONICAL_GRAPH_SIZE",
    "CallGraph",
    "Corpus",
    "CorpusError",
    "CorpusSample",
    "CorpusSpec",
    "DatasetSplit",
    "EmptyTraceError",
    "FamilyProfile",
    "MAX_PARAMS_PER_STATEMENT",
    "ParseError",
    "PeImports",
    "SIGNAL_CHANNELS",
    "TraceFile",
    "UNKNOWN_TOKEN",
    "Vocabulary",
    "build_profiles",
    "build_vocabulary",
    "canonicalize_adjacency",
    "family_sizes",
    "generate_corpus",
    "load_corpus",
    "DEFAULT_HOLDOUT",
    "make_splits",
    "normalize_param",
    "parse_callgraph",
    "parse_imports",
    "parse_trace",
    "serialize_callgraph",
    "serialize_imports",
    "serialize_trace",
    "write_corpus",
]
