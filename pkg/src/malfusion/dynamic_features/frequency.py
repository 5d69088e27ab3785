"""Relative API call frequency over a trace."""

from __future__ import annotations

import numpy as np

from ..corpus.types import EmptyTraceError, TraceFile, Vocabulary
from ..features import FeatureVector


def api_call_frequency(trace: TraceFile, vocab: Vocabulary) -> FeatureVector:
    """values[i] = count of calls mapping to index i / total calls; sums to 1."""
    if len(trace) == 0:
        raise EmptyTraceError(f"{trace.sample_id}: empty trace")
    values = np.zeros(vocab.size, dtype=np.float64)
    for s in trace.statements:
        values[vocab.lookup(s.api_name)] += 1.0
    return FeatureVector("api_freq", values / len(trace))
