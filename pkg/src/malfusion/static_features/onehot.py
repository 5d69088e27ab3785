"""PE-import presence vector."""

from __future__ import annotations

import numpy as np

from ..corpus.types import PeImports, Vocabulary
from ..features import FeatureVector


def pe_import_onehot(imports: PeImports, vocab: Vocabulary) -> FeatureVector:
    """values[i] = 1 iff some import maps to index i; unseen names light up
    the UNKNOWN slot; length = vocabulary size."""
    values = np.zeros(vocab.size, dtype=np.float64)
    for name in imports.imports:
        values[vocab.lookup(name)] = 1.0
    return FeatureVector("pe_onehot", values)
