"""Fusion topologies and composed classifiers."""

from .model import FusionError, FusionModel, predict_fusion, train_fusion
from .topology import (
    DEFAULT_DENSE_WIDTH,
    FEATURE_SETS,
    PRESET_NAMES,
    FusionTopology,
    Node,
    TopologyError,
    emit_topology,
    parse_topology,
    preset,
)

__all__ = [
    "DEFAULT_DENSE_WIDTH",
    "FEATURE_SETS",
    "PRESET_NAMES",
    "FusionError",
    "FusionModel",
    "FusionTopology",
    "Node",
    "TopologyError",
    "emit_topology",
    "parse_topology",
    "predict_fusion",
    "preset",
]
