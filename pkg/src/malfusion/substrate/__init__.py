"""Self-contained differentiable-computation substrate used by every model."""

from .tensor import (
    ACTIVATIONS,
    ShapeError,
    Tensor,
    activate,
    add,
    binary_cross_entropy,
    concat,
    conv2d,
    cross_entropy,
    embedding,
    exp,
    log,
    matmul,
    maxpool2d,
    mse,
    mul,
    neg,
    pow_const,
    relu,
    reshape,
    select_labels,
    sigmoid,
    slice_axis,
    softmax,
    stack,
    sub,
    tanh,
    tmean,
    transpose,
    tsum,
)
from .layers import (
    MLP,
    BatchNorm1d,
    BiLSTM,
    Conv2d,
    Dense,
    Dropout,
    Embedding,
    LSTM,
    MaxPool2d,
    Module,
    attention_pool_t,
)
from .train import (
    ACTIVATION_CHOICES,
    Adam,
    Hyperparams,
    TUNING_RANGES,
    TrainHistory,
    TrainingDiverged,
    WEIGHT_MODES,
    evaluate_loss,
    gradient_check,
    random_search,
    sample_hyperparams,
    train,
)
from .serialize import ContainerError, FORMAT_VERSION, MAGIC, load_container, save_container

__all__ = [
    "ACTIVATIONS",
    "ACTIVATION_CHOICES",
    "Adam",
    "BatchNorm1d",
    "BiLSTM",
    "ContainerError",
    "Conv2d",
    "Dense",
    "Dropout",
    "Embedding",
    "FORMAT_VERSION",
    "Hyperparams",
    "LSTM",
    "MAGIC",
    "MLP",
    "MaxPool2d",
    "Module",
    "ShapeError",
    "TUNING_RANGES",
    "Tensor",
    "TrainHistory",
    "TrainingDiverged",
    "WEIGHT_MODES",
    "activate",
    "add",
    "attention_pool_t",
    "binary_cross_entropy",
    "concat",
    "conv2d",
    "cross_entropy",
    "embedding",
    "evaluate_loss",
    "exp",
    "gradient_check",
    "load_container",
    "log",
    "matmul",
    "maxpool2d",
    "mse",
    "mul",
    "neg",
    "pow_const",
    "random_search",
    "relu",
    "reshape",
    "sample_hyperparams",
    "save_container",
    "select_labels",
    "sigmoid",
    "slice_axis",
    "softmax",
    "stack",
    "sub",
    "tanh",
    "tmean",
    "train",
    "transpose",
    "tsum",
]
