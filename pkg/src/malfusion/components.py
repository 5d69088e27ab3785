"""Per-feature family classifiers sharing one architecture, plus a linear
one-vs-rest baseline and the manifest that records validation accuracies.

Every component is the same dense stack (hidden widths 256, 128, rectifier)
ending in an F-way softmax; only the input width differs per feature. The
manifest's accuracies drive the ascending-accuracy ordering used by the
cascade fusion presets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import substrate as S
from .features import FEATURE_NAMES, FeatureVector
from .seeding import derive_seed

COMPONENT_HIDDEN = (256, 128)


class ComponentError(ValueError):
    pass


def check_probability_vector(p: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if (p < -atol).any() or abs(float(p.sum()) - 1.0) > max(atol, 1e-9 * p.size):
        raise ComponentError(f"not a probability vector (sum {p.sum()!r})")
    return p


class ComponentModel(S.Module):
    def __init__(self, feature_name: str, input_width: int, family_count: int,
                 hyper: S.Hyperparams, *, hidden: tuple[int, ...] = COMPONENT_HIDDEN,
                 rng: np.random.Generator, dtype=np.float64):
        if feature_name not in FEATURE_NAMES:
            raise ComponentError(f"unknown feature name {feature_name!r}")
        self.feature_name = feature_name
        self.input_width = input_width
        self.family_count = family_count
        self.hyper = hyper
        self.hidden = hidden
        self.val_accuracy: float | None = None
        self.mlp = S.MLP(input_width, hidden, family_count,
                         activation=hyper.activation, dropout=hyper.dropout,
                         batchnorm=hyper.batchnorm, rng=rng, dtype=dtype)

    def parameters(self):
        return self.mlp.parameters()

    def forward(self, x, train: bool = False) -> S.Tensor:
        self.mlp.rng = self.rng
        return self.mlp.forward(x, train)

    def predict_batch(self, rows: np.ndarray) -> np.ndarray:
        return self.forward(np.asarray(rows, dtype=np.float64)).data

    def save(self, path: str | Path) -> None:
        meta = {"kind": "component", "feature_name": self.feature_name,
                "input_width": self.input_width, "family_count": self.family_count,
                "hidden": list(self.hidden), "hyper": self.hyper.to_dict(),
                "val_accuracy": self.val_accuracy}
        arrays = {f"p{i}": p.data for i, p in enumerate(self.parameters())}
        S.save_container(path, meta, arrays)

    @classmethod
    def load(cls, path: str | Path) -> "ComponentModel":
        meta, arrays = S.load_container(path)
        if meta.get("kind") != "component":
            raise S.ContainerError(f"{path}: not a component classifier")
        model = cls(meta["feature_name"], meta["input_width"], meta["family_count"],
                    S.Hyperparams.from_dict(meta["hyper"]),
                    hidden=tuple(meta["hidden"]), rng=np.random.default_rng(0))
        model.val_accuracy = meta["val_accuracy"]
        for i, p in enumerate(model.parameters()):
            p.data = arrays[f"p{i}"]
        return model


def train_component(feature_name: str, features: np.ndarray, labels: np.ndarray,
                    train_idx, val_idx, family_count: int,
                    hyper: S.Hyperparams | None = None,
                    ) -> tuple[ComponentModel, S.TrainHistory]:
    """Train one feature family's classifier; records validation accuracy."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    hyper = hyper or S.Hyperparams(epochs=40, batch_size=32)
    model = ComponentModel(
        feature_name, features.shape[1], family_count, hyper,
        rng=np.random.default_rng(derive_seed(hyper.seed, "component", feature_name)))
    train_idx = np.asarray(train_idx, dtype=np.int64)
    val_idx = np.asarray(val_idx, dtype=np.int64)
    hist = S.train(model, (features[train_idx], labels[train_idx]),
                   (features[val_idx], labels[val_idx]), hyper)
    model.val_accuracy = float(hist.val_accuracy[hist.best_epoch])
    return model, hist


def predict(model: ComponentModel, feature: FeatureVector) -> np.ndarray:
    if feature.feature_name != model.feature_name:
        raise ComponentError(f"component expects {model.feature_name}, "
                             f"got {feature.feature_name}")
    if feature.values.shape != (model.input_width,):
        raise ComponentError(f"{model.feature_name} feature has length "
                             f"{feature.values.shape}, model expects {model.input_width}")
    probs = model.predict_batch(feature.values[None])[0]
    return check_probability_vector(probs)


# one-vs-rest linear baseline ---------------------------------------------------


class LinearBaseline(S.Module):
    """F independent logistic units over one feature matrix."""

    def __init__(self, input_width: int, family_count: int, *,
                 rng: np.random.Generator, dtype=np.float64):
        self.input_width = input_width
        self.family_count = family_count
        self.dense = S.Dense(input_width, family_count, "sigmoid", rng=rng, dtype=dtype)

    def parameters(self):
        return self.dense.parameters()

    def forward(self, x, train: bool = False) -> S.Tensor:
        t = x if isinstance(x, S.Tensor) else S.Tensor(np.asarray(x, dtype=np.float64))
        return self.dense(t)

    def scores(self, rows: np.ndarray) -> np.ndarray:
        return self.forward(rows).data

    def predict_labels(self, rows: np.ndarray) -> np.ndarray:
        return np.argmax(self.scores(rows), axis=1)


def train_linear_baseline(features: np.ndarray, labels: np.ndarray,
                          family_count: int, epochs: int = 200,
                          seed: int = 0) -> LinearBaseline:
    """Full-batch logistic training of F binary one-vs-rest units."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    onehot = np.zeros((len(labels), family_count))
    onehot[np.arange(len(labels)), labels] = 1.0
    model = LinearBaseline(features.shape[1], family_count,
                           rng=np.random.default_rng(derive_seed(seed, "linear-init")))
    hyper = S.Hyperparams(epochs=epochs, batch_size=len(labels), patience=0, seed=seed)
    S.train(model, (features, onehot), (features, onehot), hyper, loss="bce")
    return model


# component manifest -------------------------------------------------------------


@dataclass
class ComponentManifest:
    """feature_name -> (validation accuracy, optional model path)."""

    accuracies: dict[str, float]
    paths: dict[str, str]

    def ascending(self, feature_names=None) -> list[str]:
        """Feature names by ascending validation accuracy (ties by name)."""
        names = list(self.accuracies if feature_names is None else feature_names)
        missing = [n for n in names if n not in self.accuracies]
        if missing:
            raise ComponentError(f"manifest lacks accuracies for {missing}")
        return sorted(names, key=lambda n: (self.accuracies[n], n))

    def save(self, path: str | Path) -> None:
        doc = {"components": {
            name: {"accuracy": self.accuracies[name],
                   **({"path": self.paths[name]} if name in self.paths else {})}
            for name in sorted(self.accuracies)}}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ComponentManifest":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        accs, paths = {}, {}
        for name, entry in doc.get("components", {}).items():
            accs[name] = float(entry["accuracy"])
            if "path" in entry:
                paths[name] = entry["path"]
        return cls(accs, paths)

    @classmethod
    def from_models(cls, models: dict[str, ComponentModel],
                    paths: dict[str, str] | None = None) -> "ComponentManifest":
        accs = {}
        for name, model in models.items():
            if model.val_accuracy is None:
                raise ComponentError(f"component {name} has no recorded accuracy")
            accs[name] = model.val_accuracy
        return cls(accs, paths or {})
