"""Datasets, labeling, scaling, class balancing and the random forest.

The forest is a plain bagged-tree classifier: each tree is grown on a
bootstrap resample drawn with the balanced sample weights, with greedy Gini
splits over a random subset of candidate features per node. Models serialize
to a versioned JSON document so that predictions survive a save/load
round trip bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    CorruptModel,
    DimensionMismatch,
    ParseError,
    SingleClass,
    VersionMismatch,
)

MODEL_FORMAT = "lensvrp-forest"
MODEL_VERSION = 1


@dataclass(frozen=True)
class Sample:
    run_id: str
    iteration: int
    neighborhood_index: int
    features: np.ndarray
    improvement: float


@dataclass
class Dataset:
    manifest: List[str]
    samples: List[Sample] = field(default_factory=list)

    def append(self, sample: Sample) -> None:
        if len(sample.features) != len(self.manifest):
            raise DimensionMismatch(
                f"sample has {len(sample.features)} features, manifest {len(self.manifest)}"
            )
        self.samples.append(sample)

    def extend(self, other: "Dataset") -> None:
        if other.manifest != self.manifest:
            raise DimensionMismatch("datasets have different manifests")
        self.samples.extend(other.samples)

    def feature_matrix(self) -> np.ndarray:
        return np.array([s.features for s in self.samples])

    def improvements(self) -> np.ndarray:
        return np.array([s.improvement for s in self.samples])

    def __len__(self) -> int:
        return len(self.samples)


def write_dataset(dataset: Dataset, path: str) -> None:
    """Tab-separated table: run_id, iteration, neighborhood_index, y, features."""
    with open(path, "w") as handle:
        handle.write(
            "\t".join(["run_id", "iteration", "neighborhood_index", "y"] + dataset.manifest)
            + "\n"
        )
        for s in dataset.samples:
            row = [s.run_id, str(s.iteration), str(s.neighborhood_index), repr(s.improvement)]
            row.extend(repr(v) for v in s.features.tolist())
            handle.write("\t".join(row) + "\n")


def read_dataset(path: str) -> Dataset:
    with open(path) as handle:
        header = handle.readline().rstrip("\n").split("\t")
        if header[:4] != ["run_id", "iteration", "neighborhood_index", "y"]:
            raise ParseError(f"{path}: not a dataset file")
        dataset = Dataset(manifest=header[4:])
        for no, line in enumerate(handle, start=2):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != len(header):
                raise ParseError(f"{path}: wrong column count", no)
            dataset.append(
                Sample(
                    fields[0],
                    int(fields[1]),
                    int(fields[2]),
                    np.array([float(v) for v in fields[4:]]),
                    float(fields[3]),
                )
            )
    return dataset


def label(improvements: Sequence[float], threshold: float = 0.0) -> np.ndarray:
    """1 for improvements strictly above the threshold, else 0."""
    return (np.asarray(improvements, dtype=float) > threshold).astype(int)


def split(dataset: Dataset, ratio: float = 0.6, seed: int = 0) -> Tuple[Dataset, Dataset]:
    """Seeded uniform partition into training and validation sets."""
    n = len(dataset)
    n_train = int(math.floor(ratio * n + 0.5))
    order = np.random.default_rng(seed).permutation(n)
    train = Dataset(dataset.manifest, [dataset.samples[i] for i in order[:n_train]])
    val = Dataset(dataset.manifest, [dataset.samples[i] for i in order[n_train:]])
    return train, val


def balance_weights(labels: Sequence[int]) -> np.ndarray:
    """Per-sample weights N / (2 * class count); equal total mass per class."""
    labels = np.asarray(labels)
    n = len(labels)
    pos = int(labels.sum())
    neg = n - pos
    if pos == 0 or neg == 0:
        raise SingleClass("both classes must be present to balance weights")
    return np.where(labels == 1, n / (2.0 * pos), n / (2.0 * neg))


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray


def fit_scaler(training: np.ndarray) -> Scaler:
    """Per-feature z-score statistics; zero-variance features get std 1."""
    mean = training.mean(axis=0)
    std = training.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return Scaler(mean, std)


def transform(scaler: Scaler, vectors: np.ndarray) -> np.ndarray:
    return (np.asarray(vectors, dtype=float) - scaler.mean) / scaler.std


@dataclass(frozen=True)
class ForestConfig:
    tree_count: int = 100
    max_depth: int = 16
    min_leaf: int = 5
    features_per_split: Optional[int] = None  # default ceil(sqrt(F))


@dataclass
class ForestModel:
    manifest: List[str]
    scaler: Scaler
    config: ForestConfig
    trees: List[dict]
    sample_count: int
    threshold: float
    version: int = MODEL_VERSION


def _gini_split(X: np.ndarray, y: np.ndarray, feats: np.ndarray, min_leaf: int):
    """Best (impurity, feature, threshold) over candidate features, or None."""
    n = len(y)
    total_pos = y.sum()
    best = None
    for f in feats:
        order = np.argsort(X[:, f], kind="stable")
        vs = X[order, f]
        pos_cum = np.cumsum(y[order])
        left_n = np.arange(1, n)
        valid = (vs[:-1] < vs[1:]) & (left_n >= min_leaf) & (n - left_n >= min_leaf)
        if not valid.any():
            continue
        left_pos = pos_cum[:-1]
        right_n = n - left_n
        right_pos = total_pos - left_pos
        gini_l = 1.0 - (left_pos / left_n) ** 2 - ((left_n - left_pos) / left_n) ** 2
        gini_r = 1.0 - (right_pos / right_n) ** 2 - ((right_n - right_pos) / right_n) ** 2
        impurity = np.where(valid, (left_n * gini_l + right_n * gini_r) / n, np.inf)
        k = int(np.argmin(impurity))
        if best is None or impurity[k] < best[0]:
            best = (float(impurity[k]), int(f), float(0.5 * (vs[k] + vs[k + 1])))
    return best


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    config: ForestConfig,
    n_feats: int,
    rng: np.random.Generator,
) -> dict:
    def leaf(ys: np.ndarray) -> dict:
        pos = float(ys.mean())
        return {"leaf": [1.0 - pos, pos]}

    def build(idx: np.ndarray, depth: int) -> dict:
        ys = y[idx]
        if (
            depth >= config.max_depth
            or len(idx) < 2 * config.min_leaf
            or ys.min() == ys.max()
        ):
            return leaf(ys)
        feats = rng.choice(X.shape[1], size=n_feats, replace=False)
        found = _gini_split(X[idx], ys, np.sort(feats), config.min_leaf)
        if found is None:
            return leaf(ys)
        _, f, threshold = found
        mask = X[idx, f] <= threshold
        # the midpoint can round onto a sample value, collapsing the split
        if mask.all() or not mask.any():
            return leaf(ys)
        return {
            "feature": f,
            "threshold": threshold,
            "left": build(idx[mask], depth + 1),
            "right": build(idx[~mask], depth + 1),
        }

    return build(np.arange(len(y)), 0)


def train_forest(
    training: np.ndarray,
    labels: Sequence[int],
    weights: Sequence[float],
    config: ForestConfig = ForestConfig(),
    seed: int = 0,
    manifest: Optional[List[str]] = None,
    threshold: float = 0.0,
) -> ForestModel:
    """Fit a scaler on the training data, then the forest on the scaled
    matrix with weighted bootstrap resampling."""
    X = np.asarray(training, dtype=float)
    y = np.asarray(labels, dtype=int)
    w = np.asarray(weights, dtype=float)
    if len(X) < 2:
        raise SingleClass("need at least two samples")
    if y.min() == y.max():
        raise SingleClass("training data contains a single class")
    scaler = fit_scaler(X)
    Xs = transform(scaler, X)
    n, n_features = Xs.shape
    n_feats = config.features_per_split or int(math.ceil(math.sqrt(n_features)))
    n_feats = min(n_feats, n_features)
    p = w / w.sum()
    trees = []
    seeds = np.random.SeedSequence(seed).spawn(config.tree_count)
    for tree_seed in seeds:
        rng = np.random.default_rng(tree_seed)
        boot = rng.choice(n, size=n, replace=True, p=p)
        trees.append(_grow_tree(Xs[boot], y[boot], config, n_feats, rng))
    if manifest is None:
        manifest = [f"f{k}" for k in range(n_features)]
    return ForestModel(
        manifest=list(manifest),
        scaler=scaler,
        config=config,
        trees=trees,
        sample_count=n,
        threshold=threshold,
    )


def _tree_predict(node: dict, x: np.ndarray) -> float:
    while "leaf" not in node:
        node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
    return node["leaf"][1]


def predict_potential(model: ForestModel, feature_vector: np.ndarray) -> float:
    """Mean positive-class leaf frequency over the trees, in [0, 1]."""
    x = np.asarray(feature_vector, dtype=float)
    if x.shape != (len(model.manifest),):
        raise DimensionMismatch(
            f"expected {len(model.manifest)} features, got {x.shape}"
        )
    z = transform(model.scaler, x)
    return float(np.mean([_tree_predict(t, z) for t in model.trees]))


def save_model(model: ForestModel, path: str) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": model.version,
        "manifest": model.manifest,
        "scaler": {"mean": model.scaler.mean.tolist(), "std": model.scaler.std.tolist()},
        "config": {
            "tree_count": model.config.tree_count,
            "max_depth": model.config.max_depth,
            "min_leaf": model.config.min_leaf,
            "features_per_split": model.config.features_per_split,
        },
        "sample_count": model.sample_count,
        "threshold": model.threshold,
        "trees": model.trees,
    }
    with open(path, "w") as handle:
        json.dump(doc, handle)


def load_model(path: str) -> ForestModel:
    try:
        with open(path) as handle:
            doc = json.load(handle)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptModel(f"{path}: {exc}")
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise CorruptModel(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise VersionMismatch(
            f"{path}: version {doc.get('version')}, expected {MODEL_VERSION}"
        )
    try:
        return ForestModel(
            manifest=doc["manifest"],
            scaler=Scaler(np.array(doc["scaler"]["mean"]), np.array(doc["scaler"]["std"])),
            config=ForestConfig(**doc["config"]),
            trees=doc["trees"],
            sample_count=doc["sample_count"],
            threshold=doc["threshold"],
            version=doc["version"],
        )
    except (KeyError, TypeError) as exc:
        raise CorruptModel(f"{path}: missing field {exc}")


def train_from_dataset(
    dataset: Dataset,
    threshold: float = 0.0,
    split_ratio: float = 0.6,
    seed: int = 0,
    config: ForestConfig = ForestConfig(),
) -> Tuple[ForestModel, float]:
    """Label, split, balance and train; returns the model and held-out accuracy."""
    train, val = split(dataset, split_ratio, seed)
    y_train = label(train.improvements(), threshold)
    weights = balance_weights(y_train)
    model = train_forest(
        train.feature_matrix(),
        y_train,
        weights,
        config,
        seed,
        manifest=dataset.manifest,
        threshold=threshold,
    )
    if len(val) == 0:
        return model, float("nan")
    y_val = label(val.improvements(), threshold)
    preds = np.array(
        [predict_potential(model, s.features) for s in val.samples]
    )
    accuracy = float(((preds >= 0.5).astype(int) == y_val).mean())
    return model, accuracy
