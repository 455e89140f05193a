"""Dataset loading, synthetic graph generation, and checkpoint persistence.

The portable dataset format is a directory of four headerless CSV files:
``edges.csv`` (one ``src,dst`` pair per line), ``features.csv`` (n rows of
f comma-separated reals), ``labels.csv`` (one class index per line, -1 for
unlabeled), and ``split.csv`` (one of train/val/test/none per line).
Duplicate and reversed edges are merged; self-loops are dropped.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .autodiff import check_finite, save_matrix_csv
from .exceptions import (
    ConfigError,
    DataError,
    IndexOutOfRange,
    LabelOutOfRange,
    MissingFile,
    RaggedFeatureRows,
)
from .graph import SparseAdjacency
from .model import GcnParams, read_params, write_params

__all__ = [
    "Dataset",
    "SbmSpec",
    "load_dataset",
    "save_dataset",
    "generate_sbm",
    "save_checkpoint",
    "load_checkpoint",
]

SPLIT_TOKENS = ("train", "val", "test", "none")


@dataclass(frozen=True)
class Dataset:
    adjacency: SparseAdjacency
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.adjacency.n != self.features.shape[0]:
            raise DataError("adjacency size disagrees with feature rows")
        if np.any(self.adjacency.to_scipy().diagonal() != 0.0):
            raise DataError("dataset adjacency must be loop-free")
        masks = (self.train_mask, self.val_mask, self.test_mask)
        for a, b in ((0, 1), (0, 2), (1, 2)):
            if np.any(masks[a] & masks[b]):
                raise DataError("split masks must be pairwise disjoint")
        masked = self.train_mask | self.val_mask | self.test_mask
        if np.any(self.labels[masked] < 0):
            raise LabelOutOfRange("a masked node carries the -1 sentinel label")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def _require(path: str) -> str:
    if not os.path.isfile(path):
        raise MissingFile(f"missing {path}")
    return path


def load_dataset(directory, normalize_features: bool = False) -> Dataset:
    """Load the four-file CSV dataset; class count is max label + 1."""
    edges_path = _require(os.path.join(directory, "edges.csv"))
    features_path = _require(os.path.join(directory, "features.csv"))
    labels_path = _require(os.path.join(directory, "labels.csv"))
    split_path = _require(os.path.join(directory, "split.csv"))

    rows = []
    width = None
    with open(features_path) as f:
        for line_no, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise RaggedFeatureRows(f"features.csv line {line_no + 1} has "
                                        f"{len(parts)} columns, expected {width}")
            rows.append(np.array(parts, dtype=np.float64))
    if not rows:
        raise DataError("features.csv is empty")
    features = check_finite(np.stack(rows), "features")
    n = features.shape[0]

    labels = np.loadtxt(labels_path, dtype=np.int64, ndmin=1)
    if labels.shape != (n,):
        raise DataError(f"labels.csv has {labels.shape[0]} rows, expected {n}")
    if np.any(labels < -1):
        raise LabelOutOfRange("labels below the -1 sentinel")
    if np.all(labels < 0):
        raise LabelOutOfRange("no labeled nodes")
    num_classes = int(labels.max()) + 1

    with open(split_path) as f:
        tokens = [ln.strip() for ln in f if ln.strip()]
    if len(tokens) != n:
        raise DataError(f"split.csv has {len(tokens)} rows, expected {n}")
    bad = set(tokens) - set(SPLIT_TOKENS)
    if bad:
        raise DataError(f"unknown split tokens {sorted(bad)}")
    tokens = np.array(tokens)

    pairs = []
    with open(edges_path) as f:
        for line_no, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            try:
                a, b = line.split(",")
                i, j = int(a), int(b)
            except ValueError as e:
                raise DataError(f"edges.csv line {line_no + 1}: {line!r}") from e
            if not (0 <= i < n and 0 <= j < n):
                raise IndexOutOfRange(f"edge ({i}, {j}) outside [0, {n})")
            if i != j:
                pairs.append((i, j))
    adjacency = SparseAdjacency.from_edges(n, pairs, symmetrize=True)

    if normalize_features:
        sums = features.sum(axis=1, keepdims=True)
        features = features / np.where(sums == 0, 1.0, sums)

    return Dataset(
        adjacency=adjacency,
        features=features,
        labels=labels,
        train_mask=tokens == "train",
        val_mask=tokens == "val",
        test_mask=tokens == "test",
        num_classes=num_classes,
    )


def save_dataset(dataset: Dataset, directory) -> None:
    """Write the canonical four-file form: sorted unique undirected edges."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "edges.csv"), "w", newline="\n") as f:
        for i, j in sorted(dataset.adjacency.edge_set()):
            f.write(f"{i},{j}\n")
    save_matrix_csv(dataset.features, os.path.join(directory, "features.csv"))
    with open(os.path.join(directory, "labels.csv"), "w", newline="\n") as f:
        for y in dataset.labels:
            f.write(f"{int(y)}\n")
    split = np.full(dataset.n, "none", dtype=object)
    split[dataset.train_mask] = "train"
    split[dataset.val_mask] = "val"
    split[dataset.test_mask] = "test"
    with open(os.path.join(directory, "split.csv"), "w", newline="\n") as f:
        for token in split:
            f.write(f"{token}\n")


@dataclass(frozen=True)
class SbmSpec:
    """Stochastic block model with noisy one-hot block features."""

    blocks: tuple
    p_in: float
    p_out: float
    feature_dim: int
    noise_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple((int(s), int(y)) for s, y in self.blocks))
        if not self.blocks or any(s < 1 for s, _ in self.blocks):
            raise ConfigError("every block needs size >= 1")
        if any(y < 0 for _, y in self.blocks):
            raise ConfigError("block labels must be >= 0")
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ConfigError("need 0 <= p_out <= p_in <= 1")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")


def generate_sbm(spec: SbmSpec) -> Dataset:
    """Sample a block-model graph; split is a seeded 10/10/80 shuffle."""
    rng = np.random.default_rng(spec.seed)
    labels = np.concatenate([np.full(s, y, dtype=np.int64) for s, y in spec.blocks])
    n = len(labels)
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, spec.p_in, spec.p_out)
    draws = rng.random((n, n))
    upper = np.triu(draws < prob, k=1)
    ii, jj = np.nonzero(upper)
    adjacency = SparseAdjacency.from_edges(n, list(zip(ii.tolist(), jj.tolist())),
                                           symmetrize=True)

    k = int(labels.max()) + 1
    eye = np.eye(k)
    reps = -(-spec.feature_dim // k)
    base = np.tile(eye[labels], (1, reps))[:, :spec.feature_dim]
    features = base + spec.noise_scale * rng.standard_normal((n, spec.feature_dim))

    perm = rng.permutation(n)
    n_train = max(1, n // 10)
    n_val = max(1, n // 10)
    train_mask = np.zeros(n, dtype=bool)
    val_mask = np.zeros(n, dtype=bool)
    test_mask = np.zeros(n, dtype=bool)
    train_mask[perm[:n_train]] = True
    val_mask[perm[n_train:n_train + n_val]] = True
    test_mask[perm[n_train + n_val:]] = True

    return Dataset(adjacency=adjacency, features=features, labels=labels,
                   train_mask=train_mask, val_mask=val_mask, test_mask=test_mask,
                   num_classes=k)


# -- checkpoints ---------------------------------------------------------------

PARAMS_FILE = "params.bin"
ADJACENCY_FILE = "adjacency.csv"


def save_checkpoint(params: GcnParams, adjacency: SparseAdjacency, directory) -> None:
    """Write ``params.bin`` (binary weights) and ``adjacency.csv`` (edge list)."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, PARAMS_FILE), "wb") as f:
        write_params(f, params)
    with open(os.path.join(directory, ADJACENCY_FILE), "w", newline="\n") as f:
        f.write(f"n,{adjacency.n}\n")
        for i, j in sorted(adjacency.edge_set()):
            f.write(f"{i},{j}\n")


def load_adjacency_csv(path) -> SparseAdjacency:
    """Read an ``n,<count>`` header followed by one edge pair per line."""
    with open(_require(path)) as f:
        header = f.readline().strip()
        if not header.startswith("n,"):
            raise DataError(f"{path} must start with an 'n,<count>' line")
        n = int(header.split(",", 1)[1])
        pairs = []
        for line in f:
            line = line.strip()
            if line:
                a, b = line.split(",")
                pairs.append((int(a), int(b)))
    return SparseAdjacency.from_edges(n, pairs, symmetrize=True)


def load_checkpoint(directory) -> tuple[GcnParams, SparseAdjacency]:
    params_path = _require(os.path.join(directory, PARAMS_FILE))
    with open(params_path, "rb") as f:
        params = read_params(f)
    return params, load_adjacency_csv(os.path.join(directory, ADJACENCY_FILE))
