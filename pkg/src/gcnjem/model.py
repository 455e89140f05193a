"""Two-layer graph convolutional classifier and its energy quantities.

The classifier is logits = N @ relu(N @ X @ W0) @ W1 where N is the
symmetric-normalized adjacency with self-loops. A node's energy is the
negative log-sum-exp of its class logits; the whole-graph energy is the
log-sum-exp over every logit entry and serves as the scalar normalizer
for the generative loss and the feature sampler.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Slot, check_finite
from .exceptions import (
    ConfigError,
    CorruptMagic,
    IndexOutOfRange,
    NonFiniteLoss,
    TruncatedFile,
    ZeroNormalizer,
)
from .graph import SparseAdjacency, spmm

__all__ = [
    "GcnParams",
    "ModelConfig",
    "EnergyReport",
    "init_params",
    "forward",
    "forward_on_tape",
    "node_energy",
    "graph_energy",
    "energy_report",
    "classification_loss",
    "generative_loss",
    "orthogonality_penalty",
    "total_loss",
    "predict",
    "write_params",
    "read_params",
]

PARAMS_MAGIC = b"GJP1"


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int
    hidden_dim: int
    num_classes: int
    jemo_weight: float = 0.0

    def __post_init__(self):
        if min(self.feature_dim, self.hidden_dim, self.num_classes) < 1:
            raise ConfigError("feature_dim, hidden_dim and num_classes must be >= 1")
        if self.jemo_weight < 0:
            raise ConfigError("jemo_weight must be >= 0")


@dataclass(frozen=True)
class GcnParams:
    """Trainable weights: w0 maps features to hidden, w1 hidden to classes."""

    w0: np.ndarray
    w1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w0", check_finite(self.w0, "w0"))
        object.__setattr__(self, "w1", check_finite(self.w1, "w1"))
        if self.w0.ndim != 2 or self.w1.ndim != 2 or self.w0.shape[1] != self.w1.shape[0]:
            raise ConfigError(f"inconsistent weight shapes {self.w0.shape}, {self.w1.shape}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.w0.shape[0], self.w0.shape[1], self.w1.shape[1]


@dataclass(frozen=True)
class EnergyReport:
    """Per-node log-sum-exp energies and the whole-graph log-sum-exp."""

    per_node_lse: np.ndarray
    graph_lse: float

    @property
    def per_node_energy(self) -> np.ndarray:
        return -self.per_node_lse


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> GcnParams:
    """Glorot-uniform initialization of both layers."""
    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    return GcnParams(w0=glorot(cfg.feature_dim, cfg.hidden_dim),
                     w1=glorot(cfg.hidden_dim, cfg.num_classes))


def forward(a_norm: SparseAdjacency, x: np.ndarray, params: GcnParams) -> np.ndarray:
    """Evaluate the classifier logits without recording gradients."""
    h1 = ad.relu(spmm(a_norm, ad.matmul(x, params.w0)))
    return ad.matmul(spmm(a_norm, h1), params.w1)


def forward_on_tape(tape: Tape, a_norm: SparseAdjacency, x: Slot,
                    w0: Slot, w1: Slot) -> Slot:
    """Record the same computation on a tape; returns the logits slot."""
    h1 = tape.relu(tape.spmm(a_norm, tape.matmul(x, w0)))
    return tape.matmul(tape.spmm(a_norm, h1), w1)


def node_energy(logits: np.ndarray, i: int) -> float:
    logits = np.asarray(logits, float)
    if not 0 <= i < logits.shape[0]:
        raise IndexOutOfRange(f"node {i} outside [0, {logits.shape[0]})")
    return -float(ad.row_log_sum_exp(logits[i:i + 1])[0, 0])


def graph_energy(logits: np.ndarray) -> float:
    """Log-sum-exp over every logit entry, computed stably."""
    logits = np.asarray(logits, float)
    if logits.size == 0:
        raise ConfigError("graph energy of an empty logits matrix")
    m = logits.max()
    return float(m + np.log(np.exp(logits - m).sum()))


def energy_report(logits: np.ndarray) -> EnergyReport:
    return EnergyReport(per_node_lse=ad.row_log_sum_exp(logits)[:, 0],
                        graph_lse=graph_energy(logits))


def classification_loss(logits: np.ndarray, labels, train_mask) -> float:
    return ad.masked_cross_entropy(logits, labels, train_mask)


def _check_normalizer(z: float, name: str) -> float:
    if abs(z) < 1e-30:
        raise ZeroNormalizer(f"{name} = {z} is too close to zero")
    return float(z)


def generative_loss(logits_orig: np.ndarray, logits_gen: np.ndarray, sample_indices,
                    z_clf: float, z_gen: float) -> float:
    """Absolute gap between normalized energies of original and generated samples.

    Sums, over the sampled nodes, the per-node log-sum-exp of the original
    logits divided by the whole-graph normalizer of the original features,
    minus the same quantity for the generated ones, then takes |.|.
    """
    z_clf = _check_normalizer(z_clf, "z_clf")
    z_gen = _check_normalizer(z_gen, "z_gen")
    idx = np.asarray(sample_indices, dtype=np.int64)
    if idx.size == 0:
        raise ConfigError("sample set is empty")
    lse_orig = ad.row_log_sum_exp(logits_orig)[idx, 0]
    lse_gen = ad.row_log_sum_exp(logits_gen)[idx, 0]
    return float(abs(np.sum(lse_orig / z_clf - lse_gen / z_gen)))


def orthogonality_penalty(params: GcnParams) -> float:
    """Sum over layers of the Frobenius norm of (W^T W - I)."""
    total = 0.0
    for w in (params.w0, params.w1):
        gram = w.T @ w - np.eye(w.shape[1])
        total += float(np.sqrt((gram * gram).sum()))
    return total


def total_loss(l_clf: float, l_gen: float, penalty: float, jemo_weight: float) -> float:
    out = float(l_clf) + float(l_gen) + float(jemo_weight) * float(penalty)
    if not np.isfinite(out):
        raise NonFiniteLoss(f"total loss is {out} "
                            f"(clf={l_clf}, gen={l_gen}, penalty={penalty})")
    return out


def predict(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Argmax class and max softmax probability per node; ties pick the lowest class."""
    logits = np.asarray(logits, float)
    classes = np.argmax(logits, axis=1)
    probs = ad.softmax_rows(logits)
    confidence = probs[np.arange(logits.shape[0]), classes]
    return classes, confidence


# -- checkpoint format --------------------------------------------------------

def write_params(f, params: GcnParams) -> None:
    """Magic ``GJP1``, u64 dims (f, h, k), then the two weight matrix records."""
    fdim, h, k = params.dims
    f.write(PARAMS_MAGIC)
    f.write(struct.pack("<QQQ", fdim, h, k))
    ad.write_matrix_record(f, params.w0)
    ad.write_matrix_record(f, params.w1)


def read_params(f) -> GcnParams:
    magic = f.read(4)
    if len(magic) < 4:
        raise TruncatedFile("file ended before params magic")
    if magic != PARAMS_MAGIC:
        raise CorruptMagic(f"expected {PARAMS_MAGIC!r}, found {magic!r}")
    header = f.read(24)
    if len(header) < 24:
        raise TruncatedFile("file ended inside params header")
    fdim, h, k = struct.unpack("<QQQ", header)
    w0 = ad.read_matrix_record(f)
    w1 = ad.read_matrix_record(f)
    if w0.shape != (fdim, h) or w1.shape != (h, k):
        raise CorruptMagic("declared dims disagree with stored matrices")
    return GcnParams(w0=w0, w1=w1)
