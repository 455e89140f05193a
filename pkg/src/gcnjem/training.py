"""Joint energy-based training loop for the graph convolutional classifier.

One epoch: classification loss on the original graph, a Langevin sampling
chain that synthesizes feature vectors for a batch of nodes (ascending
their log-sum-exp energy, renormalized by the whole-graph energy), a
generative loss tying original and synthesized energies together, an Adam
step, replay-buffer maintenance, and energy-threshold edge candidates.
Candidate edges are committed to the adjacency every
``edge_update_interval`` epochs, after which the graph is re-normalized.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import model as md
from .autodiff import Tape, check_finite
from .exceptions import ConfigError, DimensionMismatch, NonFiniteLoss
from .graph import SparseAdjacency, add_edge, add_self_loops, symmetric_normalize
from .metrics import accuracy

__all__ = [
    "SgldConfig",
    "TrainConfig",
    "ReplayBuffer",
    "SampleSet",
    "EpochLog",
    "AdamState",
    "init_sample",
    "sgld_chain",
    "generate_edges",
    "optimizer_step",
    "TrainState",
    "train_epoch",
    "train",
    "TrainResult",
    "evaluate_accuracy",
    "parse_config_file",
    "apply_overrides",
    "EPOCH_LOG_HEADER",
    "epoch_log_row",
]


@dataclass(frozen=True)
class SgldConfig:
    """Langevin sampler settings: step size, noise scale, steps, reinit probability."""

    step_size: float = 1.0
    noise_scale: float = 0.01
    steps: int = 20
    reinit_prob: float = 0.05

    def __post_init__(self):
        if self.step_size < 0:
            raise ConfigError("step_size must be >= 0")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not 0.0 <= self.reinit_prob <= 1.0:
            raise ConfigError("reinit_prob must lie in [0, 1]")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 0.01
    batch_size: int = 32
    energy_threshold: float | None = None  # None: 1% of first-epoch energy spread
    edge_update_interval: int = 50
    buffer_capacity: int = 10000
    seed: int = 0
    jemo_weight: float = 0.0
    hidden_dim: int = 16
    mode: str = "jem"
    sgld: SgldConfig = field(default_factory=SgldConfig)

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.edge_update_interval,
               self.buffer_capacity, self.hidden_dim) < 1:
            raise ConfigError("all counts must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.energy_threshold is not None and self.energy_threshold < 0:
            raise ConfigError("energy_threshold must be >= 0")
        if self.jemo_weight < 0:
            raise ConfigError("jemo_weight must be >= 0")
        if self.mode not in ("gcn", "jem", "jemo"):
            raise ConfigError(f"unknown mode {self.mode!r}")


class ReplayBuffer:
    """FIFO store of previously generated feature vectors."""

    def __init__(self, capacity: int, feature_dim: int):
        if capacity < 1 or feature_dim < 1:
            raise ConfigError("capacity and feature_dim must be >= 1")
        self.capacity = capacity
        self.feature_dim = feature_dim
        self._entries: deque[np.ndarray] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._entries)

    def push(self, vec: np.ndarray) -> None:
        vec = check_finite(vec, "buffer entry").reshape(-1)
        if vec.shape != (self.feature_dim,):
            raise ConfigError(f"buffer entry must have length {self.feature_dim}")
        self._entries.append(vec.copy())

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self._entries[int(rng.integers(len(self._entries)))].copy()


@dataclass
class SampleSet:
    """Node indices chosen this epoch and their current synthesized features."""

    indices: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if len(np.unique(self.indices)) != len(self.indices):
            raise ConfigError("sample indices must be distinct")
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape[0] != len(self.indices):
            raise ConfigError("one feature row per sampled index required")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    l_clf: float
    l_gen: float
    penalty: float
    total: float
    z_clf: float
    z_gen: float
    edges_added: int
    train_acc: float
    val_acc: float


EPOCH_LOG_HEADER = "epoch,l_clf,l_gen,penalty,total,z_clf,z_gen,edges_added,train_acc,val_acc"


def epoch_log_row(log: EpochLog) -> str:
    def fmt(x):
        return f"{x:.17g}"
    return ",".join([
        str(log.epoch), fmt(log.l_clf), fmt(log.l_gen), fmt(log.penalty),
        fmt(log.total), fmt(log.z_clf), fmt(log.z_gen), str(log.edges_added),
        fmt(log.train_acc), fmt(log.val_acc),
    ])


@dataclass(frozen=True)
class AdamState:
    step: int
    m_w0: np.ndarray
    v_w0: np.ndarray
    m_w1: np.ndarray
    v_w1: np.ndarray

    @staticmethod
    def zeros(params: md.GcnParams) -> "AdamState":
        return AdamState(0, np.zeros_like(params.w0), np.zeros_like(params.w0),
                         np.zeros_like(params.w1), np.zeros_like(params.w1))


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def optimizer_step(params: md.GcnParams, grads: dict, state: AdamState,
                   lr: float) -> tuple[md.GcnParams, AdamState]:
    """One Adam update with bias correction; returns fresh params and state."""
    g0, g1 = np.asarray(grads["w0"], float), np.asarray(grads["w1"], float)
    if g0.shape != params.w0.shape or g1.shape != params.w1.shape:
        raise DimensionMismatch("gradient shapes disagree with parameter shapes")
    t = state.step + 1
    new_w, new_m, new_v = [], [], []
    for w, g, m, v in ((params.w0, g0, state.m_w0, state.v_w0),
                       (params.w1, g1, state.m_w1, state.v_w1)):
        m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
        m_hat = m / (1 - ADAM_BETA1 ** t)
        v_hat = v / (1 - ADAM_BETA2 ** t)
        new_w.append(w - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS))
        new_m.append(m)
        new_v.append(v)
    return (md.GcnParams(w0=new_w[0], w1=new_w[1]),
            AdamState(t, new_m[0], new_v[0], new_m[1], new_v[1]))


def init_sample(buffer: ReplayBuffer, reinit_prob: float, feature_dim: int,
                rng: np.random.Generator) -> np.ndarray:
    """Chain start: a stored vector with probability 1 - reinit_prob, else U(-1, 1).

    An empty buffer always falls back to the uniform draw.
    """
    use_buffer = rng.random() < 1.0 - reinit_prob
    if use_buffer and len(buffer) > 0:
        return buffer.sample(rng)
    return rng.uniform(-1.0, 1.0, size=feature_dim)


def sgld_chain(a_norm: SparseAdjacency, x_full: np.ndarray, sample_set: SampleSet,
               params: md.GcnParams, cfg: SgldConfig,
               rng: np.random.Generator) -> SampleSet:
    """Run the Langevin chain on the sampled rows of ``x_full`` (updated in place).

    Each step ascends the summed per-node log-sum-exp of the sampled nodes,
    divided by the whole-graph log-sum-exp of the current features; the
    normalizer is a constant within the step. A row that turns non-finite is
    reinitialized uniformly and its chain stops advancing.
    """
    idx = sample_set.indices
    n, fdim = x_full.shape
    x_s = x_full[idx].copy()
    # Rows outside the sample never change during the chain, so the
    # feature-to-hidden product is precomputed once and row-spliced per step.
    p_base = x_full @ params.w0
    active = np.ones(len(idx), dtype=bool)
    for _ in range(cfg.steps):
        tape = Tape()
        xs = tape.leaf(x_s, requires_grad=True)
        w0 = tape.leaf(params.w0)
        w1 = tape.leaf(params.w1)
        p = tape.replace_rows(p_base, idx, tape.matmul(xs, w0))
        h1 = tape.relu(tape.spmm(a_norm, p))
        logits = tape.matmul(tape.spmm(a_norm, h1), w1)
        z_t = md.graph_energy(logits.value)
        scale = 1.0 / z_t if z_t != 0.0 else np.inf
        objective = tape.index_sum(tape.row_log_sum_exp(logits), idx, scale)
        tape.backward(objective)
        grad = xs.grad
        noise = rng.standard_normal(size=(len(idx), fdim))
        proposal = x_s + cfg.step_size * grad + cfg.noise_scale * noise
        finite = np.isfinite(proposal).all(axis=1)
        for r in np.nonzero(active & ~finite)[0]:
            proposal[r] = rng.uniform(-1.0, 1.0, size=fdim)
        x_s = np.where(active[:, None], proposal, x_s)
        active &= finite
    x_full[idx] = x_s
    return SampleSet(indices=idx, features=x_s)


def generate_edges(per_node_lse, sample_indices, tau: float) -> list[tuple[int, int]]:
    """All unordered sampled-node pairs whose energies differ by at most tau.

    Returned as (low, high) node-id pairs in lexicographic order.
    """
    if tau < 0:
        raise ConfigError("tau must be >= 0")
    lse = np.asarray(per_node_lse, dtype=np.float64).reshape(-1)
    idx = np.asarray(sample_indices, dtype=np.int64)
    order = np.argsort(idx)
    idx, lse = idx[order], lse[order]
    gap = np.abs(lse[:, None] - lse[None, :])
    ii, jj = np.nonzero(np.triu(gap <= tau, k=1))
    return [(int(idx[a]), int(idx[b])) for a, b in zip(ii, jj)]


@dataclass
class TrainState:
    """Mutable state owned by the training loop."""

    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    config: TrainConfig
    params: md.GcnParams
    adam: AdamState
    rng: np.random.Generator
    buffer: ReplayBuffer
    adjacency: SparseAdjacency          # committed graph, no self-loops
    a_norm: SparseAdjacency             # normalized (adjacency + I)
    pending_edges: set = field(default_factory=set)
    tau: float | None = None
    epoch: int = 0
    x_hat: np.ndarray | None = None


def _renormalize(adjacency: SparseAdjacency) -> SparseAdjacency:
    return symmetric_normalize(add_self_loops(adjacency))


def train_epoch(state: TrainState) -> EpochLog:
    """One outer iteration; mutates ``state`` and returns its log entry."""
    cfg = state.config
    generative = cfg.mode != "gcn"
    tape = Tape()
    w0 = tape.leaf(state.params.w0, requires_grad=True)
    w1 = tape.leaf(state.params.w1, requires_grad=True)
    x = tape.leaf(state.features)
    logits_clf = md.forward_on_tape(tape, state.a_norm, x, w0, w1)
    l_clf = tape.masked_cross_entropy(logits_clf, state.labels, state.train_mask)
    z_clf = md.graph_energy(logits_clf.value)

    terms, coeffs = [l_clf], [1.0]
    l_gen_value, z_gen = 0.0, float("nan")
    sample_set = None
    lse_gen_values = None
    if generative:
        n = state.features.shape[0]
        if cfg.batch_size > n:
            raise ConfigError(f"batch_size {cfg.batch_size} exceeds node count {n}")
        indices = state.rng.choice(n, size=cfg.batch_size, replace=False)
        fdim = state.features.shape[1]
        x_hat = state.features.copy()
        for i in indices:
            x_hat[i] = init_sample(state.buffer, cfg.sgld.reinit_prob, fdim, state.rng)
        sample_set = SampleSet(indices=indices, features=x_hat[indices].copy())
        sample_set = sgld_chain(state.a_norm, x_hat, sample_set, state.params,
                                cfg.sgld, state.rng)
        x_gen = tape.leaf(x_hat)
        logits_gen = md.forward_on_tape(tape, state.a_norm, x_gen, w0, w1)
        z_gen = md.graph_energy(logits_gen.value)
        md._check_normalizer(z_clf, "z_clf")
        md._check_normalizer(z_gen, "z_gen")
        lse_clf_slot = tape.row_log_sum_exp(logits_clf)
        lse_gen_slot = tape.row_log_sum_exp(logits_gen)
        inner = tape.combine(
            [tape.index_sum(lse_clf_slot, indices, 1.0 / z_clf),
             tape.index_sum(lse_gen_slot, indices, 1.0 / z_gen)],
            [1.0, -1.0],
        )
        l_gen_slot = tape.absolute(inner)
        terms.append(l_gen_slot)
        coeffs.append(1.0)
        lse_gen_values = lse_gen_slot.value[:, 0]
        state.x_hat = x_hat

    penalty_value = md.orthogonality_penalty(state.params)
    if cfg.jemo_weight > 0:
        pen_slot = tape.combine(
            [tape.gram_identity_frobenius(w0), tape.gram_identity_frobenius(w1)],
            [1.0, 1.0],
        )
        terms.append(pen_slot)
        coeffs.append(cfg.jemo_weight)
    total = tape.combine(terms, coeffs)
    if generative:
        l_gen_value = float(terms[1].value)
    total_value = md.total_loss(float(l_clf.value), l_gen_value, penalty_value,
                                cfg.jemo_weight)
    if not np.isfinite(total.value):
        raise NonFiniteLoss(f"epoch {state.epoch}: loss {total.value}")

    grads = tape.backward(total)
    state.params, state.adam = optimizer_step(
        state.params, {"w0": grads[w0], "w1": grads[w1]}, state.adam,
        cfg.learning_rate,
    )

    if generative:
        for row in sample_set.features:
            state.buffer.push(row)
        if state.tau is None:
            spread = float(lse_gen_values.max() - lse_gen_values.min())
            state.tau = (cfg.energy_threshold if cfg.energy_threshold is not None
                         else 0.01 * spread)
        for pair in generate_edges(lse_gen_values[sample_set.indices],
                                   sample_set.indices, state.tau):
            state.pending_edges.add(pair)

    classes, _ = md.predict(logits_clf.value)
    return EpochLog(
        epoch=state.epoch,
        l_clf=float(l_clf.value),
        l_gen=l_gen_value,
        penalty=penalty_value,
        total=total_value,
        z_clf=z_clf,
        z_gen=z_gen,
        edges_added=0,
        train_acc=accuracy(classes, state.labels, state.train_mask),
        val_acc=accuracy(classes, state.labels, state.val_mask),
    )


def _commit_edges(state: TrainState) -> int:
    added = 0
    a = state.adjacency
    for i, j in sorted(state.pending_edges):
        grown = add_edge(a, i, j)
        if grown is not a:
            added += 1
        a = grown
    state.pending_edges.clear()
    if added:
        state.adjacency = a
        state.a_norm = _renormalize(a)
    return added


@dataclass(frozen=True)
class TrainResult:
    params: md.GcnParams
    adjacency: SparseAdjacency
    x_hat: np.ndarray
    logs: list


def train(dataset, config: TrainConfig, on_epoch=None) -> TrainResult:
    """Run the full loop on a dataset; deterministic for a fixed seed.

    Edge candidates accumulate across epochs and are committed on epochs
    divisible by ``edge_update_interval`` (1-based), after which the
    adjacency is re-augmented with self-loops and re-normalized.
    """
    rng = np.random.default_rng(config.seed)
    n, fdim = dataset.features.shape
    model_cfg = md.ModelConfig(feature_dim=fdim, hidden_dim=config.hidden_dim,
                               num_classes=dataset.num_classes,
                               jemo_weight=config.jemo_weight)
    params = md.init_params(model_cfg, rng)
    state = TrainState(
        features=check_finite(dataset.features, "features"),
        labels=np.asarray(dataset.labels, dtype=np.int64),
        train_mask=dataset.train_mask,
        val_mask=dataset.val_mask,
        config=config,
        params=params,
        adam=AdamState.zeros(params),
        rng=rng,
        buffer=ReplayBuffer(config.buffer_capacity, fdim),
        adjacency=dataset.adjacency,
        a_norm=_renormalize(dataset.adjacency),
        tau=config.energy_threshold,
    )
    logs = []
    for epoch in range(1, config.epochs + 1):
        state.epoch = epoch
        log = train_epoch(state)
        if state.config.mode != "gcn" and epoch % config.edge_update_interval == 0:
            log = replace(log, edges_added=_commit_edges(state))
        logs.append(log)
        if on_epoch is not None:
            on_epoch(log)
    x_hat = state.x_hat if state.x_hat is not None else state.features.copy()
    return TrainResult(params=state.params, adjacency=state.adjacency,
                       x_hat=x_hat, logs=logs)


def evaluate_accuracy(params: md.GcnParams, adjacency: SparseAdjacency,
                      features: np.ndarray, labels, mask) -> float:
    """Accuracy of the classifier on a node subset, on the given raw graph."""
    logits = md.forward(_renormalize(adjacency), features, params)
    classes, _ = md.predict(logits)
    return accuracy(classes, labels, mask)


# -- flat key=value configuration --------------------------------------------

_SGLD_KEYS = {"step_size": float, "noise_scale": float, "steps": int,
              "reinit_prob": float}
_TRAIN_KEYS = {"epochs": int, "learning_rate": float, "batch_size": int,
               "energy_threshold": float, "edge_update_interval": int,
               "buffer_capacity": int, "seed": int, "jemo_weight": float,
               "hidden_dim": int, "mode": str}


def apply_overrides(values: dict, pairs) -> dict:
    """Apply ``key=value`` strings onto a raw config dict."""
    values = dict(values)
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, _, raw = pair.partition("=")
        key = key.strip()
        if key in _TRAIN_KEYS:
            cast = _TRAIN_KEYS[key]
        elif key in _SGLD_KEYS:
            cast = _SGLD_KEYS[key]
        else:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            values[key] = cast(raw.strip())
        except ValueError as e:
            raise ConfigError(f"bad value for {key}: {raw!r}") from e
    return values


def parse_config_file(path) -> dict:
    """Read flat ``key=value`` lines (``#`` comments) into a raw config dict."""
    values = {}
    with open(path) as f:
        lines = [ln.split("#", 1)[0].strip() for ln in f]
    pairs = [ln for ln in lines if ln]
    return apply_overrides(values, pairs)


def build_config(values: dict) -> TrainConfig:
    sgld_kwargs = {k: v for k, v in values.items() if k in _SGLD_KEYS}
    train_kwargs = {k: v for k, v in values.items() if k in _TRAIN_KEYS}
    return TrainConfig(sgld=SgldConfig(**sgld_kwargs), **train_kwargs)
