"""Dense matrix kernels and a minimal reverse-mode differentiation tape.

The tape supports exactly the primitive set needed by a fixed two-layer
graph convolution trained with an energy objective: sparse-dense product,
dense product, ReLU, row-wise log-sum-exp, masked cross-entropy, the
orthogonality penalty, row splicing, and a small family of scalar
reductions/combinations. It is not a general autodiff system.

Every matrix is a float64 numpy array; scalars are python floats. A
``Slot`` wraps one value on the tape. Forward closures are retained so a
tape can be replayed after leaf values change, which is what the central
finite-difference checker uses.
"""

from __future__ import annotations

import struct

import numpy as np

from .exceptions import (
    CorruptMagic,
    DimensionMismatch,
    EmptyMask,
    IndexOutOfRange,
    TruncatedFile,
    UnrecordedSlot,
)
from .graph import SparseAdjacency
from . import graph as _graph

__all__ = [
    "Slot",
    "Tape",
    "matmul",
    "relu",
    "row_log_sum_exp",
    "softmax_rows",
    "masked_cross_entropy",
    "backward",
    "finite_difference_check",
    "check_finite",
    "save_matrix_csv",
    "load_matrix_csv",
    "write_matrix_record",
    "read_matrix_record",
]

MATRIX_MAGIC = b"GJM1"


def check_finite(x: np.ndarray, what: str = "matrix") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} contains non-finite entries")
    return x


# -- plain kernels -----------------------------------------------------------

def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def relu(a: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(a, float), 0.0)


def row_log_sum_exp(logits: np.ndarray) -> np.ndarray:
    """Per-row log-sum-exp as an (n, 1) column, stabilized by max subtraction."""
    logits = np.asarray(logits, float)
    if logits.size == 0:
        raise DimensionMismatch("log-sum-exp of an empty matrix")
    m = logits.max(axis=1, keepdims=True)
    return m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True))


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    return np.exp(np.asarray(logits, float) - row_log_sum_exp(logits))


def _as_index_array(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype == bool:
        idx = np.nonzero(mask)[0]
    else:
        idx = mask.astype(np.int64)
    if idx.size == 0:
        raise EmptyMask("mask selects no nodes")
    if idx.min() < 0 or idx.max() >= n:
        raise IndexOutOfRange("mask index outside [0, n)")
    return idx


def masked_cross_entropy(logits: np.ndarray, labels, mask) -> float:
    """Mean negative log-likelihood of the true class over the masked nodes."""
    logits = np.asarray(logits, float)
    idx = _as_index_array(mask, logits.shape[0])
    labels = np.asarray(labels, dtype=np.int64)
    y = labels[idx]
    if y.min() < 0 or y.max() >= logits.shape[1]:
        raise IndexOutOfRange("label outside [0, k) on a masked node")
    lse = row_log_sum_exp(logits[idx])[:, 0]
    picked = logits[idx, y]
    return float(np.mean(lse - picked))


# -- tape --------------------------------------------------------------------

class Slot:
    """One value on a tape: a float64 matrix or a python-float scalar."""

    __slots__ = ("value", "requires_grad", "grad", "_tape_id")

    def __init__(self, value, requires_grad: bool, tape_id: int):
        self.value = value
        self.requires_grad = requires_grad
        self.grad = None
        self._tape_id = tape_id

    @property
    def is_scalar(self) -> bool:
        return not isinstance(self.value, np.ndarray)


class _Record:
    __slots__ = ("out", "inputs", "forward", "backward")

    def __init__(self, out, inputs, forward, backward):
        self.out = out
        self.inputs = inputs
        self.forward = forward
        self.backward = backward


class Tape:
    """Ordered record of primitive operations for one forward pass."""

    def __init__(self):
        self._records: list[_Record] = []
        self._leaves: list[Slot] = []

    # -- construction --------------------------------------------------------

    def leaf(self, value, requires_grad: bool = False) -> Slot:
        if isinstance(value, (int, float)):
            value = float(value)
        else:
            value = check_finite(value, "leaf")
        s = Slot(value, requires_grad, id(self))
        self._leaves.append(s)
        return s

    def _own(self, slot: Slot) -> Slot:
        if not isinstance(slot, Slot) or slot._tape_id != id(self):
            raise UnrecordedSlot("slot does not belong to this tape")
        return slot

    def _emit(self, inputs, forward, backward) -> Slot:
        for s in inputs:
            self._own(s)
        needs = any(s.requires_grad for s in inputs)
        out = Slot(forward(), needs, id(self))
        self._records.append(_Record(out, tuple(inputs), forward, backward))
        return out

    # -- matrix primitives ----------------------------------------------------

    def matmul(self, a: Slot, b: Slot) -> Slot:
        def bwd(g, out):
            return (g @ b.value.T if a.requires_grad else None,
                    a.value.T @ g if b.requires_grad else None)
        return self._emit([a, b], lambda: matmul(a.value, b.value), bwd)

    def spmm(self, adj: SparseAdjacency, h: Slot) -> Slot:
        adj_t = adj.to_scipy() if adj.is_symmetric else adj.to_scipy().T.tocsr()

        def bwd(g, out):
            return (adj_t @ g,)
        return self._emit([h], lambda: _graph.spmm(adj, h.value), bwd)

    def relu(self, a: Slot) -> Slot:
        def bwd(g, out):
            return (g * (a.value > 0.0),)
        return self._emit([a], lambda: relu(a.value), bwd)

    def row_log_sum_exp(self, a: Slot) -> Slot:
        def bwd(g, out):
            return (g * np.exp(a.value - out.value),)
        return self._emit([a], lambda: row_log_sum_exp(a.value), bwd)

    def masked_cross_entropy(self, logits: Slot, labels, mask) -> Slot:
        idx = _as_index_array(np.asarray(mask), np.asarray(logits.value).shape[0])
        y = np.asarray(labels, dtype=np.int64)[idx]

        def bwd(g, out):
            d = np.zeros_like(logits.value)
            p = softmax_rows(logits.value[idx])
            p[np.arange(len(idx)), y] -= 1.0
            d[idx] = (g / len(idx)) * p
            return (d,)
        return self._emit([logits],
                          lambda: masked_cross_entropy(logits.value, labels, idx), bwd)

    def gram_identity_frobenius(self, w: Slot) -> Slot:
        """Frobenius norm of (W^T W - I); the per-layer orthogonality penalty."""
        def fwd():
            g = w.value.T @ w.value - np.eye(w.value.shape[1])
            return float(np.sqrt((g * g).sum()))

        def bwd(g, out):
            if out.value < 1e-300:
                return (np.zeros_like(w.value),)
            gram = w.value.T @ w.value - np.eye(w.value.shape[1])
            return (g * (2.0 / out.value) * (w.value @ gram),)
        return self._emit([w], fwd, bwd)

    def replace_rows(self, base: np.ndarray, indices, rows: Slot) -> Slot:
        """Constant matrix with the given rows overwritten by a tracked slot."""
        base = check_finite(base, "base")
        idx = np.asarray(indices, dtype=np.int64)

        def fwd():
            out = base.copy()
            out[idx] = rows.value
            return out

        def bwd(g, out):
            return (g[idx],)
        return self._emit([rows], fwd, bwd)

    # -- scalar reductions and combinations ------------------------------------

    def index_sum(self, a: Slot, indices, scale: float = 1.0) -> Slot:
        """scale * sum of the selected rows of an (n, 1) column."""
        idx = np.asarray(indices, dtype=np.int64)
        scale = float(scale)

        def bwd(g, out):
            d = np.zeros_like(a.value)
            np.add.at(d[:, 0], idx, g * scale)
            return (d,)
        return self._emit([a], lambda: scale * float(a.value[idx, 0].sum()), bwd)

    def sum_all(self, a: Slot) -> Slot:
        def bwd(g, out):
            return (np.full_like(a.value, g),)
        return self._emit([a], lambda: float(a.value.sum()), bwd)

    def sum_of_squares(self, a: Slot) -> Slot:
        def bwd(g, out):
            return (g * 2.0 * a.value,)
        return self._emit([a], lambda: float((a.value * a.value).sum()), bwd)

    def combine(self, slots, coeffs) -> Slot:
        """Linear combination of scalar slots with constant coefficients."""
        coeffs = [float(c) for c in coeffs]
        if len(coeffs) != len(slots):
            raise DimensionMismatch("one coefficient per slot required")

        def bwd(g, out):
            return tuple(g * c for c in coeffs)
        return self._emit(list(slots),
                          lambda: float(sum(c * s.value for c, s in zip(coeffs, slots))), bwd)

    def absolute(self, s: Slot) -> Slot:
        def bwd(g, out):
            return (g * float(np.sign(s.value)),)
        return self._emit([s], lambda: abs(float(s.value)), bwd)

    # -- reverse pass and replay -----------------------------------------------

    def backward(self, loss: Slot) -> dict[Slot, np.ndarray]:
        """Accumulate gradients of a scalar loss; returns grads of trainable leaves."""
        self._own(loss)
        produced = {id(r.out) for r in self._records}
        if id(loss) not in produced:
            raise UnrecordedSlot("loss slot was never produced by this tape")
        if not loss.is_scalar:
            raise DimensionMismatch("backward requires a scalar loss")
        for r in self._records:
            r.out.grad = None
        for s in self._leaves:
            s.grad = None
        loss.grad = 1.0
        for r in reversed(self._records):
            g = r.out.grad
            if g is None or not r.out.requires_grad:
                continue
            grads = r.backward(g, r.out)
            for slot, dg in zip(r.inputs, grads):
                if dg is None or not slot.requires_grad:
                    continue
                if slot.grad is None:
                    slot.grad = dg if np.isscalar(dg) else dg.copy()
                else:
                    slot.grad = slot.grad + dg
        return {s: s.grad for s in self._leaves if s.requires_grad}

    def replay(self) -> None:
        """Recompute every recorded output from current leaf values, in order."""
        for r in self._records:
            r.out.value = r.forward()

    @property
    def output(self) -> Slot:
        if not self._records:
            raise UnrecordedSlot("tape is empty")
        return self._records[-1].out


def backward(tape: Tape, loss: Slot) -> dict[Slot, np.ndarray]:
    return tape.backward(loss)


def finite_difference_check(tape: Tape, slot: Slot, step: float = 1e-5,
                            loss: Slot | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    The differentiated function is exactly the one the tape encodes: any
    quantity baked in as a constant (normalizers, adjacency) stays frozen
    while the leaf is perturbed.
    """
    if loss is None:
        loss = tape.output
    tape.backward(loss)
    analytic = slot.grad
    base = slot.value
    if analytic is None:
        raise UnrecordedSlot("slot has no gradient; was it marked requires_grad?")
    scalar = not isinstance(base, np.ndarray)
    flat_base = np.array([base]) if scalar else base.ravel().copy()
    flat_grad = np.array([analytic], float) if scalar else np.asarray(analytic).ravel()
    worst = 0.0
    for k in range(flat_base.size):
        for sign in (+1.0, -1.0):
            bumped = flat_base.copy()
            bumped[k] += sign * step
            slot.value = float(bumped[0]) if scalar else bumped.reshape(base.shape)
            tape.replay()
            if sign > 0:
                up = float(loss.value)
            else:
                down = float(loss.value)
        central = (up - down) / (2.0 * step)
        err = abs(flat_grad[k] - central) / (abs(central) + 1e-12)
        worst = max(worst, err)
    slot.value = base
    tape.replay()
    return worst


# -- serialization -----------------------------------------------------------

def save_matrix_csv(x: np.ndarray, path) -> None:
    """One row per line, comma separated, 17 significant digits."""
    x = np.asarray(x, float)
    with open(path, "w", newline="\n") as f:
        for row in x:
            f.write(",".join(f"{v:.17g}" for v in row))
            f.write("\n")


def load_matrix_csv(path) -> np.ndarray:
    rows = []
    width = None
    with open(path) as f:
        for line_no, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DimensionMismatch(f"ragged row at line {line_no + 1}")
            rows.append([float(p) for p in parts])
    return check_finite(np.asarray(rows, dtype=np.float64), "matrix csv")


def write_matrix_record(f, x: np.ndarray) -> None:
    """Binary record: magic ``GJM1``, u64 rows, u64 cols, raw little-endian float64."""
    x = np.ascontiguousarray(x, dtype="<f8")
    f.write(MATRIX_MAGIC)
    f.write(struct.pack("<QQ", x.shape[0], x.shape[1]))
    f.write(x.tobytes())


def read_matrix_record(f) -> np.ndarray:
    magic = f.read(4)
    if len(magic) < 4:
        raise TruncatedFile("file ended before matrix magic")
    if magic != MATRIX_MAGIC:
        raise CorruptMagic(f"expected {MATRIX_MAGIC!r}, found {magic!r}")
    header = f.read(16)
    if len(header) < 16:
        raise TruncatedFile("file ended inside matrix header")
    rows, cols = struct.unpack("<QQ", header)
    payload = f.read(rows * cols * 8)
    if len(payload) < rows * cols * 8:
        raise TruncatedFile("file ended inside matrix payload")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)
