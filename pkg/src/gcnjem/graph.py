"""Sparse symmetric adjacency storage and spectral analysis.

The adjacency is kept in CSR form (row pointers, sorted column indices,
float64 values) and is immutable after construction: every operation
returns a new instance. Normalization follows the symmetric convention
D^{-1/2} (A + I) D^{-1/2} used by two-layer graph convolutions.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exceptions import (
    ConvergenceFailure,
    DimensionMismatch,
    ExistingSelfLoop,
    NotSymmetric,
    SelfEdgeRejected,
    IndexOutOfRange,
    ZeroDegree,
)

__all__ = [
    "SparseAdjacency",
    "SpectrumReport",
    "add_self_loops",
    "symmetric_normalize",
    "add_edge",
    "spmm",
    "spectrum",
    "closed_path_count",
    "degree_vector",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SparseAdjacency:
    """CSR-format adjacency of an undirected graph.

    Invariants (checked at construction): column indices strictly increase
    within each row, all indices lie in [0, n), and when ``is_symmetric``
    the (i, j) entry exists iff (j, i) exists with equal value.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    is_symmetric: bool = True

    def __post_init__(self):
        row_ptr = _freeze(np.asarray(self.row_ptr, dtype=np.int64))
        col_idx = _freeze(np.asarray(self.col_idx, dtype=np.int64))
        values = _freeze(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "row_ptr", row_ptr)
        object.__setattr__(self, "col_idx", col_idx)
        object.__setattr__(self, "values", values)
        self._validate()

    def _validate(self):
        n, row_ptr, col_idx, values = self.n, self.row_ptr, self.col_idx, self.values
        if n < 0 or row_ptr.shape != (n + 1,):
            raise DimensionMismatch(f"row_ptr must have length n+1={n + 1}")
        if row_ptr[0] != 0 or row_ptr[-1] != len(col_idx) or len(col_idx) != len(values):
            raise DimensionMismatch("row_ptr/col_idx/values lengths are inconsistent")
        if np.any(np.diff(row_ptr) < 0):
            raise DimensionMismatch("row_ptr must be non-decreasing")
        if len(col_idx) and (col_idx.min() < 0 or col_idx.max() >= n):
            raise IndexOutOfRange("column index outside [0, n)")
        if len(col_idx) > 1:
            # Strictly increasing columns per row also rules out duplicates;
            # diffs that straddle a row boundary are exempt.
            d = np.diff(col_idx)
            boundary = np.zeros(len(d), dtype=bool)
            starts = row_ptr[1:-1]
            starts = starts[(starts > 0) & (starts < len(col_idx))]
            boundary[starts - 1] = True
            if np.any(d[~boundary] <= 0):
                raise IndexOutOfRange("column indices must strictly increase within each row")
        if not np.all(np.isfinite(values)):
            raise ValueError("adjacency values must be finite")
        if self.is_symmetric and self.nnz:
            t = self.to_scipy().T.tocsr()
            t.sort_indices()
            if (
                not np.array_equal(t.indptr, row_ptr)
                or not np.array_equal(t.indices, col_idx)
                or not np.array_equal(t.data, values)
            ):
                raise NotSymmetric("adjacency flagged symmetric but pattern/values are not")

    @property
    def nnz(self) -> int:
        return len(self.col_idx)

    @cached_property
    def _scipy(self) -> sp.csr_matrix:
        m = sp.csr_matrix(
            (self.values, self.col_idx, self.row_ptr), shape=(self.n, self.n), copy=False
        )
        return m

    def to_scipy(self) -> sp.csr_matrix:
        return self._scipy

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def has_entry(self, i: int, j: int) -> bool:
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        k = np.searchsorted(self.col_idx[lo:hi], j)
        return k < hi - lo and self.col_idx[lo + k] == j

    def edge_set(self) -> set[tuple[int, int]]:
        """Undirected edge set as sorted (i, j) pairs, self-loops as (i, i)."""
        rows = np.repeat(np.arange(self.n), np.diff(self.row_ptr))
        pairs = {(min(i, j), max(i, j)) for i, j in zip(rows.tolist(), self.col_idx.tolist())}
        return pairs

    @staticmethod
    def from_scipy(m: sp.spmatrix, is_symmetric: bool = True) -> "SparseAdjacency":
        c = m.tocsr().copy()
        c.sum_duplicates()
        c.sort_indices()
        return SparseAdjacency(
            n=c.shape[0],
            row_ptr=c.indptr.astype(np.int64),
            col_idx=c.indices.astype(np.int64),
            values=c.data.astype(np.float64),
            is_symmetric=is_symmetric,
        )

    @staticmethod
    def from_edges(n: int, edges, symmetrize: bool = True) -> "SparseAdjacency":
        """Build from an iterable of (i, j) pairs; duplicates are merged.

        With ``symmetrize`` every pair is mirrored, so the input may list
        each undirected edge once or twice in either order.
        """
        edges = list(edges)
        if not edges:
            return SparseAdjacency(
                n, np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64),
                np.zeros(0), is_symmetric=True,
            )
        arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if arr.min() < 0 or arr.max() >= n:
            raise IndexOutOfRange("edge endpoint outside [0, n)")
        if symmetrize:
            arr = np.concatenate([arr, arr[:, ::-1]], axis=0)
        keys = arr[:, 0] * n + arr[:, 1]
        keys = np.unique(keys)
        rows, cols = keys // n, keys % n
        m = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        return SparseAdjacency.from_scipy(m, is_symmetric=symmetrize)

    @staticmethod
    def from_dense(dense: np.ndarray, is_symmetric: bool = True) -> "SparseAdjacency":
        return SparseAdjacency.from_scipy(sp.csr_matrix(np.asarray(dense, dtype=np.float64)),
                                          is_symmetric=is_symmetric)


@dataclass(frozen=True)
class SpectrumReport:
    """All real eigenvalues of a symmetric matrix plus an equal-width histogram."""

    eigenvalues: np.ndarray
    bin_edges: np.ndarray
    bin_counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _freeze(np.asarray(self.eigenvalues, float)))
        object.__setattr__(self, "bin_edges", _freeze(np.asarray(self.bin_edges, float)))
        object.__setattr__(self, "bin_counts", _freeze(np.asarray(self.bin_counts, np.int64)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as f:
            f.write("eigenvalue_bin_left,eigenvalue_bin_right,count\n")
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.bin_counts):
                f.write(f"{lo:.17g},{hi:.17g},{int(c)}\n")


def degree_vector(a: SparseAdjacency) -> np.ndarray:
    """Row sums of the stored entries (the diagonal of D)."""
    return np.asarray(a.to_scipy().sum(axis=1)).ravel()


def add_self_loops(a: SparseAdjacency) -> SparseAdjacency:
    """Insert a unit self-loop on every node.

    Raises ExistingSelfLoop when any diagonal entry is already stored: the
    citation graphs this expects ship loop-free, so a stored loop signals
    corrupt input rather than something to silently double.
    """
    diag = a.to_scipy().diagonal()
    if np.any(diag != 0.0):
        where = int(np.nonzero(diag)[0][0])
        raise ExistingSelfLoop(f"node {where} already has a self-loop")
    with_loops = a.to_scipy() + sp.identity(a.n, format="csr", dtype=np.float64)
    return SparseAdjacency.from_scipy(with_loops, is_symmetric=a.is_symmetric)


def symmetric_normalize(a_hat: SparseAdjacency) -> SparseAdjacency:
    """Rescale every entry (i, j) by 1/sqrt(d_i * d_j); pattern unchanged."""
    if not a_hat.is_symmetric:
        raise NotSymmetric("symmetric normalization requires a symmetric adjacency")
    deg = degree_vector(a_hat)
    if np.any(deg <= 0.0):
        where = int(np.nonzero(deg <= 0.0)[0][0])
        raise ZeroDegree(f"node {where} has non-positive degree {deg[where]}")
    inv_sqrt = 1.0 / np.sqrt(deg)
    rows = np.repeat(np.arange(a_hat.n), np.diff(a_hat.row_ptr))
    scaled = a_hat.values * inv_sqrt[rows] * inv_sqrt[a_hat.col_idx]
    return SparseAdjacency(a_hat.n, a_hat.row_ptr, a_hat.col_idx, scaled,
                           is_symmetric=a_hat.is_symmetric)


def add_edge(a: SparseAdjacency, i: int, j: int) -> SparseAdjacency:
    """Return the adjacency with the undirected unit edge {i, j} present.

    Idempotent: if the edge is already stored the input is returned as-is.
    """
    if i == j:
        raise SelfEdgeRejected(f"refusing self-edge ({i}, {i})")
    if not (0 <= i < a.n and 0 <= j < a.n):
        raise IndexOutOfRange(f"edge ({i}, {j}) outside graph of size {a.n}")
    if a.has_entry(i, j):
        return a
    col_idx, values, row_ptr = a.col_idx, a.values, a.row_ptr.copy()
    # Insert the higher flat position first so the lower one stays valid.
    inserts = []
    for r, c in ((i, j), (j, i)):
        lo, hi = a.row_ptr[r], a.row_ptr[r + 1]
        pos = lo + np.searchsorted(a.col_idx[lo:hi], c)
        inserts.append((int(pos), r, c))
    inserts.sort(reverse=True)
    for pos, r, c in inserts:
        col_idx = np.insert(col_idx, pos, c)
        values = np.insert(values, pos, 1.0)
    for _, r, _ in inserts:
        row_ptr[r + 1:] += 1
    return SparseAdjacency(a.n, row_ptr, col_idx, values, is_symmetric=a.is_symmetric)


def spmm(a: SparseAdjacency, h: np.ndarray) -> np.ndarray:
    """Sparse-dense product a @ h with fixed per-row accumulation order."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != a.n:
        raise DimensionMismatch(f"expected ({a.n}, k) dense operand, got {h.shape}")
    return a.to_scipy() @ h


def _symmetric_eigenvalues(dense: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.eigvalsh(dense)
    except np.linalg.LinAlgError as e:  # pragma: no cover - pathological input
        raise ConvergenceFailure(str(e)) from e


def _symmetric_eigenpairs(dense: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors; used for residual verification."""
    try:
        return np.linalg.eigh(dense)
    except np.linalg.LinAlgError as e:  # pragma: no cover - pathological input
        raise ConvergenceFailure(str(e)) from e


def spectrum(a: SparseAdjacency, bins: int = 100) -> SpectrumReport:
    """Full real spectrum of the (densified) adjacency plus a histogram.

    The histogram has ``bins`` equal-width bins spanning the eigenvalue
    range, rightmost edge inclusive, so the counts always sum to n.
    """
    if not a.is_symmetric:
        raise NotSymmetric("spectrum requires a symmetric adjacency")
    if bins < 1:
        raise DimensionMismatch("bins must be >= 1")
    eigs = np.sort(_symmetric_eigenvalues(a.to_dense()))
    counts, edges = np.histogram(eigs, bins=bins)
    return SpectrumReport(eigenvalues=eigs, bin_edges=edges, bin_counts=counts)


def closed_path_count(report: SpectrumReport, length: int) -> float:
    """Number of closed walks of the given length: the sum of eigenvalue powers."""
    if length < 1:
        raise IndexOutOfRange("walk length must be >= 1")
    if len(report.eigenvalues) == 0:
        raise DimensionMismatch("spectrum is empty")
    return float(np.sum(report.eigenvalues ** length))
