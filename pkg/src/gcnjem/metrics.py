"""Evaluation metrics: accuracy, calibration, and spectral comparisons."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfidenceOutOfRange, ConfigError, DimensionMismatch, EmptyMask
from .graph import SpectrumReport, closed_path_count, _symmetric_eigenvalues

__all__ = [
    "CalibrationReport",
    "HistogramReport",
    "SpectraComparison",
    "accuracy",
    "expected_calibration_error",
    "confidence_histogram",
    "covariance_spectrum",
    "compare_spectra",
]


def _mask_to_indices(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    idx = np.nonzero(mask)[0] if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise EmptyMask("mask selects no nodes")
    return idx


def accuracy(predictions, labels, mask) -> float:
    """Fraction of masked nodes whose predicted class matches the label."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    idx = _mask_to_indices(mask, len(labels))
    return float(np.mean(predictions[idx] == labels[idx]))


@dataclass(frozen=True)
class CalibrationReport:
    """Per-bucket confidence/accuracy statistics and their weighted gap."""

    bucket_count: int
    counts: np.ndarray
    mean_confidence: np.ndarray
    mean_accuracy: np.ndarray
    ece: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as f:
            f.write("bucket,lo,hi,count,mean_conf,mean_acc\n")
            m = self.bucket_count
            for b in range(m):
                f.write(f"{b},{b / m:.17g},{(b + 1) / m:.17g},{int(self.counts[b])},"
                        f"{self.mean_confidence[b]:.17g},{self.mean_accuracy[b]:.17g}\n")
            f.write(f"ece,{self.ece:.17g}\n")


def expected_calibration_error(confidences, correct, buckets: int = 20) -> CalibrationReport:
    """Bucket-weighted mean absolute gap between accuracy and confidence.

    Buckets partition [0, 1] into equal intervals, right-inclusive, with the
    first bucket also containing 0. Empty buckets contribute nothing.
    """
    confidences = np.asarray(confidences, dtype=np.float64).reshape(-1)
    correct = np.asarray(correct).reshape(-1).astype(np.float64)
    if confidences.shape != correct.shape:
        raise DimensionMismatch("confidences and correctness flags differ in length")
    if buckets < 1:
        raise ConfigError("bucket count must be >= 1")
    if confidences.size and (confidences.min() < 0.0 or confidences.max() > 1.0):
        raise ConfidenceOutOfRange("confidence outside [0, 1]")
    assignment = np.clip(np.ceil(confidences * buckets).astype(np.int64) - 1, 0, buckets - 1)
    counts = np.bincount(assignment, minlength=buckets)
    sum_conf = np.bincount(assignment, weights=confidences, minlength=buckets)
    sum_acc = np.bincount(assignment, weights=correct, minlength=buckets)
    nonempty = counts > 0
    mean_conf = np.where(nonempty, sum_conf / np.maximum(counts, 1), 0.0)
    mean_acc = np.where(nonempty, sum_acc / np.maximum(counts, 1), 0.0)
    total = max(confidences.size, 1)
    ece = float(np.sum(counts / total * np.abs(mean_acc - mean_conf)))
    return CalibrationReport(bucket_count=buckets, counts=counts,
                             mean_confidence=mean_conf, mean_accuracy=mean_acc,
                             ece=ece)


@dataclass(frozen=True)
class HistogramReport:
    bin_edges: np.ndarray
    bin_counts: np.ndarray
    log_scale_hint: bool = False

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as f:
            f.write("bin_left,bin_right,count\n")
            for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.bin_counts):
                f.write(f"{lo:.17g},{hi:.17g},{int(c)}\n")


def confidence_histogram(confidences, bins: int = 100) -> HistogramReport:
    """Histogram of prediction confidences over [0, 1] with equal bins."""
    confidences = np.asarray(confidences, dtype=np.float64).reshape(-1)
    if confidences.size and (confidences.min() < 0.0 or confidences.max() > 1.0):
        raise ConfidenceOutOfRange("confidence outside [0, 1]")
    counts, edges = np.histogram(confidences, bins=bins, range=(0.0, 1.0))
    return HistogramReport(bin_edges=edges, bin_counts=counts, log_scale_hint=False)


def covariance_spectrum(x: np.ndarray, bins: int = 100) -> SpectrumReport:
    """Eigenvalue spectrum of the sample covariance of row-wise observations."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DimensionMismatch("need at least two rows to form a covariance")
    centered = x - x.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigs = np.sort(_symmetric_eigenvalues(cov))
    counts, edges = np.histogram(eigs, bins=bins)
    return SpectrumReport(eigenvalues=eigs, bin_edges=edges, bin_counts=counts)


@dataclass(frozen=True)
class SpectraComparison:
    """Closed-walk count changes between two spectra, for lengths 2 through 5."""

    lengths: tuple
    before_counts: tuple
    after_counts: tuple
    deltas: tuple
    eigenvalue_range_delta: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as f:
            f.write("length,before,after,delta\n")
            for n, b, a, d in zip(self.lengths, self.before_counts,
                                  self.after_counts, self.deltas):
                f.write(f"{n},{b:.17g},{a:.17g},{d:.17g}\n")
            f.write(f"eigenvalue_range_delta,{self.eigenvalue_range_delta:.17g}\n")


def compare_spectra(before: SpectrumReport, after: SpectrumReport,
                    lengths=(2, 3, 4, 5)) -> SpectraComparison:
    before_counts = tuple(closed_path_count(before, n) for n in lengths)
    after_counts = tuple(closed_path_count(after, n) for n in lengths)
    deltas = tuple(a - b for a, b in zip(after_counts, before_counts))
    range_before = float(before.eigenvalues.max() - before.eigenvalues.min())
    range_after = float(after.eigenvalues.max() - after.eigenvalues.min())
    return SpectraComparison(lengths=tuple(lengths), before_counts=before_counts,
                             after_counts=after_counts, deltas=deltas,
                             eigenvalue_range_delta=range_after - range_before)
