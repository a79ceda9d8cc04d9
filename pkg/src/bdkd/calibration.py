"""Expected calibration error, reliability-diagram data and histograms.

Confidence is the maximum softmax probability at temperature 1 (the
deployed model's probability), regardless of any distillation
temperature used during training. Bins partition [0, 1] into M equal
intervals, right-closed: bin m covers (m/M, (m+1)/M] except bin 0,
which also includes 0. Empty bins are recorded with count 0 and carry
no weight in the ECE sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CalibrationReport:
    """Per-bin accuracy/confidence table plus the scalar summaries."""

    num_bins: int
    counts: np.ndarray
    accuracies: np.ndarray
    confidences: np.ndarray
    ece: float
    overall_accuracy: float
    overall_confidence: float
    n: int

    def bin_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(lower, upper) bin boundaries, each of length num_bins."""
        grid = np.arange(self.num_bins + 1) / self.num_bins
        return grid[:-1], grid[1:]


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Plain rowwise softmax at temperature 1 (numpy, no tape)."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


def confidences_and_hits(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample top-1 confidence and correctness (argmax ties -> lowest class)."""
    labels = np.asarray(labels)
    probs = softmax_probs(logits)
    if len(probs) != len(labels):
        raise ValueError(f"logits rows ({len(probs)}) and labels ({len(labels)}) differ")
    predictions = probs.argmax(axis=1)
    return probs.max(axis=1), predictions == labels


def bin_index(confidence: np.ndarray, num_bins: int) -> np.ndarray:
    """Right-closed equal-interval bin of each confidence value."""
    inner_edges = np.arange(1, num_bins) / num_bins
    return np.searchsorted(inner_edges, confidence, side="left")


def bin_predictions(logits: np.ndarray, labels: np.ndarray, num_bins: int = 10) -> CalibrationReport:
    """Partition samples by confidence and tabulate per-bin accuracy/confidence."""
    if num_bins < 1:
        raise ValueError(f"num_bins must be >= 1, got {num_bins}")
    conf, hits = confidences_and_hits(logits, labels)
    n = len(conf)
    if n == 0:
        raise ValueError("no samples to bin")
    idx = bin_index(conf, num_bins)
    counts = np.bincount(idx, minlength=num_bins)
    acc = np.zeros(num_bins)
    mean_conf = np.zeros(num_bins)
    nonempty = counts > 0
    acc[nonempty] = np.bincount(idx, weights=hits, minlength=num_bins)[nonempty] / counts[nonempty]
    mean_conf[nonempty] = np.bincount(idx, weights=conf, minlength=num_bins)[nonempty] / counts[nonempty]
    report = CalibrationReport(
        num_bins=num_bins,
        counts=counts,
        accuracies=acc,
        confidences=mean_conf,
        ece=0.0,
        overall_accuracy=float(hits.mean()),
        overall_confidence=float(conf.mean()),
        n=n,
    )
    report.ece = ece(report)
    return report


def ece(report: CalibrationReport) -> float:
    """Bin-weighted mean |accuracy - confidence|."""
    weights = report.counts / report.n
    return float(np.sum(weights * np.abs(report.accuracies - report.confidences)))


def confidence_histogram(
    logits: np.ndarray, labels: np.ndarray, num_bins: int = 10
) -> tuple[np.ndarray, float, float]:
    """Per-bin sample counts plus the overall accuracy/confidence markers."""
    if num_bins < 1:
        raise ValueError(f"num_bins must be >= 1, got {num_bins}")
    conf, hits = confidences_and_hits(logits, labels)
    counts = np.bincount(bin_index(conf, num_bins), minlength=num_bins)
    return counts, float(hits.mean()), float(conf.mean())


def report_csv_text(report: CalibrationReport) -> str:
    """Reliability-diagram table: bin_lo, bin_hi, count, accuracy, confidence."""
    lo, hi = report.bin_edges()
    lines = ["bin_lo,bin_hi,count,accuracy,confidence"]
    for m in range(report.num_bins):
        lines.append(
            f"{float(lo[m])!r},{float(hi[m])!r},{int(report.counts[m])}"
            f",{float(report.accuracies[m])!r},{float(report.confidences[m])!r}"
        )
    return "\n".join(lines) + "\n"


def report_json_dict(report: CalibrationReport) -> dict:
    """Scalar sidecar for the CSV table."""
    return {
        "num_bins": report.num_bins,
        "n": report.n,
        "ece": report.ece,
        "overall_accuracy": report.overall_accuracy,
        "overall_confidence": report.overall_confidence,
    }
