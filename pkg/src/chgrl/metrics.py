"""Binary classification metrics and result-table emission.

AUC is the exact Mann-Whitney rank statistic with half credit for ties,
accuracy and weighted F1 threshold the positive-class probability at 0.5
by default, and run aggregation reports sample mean and (n-1) standard
deviation per metric.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MetricError(ValueError):
    pass


@dataclass
class PredictionSet:
    """True labels in {0,1} and predicted probabilities of class 1."""

    labels: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.labels.size == 0:
            raise MetricError("empty prediction set")
        if self.labels.shape != self.scores.shape:
            raise MetricError("labels and scores differ in length")


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the average rank of their group."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def auc(labels, scores) -> float:
    """P(random positive outranks random negative), ties counted 1/2."""
    p = PredictionSet(labels, scores)
    n_pos = int((p.labels == 1).sum())
    n_neg = int((p.labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs at least one sample of each class")
    ranks = _average_ranks(p.scores)
    rank_sum = ranks[p.labels == 1].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def accuracy(labels, scores, threshold: float = 0.5) -> float:
    p = PredictionSet(labels, scores)
    pred = (p.scores >= threshold).astype(np.int64)
    return float((pred == p.labels).mean())


def f1_weighted(labels, scores, threshold: float = 0.5) -> float:
    """Support-weighted mean of per-class F1; empty classes contribute 0."""
    p = PredictionSet(labels, scores)
    pred = (p.scores >= threshold).astype(np.int64)
    total = len(p.labels)
    out = 0.0
    for c in (0, 1):
        support = int((p.labels == c).sum())
        tp = int(((pred == c) & (p.labels == c)).sum())
        pred_c = int((pred == c).sum())
        prec = tp / pred_c if pred_c else 0.0
        rec = tp / support if support else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        out += support / total * f1
    return out


def mean_std(values) -> tuple[float, float]:
    """Sample mean and (n-1)-denominator standard deviation; n=1 gives std 0."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise MetricError("cannot aggregate zero completed runs")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1))


METRIC_NAMES = ("auc", "acc", "f1")


@dataclass
class MetricTable:
    """Per-method (mean, std) for each metric, in insertion order."""

    rows: dict[str, dict[str, tuple[float, float]]]

    @classmethod
    def empty(cls) -> "MetricTable":
        return cls(rows={})

    def add(self, method: str, auc_values, acc_values, f1_values) -> None:
        self.rows[method] = {
            "auc": mean_std(auc_values),
            "acc": mean_std(acc_values),
            "f1": mean_std(f1_values),
        }


def aggregate(results) -> dict[str, tuple[float, float]]:
    """Mean +/- std of AUC/ACC/F1 over completed runs."""
    completed = [r for r in results if not getattr(r, "failed", False)]
    if not completed:
        raise MetricError("cannot aggregate zero completed runs")
    return {
        "auc": mean_std([r.auc for r in completed]),
        "acc": mean_std([r.acc for r in completed]),
        "f1": mean_std([r.f1 for r in completed]),
    }


def roc_points(labels, scores) -> tuple[np.ndarray, np.ndarray]:
    """ROC curve (fpr, tpr) swept over unique score thresholds, high to low."""
    p = PredictionSet(labels, scores)
    n_pos = int((p.labels == 1).sum())
    n_neg = int((p.labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC needs at least one sample of each class")
    order = np.argsort(-p.scores, kind="stable")
    lab = p.labels[order]
    sc = p.scores[order]
    tps = np.cumsum(lab == 1)
    fps = np.cumsum(lab == 0)
    # keep only the last point of each tie group
    last = np.r_[sc[1:] != sc[:-1], True]
    tpr = np.r_[0.0, tps[last] / n_pos]
    fpr = np.r_[0.0, fps[last] / n_neg]
    return fpr, tpr


def pca_2d(x: np.ndarray) -> np.ndarray:
    """Project rows of x onto the top-2 principal components (deterministic)."""
    x = np.asarray(x, dtype=np.float64)
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2]
    # sign convention: largest-magnitude loading of each component positive
    for k in range(comps.shape[0]):
        j = np.argmax(np.abs(comps[k]))
        if comps[k, j] < 0:
            comps[k] = -comps[k]
    z = centered @ comps.T
    if z.shape[1] < 2:
        z = np.pad(z, ((0, 0), (0, 2 - z.shape[1])))
    return z


def format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.4f} ± {std:.4f}"


def write_embeddings(path: str | Path, idx, labels, h: np.ndarray) -> None:
    """Fused-state dump: patient_index,label,h_f_0,...,h_f_{hl-1}."""
    h = np.asarray(h, dtype=np.float64)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["patient_index", "label"] + [f"h_f_{k}" for k in range(h.shape[1])])
        for i, y, row in zip(idx, labels, h):
            w.writerow([int(i), int(y)] + [repr(float(v)) for v in row])


def read_embeddings(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][:2] != ["patient_index", "label"]:
        raise MetricError(f"{path}: not an embedding dump")
    body = rows[1:]
    idx = np.array([int(r[0]) for r in body], dtype=np.int64)
    labels = np.array([int(r[1]) for r in body], dtype=np.int64)
    h = np.array([[float(v) for v in r[2:]] for r in body], dtype=np.float64)
    return idx, labels, h


def emit_report(
    table: MetricTable,
    out_dir: str | Path,
    predictions: dict[str, PredictionSet] | None = None,
    embeddings: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> None:
    """Write results.csv / results.md, per-method ROC curves, and (when
    given) the embedding dump with its 2-D principal-component projection.

    ``predictions`` maps method name to pooled test-set predictions;
    ``embeddings`` is (patient_index, label, h_f matrix) for one method.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "results.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["method", "metric", "mean", "std"])
            for method, row in table.rows.items():
                for metric in METRIC_NAMES:
                    m, s = row[metric]
                    w.writerow([method, metric, repr(m), repr(s)])
        with open(out_dir / "results.md", "w") as f:
            f.write("| Method | AUC | ACC | F1 |\n")
            f.write("|---|---|---|---|\n")
            for method, row in table.rows.items():
                cells = [format_mean_std(*row[m]) for m in METRIC_NAMES]
                f.write(f"| {method} | {cells[0]} | {cells[1]} | {cells[2]} |\n")
        for method, pred in (predictions or {}).items():
            fpr, tpr = roc_points(pred.labels, pred.scores)
            with open(out_dir / f"roc_{method}.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["fpr", "tpr"])
                for a, b in zip(fpr, tpr):
                    w.writerow([repr(float(a)), repr(float(b))])
        if embeddings is not None:
            idx, labels, h = embeddings
            h = np.asarray(h, dtype=np.float64)
            write_embeddings(out_dir / "embeddings.csv", idx, labels, h)
            z = pca_2d(h)
            with open(out_dir / "embeddings_2d.csv", "w", newline="") as f:
                w = csv.writer(f)
                w.writerow(["patient_index", "label", "z0", "z1"])
                for i, y, row in zip(idx, labels, z):
                    w.writerow([int(i), int(y), repr(float(row[0])), repr(float(row[1]))])
    except OSError as e:
        raise MetricError(f"failed writing report under {out_dir}: {e}") from e
