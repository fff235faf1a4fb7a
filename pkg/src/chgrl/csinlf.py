"""Causal-regularized inherently nonnegative latent factorization.

Imputes an incomplete matrix by fitting unconstrained row/column factors
whose squared values reconstruct it: cell (u,v) is approximated by
sum_k delta(y_row[u,k]) * delta(y_col[v,k]) with delta(x) = x**2, so every
reconstruction is nonnegative by construction rather than by projection.
The objective over the known-entry set adds a ridge penalty (weight mu,
summed per known entry as stated, which weights frequently observed rows
more) and a causal alignment penalty (weight gamma) pulling the squared
factors of a-priori linked row/column pairs together.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericalError


class CsinlfError(ValueError):
    pass


@dataclass
class KnownEntrySet:
    """Observed cells (u, v, s_uv) of a rows x cols matrix."""

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    num_rows: int
    num_cols: int

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        n = self.rows.size
        if n == 0:
            raise CsinlfError("known-entry set is empty")
        if self.cols.size != n or self.values.size != n:
            raise CsinlfError("rows/cols/values length mismatch")
        if self.rows.min() < 0 or self.rows.max() >= self.num_rows:
            raise CsinlfError("row index out of range")
        if self.cols.min() < 0 or self.cols.max() >= self.num_cols:
            raise CsinlfError("column index out of range")
        if len({(int(u), int(v)) for u, v in zip(self.rows, self.cols)}) != n:
            raise CsinlfError("duplicate (row, col) entry")

    @classmethod
    def from_matrix(cls, values: np.ndarray, missing_mask: np.ndarray) -> "KnownEntrySet":
        values = np.asarray(values, dtype=np.float64)
        known = ~np.asarray(missing_mask, dtype=bool)
        u, v = np.nonzero(known)
        return cls(u, v, values[u, v], values.shape[0], values.shape[1])

    def __len__(self) -> int:
        return self.rows.size


@dataclass
class FactorModel:
    """Unconstrained latent factors; nonnegativity lives in delta_map."""

    y_row: np.ndarray  # [num_rows, d]
    y_col: np.ndarray  # [num_cols, d]
    mu: float = 0.0
    gamma: float = 0.0
    prior_pairs: np.ndarray = field(
        default_factory=lambda: np.zeros((0, 2), dtype=np.int64)
    )

    def __post_init__(self):
        self.y_row = np.asarray(self.y_row, dtype=np.float64)
        self.y_col = np.asarray(self.y_col, dtype=np.float64)
        self.prior_pairs = np.asarray(self.prior_pairs, dtype=np.int64).reshape(-1, 2)
        if self.y_row.ndim != 2 or self.y_col.ndim != 2:
            raise CsinlfError("factors must be 2-D")
        if self.y_row.shape[1] != self.y_col.shape[1]:
            raise CsinlfError("row/column factors disagree on latent dimension")
        if self.y_row.shape[1] < 1:
            raise CsinlfError("latent dimension must be >= 1")
        if self.mu < 0 or self.gamma < 0:
            raise CsinlfError("regularization weights must be nonnegative")

    @property
    def d(self) -> int:
        return self.y_row.shape[1]

    def reconstruction(self) -> np.ndarray:
        return delta_map(self.y_row) @ delta_map(self.y_col).T


def delta_map(x):
    """Smooth nonnegativity mapping: x -> x**2 (zero iff x is zero)."""
    return np.square(x)


def _check_compat(m: FactorModel, known: KnownEntrySet):
    if known.num_rows != m.y_row.shape[0] or known.num_cols != m.y_col.shape[0]:
        raise CsinlfError(
            f"model is {m.y_row.shape[0]}x{m.y_col.shape[0]}, entries are "
            f"{known.num_rows}x{known.num_cols}"
        )
    if m.prior_pairs.size:
        if m.prior_pairs[:, 0].max() >= known.num_rows or m.prior_pairs[:, 0].min() < 0:
            raise CsinlfError("prior pair row index out of range")
        if m.prior_pairs[:, 1].max() >= known.num_cols or m.prior_pairs[:, 1].min() < 0:
            raise CsinlfError("prior pair column index out of range")


def objective_terms(m: FactorModel, known: KnownEntrySet) -> tuple[float, float, float]:
    """Unweighted (data, ridge, causal) terms; the objective recombines them."""
    _check_compat(m, known)
    a = delta_map(m.y_row)  # [R, d]
    b = delta_map(m.y_col)  # [C, d]
    approx = np.einsum("ik,ik->i", a[known.rows], b[known.cols])
    data = 0.5 * float(np.square(known.values - approx).sum())
    ridge = float(
        np.square(a[known.rows]).sum() + np.square(b[known.cols]).sum()
    )
    causal = 0.0
    if m.prior_pairs.size:
        diff = a[m.prior_pairs[:, 0]] - b[m.prior_pairs[:, 1]]
        causal = float(np.square(diff).sum())
    return data, ridge, causal


def csinlf_objective(m: FactorModel, known: KnownEntrySet) -> float:
    data, ridge, causal = objective_terms(m, known)
    return data + m.mu * ridge + m.gamma * causal


def csinlf_gradient(m: FactorModel, known: KnownEntrySet) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of the objective w.r.t. y_row and y_col."""
    _check_compat(m, known)
    a = delta_map(m.y_row)
    b = delta_map(m.y_col)
    au, bv = a[known.rows], b[known.cols]
    err = known.values - np.einsum("ik,ik->i", au, bv)  # [n]

    # d(data)/d(a_uk) = -sum_v err * b_vk, then chain through a = y^2
    g_a = np.zeros_like(a)
    g_b = np.zeros_like(b)
    np.add.at(g_a, known.rows, -err[:, None] * bv)
    np.add.at(g_b, known.cols, -err[:, None] * au)

    # ridge: mu * sum_{(u,v) in known} (a_u^2 + b_v^2), counted per entry
    row_counts = np.bincount(known.rows, minlength=known.num_rows).astype(np.float64)
    col_counts = np.bincount(known.cols, minlength=known.num_cols).astype(np.float64)
    g_a += m.mu * 2.0 * row_counts[:, None] * a
    g_b += m.mu * 2.0 * col_counts[:, None] * b

    if m.gamma > 0 and m.prior_pairs.size:
        diff = a[m.prior_pairs[:, 0]] - b[m.prior_pairs[:, 1]]
        np.add.at(g_a, m.prior_pairs[:, 0], m.gamma * 2.0 * diff)
        np.add.at(g_b, m.prior_pairs[:, 1], -m.gamma * 2.0 * diff)

    # chain rule through delta: d(a)/d(y) = 2y
    return g_a * 2.0 * m.y_row, g_b * 2.0 * m.y_col


def fit(
    known: KnownEntrySet,
    d: int,
    mu: float = 0.0,
    gamma: float = 0.0,
    prior_pairs=None,
    epochs: int = 500,
    lr: float = 0.01,
    seed: int = 0,
) -> tuple[FactorModel, np.ndarray]:
    """Gradient descent from small positive init; returns (model, trace).

    trace[e] is the objective after e updates (trace[0] is the initial
    value), so it has epochs + 1 entries.
    """
    if epochs < 1:
        raise CsinlfError("epochs must be >= 1")
    if lr <= 0:
        raise CsinlfError("learning rate must be positive")
    if d < 1:
        raise CsinlfError("latent dimension must be >= 1")
    rng = np.random.default_rng(seed)
    # small positive values keep gradients alive (delta'(0) = 0)
    m = FactorModel(
        y_row=rng.uniform(0.01, 0.1, size=(known.num_rows, d)),
        y_col=rng.uniform(0.01, 0.1, size=(known.num_cols, d)),
        mu=mu,
        gamma=gamma,
        prior_pairs=prior_pairs if prior_pairs is not None else np.zeros((0, 2), np.int64),
    )
    trace = np.empty(epochs + 1)
    trace[0] = csinlf_objective(m, known)
    for e in range(1, epochs + 1):
        g_row, g_col = csinlf_gradient(m, known)
        m.y_row -= lr * g_row
        m.y_col -= lr * g_col
        obj = csinlf_objective(m, known)
        if not np.isfinite(obj):
            raise NumericalError(
                f"objective became non-finite at epoch {e}; try a smaller lr"
            )
        trace[e] = obj
    return m, trace


def impute(m: FactorModel, values: np.ndarray, missing_mask: np.ndarray) -> np.ndarray:
    """Fill missing cells with the model reconstruction; keep observed values."""
    values = np.asarray(values, dtype=np.float64)
    missing = np.asarray(missing_mask, dtype=bool)
    out = values.copy()
    recon = m.reconstruction()
    out[missing] = recon[missing]
    return out


def write_objective_trace(path: str | Path, trace: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "objective"])
        for e, obj in enumerate(trace):
            w.writerow([e, repr(float(obj))])


def load_prior_pairs(path: str | Path) -> np.ndarray:
    """CSV `row_index,col_index` -> int array [m, 2]."""
    path = Path(path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["row_index", "col_index"]:
        raise CsinlfError(f"{path}:1: expected header row_index,col_index")
    out = []
    for ln, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise CsinlfError(f"{path}:{ln}: expected 2 columns")
        try:
            out.append((int(row[0]), int(row[1])))
        except ValueError:
            raise CsinlfError(f"{path}:{ln}: not an integer pair: {row}") from None
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)
