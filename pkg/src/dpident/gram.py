"""Dense Gram-matrix construction, scaling, and summary statistics.

Everything here is desk-scale by design: matrices are materialized densely
(n up to a few thousand), and the auditors below return raw deviation
statistics so membership checks and concentration oracles can apply their
own bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def as_dataset(data: np.ndarray) -> np.ndarray:
    """Validate and return a 2-D float dataset (rows = samples)."""
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("dataset must be a nonempty 2-D array")
    if not np.all(np.isfinite(arr)):
        raise ValueError("dataset entries must be finite")
    return arr


def build_gram(data: np.ndarray) -> np.ndarray:
    """Pairwise inner products of the rows: ``data @ data.T``, symmetrized."""
    x = as_dataset(data)
    t = x @ x.T
    # Enforce exact symmetry despite floating-point reduction order.
    return (t + t.T) / 2.0


@dataclass(frozen=True)
class ScaledGram:
    """A Gram matrix after diagonal centering, rescaling, and clamping."""

    matrix: np.ndarray
    clipped: bool
    n_clipped: int


def scale_center(t: np.ndarray, d: int, entry_scale: float) -> ScaledGram:
    """Center the diagonal by ``d``, divide by ``entry_scale``, clamp to [-1, 1].

    Off-diagonal entries become ``T_ij/scale``; diagonal entries become
    ``(T_ii - d)/scale``.  Entries outside [-1, 1] are clamped and counted.
    """
    t = np.asarray(t, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError("need a square matrix")
    if not entry_scale > 0:
        raise ValueError("entry_scale must be positive")
    v = t / float(entry_scale)
    idx = np.arange(t.shape[0])
    v[idx, idx] = (t[idx, idx] - float(d)) / float(entry_scale)
    n_clipped = int(np.count_nonzero(np.abs(v) > 1.0))
    if n_clipped:
        v = np.clip(v, -1.0, 1.0)
    return ScaledGram(matrix=v, clipped=n_clipped > 0, n_clipped=n_clipped)


def row_col_sums(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row sums and column sums of a matrix."""
    m = np.asarray(m, dtype=float)
    return m.sum(axis=1), m.sum(axis=0)


def submatrix_sum(t: np.ndarray, indices: np.ndarray) -> float:
    """Sum of the entries of ``t`` restricted to ``indices x indices``."""
    idx = np.asarray(indices, dtype=int)
    return float(t[np.ix_(idx, idx)].sum())


def max_diag_deviation(t: np.ndarray, d: int) -> float:
    """``max_i |T_ii - d|``."""
    return float(np.abs(np.diagonal(t) - d).max())


def max_offdiag_abs(t: np.ndarray) -> float:
    """``max_{i != j} |T_ij|`` (0 for a 1x1 matrix)."""
    t = np.asarray(t, dtype=float)
    if t.shape[0] < 2:
        return 0.0
    off = np.abs(t).copy()
    np.fill_diagonal(off, 0.0)
    return float(off.max())


def max_rowsum_deviation(t: np.ndarray, d: int) -> float:
    """``max_i |sum_j T_ij - d|``."""
    return float(np.abs(t.sum(axis=1) - d).max())
