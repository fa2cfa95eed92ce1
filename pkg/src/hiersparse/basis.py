"""Per-scale basis selection: numerical rank, Gaussian sketch, pivoted QR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr as _pivoted_qr


@dataclass
class BasisSelection:
    """Columns of a Gram matrix chosen as the basis at one scale.

    ``pivot_order`` is the full column permutation from the pivoted QR of
    the sketch; its first ``rank`` entries are the selected column (and,
    by symmetry of the Gram matrix, site) indices in selection order.
    """

    scale: int
    rank: int
    pivot_order: np.ndarray   # (n,) permutation of 0..n-1
    basis: np.ndarray         # (n, rank) selected Gram columns

    @property
    def selected_sites(self) -> np.ndarray:
        return self.pivot_order[: self.rank]


def numerical_rank(G: np.ndarray, delta: float) -> int:
    """Count of singular values within relative threshold delta of the largest.

    Computed from a full singular value decomposition of ``G``.
    """
    G = np.asarray(G, dtype=float)
    if not np.all(np.isfinite(G)):
        raise ValueError("non-finite entries in matrix")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    sv = np.linalg.svd(G, compute_uv=False)
    if sv[0] == 0:
        return 0
    return int(np.count_nonzero(sv / sv[0] >= delta))


def sketch(G: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Gaussian row sketch W = A @ G with A (k, n) standard normal from ``seed``."""
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    if k > n:
        raise ValueError(f"sketch rows k={k} cannot exceed n={n}")
    if k < 1:
        raise ValueError("sketch needs at least one row")
    A = np.random.default_rng(seed).standard_normal((k, n))
    return A @ G


def select_basis(G: np.ndarray, rank: int, oversample: int = 8, seed: int = 0,
                 scale: int = 0) -> BasisSelection:
    """Pick ``rank`` Gram columns by pivoted QR of a seeded Gaussian sketch.

    The sketch uses ``min(n, rank + oversample)`` rows; the QR column
    pivot order ranks columns by norm contribution, and the first ``rank``
    pivots name the selected columns of ``G``.
    """
    G = np.asarray(G, dtype=float)
    n = G.shape[1]
    if not 1 <= rank <= n:
        raise ValueError(f"rank must lie in [1, {n}]")
    k = min(n, rank + max(0, oversample))
    W = sketch(G, k, seed)
    if not np.all(np.isfinite(W)):
        raise np.linalg.LinAlgError("non-finite sketch; QR aborted")
    _, _, pivot = _pivoted_qr(W, mode="economic", pivoting=True)
    return BasisSelection(scale=scale, rank=rank, pivot_order=pivot,
                          basis=G[:, pivot[:rank]])
