"""Scale-indexed squared-exponential kernel and its length-scale schedule."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

from .data import Dataset, diameter


@dataclass(frozen=True)
class KernelParams:
    """Length-scale schedule: epsilon = base / decay**scale.

    ``base`` is the squared length scale at scale 0 and ``decay`` the
    factor by which it shrinks per scale increment.
    """

    base: float
    decay: float = 2.0
    scale: int = 0

    def __post_init__(self):
        if not self.base > 0:
            raise ValueError("base squared length scale must be positive")
        if not self.decay > 1:
            raise ValueError("decay factor must exceed 1")
        if self.scale < 0 or int(self.scale) != self.scale:
            raise ValueError("scale must be a nonnegative integer")

    @property
    def epsilon(self) -> float:
        """Effective squared length scale at this scale."""
        return self.base / self.decay ** self.scale

    def at_scale(self, scale: int) -> "KernelParams":
        return replace(self, scale=scale)


def default_base(ds: Dataset) -> float:
    """Default squared-length-scale base: 2 * (diameter / 2)**2."""
    return 2.0 * (diameter(ds) / 2.0) ** 2


def gram(xa: np.ndarray, xb: np.ndarray, params: KernelParams) -> np.ndarray:
    """Kernel matrix exp(-||xa_i - xb_j||^2 / epsilon), shape (m, k).

    Exactly symmetric with unit diagonal when ``xa is xb``.
    """
    xa = np.atleast_2d(np.asarray(xa, dtype=float))
    xb = np.atleast_2d(np.asarray(xb, dtype=float))
    if xa.shape[1] != xb.shape[1]:
        raise ValueError(f"site dimension mismatch: {xa.shape[1]} vs {xb.shape[1]}")
    eps = params.epsilon
    if not np.isfinite(eps) or eps <= 0:
        raise ValueError("length scale must be finite and positive")
    return np.exp(-cdist(xa, xb, "sqeuclidean") / eps)
