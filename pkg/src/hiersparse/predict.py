"""Prediction with t-based confidence and prediction intervals.

The fit variance proxy is the per-scale mean squared residual over the
surplus degrees of freedom; bands are Student-t scaled and computed in
normalized units, then mapped back through the value scale factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import betaincinv, stdtr

from .data import Dataset, NormalizationInfo
from .hierfit import ScaleFit, ScaleRecord, rebuild_scale
from .kernel import gram


class DegenerateDofError(ValueError):
    """No surplus degrees of freedom (n <= rank); intervals are unavailable."""


def sigma_hat(residual_2norm: float, n: int, rank: int) -> float:
    """Fit standard deviation proxy: sqrt(residual^2 / (n - rank))."""
    if n <= rank:
        raise DegenerateDofError(
            f"degenerate degrees of freedom: n={n} <= rank={rank}")
    return float(residual_2norm) / math.sqrt(n - rank)


def _t_pdf(x: float, dof: int) -> float:
    c = math.exp(math.lgamma((dof + 1) / 2) - math.lgamma(dof / 2))
    return c / math.sqrt(dof * math.pi) * (1 + x * x / dof) ** (-(dof + 1) / 2)


def t_quantile(p: float, dof: int) -> float:
    """Student-t inverse CDF via the inverse regularized incomplete beta.

    The tail magnitude comes from inverting the beta identity
    z = dof / (dof + t^2), then a couple of Newton steps on the CDF polish
    the root.  Symmetric: ``t_quantile(p) == -t_quantile(1 - p)``.
    """
    if dof != int(dof) or dof < 1:
        raise ValueError("degrees of freedom must be a positive integer")
    dof = int(dof)
    if not 0 < p < 1:
        raise ValueError("probability must lie in (0, 1)")
    if p == 0.5:
        return 0.0
    q = min(p, 1.0 - p)  # upper-tail mass of the magnitude
    z = float(betaincinv(0.5 * dof, 0.5, 2.0 * q))
    z = max(z, np.finfo(float).tiny)
    t = math.sqrt(dof * (1.0 - z) / z)
    for _ in range(2):
        err = float(stdtr(dof, t)) - (1.0 - q)
        dens = _t_pdf(t, dof)
        if dens <= 0:
            break
        t -= err / dens
    return t if p > 0.5 else -t


@dataclass
class IntervalBand:
    """Pointwise mean with confidence and prediction half-widths (raw units)."""

    mean: np.ndarray
    conf_half_width: np.ndarray
    pred_half_width: np.ndarray
    dof: int
    sigma_hat: float
    alpha: float


class ScalePredictor:
    """Immutable prediction handle for one fitted scale.

    Factors the basis once (QR), so the interval quadratic form
    b* (B^T B)^{-1} b*^T is evaluated through triangular solves, never an
    explicit inverse.  Safe to share across threads.
    """

    def __init__(self, scale_fit: ScaleFit, normalization: NormalizationInfo):
        self._sf = scale_fit
        self._norm = normalization
        self._r_factor = np.linalg.qr(scale_fit.basis, mode="r")
        self.n = scale_fit.n
        self.rank = scale_fit.rank
        self.dof = self.n - self.rank
        self.scale = scale_fit.scale

    @classmethod
    def from_record(cls, ds: Dataset, record: ScaleRecord, base: float,
                    decay: float = 2.0) -> "ScalePredictor":
        return cls(rebuild_scale(ds, record, base, decay), ds.normalization)

    def _cross_gram(self, at: np.ndarray) -> np.ndarray:
        at = np.asarray(at, dtype=float)
        d = self._sf.sites.shape[1]
        if at.ndim == 1:
            at = at[:, None] if d == 1 else at[None, :]
        at_norm = at / self._norm.axis_scales
        sel = self._sf.sites[self._sf.selected_sites]
        return gram(at_norm, sel, self._sf.params)

    def mean(self, at: np.ndarray) -> np.ndarray:
        """Predicted mean at raw-unit sites (raw units)."""
        return self._cross_gram(at) @ self._sf.coeffs * self._norm.value_scale

    def quadratic_form(self, at: np.ndarray) -> np.ndarray:
        """b* (B^T B)^{-1} b*^T per query point; nonnegative by construction."""
        bstar = self._cross_gram(at)
        w = solve_triangular(self._r_factor.T, bstar.T, lower=True)
        return np.sum(w * w, axis=0)

    def intervals(self, at: np.ndarray, alpha: float) -> IntervalBand:
        """t-based confidence and prediction bands at raw-unit sites."""
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.dof < 1:
            raise DegenerateDofError(
                f"degenerate degrees of freedom: n={self.n} <= rank={self.rank}")
        sig = sigma_hat(self._sf.residual_2norm, self.n, self.rank)
        bstar = self._cross_gram(at)
        w = solve_triangular(self._r_factor.T, bstar.T, lower=True)
        q = np.sum(w * w, axis=0)
        tq = t_quantile(1.0 - alpha / 2.0, self.dof)
        vs = self._norm.value_scale
        mean = bstar @ self._sf.coeffs * vs
        conf = sig * np.sqrt(q) * tq * vs
        pred = sig * np.sqrt(1.0 + q) * tq * vs
        return IntervalBand(mean=mean, conf_half_width=conf,
                            pred_half_width=pred, dof=self.dof,
                            sigma_hat=sig, alpha=alpha)
