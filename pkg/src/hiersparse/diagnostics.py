"""Computable theory checks on fitted traces.

Everything here is a numerical diagnostic: inner-product bounds in the
native kernel space, iterative-update coefficients between scales, optimal
error-functional weights, the pointwise power term, stability diagonals,
the kernel-matrix rank growth bound, and pivot-order importance ranking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .basis import numerical_rank, select_basis
from .data import Dataset, bounding_box
from .hierfit import FitTrace, ScaleFit, scale_seed
from .kernel import KernelParams, default_base, gram


@dataclass
class BoundReport:
    """Per-scale bound quantities; ``alpha``/``rho`` are NaN at the last scale."""

    scale: np.ndarray
    rkhs_inner_abs: np.ndarray
    rkhs_bound: np.ndarray
    alpha: np.ndarray
    rho: np.ndarray
    rank_upper_bound: np.ndarray


@dataclass
class PowerDiag:
    """Per query point: weight-response product, 1 minus it, and the point value."""

    m_dot_r: np.ndarray
    power_sq: np.ndarray
    psi_value: np.ndarray


@dataclass
class StabilityDiag:
    diag: np.ndarray        # (n,) diagonal of the stability matrix
    lower_bound: float      # 1 / sigma_max(B)
    upper_bound: float      # sum_j sqrt(diag_j)


@dataclass
class ImportanceReport:
    ranking: np.ndarray       # pivot order of the base-seed run, most important first
    top3_counts: np.ndarray   # (n, 3) selection counts at ranks 1..3 over all runs
    n_runs: int
    scale: int


def rkhs_bound_check(trace: FitTrace):
    """Per-scale |C^T E|_selected| and the bound ||C||_inf * ||E||_1.

    Returns ``(inner_abs, bound)`` arrays aligned with the trace records.
    """
    inner, bound = [], []
    for rec in trace.records:
        e_sel = rec.residual[rec.selected_sites]
        inner.append(abs(float(rec.coeffs @ e_sel)))
        bound.append(float(np.max(np.abs(rec.coeffs)) * np.sum(np.abs(rec.residual))))
    return np.asarray(inner), np.asarray(bound)


def alpha_rho(trace: FitTrace):
    """Iterative-update coefficient and contraction ratio per consecutive pair.

    alpha_s = <fitted_{s+1} - fitted_s, E_s> / ||E_s||^2 and
    rho_s = ||E_{s+1}|| / ||E_s||; ``slack`` is (1 + rho) - alpha, the
    margin on the Cauchy-Schwarz upper bound.  Pairs with a zero residual
    at scale s are reported as NaN (already converged).
    """
    recs = trace.records
    if len(recs) < 2:
        raise ValueError("need at least two scales")
    alpha = np.full(len(recs) - 1, np.nan)
    rho = np.full(len(recs) - 1, np.nan)
    for s in range(len(recs) - 1):
        e = recs[s].residual
        denom = float(e @ e)
        if denom == 0:
            continue
        alpha[s] = float((recs[s + 1].fitted - recs[s].fitted) @ e) / denom
        rho[s] = recs[s + 1].residual_2norm / recs[s].residual_2norm
    slack = 1.0 + rho - alpha
    return alpha, rho, slack


def error_functional_weights(sf: ScaleFit, x: np.ndarray):
    """Optimal error-functional weight vector at one point and its response pairing.

    Returns ``(m_hat, psi)`` where ``m_hat`` has one weight per training
    site and ``psi = <values, m_hat>`` reproduces the reconstruction at x
    in normalized units.  The weight solve runs double-precision QR with
    extended-precision residual refinement: the identity against the
    reconstruction is verified to ~1e-9 and a plain double solve of the
    ill-conditioned normal equations cannot reach that.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    sel_sites = sf.sites[sf.selected_sites]
    r_sel = gram(x, sel_sites, sf.params)[0]          # (l,)
    r_factor = np.linalg.qr(sf.basis, mode="r")

    def normal_solve(rhs):
        w = solve_triangular(r_factor.T, rhs, lower=True)
        return solve_triangular(r_factor, w)           # (B^T B)^{-1} rhs

    basis_x = sf.basis.astype(np.longdouble)
    target = r_sel.astype(np.longdouble)
    z = normal_solve(r_sel).astype(np.longdouble)
    for _ in range(3):
        rho = target - basis_x.T @ (basis_x @ z)
        z = z + normal_solve(np.asarray(rho, dtype=float)).astype(np.longdouble)
    m_hat = basis_x @ z
    psi = float(sf.values.astype(np.longdouble) @ m_hat)
    return np.asarray(m_hat, dtype=float), psi


def power_bound(sf: ScaleFit, xs: np.ndarray) -> PowerDiag:
    """Power term 1 - M(x)^T R(x) per query point (full R over all n sites).

    The weight-response product is evaluated as
    r_sel(x)^T lstsq(B, r_full(x)), which pairs the selected-kernel vector
    against a backward-stable solve in data space.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    r_full = gram(xs, sf.sites, sf.params)                      # (m, n)
    r_sel = gram(xs, sf.sites[sf.selected_sites], sf.params)    # (m, l)
    y, *_ = np.linalg.lstsq(sf.basis, r_full.T, rcond=None)     # (l, m)
    m_dot_r = np.sum(r_sel * y.T, axis=1)
    return PowerDiag(m_dot_r=m_dot_r, power_sq=1.0 - m_dot_r,
                     psi_value=r_sel @ sf.coeffs)


def stability_diag(sf: ScaleFit) -> StabilityDiag:
    """Diagonal of D = pinv(B)^T G_sel pinv(B) with its two norm bounds."""
    sel_sites = sf.sites[sf.selected_sites]
    g_sel = gram(sel_sites, sel_sites, sf.params)
    q_factor, r_factor = np.linalg.qr(sf.basis)
    a1 = solve_triangular(r_factor.T, g_sel, lower=True)         # R^-T G_sel
    s_mat = solve_triangular(r_factor.T, a1.T, lower=True).T     # R^-T G_sel R^-1
    diag = np.einsum("ij,ij->i", q_factor @ s_mat, q_factor)
    sigma_max = float(np.linalg.svd(r_factor, compute_uv=False)[0])
    upper = float(np.sum(np.sqrt(np.clip(diag, 0.0, None))))
    return StabilityDiag(diag=diag, lower_bound=1.0 / sigma_max, upper_bound=upper)


def rank_upper_bound(box_lengths: np.ndarray, epsilon: float, delta: float) -> float:
    """Kernel-matrix numerical-rank growth bound from the bounding box.

    prod_i (2 |I_i| / pi * sqrt(ln(1/delta) / epsilon) + 1); coincident
    data (zero edges) gives 1.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    lengths = np.atleast_1d(np.asarray(box_lengths, dtype=float))
    terms = 2.0 * lengths / math.pi * math.sqrt(math.log(1.0 / delta) / epsilon) + 1.0
    return float(np.prod(terms))


def bound_report(ds: Dataset, trace: FitTrace, delta: float = 1e-10) -> BoundReport:
    """Assemble the per-scale bound table for a fitted trace."""
    inner, bound = rkhs_bound_check(trace)
    nrec = len(trace.records)
    alpha = np.full(nrec, np.nan)
    rho = np.full(nrec, np.nan)
    if nrec >= 2:
        a, r, _ = alpha_rho(trace)
        alpha[:-1], rho[:-1] = a, r
    box = bounding_box(ds)
    rub = np.asarray([rank_upper_bound(box, rec.epsilon, delta)
                      for rec in trace.records])
    return BoundReport(scale=np.asarray([r.scale for r in trace.records]),
                       rkhs_inner_abs=inner, rkhs_bound=bound,
                       alpha=alpha, rho=rho, rank_upper_bound=rub)


def importance(ds: Dataset, scale: int, n_runs: int, seed: int, *,
               decay: float = 2.0, base: float = None, delta: float = 1e-10,
               oversample: int = 8) -> ImportanceReport:
    """Pivot-order importance ranking with a multi-run top-3 histogram.

    Run i derives its sketch seed from ``seed + i``, so run 0 reproduces the
    pivot order a fit with the same seed would produce at this scale.
    Aggregation is per-site counting and order-independent.
    """
    if n_runs < 1:
        raise ValueError("need at least one run")
    if base is None:
        base = default_base(ds)
    params = KernelParams(base, decay, scale)
    G = gram(ds.sites, ds.sites, params)
    rank = numerical_rank(G, delta)
    top = min(3, ds.n)
    counts = np.zeros((ds.n, 3), dtype=int)
    ranking = None
    for i in range(n_runs):
        sel = select_basis(G, rank, oversample, scale_seed(seed + i, scale),
                           scale=scale)
        if i == 0:
            ranking = sel.pivot_order.copy()
        for j in range(top):
            counts[sel.pivot_order[j], j] += 1
    return ImportanceReport(ranking=ranking, top3_counts=counts,
                            n_runs=n_runs, scale=scale)
