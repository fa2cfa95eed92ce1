"""Residual-cascade multiscale baseline and head-to-head comparison.

The cascade reuses the exact basis-selection and projection machinery of the
hierarchical fit, but each scale fits the previous scales' residual and the
final prediction sums contributions from every stored scale.  Differences in
the comparison therefore measure the scheme, not implementation details.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .basis import numerical_rank, select_basis
from .data import Dataset, NormalizationInfo
from .hierfit import (TerminalStatus, _evaluate, _least_squares, fit,
                      scale_seed)
from .kernel import KernelParams, default_base, gram


@dataclass
class CascadeStage:
    scale: int
    epsilon: float
    site_indices: np.ndarray   # (l,) indices into the training sites
    sites: np.ndarray          # (l, d) normalized coordinates
    coeffs: np.ndarray         # (l,)


@dataclass
class CascadeRecord:
    scale: int
    epsilon: float
    rank: int
    residual_2norm: float      # cumulative residual after this stage
    residual_inf_norm: float
    sampled_fraction: float


@dataclass
class CascadeTrace:
    records: list
    status: TerminalStatus
    err: float


@dataclass
class CascadeModel:
    """Multiscale-extension model; prediction needs every stored scale."""

    stages: list
    base: float
    decay: float
    normalization: NormalizationInfo

    @property
    def terminal_scale(self) -> int:
        return self.stages[-1].scale

    @property
    def total_sites(self) -> int:
        return sum(len(st.site_indices) for st in self.stages)

    def prediction_kernel_evals(self, n_queries: int) -> int:
        """Exact kernel-evaluation count for predicting at ``n_queries`` points."""
        return int(n_queries) * self.total_sites


def fit_cascade(ds: Dataset, err: float, *, decay: float = 2.0,
                base: float = None, delta: float = 1e-10, oversample: int = 8,
                seed: int = 7, max_scale: int = 25, stop_patience: int = 2):
    """Fit the cascade: each scale projects the running residual.

    Stops when the cumulative residual 2-norm reaches ``err``, when it
    stalls at full rank for ``stop_patience`` scales, or at ``max_scale``.
    Returns ``(CascadeModel, CascadeTrace)``.
    """
    if err < 0:
        raise ValueError("error target must be nonnegative")
    if base is None:
        base = default_base(ds)
    n = ds.n
    residual = ds.values.copy()
    stages, records = [], []
    status = TerminalStatus.MAX_SCALE_CAP
    full_rank_misses = 0
    for s in range(max_scale + 1):
        params = KernelParams(base, decay, s)
        G = gram(ds.sites, ds.sites, params)
        rank = numerical_rank(G, delta)
        sel = select_basis(G, rank, oversample, scale_seed(seed, s), scale=s)
        coeffs, _, _ = _least_squares(sel.basis, residual)
        idx = sel.selected_sites
        # same evaluation route as predict_cascade, so training-site
        # prediction reproduces the stored cumulative fit exactly
        residual = residual - _evaluate(ds.sites, ds.sites[idx], params, coeffs)
        stages.append(CascadeStage(scale=s, epsilon=params.epsilon,
                                   site_indices=idx, sites=ds.sites[idx].copy(),
                                   coeffs=coeffs))
        r2 = float(np.linalg.norm(residual))
        records.append(CascadeRecord(scale=s, epsilon=params.epsilon, rank=rank,
                                     residual_2norm=r2,
                                     residual_inf_norm=float(np.max(np.abs(residual))),
                                     sampled_fraction=rank / n))
        if r2 <= err:
            status = TerminalStatus.CONVERGED
            break
        if rank == n:
            full_rank_misses += 1
            if full_rank_misses >= stop_patience:
                status = TerminalStatus.CRITICAL_SCALE_EXHAUSTED
                break
    model = CascadeModel(stages=stages, base=base, decay=decay,
                         normalization=ds.normalization)
    return model, CascadeTrace(records=records, status=status, err=err)


def predict_cascade(model: CascadeModel, at: np.ndarray) -> np.ndarray:
    """Sum the per-scale contributions at raw-unit sites; raw-unit output."""
    at = np.asarray(at, dtype=float)
    d = model.stages[0].sites.shape[1]
    if at.ndim == 1:
        at = at[:, None] if d == 1 else at[None, :]
    if at.shape[1] != d:
        raise ValueError(f"query sites have {at.shape[1]} axes, model has {d}")
    at_norm = at / model.normalization.axis_scales
    out = np.zeros(at.shape[0])
    for st in model.stages:
        params = KernelParams(model.base, model.decay, st.scale)
        out += _evaluate(at_norm, st.sites, params, st.coeffs)
    return out * model.normalization.value_scale


@dataclass
class ComparisonReport:
    """Per-scale error decay and prediction-cost ledger for both methods.

    Rows extend to the longer of the two traces; once a method has stopped,
    its error and site counts carry forward unchanged.  Kernel-evaluation
    columns ledger the cost of predicting ``query_count`` points from the
    model available at that scale.
    """

    scale: np.ndarray
    err_hier: np.ndarray
    err_cascade: np.ndarray
    sites_hier: np.ndarray
    sites_cascade_cumulative: np.ndarray
    kevals_hier: np.ndarray
    kevals_cascade: np.ndarray
    hier_status: TerminalStatus
    cascade_status: TerminalStatus
    query_count: int
    hier_predict_seconds: float
    cascade_predict_seconds: float


def compare(ds: Dataset, tol: float, *, query_count: int = 1000,
            decay: float = 2.0, base: float = None, delta: float = 1e-10,
            oversample: int = 8, seed: int = 7, max_scale: int = 25,
            stop_patience: int = 2) -> ComparisonReport:
    """Fit both methods on the same data and seed; ledger errors and costs."""
    if base is None:
        base = default_base(ds)
    kwargs = dict(decay=decay, base=base, delta=delta, oversample=oversample,
                  seed=seed, max_scale=max_scale, stop_patience=stop_patience)
    hier_model, hier_trace = fit(ds, tol, **kwargs)
    casc_model, casc_trace = fit_cascade(ds, tol, **kwargs)

    raw_sites = ds.sites * ds.normalization.axis_scales
    lo, hi = raw_sites.min(axis=0), raw_sites.max(axis=0)
    rng = np.random.default_rng(seed)
    queries = lo + rng.uniform(0.0, 1.0, size=(query_count, ds.d)) * (hi - lo)

    from .hierfit import reconstruct
    t0 = time.perf_counter()
    reconstruct(hier_model, queries)
    t_hier = time.perf_counter() - t0
    t0 = time.perf_counter()
    predict_cascade(casc_model, queries)
    t_casc = time.perf_counter() - t0

    n_rows = max(len(hier_trace.records), len(casc_trace.records))
    err_h = np.empty(n_rows)
    err_c = np.empty(n_rows)
    sites_h = np.empty(n_rows, dtype=int)
    sites_c = np.empty(n_rows, dtype=int)
    cum = 0
    for s in range(n_rows):
        if s < len(hier_trace.records):
            err_h[s] = hier_trace.records[s].residual_2norm
            sites_h[s] = hier_trace.records[s].rank
        else:
            err_h[s] = err_h[s - 1]
            sites_h[s] = sites_h[s - 1]
        if s < len(casc_trace.records):
            err_c[s] = casc_trace.records[s].residual_2norm
            cum += casc_trace.records[s].rank
        else:
            err_c[s] = err_c[s - 1]
        sites_c[s] = cum
    return ComparisonReport(scale=np.arange(n_rows), err_hier=err_h,
                            err_cascade=err_c, sites_hier=sites_h,
                            sites_cascade_cumulative=sites_c,
                            kevals_hier=query_count * sites_h,
                            kevals_cascade=query_count * sites_c,
                            hier_status=hier_trace.status,
                            cascade_status=casc_trace.status,
                            query_count=query_count,
                            hier_predict_seconds=t_hier,
                            cascade_predict_seconds=t_casc)
