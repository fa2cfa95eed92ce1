"""Hierarchical fitting loop: per-scale basis selection, projection, stopping.

Each scale is fit independently: assemble the Gram matrix at that scale's
length scale, take its numerical rank, select that many columns through the
seeded sketch + pivoted QR, and least-squares project the responses onto the
selected columns.  The loop walks scales upward until the 2-norm residual
meets the tolerance, the full-rank residual stalls, or the scale cap hits.

Column selection is randomized, so a scale's projection can land slightly
above the previous scale's residual even though the richer scale space could
do better.  When that happens the scale is retried with a geometrically
growing basis allowance along the same machinery (rank escalation) until the
residual is non-increasing; the retry count is recorded per scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .basis import numerical_rank, select_basis
from .data import Dataset, NormalizationInfo, format_real
from .kernel import KernelParams, default_base, gram


class TerminalStatus(str, Enum):
    CONVERGED = "Converged"
    CRITICAL_SCALE_EXHAUSTED = "CriticalScaleExhausted"
    MAX_SCALE_CAP = "MaxScaleCap"


def scale_seed(seed: int, scale: int) -> int:
    """Deterministic per-scale sketch seed derived from the fit seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(scale),))
    return int(ss.generate_state(1)[0])


def _least_squares(B: np.ndarray, f: np.ndarray):
    """Minimum-norm least squares through SVD; returns (coeffs, fitted, rank)."""
    coeffs, _, rank, _ = np.linalg.lstsq(B, f, rcond=None)
    return coeffs, B @ coeffs, int(rank)


def _evaluate(at_norm: np.ndarray, sel_sites: np.ndarray, params: KernelParams,
              coeffs: np.ndarray) -> np.ndarray:
    """Sparse-representation evaluation: cross-Gram times coefficients.

    Both the fit trace and ``reconstruct`` go through this single routine so
    that predicting at the training sites reproduces the recorded fitted
    values bit for bit.
    """
    return gram(at_norm, sel_sites, params) @ coeffs


def project(B: np.ndarray, f: np.ndarray):
    """Least-squares projection of ``f`` onto the columns of ``B``.

    Returns ``(coeffs, fitted)``.  Raises ``LinAlgError`` when ``B`` is
    numerically rank-deficient, which signals a basis-selection failure
    upstream.
    """
    B = np.asarray(B, dtype=float)
    f = np.asarray(f, dtype=float)
    coeffs, fitted, rank = _least_squares(B, f)
    if rank < B.shape[1]:
        raise np.linalg.LinAlgError(
            f"basis is rank-deficient ({rank} < {B.shape[1]} columns)")
    return coeffs, fitted


@dataclass
class ScaleRecord:
    """Slim per-scale trace entry (everything diagnostics need, no basis matrix)."""

    scale: int
    epsilon: float
    rank: int
    pivot_order: np.ndarray   # (n,)
    coeffs: np.ndarray        # (rank,)
    fitted: np.ndarray        # (n,)
    residual: np.ndarray      # (n,)
    residual_2norm: float
    residual_inf_norm: float
    sampled_fraction: float
    escalations: int = 0

    @property
    def selected_sites(self) -> np.ndarray:
        return self.pivot_order[: self.rank]


@dataclass
class ScaleFit:
    """Full working state of one scale, including the basis matrix."""

    params: KernelParams
    rank: int
    pivot_order: np.ndarray
    basis: np.ndarray         # (n, rank)
    coeffs: np.ndarray
    fitted: np.ndarray
    residual: np.ndarray
    sites: np.ndarray         # (n, d) training sites as fitted (normalized space)
    values: np.ndarray        # (n,)
    escalations: int = 0

    @property
    def scale(self) -> int:
        return self.params.scale

    @property
    def epsilon(self) -> float:
        return self.params.epsilon

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def selected_sites(self) -> np.ndarray:
        return self.pivot_order[: self.rank]

    @property
    def residual_2norm(self) -> float:
        return float(np.linalg.norm(self.residual))

    @property
    def residual_inf_norm(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def sampled_fraction(self) -> float:
        return self.rank / self.n

    def record(self) -> ScaleRecord:
        return ScaleRecord(
            scale=self.scale, epsilon=self.epsilon, rank=self.rank,
            pivot_order=self.pivot_order, coeffs=self.coeffs,
            fitted=self.fitted, residual=self.residual,
            residual_2norm=self.residual_2norm,
            residual_inf_norm=self.residual_inf_norm,
            sampled_fraction=self.sampled_fraction,
            escalations=self.escalations)


@dataclass
class FitTrace:
    records: list
    status: TerminalStatus
    tol: float

    @property
    def critical_scale_reached(self) -> bool:
        return any(r.sampled_fraction == 1.0 for r in self.records)

    @property
    def terminal(self) -> ScaleRecord:
        return self.records[-1]


@dataclass
class HierModel:
    """Sparse representation at the terminal scale; all anyone needs to predict."""

    scale: int
    sites: np.ndarray          # (l, d) selected sites, normalized space
    coeffs: np.ndarray         # (l,)
    base: float
    decay: float
    normalization: NormalizationInfo
    delta: float
    oversample: int
    seed: int
    sampled_fraction: float

    @property
    def d(self) -> int:
        return self.sites.shape[1]

    @property
    def epsilon(self) -> float:
        return self.base / self.decay ** self.scale

    def prediction_kernel_evals(self, n_queries: int) -> int:
        """Exact kernel-evaluation count for predicting at ``n_queries`` points."""
        return int(n_queries) * len(self.coeffs)


def fit_scale(ds: Dataset, scale: int, *, base: float, decay: float = 2.0,
              delta: float = 1e-10, oversample: int = 8, seed: int = 7,
              prev_residual: float = None) -> ScaleFit:
    """Fit one scale from scratch.

    With ``prev_residual`` given (the fit loop passes the previous scale's
    residual 2-norm), the selection escalates past the numerical rank until
    the projection residual is non-increasing.  Escalated attempts may push
    columns beyond the numerical rank, so they go through the minimum-norm
    truncated solve rather than the raising ``project``.
    """
    params = KernelParams(base, decay, scale)
    G = gram(ds.sites, ds.sites, params)
    n = ds.n
    rank = numerical_rank(G, delta)
    s_seed = scale_seed(seed, scale)
    step = max(1, oversample)
    escalations = 0
    while True:
        sel = select_basis(G, rank, oversample, s_seed, scale=scale)
        if escalations == 0:
            coeffs, _ = project(sel.basis, ds.values)
        else:
            coeffs, _, _ = _least_squares(sel.basis, ds.values)
        fitted = _evaluate(ds.sites, ds.sites[sel.selected_sites], params, coeffs)
        residual = ds.values - fitted
        r2 = float(np.linalg.norm(residual))
        if prev_residual is None or r2 <= prev_residual or rank >= n:
            break
        rank = min(n, rank + step)
        step *= 2
        escalations += 1
    return ScaleFit(params=params, rank=sel.rank, pivot_order=sel.pivot_order,
                    basis=sel.basis, coeffs=coeffs, fitted=fitted,
                    residual=residual, sites=ds.sites, values=ds.values,
                    escalations=escalations)


def rebuild_scale(ds: Dataset, record: ScaleRecord, base: float,
                  decay: float = 2.0) -> ScaleFit:
    """Reassemble the full scale state from a trace record (exact, no refit).

    The basis is regathered from the stored pivot order; coefficients and
    residuals are taken verbatim from the record so diagnostics stay
    consistent with the original fit.
    """
    params = KernelParams(base, decay, record.scale)
    G = gram(ds.sites, ds.sites, params)
    return ScaleFit(params=params, rank=record.rank,
                    pivot_order=record.pivot_order,
                    basis=G[:, record.pivot_order[: record.rank]],
                    coeffs=record.coeffs, fitted=record.fitted,
                    residual=record.residual, sites=ds.sites,
                    values=ds.values, escalations=record.escalations)


def fit(ds: Dataset, tol: float, *, decay: float = 2.0, base: float = None,
        delta: float = 1e-10, oversample: int = 8, seed: int = 7,
        max_scale: int = 25, stop_patience: int = 2):
    """Run the hierarchical loop; returns ``(HierModel, FitTrace)``.

    Scales are fit at s = 0, 1, 2, ... until the first scale whose residual
    2-norm is at most ``tol`` (Converged), until the residual at full
    numerical rank stays above ``tol`` for ``stop_patience`` consecutive
    scales (CriticalScaleExhausted), or until ``max_scale`` (MaxScaleCap).
    The dataset is expected in normalized units; the returned model keeps
    the normalization metadata so predictions come back in raw units.
    """
    if tol < 0:
        raise ValueError("tolerance must be nonnegative")
    if base is None:
        base = default_base(ds)
    records = []
    status = TerminalStatus.MAX_SCALE_CAP
    prev = math.inf
    full_rank_misses = 0
    last = None
    for s in range(max_scale + 1):
        last = fit_scale(ds, s, base=base, decay=decay, delta=delta,
                         oversample=oversample, seed=seed, prev_residual=prev)
        records.append(last.record())
        prev = last.residual_2norm
        if prev <= tol:
            status = TerminalStatus.CONVERGED
            break
        if last.rank == ds.n:
            full_rank_misses += 1
            if full_rank_misses >= stop_patience:
                status = TerminalStatus.CRITICAL_SCALE_EXHAUSTED
                break
    model = HierModel(scale=last.scale,
                      sites=ds.sites[last.selected_sites].copy(),
                      coeffs=last.coeffs.copy(), base=base, decay=decay,
                      normalization=ds.normalization, delta=delta,
                      oversample=oversample, seed=seed,
                      sampled_fraction=last.sampled_fraction)
    return model, FitTrace(records=records, status=status, tol=tol)


def reconstruct(model: HierModel, at: np.ndarray) -> np.ndarray:
    """Predict at raw-unit sites from the sparse representation alone."""
    at = np.asarray(at, dtype=float)
    if at.ndim == 1:
        at = at[:, None] if model.d == 1 else at[None, :]
    if at.shape[1] != model.d:
        raise ValueError(f"query sites have {at.shape[1]} axes, model has {model.d}")
    at_norm = at / model.normalization.axis_scales
    params = KernelParams(model.base, model.decay, model.scale)
    vals = _evaluate(at_norm, model.sites, params, model.coeffs)
    return vals * model.normalization.value_scale


# ---------------------------------------------------------------------------
# Model file format
# ---------------------------------------------------------------------------

MODEL_FORMAT_VERSION = 1


def _json_scalar(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_real(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        inner = ", ".join(f"{json.dumps(k)}: {_json_scalar(x)}" for k, x in v.items())
        return "{" + inner + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json_scalar(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v)!r}")


def model_to_json(model: HierModel) -> str:
    """Serialize a model to its JSON wire format (17-significant-digit reals)."""
    payload = {
        "version": MODEL_FORMAT_VERSION,
        "d": model.d,
        "T": model.base,
        "P": model.decay,
        "S_a": model.scale,
        "epsilon": model.epsilon,
        "delta": model.delta,
        "k_oversample": model.oversample,
        "seed": model.seed,
        "sampled_fraction": model.sampled_fraction,
        "sites": [list(row) for row in model.sites],
        "coeffs": list(model.coeffs),
        "normalization": {
            "axis_scales": list(model.normalization.axis_scales),
            "value_scale": model.normalization.value_scale,
        },
    }
    lines = [f"  {json.dumps(k)}: {_json_scalar(v)}" for k, v in payload.items()]
    return "{\n" + ",\n".join(lines) + "\n}\n"


def model_from_json(text: str) -> HierModel:
    obj = json.loads(text)
    version = obj.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    norm = NormalizationInfo(np.asarray(obj["normalization"]["axis_scales"], float),
                             float(obj["normalization"]["value_scale"]))
    sites = np.asarray(obj["sites"], dtype=float).reshape(-1, int(obj["d"]))
    return HierModel(scale=int(obj["S_a"]), sites=sites,
                     coeffs=np.asarray(obj["coeffs"], dtype=float),
                     base=float(obj["T"]), decay=float(obj["P"]),
                     normalization=norm, delta=float(obj["delta"]),
                     oversample=int(obj["k_oversample"]), seed=int(obj["seed"]),
                     sampled_fraction=float(obj["sampled_fraction"]))


def save_model(model: HierModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model))


def load_model(path) -> HierModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_json(fh.read())
