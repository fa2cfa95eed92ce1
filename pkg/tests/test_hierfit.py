import numpy as np
import pytest

import hiersparse as hs
from hiersparse import hierfit
from hiersparse.hierfit import (TerminalStatus, fit_scale, model_from_json,
                                model_to_json, project, rebuild_scale)
from hiersparse.kernel import KernelParams, gram

from conftest import critical_scale


# ---------------------------------------------------------------------------
# project
# ---------------------------------------------------------------------------

def test_project_identity():
    f = np.array([3.0, -1.0, 2.0])
    coeffs, fitted = project(np.eye(3), f)
    np.testing.assert_array_equal(coeffs, f)
    np.testing.assert_array_equal(fitted, f)


def test_project_exact_recovery():
    rng = np.random.default_rng(8)
    B = rng.normal(size=(15, 4))
    c0 = rng.normal(size=4)
    coeffs, fitted = project(B, B @ c0)
    np.testing.assert_allclose(coeffs, c0, atol=1e-10)


def test_project_residual_orthogonal_to_columns():
    rng = np.random.default_rng(12)
    B = rng.normal(size=(20, 5))
    f = rng.normal(size=20)
    coeffs, fitted = project(B, f)
    # normal-equation check: B^T (f - fitted) = 0
    np.testing.assert_allclose(B.T @ (f - fitted), 0.0, atol=1e-10)


def test_project_rank_deficient_raises():
    B = np.ones((6, 2))  # two identical columns
    with pytest.raises(np.linalg.LinAlgError, match="rank-deficient"):
        project(B, np.arange(6.0))


# ---------------------------------------------------------------------------
# fit behavior
# ---------------------------------------------------------------------------

def test_fit_constant_function_converges_at_scale_zero():
    x = np.linspace(-1, 1, 50)[:, None]
    ds = hs.Dataset(x, np.ones(50))
    model, trace = hs.fit(ds, 1e-2, seed=7)
    assert trace.status is TerminalStatus.CONVERGED
    assert model.scale == 0
    assert trace.terminal.residual_2norm <= 1e-2
    # oracle: direct least squares on the same scale-0 basis
    sf = fit_scale(ds, 0, base=hs.default_base(ds), seed=7)
    direct = np.linalg.norm(ds.values - sf.basis @ np.linalg.lstsq(
        sf.basis, ds.values, rcond=None)[0])
    assert trace.terminal.residual_2norm == pytest.approx(direct, abs=1e-9)


def test_fit_tf1_criterion_shape(tf1_fit, tf1_norm):
    model, trace = tf1_fit
    assert trace.status is TerminalStatus.CONVERGED
    assert model.sampled_fraction < 0.5
    assert model.scale <= critical_scale(tf1_norm)
    r2 = [r.residual_2norm for r in trace.records]
    assert all(b <= a + 1e-12 for a, b in zip(r2, r2[1:]))


def test_fit_tol_zero_terminates(tf2_full):
    model, trace = tf2_full
    assert trace.status in (TerminalStatus.CONVERGED,
                            TerminalStatus.CRITICAL_SCALE_EXHAUSTED)
    assert trace.critical_scale_reached


def test_fit_negative_tol_rejected(tf1_norm):
    with pytest.raises(ValueError, match="nonnegative"):
        hs.fit(tf1_norm, -1.0)


def test_fit_deterministic(tf1_norm):
    m1, t1 = hs.fit(tf1_norm, 1e-2, seed=7)
    m2, t2 = hs.fit(tf1_norm, 1e-2, seed=7)
    assert model_to_json(m1) == model_to_json(m2)
    np.testing.assert_array_equal(m1.coeffs, m2.coeffs)
    np.testing.assert_array_equal(m1.sites, m2.sites)
    for a, b in zip(t1.records, t2.records):
        np.testing.assert_array_equal(a.residual, b.residual)


def test_sparse_site_counts_non_decreasing(tf1_full):
    _, trace = tf1_full
    ranks = [r.rank for r in trace.records]
    assert all(b >= a for a, b in zip(ranks, ranks[1:]))


def test_sparse_sites_are_training_rows(tf1_fit, tf1_norm):
    model, trace = tf1_fit
    for row in model.sites:
        assert np.any(np.all(tf1_norm.sites == row, axis=1))
    assert len(model.coeffs) == len(model.sites)


def test_projector_idempotent_well_conditioned():
    # scattered sites at a scale where the Gram matrix is diagonally
    # dominant, so projection coefficients stay O(1)
    x = np.arange(10.0)[:, None]
    ds = hs.Dataset(x, np.sin(x[:, 0]))
    sf = fit_scale(ds, 0, base=2.0, seed=1)
    c1, y1 = project(sf.basis, ds.values)
    c2, y2 = project(sf.basis, y1)
    assert np.linalg.norm(y2 - y1) <= 1e-10


def test_projector_idempotent_amplitude_scaled(tf1_fit, tf1_norm):
    # on hard fixtures the achievable tolerance scales with the coefficient
    # magnitude times machine epsilon
    model, trace = tf1_fit
    for rec in trace.records:
        sf = rebuild_scale(tf1_norm, rec, model.base, model.decay)
        c1, y1 = project(sf.basis, tf1_norm.values)
        c2, y2 = project(sf.basis, y1)
        budget = 1e-10 * max(1.0, np.max(np.abs(c1)))
        assert np.linalg.norm(y2 - y1) <= budget


def test_exact_recovery_at_critical_scale(tf1_full, tf1_norm):
    _, trace = tf1_full
    fnorm = np.linalg.norm(tf1_norm.values)
    full = [r for r in trace.records if r.rank == tf1_norm.n]
    assert full
    for rec in full:
        assert rec.residual_2norm <= 1e-8 * fnorm


# ---------------------------------------------------------------------------
# reconstruct
# ---------------------------------------------------------------------------

def test_reconstruct_matches_fitted_at_training_sites(tf1_fit):
    model, trace = tf1_fit
    raw = hs.gen_test_function("TF1")
    rec = hs.reconstruct(model, raw.sites) / model.normalization.value_scale
    assert np.max(np.abs(rec - trace.terminal.fitted)) <= 1e-10


def test_reconstruct_model_alone_achieves_recorded_residual(tf1_fit):
    model, trace = tf1_fit
    raw = hs.gen_test_function("TF1")
    rec = hs.reconstruct(model, raw.sites) / model.normalization.value_scale
    resid = float(np.linalg.norm(raw.values / model.normalization.value_scale - rec))
    assert resid == pytest.approx(trace.terminal.residual_2norm, rel=1e-10)


def test_reconstruct_sparse_rows_consistent(tf1_fit):
    model, trace = tf1_fit
    raw = hs.gen_test_function("TF1")
    full = hs.reconstruct(model, raw.sites)
    sel = trace.terminal.selected_sites
    sparse_only = hs.reconstruct(model, raw.sites[sel])
    np.testing.assert_array_equal(sparse_only, full[sel])


def test_reconstruct_generalizes_tf3():
    ds = hs.normalize(hs.gen_test_function("TF3"))
    model, trace = hs.fit(ds, 1e-2, seed=7)
    fresh = hs.gen_test_function("TF3", grid=23)
    pred = hs.reconstruct(model, fresh.sites)
    err = np.max(np.abs(pred - fresh.values)) / model.normalization.value_scale
    assert err <= 5 * trace.terminal.residual_inf_norm


def test_reconstruct_dimension_mismatch(tf1_fit):
    model, _ = tf1_fit
    with pytest.raises(ValueError, match="axes"):
        hs.reconstruct(model, np.zeros((3, 2)))


# ---------------------------------------------------------------------------
# model file format
# ---------------------------------------------------------------------------

def test_model_json_round_trip(tf1_fit, tmp_path):
    model, _ = tf1_fit
    path = tmp_path / "m.json"
    hs.save_model(model, path)
    back = hs.load_model(path)
    assert back.scale == model.scale
    assert back.base == model.base and back.decay == model.decay
    assert back.delta == model.delta and back.seed == model.seed
    assert back.oversample == model.oversample
    assert back.sampled_fraction == model.sampled_fraction
    np.testing.assert_array_equal(back.sites, model.sites)
    np.testing.assert_array_equal(back.coeffs, model.coeffs)
    np.testing.assert_array_equal(back.normalization.axis_scales,
                                  model.normalization.axis_scales)
    assert back.normalization.value_scale == model.normalization.value_scale


def test_model_json_keys(tf1_fit):
    import json
    model, _ = tf1_fit
    obj = json.loads(model_to_json(model))
    for key in ("version", "d", "T", "P", "S_a", "epsilon", "delta",
                "k_oversample", "seed", "sites", "coeffs", "normalization"):
        assert key in obj
    assert set(obj["normalization"]) == {"axis_scales", "value_scale"}


def test_model_json_rejects_bad_version():
    with pytest.raises(ValueError, match="version"):
        model_from_json('{"version": 99}')


def test_rebuild_scale_reproduces_basis(tf1_fit, tf1_norm):
    model, trace = tf1_fit
    rec = trace.records[2]
    sf = rebuild_scale(tf1_norm, rec, model.base, model.decay)
    params = KernelParams(model.base, model.decay, rec.scale)
    G = gram(tf1_norm.sites, tf1_norm.sites, params)
    np.testing.assert_array_equal(sf.basis, G[:, rec.pivot_order[:rec.rank]])
    np.testing.assert_array_equal(sf.residual, rec.residual)
