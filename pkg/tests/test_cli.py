import json

import numpy as np
import pytest

import hiersparse as hs
from hiersparse.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture()
def tf1_csv(tmp_path):
    path = tmp_path / "tf1.csv"
    assert run("gen", "TF1", "--equidistant", 200, "--out", path) == 0
    return path


@pytest.fixture()
def fitted(tmp_path, tf1_csv):
    model = tmp_path / "model.json"
    trace = tmp_path / "trace.csv"
    assert run("fit", tf1_csv, "--tol", 1e-2, "--out", model,
               "--trace", trace) == 0
    return model, trace


def read_csv_dict(path):
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return {h: np.array([float(r[i]) for r in rows])
            for i, h in enumerate(header)}


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

def test_gen_row_counts(tmp_path):
    out1 = tmp_path / "a.csv"
    run("gen", "TF1", "--equidistant", 200, "--out", out1)
    assert len(out1.read_text().strip().splitlines()) == 201  # header + rows
    out2 = tmp_path / "b.csv"
    run("gen", "TF3", "--grid", 50, "--out", out2)
    assert len(out2.read_text().strip().splitlines()) == 2501
    assert (tmp_path / "a.csv.config.json").exists()


def test_gen_unknown_function(tmp_path, capsys):
    rc = run("gen", "TF9", "--out", tmp_path / "x.csv")
    assert rc == 1
    assert "unknown test function" in capsys.readouterr().err


def test_gen_output_loadable(tf1_csv):
    ds = hs.load_csv(tf1_csv, has_header=True)
    assert ds.n == 200 and ds.d == 1


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def test_fit_writes_model_and_trace(fitted):
    model_path, trace_path = fitted
    obj = json.loads(model_path.read_text())
    assert obj["sampled_fraction"] < 0.5
    assert obj["S_a"] >= 0 and obj["version"] == 1
    lines = trace_path.read_text().strip().splitlines()
    assert lines[0].startswith("scale,epsilon,rank")
    sidecar = json.loads((model_path.parent / "model.json.config.json").read_text())
    assert sidecar["result"]["status"] == "Converged"
    assert sidecar["config"]["tol"] == 1e-2


def test_fit_negative_tol_usage_error(tmp_path, tf1_csv):
    with pytest.raises(SystemExit) as exc:
        run("fit", tf1_csv, "--tol", -1, "--out", tmp_path / "m.json")
    assert exc.value.code == 2


def test_fit_rerun_byte_identical(tmp_path, tf1_csv):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run("fit", tf1_csv, "--tol", 1e-2, "--out", a)
    run("fit", tf1_csv, "--tol", 1e-2, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_fit_missing_input(tmp_path, capsys):
    rc = run("fit", tmp_path / "nope.csv", "--tol", 1e-2,
             "--out", tmp_path / "m.json")
    assert rc == 1
    assert not (tmp_path / "m.json").exists()


# ---------------------------------------------------------------------------
# predict / reconstruct
# ---------------------------------------------------------------------------

def test_predict_training_residual_matches_trace(tmp_path, tf1_csv, fitted):
    model_path, trace_path = fitted
    out = tmp_path / "pred.csv"
    assert run("predict", model_path, "--sites", tf1_csv, "--out", out) == 0
    cols = read_csv_dict(out)
    assert set(cols) == {"x", "value", "mean", "residual"}
    trace_cols = read_csv_dict(trace_path)
    model = hs.load_model(model_path)
    got = np.linalg.norm(cols["residual"]) / model.normalization.value_scale
    assert got == pytest.approx(trace_cols["residual_2norm"][-1], rel=1e-9)


def test_predict_grid_upsamples(tmp_path):
    surf = tmp_path / "surf.csv"
    run("gen", "TF3", "--grid", 12, "--out", surf)
    model = tmp_path / "m.json"
    assert run("fit", surf, "--tol", 1e-2, "--out", model) == 0
    out = tmp_path / "up.csv"
    # native cell is 4/11 long; ask for a finer grid
    assert run("predict", model, "--grid", 0.1, "--data", surf,
               "--out", out) == 0
    cols = read_csv_dict(out)
    assert set(cols) == {"x", "y", "mean"}
    assert len(cols["x"]) == 41 * 41


def test_predict_intervals_columns(tmp_path, tf1_csv, fitted):
    model_path, _ = fitted
    out = tmp_path / "band.csv"
    assert run("predict", model_path, "--sites", tf1_csv, "--intervals", 0.05,
               "--data", tf1_csv, "--tol", 1e-2, "--out", out) == 0
    cols = read_csv_dict(out)
    assert set(cols) == {"x", "mean", "conf_lo", "conf_hi", "pred_lo", "pred_hi"}
    assert np.all(cols["pred_lo"] <= cols["conf_lo"])
    assert np.all(cols["conf_hi"] <= cols["pred_hi"])


def test_predict_intervals_degenerate_dof(tmp_path, capsys):
    # 12 points driven to full rank: n == rank at the terminal scale
    data = tmp_path / "d.csv"
    run("gen", "TF1", "--equidistant", 12, "--out", data)
    model = tmp_path / "m.json"
    run("fit", data, "--tol", 0, "--out", model)
    out = tmp_path / "band.csv"
    rc = run("predict", model, "--sites", data, "--intervals", 0.05,
             "--data", data, "--tol", 0, "--out", out)
    assert rc == 0
    assert "degenerate dof" in capsys.readouterr().err
    cols = read_csv_dict(out)
    assert set(cols) == {"x", "mean"}


def test_reconstruct_columns(tmp_path, tf1_csv, fitted):
    model_path, _ = fitted
    out = tmp_path / "recon.csv"
    assert run("reconstruct", model_path, tf1_csv, "--out", out) == 0
    cols = read_csv_dict(out)
    assert set(cols) == {"x", "value", "reconstruction", "residual"}
    np.testing.assert_allclose(
        cols["residual"], cols["value"] - cols["reconstruction"], atol=0)


# ---------------------------------------------------------------------------
# diagnose / importance / compare
# ---------------------------------------------------------------------------

def test_diagnose_outputs(tmp_path):
    data = tmp_path / "d.csv"
    run("gen", "TF1", "--equidistant", 40, "--out", data)
    assert run("diagnose", data, "--tol", 1e-2, "--out", tmp_path / "diag") == 0
    bounds = read_csv_dict(tmp_path / "diag_bounds.csv")
    power = read_csv_dict(tmp_path / "diag_power.csv")
    stab = read_csv_dict(tmp_path / "diag_stability.csv")
    assert {"scale", "rkhs_inner_abs", "rkhs_bound", "alpha", "rho",
            "rank_upper_bound"} <= set(bounds)
    assert len(power["power_sq"]) == 200
    assert np.all(power["power_sq"] >= -1e-8)
    assert np.all(stab["sigma_lower_bound"] <= stab["sum_sqrt_diag_upper_bound"])
    assert len(stab["scale"]) == len(bounds["scale"])


def test_importance_outputs(tmp_path):
    data = tmp_path / "d.csv"
    run("gen", "TF2", "--equidistant", 60, "--out", data)
    assert run("importance", data, "--scale", 0, "--runs", 10,
               "--out", tmp_path / "imp") == 0
    ranking = read_csv_dict(tmp_path / "imp_ranking.csv")
    hist = read_csv_dict(tmp_path / "imp_histogram.csv")
    assert len(ranking["rank"]) == 60
    assert sorted(ranking["site_index"].astype(int).tolist()) == list(range(60))
    for col in ("rank1_count", "rank2_count", "rank3_count"):
        assert hist[col].sum() == 10


def test_compare_output(tmp_path, tf1_csv):
    out = tmp_path / "cmp.csv"
    assert run("compare", tf1_csv, "--tol", 1e-2, "--queries", 100,
               "--out", out) == 0
    cols = read_csv_dict(out)
    assert set(cols) == {"scale", "err_hier", "err_cascade", "sites_hier",
                         "sites_cascade_cumulative", "kevals_hier",
                         "kevals_cascade"}
    assert cols["kevals_hier"][-1] <= cols["kevals_cascade"][-1]
    rerun = tmp_path / "cmp2.csv"
    run("compare", tf1_csv, "--tol", 1e-2, "--queries", 100, "--out", rerun)
    assert out.read_bytes() == rerun.read_bytes()
