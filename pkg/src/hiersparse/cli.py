"""Command-line surface: gen, fit, predict, reconstruct, diagnose, importance, compare.

Every command is deterministic given its inputs and --seed (default 7; never
wall-clock entropy), writes its primary artifact(s) under --out, and drops a
``<out>.config.json`` sidecar with the fully resolved configuration so any
run can be replayed byte-for-byte.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import baseline, diagnostics, hierfit, predict
from .data import (Dataset, GridSpec, format_real, gen_test_function, load_csv,
                   normalize, write_csv, _axis_names)
from .kernel import default_base
from .predict import DegenerateDofError, ScalePredictor

DEFAULT_SEED = 7


def _nonneg(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return value


def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return value


def _write_sidecar(out_path: str, command: str, config: dict, result: dict) -> None:
    payload = {"command": command, "config": config, "result": result}
    with open(f"{out_path}.config.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path: str, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_real(v)
    return str(v)


def _fit_kwargs(args) -> dict:
    return dict(decay=args.p_factor, base=args.t_override, delta=args.delta,
                oversample=args.oversample, seed=args.seed,
                max_scale=args.max_scale)


def _fit_config(args) -> dict:
    return {"tol": args.tol, "p_factor": args.p_factor,
            "t_override": args.t_override, "delta": args.delta,
            "oversample": args.oversample, "seed": args.seed,
            "max_scale": args.max_scale}


def _add_fit_flags(sp, with_tol=True):
    if with_tol:
        sp.add_argument("--tol", type=_nonneg, required=True,
                        help="2-norm residual tolerance (normalized units)")
    sp.add_argument("--p-factor", type=float, default=2.0,
                    help="length-scale decay factor per scale (default 2)")
    sp.add_argument("--t-override", type=float, default=None,
                    help="squared-length-scale base (default from data diameter)")
    sp.add_argument("--delta", type=float, default=1e-10,
                    help="numerical-rank threshold (default 1e-10)")
    sp.add_argument("--oversample", type=int, default=8,
                    help="extra sketch rows beyond the rank (default 8)")
    sp.add_argument("--max-scale", type=int, default=25,
                    help="hard scale cap (default 25)")
    sp.add_argument("--no-header", action="store_true",
                    help="input CSV has no header line")


def _load(path: str, no_header: bool) -> Dataset:
    return load_csv(path, has_header=not no_header)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    ds = gen_test_function(args.function, equidistant=args.equidistant,
                           grid=args.grid, random=args.random, seed=args.seed)
    write_csv(ds, args.out, header=True)
    _write_sidecar(args.out, "gen",
                   {"function": args.function.upper(), "equidistant": args.equidistant,
                    "grid": args.grid, "random": args.random, "seed": args.seed},
                   {"rows": ds.n, "axes": ds.d})
    return 0


def cmd_fit(args) -> int:
    ds = normalize(_load(args.data, args.no_header))
    model, trace = hierfit.fit(ds, args.tol, **_fit_kwargs(args))
    hierfit.save_model(model, args.out)
    if args.trace:
        _write_rows(args.trace,
                    ["scale", "epsilon", "rank", "sampled_fraction",
                     "residual_2norm", "residual_inf_norm", "escalations"],
                    [(r.scale, r.epsilon, r.rank, r.sampled_fraction,
                      r.residual_2norm, r.residual_inf_norm, r.escalations)
                     for r in trace.records])
    _write_sidecar(args.out, "fit",
                   {"data": args.data, **_fit_config(args), "trace": args.trace},
                   {"status": trace.status.value, "scale": model.scale,
                    "rank": len(model.coeffs),
                    "sampled_fraction": model.sampled_fraction,
                    "residual_2norm": trace.terminal.residual_2norm})
    return 0


def _query_sites(args, model):
    """Resolve prediction sites from --sites or --grid; returns (sites, values|None)."""
    if args.sites:
        raw = _read_table(args.sites, not args.no_header)
        if raw.shape[1] == model.d:
            return raw, None
        if raw.shape[1] == model.d + 1:
            return raw[:, :-1], raw[:, -1]
        raise ValueError(f"{args.sites}: expected {model.d} or {model.d + 1} "
                         f"columns, found {raw.shape[1]}")
    raw_sites = model.sites * model.normalization.axis_scales
    if args.data:
        raw_sites = _load(args.data, args.no_header).sites
    lo = raw_sites.min(axis=0)
    extent = raw_sites.max(axis=0) - lo
    counts = tuple(int(np.floor(e / args.grid)) + 1 for e in extent)
    return GridSpec(lo, args.grid, counts).nodes(), None


def _read_table(path: str, has_header: bool) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if has_header and lines:
        lines = lines[1:]
    if not lines:
        raise ValueError(f"{path}: no data rows")
    try:
        return np.asarray([[float(f) for f in ln.split(",")] for ln in lines])
    except ValueError:
        raise ValueError(f"{path}: non-numeric field") from None


def cmd_predict(args) -> int:
    if (args.sites is None) == (args.grid is None):
        raise ValueError("give exactly one of --sites or --grid")
    model = hierfit.load_model(args.model)
    sites, values = _query_sites(args, model)
    names = _axis_names(model.d)
    result = {"points": len(sites)}
    if args.intervals is not None:
        if not args.data:
            raise ValueError("--intervals needs --data to rebuild the fit scale")
        ds = normalize(_load(args.data, args.no_header))
        _, trace = hierfit.fit(ds, args.tol, **_fit_kwargs(args))
        scale = args.scale if args.scale is not None else trace.terminal.scale
        recs = [r for r in trace.records if r.scale == scale]
        if not recs:
            raise ValueError(f"scale {scale} not in trace (0..{trace.terminal.scale})")
        pred = ScalePredictor.from_record(ds, recs[0], model.base, model.decay)
        try:
            band = pred.intervals(sites, args.intervals)
        except DegenerateDofError as exc:
            print(f"degenerate dof: {exc}; bands omitted", file=sys.stderr)
            mean = pred.mean(sites)
            _write_rows(args.out, names + ["mean"],
                        [tuple(s) + (m,) for s, m in zip(sites, mean)])
            _write_sidecar(args.out, "predict",
                           _predict_config(args), {**result, "bands": "omitted"})
            return 0
        _write_rows(args.out,
                    names + ["mean", "conf_lo", "conf_hi", "pred_lo", "pred_hi"],
                    [tuple(s) + (m, m - c, m + c, m - p, m + p)
                     for s, m, c, p in zip(sites, band.mean,
                                           band.conf_half_width,
                                           band.pred_half_width)])
        result.update(scale=scale, dof=band.dof, sigma_hat=band.sigma_hat)
    else:
        mean = hierfit.reconstruct(model, sites)
        if values is None:
            _write_rows(args.out, names + ["mean"],
                        [tuple(s) + (m,) for s, m in zip(sites, mean)])
        else:
            _write_rows(args.out, names + ["value", "mean", "residual"],
                        [tuple(s) + (v, m, v - m)
                         for s, v, m in zip(sites, values, mean)])
    _write_sidecar(args.out, "predict", _predict_config(args), result)
    return 0


def _predict_config(args) -> dict:
    return {"model": args.model, "sites": args.sites, "grid": args.grid,
            "data": args.data, "intervals": args.intervals, "scale": args.scale,
            "tol": args.tol, "seed": args.seed}


def cmd_reconstruct(args) -> int:
    model = hierfit.load_model(args.model)
    ds = _load(args.data, args.no_header)
    recon = hierfit.reconstruct(model, ds.sites)
    names = _axis_names(model.d)
    _write_rows(args.out, names + ["value", "reconstruction", "residual"],
                [tuple(s) + (v, r, v - r)
                 for s, v, r in zip(ds.sites, ds.values, recon)])
    inf_err = float(np.max(np.abs(ds.values - recon)))
    _write_sidecar(args.out, "reconstruct",
                   {"model": args.model, "data": args.data},
                   {"points": ds.n, "residual_inf_norm": inf_err})
    return 0


def cmd_diagnose(args) -> int:
    ds = normalize(_load(args.data, args.no_header))
    model, trace = hierfit.fit(ds, args.tol, **_fit_kwargs(args))
    report = diagnostics.bound_report(ds, trace, delta=args.delta)
    _write_rows(f"{args.out}_bounds.csv",
                ["scale", "epsilon", "rank", "residual_2norm", "rkhs_inner_abs",
                 "rkhs_bound", "alpha", "rho", "rank_upper_bound"],
                [(r.scale, r.epsilon, r.rank, r.residual_2norm,
                  report.rkhs_inner_abs[i], report.rkhs_bound[i],
                  report.alpha[i], report.rho[i], report.rank_upper_bound[i])
                 for i, r in enumerate(trace.records)])

    scale = args.scale if args.scale is not None else trace.terminal.scale
    recs = [r for r in trace.records if r.scale == scale]
    if not recs:
        raise ValueError(f"scale {scale} not in trace (0..{trace.terminal.scale})")
    sf = hierfit.rebuild_scale(ds, recs[0], model.base, model.decay)
    raw_sites = ds.sites * ds.normalization.axis_scales
    lo, hi = raw_sites.min(axis=0), raw_sites.max(axis=0)
    if ds.d == 1:
        sweep = np.linspace(lo[0], hi[0], args.power_points)[:, None]
    else:
        rng = np.random.default_rng(args.seed)
        sweep = lo + rng.uniform(0, 1, size=(args.power_points, ds.d)) * (hi - lo)
    power = diagnostics.power_bound(sf, sweep / ds.normalization.axis_scales)
    names = _axis_names(ds.d)
    _write_rows(f"{args.out}_power.csv",
                names + ["m_dot_r", "power_sq", "psi_value"],
                [tuple(s) + (power.m_dot_r[i], power.power_sq[i], power.psi_value[i])
                 for i, s in enumerate(sweep)])

    stab_rows = []
    for rec in trace.records:
        sd = diagnostics.stability_diag(
            hierfit.rebuild_scale(ds, rec, model.base, model.decay))
        stab_rows.append((rec.scale, sd.lower_bound, sd.upper_bound))
    _write_rows(f"{args.out}_stability.csv",
                ["scale", "sigma_lower_bound", "sum_sqrt_diag_upper_bound"],
                stab_rows)
    _write_sidecar(args.out, "diagnose",
                   {"data": args.data, **_fit_config(args), "scale": args.scale,
                    "power_points": args.power_points},
                   {"status": trace.status.value, "scales": len(trace.records),
                    "power_scale": scale})
    return 0


def cmd_importance(args) -> int:
    ds = normalize(_load(args.data, args.no_header))
    report = diagnostics.importance(ds, args.scale, args.runs, args.seed,
                                    decay=args.p_factor, base=args.t_override,
                                    delta=args.delta, oversample=args.oversample)
    raw_sites = ds.sites * ds.normalization.axis_scales
    names = _axis_names(ds.d)
    _write_rows(f"{args.out}_ranking.csv", ["rank", "site_index"] + names,
                [(i + 1, int(idx)) + tuple(raw_sites[idx])
                 for i, idx in enumerate(report.ranking)])
    _write_rows(f"{args.out}_histogram.csv",
                ["site_index"] + names + ["rank1_count", "rank2_count", "rank3_count"],
                [(i,) + tuple(raw_sites[i]) + tuple(report.top3_counts[i])
                 for i in range(ds.n)])
    _write_sidecar(args.out, "importance",
                   {"data": args.data, "scale": args.scale, "runs": args.runs,
                    "seed": args.seed, "p_factor": args.p_factor,
                    "t_override": args.t_override, "delta": args.delta,
                    "oversample": args.oversample},
                   {"runs": report.n_runs})
    return 0


def cmd_compare(args) -> int:
    ds = normalize(_load(args.data, args.no_header))
    rep = baseline.compare(ds, args.tol, query_count=args.queries,
                           **_fit_kwargs(args))
    _write_rows(args.out,
                ["scale", "err_hier", "err_cascade", "sites_hier",
                 "sites_cascade_cumulative", "kevals_hier", "kevals_cascade"],
                zip(rep.scale, rep.err_hier, rep.err_cascade, rep.sites_hier,
                    rep.sites_cascade_cumulative, rep.kevals_hier,
                    rep.kevals_cascade))
    print(f"hierarchical: {rep.hier_status.value}, "
          f"predict {rep.query_count} pts in {rep.hier_predict_seconds:.4f}s; "
          f"cascade: {rep.cascade_status.value}, "
          f"predict in {rep.cascade_predict_seconds:.4f}s")
    _write_sidecar(args.out, "compare",
                   {"data": args.data, **_fit_config(args), "queries": args.queries},
                   {"hier_status": rep.hier_status.value,
                    "cascade_status": rep.cascade_status.value,
                    "kevals_hier": int(rep.kevals_hier[-1]),
                    "kevals_cascade": int(rep.kevals_cascade[-1])})
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiersparse",
        description="Scale-hierarchical sparse representations of scattered data")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen", help="sample a built-in test function to CSV")
    sp.add_argument("function", help="TF1, TF2, TF3 or TF4")
    group = sp.add_mutually_exclusive_group()
    group.add_argument("--equidistant", type=int, help="1-D equidistant point count")
    group.add_argument("--grid", type=int, help="2-D grid nodes per axis")
    group.add_argument("--random", type=int, help="uniform-random point count")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("fit", help="fit a sparse representation")
    sp.add_argument("data", help="training CSV (site columns then value)")
    _add_fit_flags(sp)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--out", required=True, help="model JSON path")
    sp.add_argument("--trace", default=None, help="per-scale trace CSV path")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("predict", help="predict at new sites from a model")
    sp.add_argument("model", help="model JSON from fit")
    sp.add_argument("--sites", default=None, help="query sites CSV")
    sp.add_argument("--grid", type=float, default=None,
                    help="grid cell size over the data bounding box")
    sp.add_argument("--intervals", type=_unit_interval, default=None,
                    metavar="ALPHA", help="emit t-bands at level 1-ALPHA")
    sp.add_argument("--data", default=None,
                    help="training CSV (bounding box for --grid; fit rebuild "
                         "for --intervals)")
    sp.add_argument("--scale", type=int, default=None,
                    help="interval scale override (default: terminal)")
    sp.add_argument("--tol", type=_nonneg, default=1e-2)
    _add_fit_flags_predict(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("reconstruct", help="reconstruct a dataset from a model")
    sp.add_argument("model")
    sp.add_argument("data", help="dataset CSV with values")
    sp.add_argument("--no-header", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("diagnose", help="bound, power and stability tables")
    sp.add_argument("data")
    _add_fit_flags(sp)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--scale", type=int, default=None,
                    help="power-sweep scale (default: terminal)")
    sp.add_argument("--power-points", type=int, default=200)
    sp.add_argument("--out", required=True, help="output path prefix")
    sp.set_defaults(func=cmd_diagnose)

    sp = sub.add_parser("importance", help="pivot-order importance ranking")
    sp.add_argument("data")
    sp.add_argument("--scale", type=int, required=True)
    sp.add_argument("--runs", type=int, default=1)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--p-factor", type=float, default=2.0)
    sp.add_argument("--t-override", type=float, default=None)
    sp.add_argument("--delta", type=float, default=1e-10)
    sp.add_argument("--oversample", type=int, default=8)
    sp.add_argument("--no-header", action="store_true")
    sp.add_argument("--out", required=True, help="output path prefix")
    sp.set_defaults(func=cmd_importance)

    sp = sub.add_parser("compare", help="hierarchical vs residual-cascade ledger")
    sp.add_argument("data")
    _add_fit_flags(sp)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--queries", type=int, default=1000)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_compare)

    return parser


def _add_fit_flags_predict(sp):
    sp.add_argument("--p-factor", type=float, default=2.0)
    sp.add_argument("--t-override", type=float, default=None)
    sp.add_argument("--delta", type=float, default=1e-10)
    sp.add_argument("--oversample", type=int, default=8)
    sp.add_argument("--max-scale", type=int, default=25)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--no-header", action="store_true")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
