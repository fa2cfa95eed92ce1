"""Scale-hierarchical sparse representations via Gaussian-kernel basis selection."""

from .baseline import (CascadeModel, CascadeTrace, ComparisonReport, compare,
                       fit_cascade, predict_cascade)
from .basis import BasisSelection, numerical_rank, select_basis, sketch
from .data import (Dataset, GridSpec, NormalizationInfo, bounding_box,
                   denormalize, diameter, gen_test_function, load_csv,
                   normalize, write_csv)
from .diagnostics import (BoundReport, ImportanceReport, PowerDiag,
                          StabilityDiag, alpha_rho, bound_report,
                          error_functional_weights, importance, power_bound,
                          rank_upper_bound, rkhs_bound_check, stability_diag)
from .hierfit import (FitTrace, HierModel, ScaleFit, ScaleRecord,
                      TerminalStatus, fit, fit_scale, load_model, project,
                      rebuild_scale, reconstruct, save_model)
from .kernel import KernelParams, default_base, gram
from .predict import (DegenerateDofError, IntervalBand, ScalePredictor,
                      sigma_hat, t_quantile)

__version__ = "0.1.0"

__all__ = [
    "BasisSelection", "BoundReport", "CascadeModel", "CascadeTrace",
    "ComparisonReport", "Dataset", "DegenerateDofError", "FitTrace",
    "GridSpec", "HierModel", "ImportanceReport", "IntervalBand",
    "KernelParams", "NormalizationInfo", "PowerDiag", "ScaleFit",
    "ScalePredictor", "ScaleRecord", "StabilityDiag", "TerminalStatus",
    "alpha_rho", "bound_report", "bounding_box", "compare", "default_base",
    "denormalize", "diameter", "error_functional_weights", "fit",
    "fit_cascade", "fit_scale", "gen_test_function", "gram", "importance",
    "load_csv", "load_model", "normalize", "numerical_rank", "power_bound",
    "predict_cascade", "project", "rank_upper_bound", "rebuild_scale",
    "reconstruct", "rkhs_bound_check", "save_model", "select_basis",
    "sigma_hat", "sketch", "stability_diag", "t_quantile", "write_csv",
]
