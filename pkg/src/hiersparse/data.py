"""Dataset ingestion, normalization, synthetic test functions, and geometry helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist


def format_real(x: float) -> str:
    """Format a real with 17 significant digits (exact float64 round trip)."""
    return format(float(x), ".17g")


@dataclass
class NormalizationInfo:
    """Per-axis absolute-max scale factors mapping normalized data back to raw units."""

    axis_scales: np.ndarray  # (d,) positive
    value_scale: float       # positive

    def __post_init__(self):
        self.axis_scales = np.atleast_1d(np.asarray(self.axis_scales, dtype=float))
        self.value_scale = float(self.value_scale)
        if np.any(self.axis_scales <= 0) or self.value_scale <= 0:
            raise ValueError("scale factors must be positive")

    @classmethod
    def identity(cls, d: int) -> "NormalizationInfo":
        return cls(np.ones(d), 1.0)

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.axis_scales == 1.0) and self.value_scale == 1.0)


@dataclass
class Dataset:
    """Scattered observations: sites (n, d) with one response value per site.

    ``normalization`` records the factors that map the stored (possibly
    normalized) coordinates and values back to raw units.
    """

    sites: np.ndarray
    values: np.ndarray
    normalization: NormalizationInfo = None

    def __post_init__(self):
        self.sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if self.sites.ndim != 2:
            raise ValueError("sites must be a 2-D array")
        if self.values.ndim != 1 or len(self.values) != self.sites.shape[0]:
            raise ValueError("values must be one per site")
        if self.sites.shape[0] < 1 or self.sites.shape[1] < 1:
            raise ValueError("need at least one site and one coordinate axis")
        if not np.all(np.isfinite(self.sites)) or not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite entries in dataset")
        if self.normalization is None:
            self.normalization = NormalizationInfo.identity(self.sites.shape[1])
        elif len(self.normalization.axis_scales) != self.sites.shape[1]:
            raise ValueError("normalization dimension mismatch")

    @property
    def n(self) -> int:
        return self.sites.shape[0]

    @property
    def d(self) -> int:
        return self.sites.shape[1]


@dataclass
class GridSpec:
    """Regular grid with square cells.

    Nodes enumerate in C order: the first axis varies slowest, the last
    axis fastest.  ``np.prod(counts)`` equals the node count.
    """

    origin: np.ndarray
    cell_size: float
    counts: tuple

    def __post_init__(self):
        self.origin = np.atleast_1d(np.asarray(self.origin, dtype=float))
        self.cell_size = float(self.cell_size)
        self.counts = tuple(int(c) for c in self.counts)
        if self.cell_size <= 0:
            raise ValueError("cell size must be positive")
        if any(c < 1 for c in self.counts) or len(self.counts) != len(self.origin):
            raise ValueError("counts must be positive, one per axis")

    @property
    def n(self) -> int:
        return int(np.prod(self.counts))

    def nodes(self) -> np.ndarray:
        """All grid node coordinates, shape (n, d), C order."""
        axes = [self.origin[j] + self.cell_size * np.arange(c)
                for j, c in enumerate(self.counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])


def load_csv(path, has_header: bool = False) -> Dataset:
    """Read a dataset CSV: d site columns followed by one response column.

    Raises ValueError naming the offending 1-based data-row index on
    malformed input.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    if has_header and lines:
        lines = lines[1:]
    if not lines:
        raise ValueError(f"{path}: no data rows")
    rows = []
    width = None
    for i, ln in enumerate(lines, start=1):
        fields = [f.strip() for f in ln.split(",")]
        if width is None:
            width = len(fields)
            if width < 2:
                raise ValueError(f"{path}: row 1 has {width} column(s); need at least 2")
        elif len(fields) != width:
            raise ValueError(
                f"{path}: row {i} has {len(fields)} columns, expected {width}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise ValueError(f"{path}: non-numeric field in row {i}") from None
    arr = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(arr)):
        bad = int(np.argwhere(~np.all(np.isfinite(arr), axis=1))[0, 0]) + 1
        raise ValueError(f"{path}: non-finite value in row {bad}")
    return Dataset(arr[:, :-1], arr[:, -1])


def write_csv(ds: Dataset, path, header: bool = True) -> None:
    """Write a dataset CSV (site columns then value), 17-digit reals."""
    names = _axis_names(ds.d)
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(",".join(names + ["value"]) + "\n")
        for row, v in zip(ds.sites, ds.values):
            fh.write(",".join(format_real(x) for x in row) + "," + format_real(v) + "\n")


def _axis_names(d: int) -> list:
    if d == 1:
        return ["x"]
    if d == 2:
        return ["x", "y"]
    return [f"x{j + 1}" for j in range(d)]


def normalize(ds: Dataset) -> Dataset:
    """Divide each site axis and the response by its absolute maximum.

    All-zero axes keep factor 1.  Factors compose with any normalization
    already recorded, so ``denormalize`` always recovers raw units.
    """
    axis = np.max(np.abs(ds.sites), axis=0)
    axis[axis == 0] = 1.0
    vmax = float(np.max(np.abs(ds.values))) if ds.n else 0.0
    vmax = vmax if vmax > 0 else 1.0
    info = NormalizationInfo(ds.normalization.axis_scales * axis,
                             ds.normalization.value_scale * vmax)
    return Dataset(ds.sites / axis, ds.values / vmax, info)


def denormalize(ds: Dataset) -> Dataset:
    """Map a dataset back to raw units; the result carries identity factors."""
    info = ds.normalization
    return Dataset(ds.sites * info.axis_scales, ds.values * info.value_scale)


def diameter(ds: Dataset) -> float:
    """Largest pairwise Euclidean distance (exact O(n^2) scan)."""
    if ds.n < 2:
        raise ValueError("diameter undefined for fewer than 2 sites")
    return float(pdist(ds.sites).max())


def bounding_box(ds: Dataset) -> np.ndarray:
    """Per-axis edge lengths of the axis-aligned bounding box, shape (d,)."""
    return np.max(ds.sites, axis=0) - np.min(ds.sites, axis=0)


# ---------------------------------------------------------------------------
# Synthetic test functions
# ---------------------------------------------------------------------------

def _gramacy_lee(x):
    return np.sin(10 * np.pi * x) / (2 * x) + (x - 1) ** 4


def _schwefel_1d(x):
    return 418.9829 - x * np.sin(np.sqrt(np.abs(x)))


def _dropwave(x, y):
    r2 = x ** 2 + y ** 2
    return -(1 + np.cos(12 * np.sqrt(r2))) / (0.5 * r2 + 2)


def _schwefel_2d(x, y):
    return (837.9658 - x * np.sin(np.sqrt(np.abs(x)))
            - y * np.sin(np.sqrt(np.abs(y))))


# name -> (input dim, per-axis bounds, callable, default sampling)
TEST_FUNCTIONS = {
    "TF1": (1, (0.5, 2.5), _gramacy_lee, ("equidistant", 200)),
    "TF2": (1, (-500.0, 500.0), _schwefel_1d, ("equidistant", 200)),
    "TF3": (2, (-2.0, 2.0), _dropwave, ("grid", 50)),
    "TF4": (2, (-500.0, 500.0), _schwefel_2d, ("grid", 50)),
}


def gen_test_function(name: str, equidistant: int = None, grid: int = None,
                      random: int = None, seed: int = 7) -> Dataset:
    """Sample one of the built-in test functions (unnormalized).

    Exactly one of ``equidistant`` (1-D point count), ``grid`` (nodes per
    axis, 2-D) or ``random`` (uniform point count, seeded) may be given;
    with none, the per-function default applies (200 equidistant points in
    1-D, a 50x50 grid in 2-D).
    """
    key = name.upper()
    if key not in TEST_FUNCTIONS:
        raise ValueError(f"unknown test function {name!r}; choose from "
                         + ", ".join(TEST_FUNCTIONS))
    dim, (lo, hi), fn, default = TEST_FUNCTIONS[key]
    chosen = [k for k, v in (("equidistant", equidistant), ("grid", grid),
                             ("random", random)) if v is not None]
    if len(chosen) > 1:
        raise ValueError("give at most one sampling mode")
    mode, count = (chosen[0], {"equidistant": equidistant, "grid": grid,
                               "random": random}[chosen[0]]) if chosen else default
    if count < 2:
        raise ValueError("sampling count must be at least 2")

    if mode == "equidistant":
        if dim != 1:
            raise ValueError(f"{key} is {dim}-D; equidistant sampling needs a 1-D function")
        x = np.linspace(lo, hi, count)
        sites = x[:, None]
    elif mode == "grid":
        if dim != 2:
            raise ValueError(f"{key} is {dim}-D; grid sampling needs a 2-D function")
        ax = np.linspace(lo, hi, count)
        mx, my = np.meshgrid(ax, ax, indexing="ij")
        sites = np.column_stack([mx.ravel(), my.ravel()])
    elif mode == "random":
        rng = np.random.default_rng(seed)
        sites = rng.uniform(lo, hi, size=(count, dim))
    else:  # pragma: no cover
        raise ValueError(f"unknown sampling mode {mode!r}")

    values = fn(*(sites[:, j] for j in range(dim)))
    return Dataset(sites, values)
