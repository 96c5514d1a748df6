"""Shared domain types, design constraints, normalization and file formats.

Design vectors are plain float arrays. In the reference layout every interface
mode contributes five parameters, normal mode first, then shear::

    sigma_y, d_sigma_1, delta_y, d_delta_1, d_delta_2

Stresses are in MPa, separations in mm, strain is dimensionless.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateStats, InvalidDimension, InvalidInput

PARAMS_PER_MODE = 5
DEFAULT_DIM = 10
PARAM_NAMES = (
    "sigma_n_y", "dsigma_n_1", "delta_n_y", "ddelta_n_1", "ddelta_n_2",
    "sigma_s_y", "dsigma_s_1", "delta_s_y", "ddelta_s_1", "ddelta_s_2",
)

# offsets inside one mode block
SIG_Y, DSIG_1, DEL_Y, DDEL_1, DDEL_2 = range(PARAMS_PER_MODE)


def _as_vector(values, name="values") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InvalidDimension(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ResponseCurve:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = _as_vector(self.grid, "grid")
        values = _as_vector(self.values, "values")
        if grid.shape != values.shape:
            raise InvalidDimension("grid and values lengths differ")
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise InvalidInput("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class TargetSpec:
    """Target curve with per-point tolerances.

    ``tolerance`` entries may be ``inf`` to drop the constraint at that point.
    Masked points (``mask[u]`` true) are excluded from every judgment.
    """

    target: ResponseCurve
    tolerance: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        tol = _as_vector(self.tolerance, "tolerance")
        if tol.size != len(self.target):
            raise InvalidDimension("tolerance length must match target length")
        if np.any(np.isnan(tol)) or np.any(tol < 0):
            raise InvalidInput("tolerance entries must be nonnegative")
        object.__setattr__(self, "tolerance", tol)
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != tol.shape:
                raise InvalidDimension("mask length must match target length")
            object.__setattr__(self, "mask", mask)

    @property
    def values(self) -> np.ndarray:
        return self.target.values

    @property
    def grid(self) -> np.ndarray:
        return self.target.grid

    def effective_tolerance(self) -> np.ndarray:
        """Tolerance with masked points widened to infinity."""
        tol = self.tolerance.copy()
        if self.mask is not None:
            tol[self.mask] = np.inf
        return tol

    def is_well_posed(self) -> bool:
        return bool(np.any(np.isfinite(self.effective_tolerance())))

    def with_tolerance(self, tolerance) -> "TargetSpec":
        return TargetSpec(self.target, np.asarray(tolerance, dtype=float), self.mask)


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = _as_vector(self.mean, "mean")
        std = _as_vector(self.std, "std")
        if mean.shape != std.shape:
            raise InvalidDimension("mean and std lengths differ")
        if not np.all(std > 0):
            raise DegenerateStats("standard deviations must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def from_data(cls, data) -> "NormStats":
        data = np.asarray(data, dtype=float)
        return cls(data.mean(axis=0), data.std(axis=0))

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["mean"]), np.asarray(d["std"]))


@dataclass(frozen=True)
class Dataset:
    designs: np.ndarray
    responses: np.ndarray
    grid: np.ndarray
    norm: NormStats = field(default=None)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.designs, dtype=float))
        Y = np.atleast_2d(np.asarray(self.responses, dtype=float))
        grid = _as_vector(self.grid, "grid")
        if X.shape[0] != Y.shape[0]:
            raise InvalidDimension("designs and responses have different row counts")
        if Y.shape[1] != grid.size:
            raise InvalidDimension("response width must match the grid")
        if not np.all(check_constraints_batch(X)):
            raise InvalidInput("dataset contains designs violating the constraints")
        object.__setattr__(self, "designs", X)
        object.__setattr__(self, "responses", Y)
        object.__setattr__(self, "grid", grid)
        if self.norm is None and X.shape[0] > 1:
            # constant columns leave the stats undefined; callers that need them will raise
            try:
                object.__setattr__(self, "norm", NormStats.from_data(X))
            except DegenerateStats:
                pass

    def __len__(self):
        return self.designs.shape[0]

    @property
    def d(self) -> int:
        return self.designs.shape[1]

    @property
    def k(self) -> int:
        return self.grid.size

    def subset(self, idx) -> "Dataset":
        """Row subset that keeps the parent's normalization statistics."""
        idx = np.asarray(idx)
        return Dataset(self.designs[idx], self.responses[idx], self.grid, self.norm)

    def split(self, fraction: float = 0.5) -> tuple["Dataset", "Dataset"]:
        n = int(round(len(self) * fraction))
        return self.subset(np.arange(n)), self.subset(np.arange(n, len(self)))


# ---------------------------------------------------------------------------
# constraints


def _n_modes(d: int) -> int:
    if d % PARAMS_PER_MODE or d == 0:
        raise InvalidDimension(f"design length {d} is not a multiple of {PARAMS_PER_MODE}")
    return d // PARAMS_PER_MODE


def check_constraints_batch(X) -> np.ndarray:
    """Vectorized constraint check over the rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    modes = _n_modes(X.shape[1])
    ok = np.all(X >= 0, axis=1) & np.all(np.isfinite(X), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        for m in range(modes):
            blk = X[:, m * PARAMS_PER_MODE:(m + 1) * PARAMS_PER_MODE]
            elastic = blk[:, SIG_Y] / blk[:, DEL_Y]
            hardening = blk[:, DSIG_1] / blk[:, DDEL_1]
            # zero separations leave a slope undefined
            defined = (blk[:, DEL_Y] > 0) & (blk[:, DDEL_1] > 0)
            ok &= defined & (hardening < elastic)
    return ok


def check_design_constraints(x, d: int = DEFAULT_DIM) -> bool:
    """True iff ``x`` is nonnegative and every mode hardens below its elastic slope."""
    x = _as_vector(x, "design")
    if x.size != d:
        raise InvalidDimension(f"expected {d} design parameters, got {x.size}")
    return bool(check_constraints_batch(x[None, :])[0])


# ---------------------------------------------------------------------------
# normalization


def _check_stats(features: np.ndarray, stats: NormStats):
    if features.shape[-1] != stats.mean.size:
        raise InvalidDimension("feature length does not match the statistics")
    if not np.all(stats.std > 0):
        raise DegenerateStats("standard deviations must be strictly positive")


def zscore_normalize(features, stats: NormStats) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    _check_stats(features, stats)
    return (features - stats.mean) / stats.std


def denormalize(features, stats: NormStats) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    _check_stats(features, stats)
    return features * stats.std + stats.mean


def tolerance_bounds(target: TargetSpec, mu) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper integration limits of the centered deviation.

    Infinite tolerances give infinite limits.
    """
    mu = _as_vector(mu, "mu")
    if mu.size != len(target.target):
        raise InvalidDimension("mean length does not match the target")
    resid = target.values - mu
    tol = target.tolerance
    return resid - tol, resid + tol


# ---------------------------------------------------------------------------
# file formats


def _tol_to_json(values: Sequence[float]):
    return ["inf" if math.isinf(v) else float(v) for v in values]


def _tol_from_json(values):
    out = []
    for v in values:
        if isinstance(v, str):
            if v.strip().lower() not in ("inf", "+inf", "infinity"):
                raise InvalidInput(f"unrecognized tolerance literal {v!r}")
            out.append(math.inf)
        else:
            out.append(float(v))
    return np.asarray(out)


def target_to_dict(target: TargetSpec) -> dict:
    d = {
        "grid": target.grid.tolist(),
        "target": target.values.tolist(),
        "tolerance": _tol_to_json(target.tolerance),
    }
    if target.mask is not None:
        d["mask"] = target.mask.tolist()
    return d


def target_from_dict(d: dict) -> TargetSpec:
    try:
        curve = ResponseCurve(np.asarray(d["grid"], float), np.asarray(d["target"], float))
        tol = _tol_from_json(d["tolerance"])
    except KeyError as exc:
        raise InvalidInput(f"target file is missing field {exc}") from None
    mask = d.get("mask")
    return TargetSpec(curve, tol, None if mask is None else np.asarray(mask, bool))


def save_target(target: TargetSpec, path) -> None:
    Path(path).write_text(json.dumps(target_to_dict(target), indent=1))


def load_target(path) -> TargetSpec:
    return target_from_dict(json.loads(Path(path).read_text()))


def manifest_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".manifest.json")


def save_dataset(ds: Dataset, path, extra: Optional[dict] = None) -> None:
    """Write ``ds`` as CSV plus a sidecar JSON manifest describing the grid."""
    path = Path(path)
    header = [f"x_{i + 1}" for i in range(ds.d)] + [f"y_{u + 1}" for u in range(ds.k)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for x, y in zip(ds.designs, ds.responses):
            w.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in y])
    manifest = {
        "k": ds.k,
        "grid_min": float(ds.grid[0]),
        "grid_max": float(ds.grid[-1]),
        "d": ds.d,
    }
    if extra:
        manifest.update(extra)
    manifest_path(path).write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_dataset(path, norm: Optional[NormStats] = None) -> Dataset:
    path = Path(path)
    manifest = json.loads(manifest_path(path).read_text())
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in row] for row in reader])
    d = sum(1 for h in header if h.startswith("x_"))
    k = int(manifest["k"])
    if rows.size == 0:
        raise InvalidInput(f"{path} has no data rows")
    if rows.shape[1] != d + k:
        raise InvalidDimension(f"{path} has {rows.shape[1]} columns, expected {d + k}")
    grid = np.linspace(manifest["grid_min"], manifest["grid_max"], k)
    return Dataset(rows[:, :d], rows[:, d:], grid, norm)
