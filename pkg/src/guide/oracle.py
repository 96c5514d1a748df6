"""Analytic stand-in for the finite-element simulator.

The composite response is a trilinear stress-strain curve built from a blend
of the normal and shear interface laws: an elastic rise to the yield point, a
hardening branch, then linear softening to zero stress.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    DDEL_1, DDEL_2, DEFAULT_DIM, DEL_Y, DSIG_1, PARAMS_PER_MODE, SIG_Y,
    Dataset, ResponseCurve, TargetSpec, check_constraints_batch,
)
from .errors import InfeasibleDesign, InvalidDimension, InvalidInput, RangesInfeasible

REJECTION_WINDOW = 10_000


def default_grid(k: int = 100, smax: float = 0.04) -> np.ndarray:
    return np.linspace(0.0, smax, k)


@dataclass(frozen=True)
class OracleConfig:
    blend_normal: float = 0.7
    geom_scale: float = 1.0
    grid: np.ndarray = field(default_factory=default_grid)

    def __post_init__(self):
        if not 0.0 <= self.blend_normal <= 1.0:
            raise InvalidInput("blend_normal must lie in [0, 1]")
        if not self.geom_scale > 0:
            raise InvalidInput("geom_scale must be positive")
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))

    def to_dict(self) -> dict:
        g = self.grid
        return {"blend_normal": self.blend_normal, "geom_scale": self.geom_scale,
                "k": int(g.size), "grid_min": float(g[0]), "grid_max": float(g[-1])}

    @classmethod
    def from_dict(cls, d: dict) -> "OracleConfig":
        grid = default_grid(int(d.get("k", 100)), float(d.get("grid_max", 0.04)))
        if "grid_min" in d:
            grid = np.linspace(float(d["grid_min"]), float(d.get("grid_max", 0.04)),
                               int(d.get("k", 100)))
        return cls(float(d.get("blend_normal", 0.7)), float(d.get("geom_scale", 1.0)), grid)


_MODE_LOW = np.array([50.0, 5.0, 5e-4, 5e-4, 5e-4])
_MODE_HIGH = np.array([400.0, 200.0, 5e-3, 1e-2, 2e-2])


@dataclass(frozen=True)
class ParameterRanges:
    low: np.ndarray = field(default_factory=lambda: np.tile(_MODE_LOW, 2))
    high: np.ndarray = field(default_factory=lambda: np.tile(_MODE_HIGH, 2))

    def __post_init__(self):
        low = np.asarray(self.low, dtype=float)
        high = np.asarray(self.high, dtype=float)
        if low.shape != high.shape or low.ndim != 1:
            raise InvalidDimension("low and high must be vectors of equal length")
        if np.any(low < 0) or np.any(low >= high):
            raise InvalidInput("ranges require 0 <= low < high")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def d(self) -> int:
        return self.low.size

    def to_dict(self) -> dict:
        return {"low": self.low.tolist(), "high": self.high.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterRanges":
        return cls(np.asarray(d["low"]), np.asarray(d["high"]))


def blended_law(X, blend_normal: float) -> np.ndarray:
    """Mix the normal and shear blocks of each row into one five-parameter law."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != 2 * PARAMS_PER_MODE:
        raise InvalidDimension("the oracle needs a normal and a shear block")
    normal, shear = X[:, :PARAMS_PER_MODE], X[:, PARAMS_PER_MODE:]
    return blend_normal * normal + (1.0 - blend_normal) * shear


def toy_response_batch(X, cfg: OracleConfig) -> np.ndarray:
    """Responses for every row of ``X``; rows must satisfy the constraints."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.all(check_constraints_batch(X)):
        raise InfeasibleDesign("design violates the physical constraints")
    law = blended_law(X, cfg.blend_normal)
    g = cfg.geom_scale
    p1 = law[:, SIG_Y, None]
    p2 = p1 + law[:, DSIG_1, None]
    s1 = g * law[:, DEL_Y, None]
    s2 = s1 + g * law[:, DDEL_1, None]
    s3 = s2 + g * law[:, DDEL_2, None]
    s = cfg.grid[None, :]

    with np.errstate(divide="ignore", invalid="ignore"):
        rise = p1 * (s / s1)
        harden = p1 + (p2 - p1) * ((s - s1) / (s2 - s1))
        soften = p2 * ((s3 - s) / (s3 - s2))
    out = np.where(s <= s1, rise,
                   np.where(s <= s2, harden,
                            np.where(s < s3, soften, 0.0)))
    return out


def toy_response(x, cfg: OracleConfig | None = None) -> ResponseCurve:
    cfg = cfg or OracleConfig()
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != DEFAULT_DIM:
        raise InvalidDimension(f"expected a {DEFAULT_DIM}-vector")
    return ResponseCurve(cfg.grid, toy_response_batch(x[None, :], cfg)[0])


def sample_designs(n: int, ranges: ParameterRanges, seed: int) -> tuple[np.ndarray, int]:
    """Uniform rejection sampling of ``n`` constrained designs.

    Row ``i`` draws from its own stream seeded by ``(seed, i)``, so a dataset
    is reproducible and any prefix of it is independent of ``n``. Returns the
    designs and the total number of draws made.
    """
    if n < 1:
        raise InvalidInput("n must be at least 1")
    X = np.empty((n, ranges.d))
    draws = 0
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        for attempt in range(REJECTION_WINDOW):
            x = rng.uniform(ranges.low, ranges.high)
            draws += 1
            if check_constraints_batch(x[None, :])[0]:
                X[i] = x
                break
        else:
            raise RangesInfeasible(
                f"no valid design in {REJECTION_WINDOW} draws; the ranges leave "
                "almost no room for the slope constraint")
    return X, draws


def generate_dataset(n: int, ranges: ParameterRanges | None = None,
                     cfg: OracleConfig | None = None, seed: int = 0) -> Dataset:
    ranges = ranges or ParameterRanges()
    cfg = cfg or OracleConfig()
    X, _ = sample_designs(n, ranges, seed)
    return Dataset(X, toy_response_batch(X, cfg), cfg.grid)


def feasible_batch(X, target: TargetSpec, cfg: OracleConfig | None = None) -> np.ndarray:
    cfg = cfg or OracleConfig()
    Y = toy_response_batch(X, cfg)
    tol = target.effective_tolerance()
    active = np.isfinite(tol)
    dev = np.abs(Y[:, active] - target.values[active])
    return np.all(dev <= tol[active], axis=1)


def check_feasible(x, target: TargetSpec, cfg: OracleConfig | None = None) -> bool:
    """Oracle verdict: the true response stays inside the tolerance band."""
    return bool(feasible_batch(np.asarray(x, dtype=float)[None, :], target, cfg)[0])


def peak_tolerance_target(curve, grid, fraction: float = 0.1) -> TargetSpec:
    """Target with a uniform tolerance equal to ``fraction`` of the peak stress."""
    curve = np.asarray(curve, dtype=float)
    tol = np.full(curve.size, fraction * float(np.max(np.abs(curve))))
    return TargetSpec(ResponseCurve(grid, curve), tol)
