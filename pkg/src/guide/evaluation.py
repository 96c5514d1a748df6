"""GA baseline and the metrics used to compare design sets."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist, pdist

from .core import PARAMS_PER_MODE, NormStats, TargetSpec, check_constraints_batch
from .errors import InvalidInput, InvalidK, InvalidSubsetSize
from .initsearch import _active, _uniform_valid, search_bounds
from .oracle import OracleConfig, feasible_batch
from .surrogate import predict_mean_std_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaConfig:
    population: int = 100
    generations: int = 100
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    mutation_scale: float = 0.1
    elitism: int = 2
    alpha: float = 4.0

    def __post_init__(self):
        if self.population < 2:
            raise InvalidInput("population must be at least 2")
        if not (0 <= self.crossover_rate <= 1 and 0 <= self.mutation_rate <= 1):
            raise InvalidInput("rates must lie in [0, 1]")
        if self.generations < 0 or not 0 <= self.elitism <= self.population:
            raise InvalidInput("bad generations or elitism")
        if self.mutation_scale < 0:
            raise InvalidInput("mutation_scale must be nonnegative")


@dataclass
class GaResult:
    designs: np.ndarray
    fitness: np.ndarray
    best_history: list = field(default_factory=list)


def ga_fitness(model, target: TargetSpec, X) -> np.ndarray:
    """Mean squared error of the surrogate mean against the target, finite-tolerance points only."""
    idx, _ = _active(target)
    mu, _ = predict_mean_std_batch(model, X)
    return np.mean((mu[:, idx] - target.values[idx]) ** 2, axis=1)


def _repair(rng, pop, low, high, max_tries=100):
    """Redraw the genes of offending modes until each row is valid."""
    bad = ~check_constraints_batch(pop)
    for _ in range(max_tries):
        if not np.any(bad):
            return pop
        for i in np.nonzero(bad)[0]:
            for m in range(pop.shape[1] // PARAMS_PER_MODE):
                sl = slice(m * PARAMS_PER_MODE, (m + 1) * PARAMS_PER_MODE)
                if not check_constraints_batch(pop[i, sl][None, :])[0]:
                    pop[i, sl] = rng.uniform(low[sl], high[sl])
        bad = ~check_constraints_batch(pop)
    if np.any(bad):
        pop[bad] = _uniform_valid(rng, low, high, int(bad.sum()))
    return pop


def ga_run(model, target: TargetSpec, stats: NormStats, cfg: GaConfig = GaConfig(),
           seed: int = 0, init_population=None) -> GaResult:
    """Generational GA; returns the final population sorted by fitness."""
    rng = np.random.default_rng(seed)
    low, high = search_bounds(stats, cfg.alpha)
    n, d = cfg.population, low.size
    if init_population is None:
        pop = _uniform_valid(rng, low, high, n)
    else:
        pop = np.atleast_2d(np.asarray(init_population, dtype=float)).copy()
        if pop.shape != (n, d):
            raise InvalidInput(f"init_population must be {n} x {d}")
    fit = ga_fitness(model, target, pop)
    history = [float(fit.min())]
    step = cfg.mutation_scale * stats.std

    for _ in range(cfg.generations):
        order = np.argsort(fit, kind="stable")
        elite = pop[order[:cfg.elitism]]
        n_child = n - cfg.elitism
        # binary tournaments
        a = rng.integers(0, n, size=(n_child, 2))
        b = rng.integers(0, n, size=(n_child, 2))
        pa = np.where(fit[a[:, 0]] <= fit[a[:, 1]], a[:, 0], a[:, 1])
        pb = np.where(fit[b[:, 0]] <= fit[b[:, 1]], b[:, 0], b[:, 1])
        mix = rng.random((n_child, d)) < 0.5
        cross = (rng.random(n_child) < cfg.crossover_rate)[:, None]
        kids = np.where(cross & mix, pop[pb], pop[pa])
        mutate = rng.random((n_child, d)) < cfg.mutation_rate
        kids = kids + mutate * rng.standard_normal((n_child, d)) * step
        kids = _repair(rng, np.clip(kids, low, high), low, high)
        pop = np.vstack([elite, kids])
        fit = np.concatenate([fit[order[:cfg.elitism]], ga_fitness(model, target, kids)])
        history.append(float(fit.min()))

    order = np.argsort(fit, kind="stable")
    return GaResult(pop[order], fit[order], history)


def ga_design(model, target: TargetSpec, stats: NormStats, cfg: GaConfig = GaConfig(),
              n_out: int = 50, seed: int = 0) -> np.ndarray:
    """The ``n_out`` fittest unique individuals of a GA run."""
    res = ga_run(model, target, stats, cfg, seed)
    _, first = np.unique(res.designs, axis=0, return_index=True)
    return res.designs[np.sort(first)][:n_out]


def feasibility_rate(designs, target: TargetSpec, oracle_cfg: Optional[OracleConfig] = None) -> float:
    X = np.atleast_2d(np.asarray(designs, dtype=float))
    if X.shape[0] == 0:
        raise InvalidInput("no designs to evaluate")
    return float(np.mean(feasible_batch(X, target, oracle_cfg)))


def _check_finite(X, name):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size == 0 or not np.all(np.isfinite(X)):
        raise InvalidInput(f"{name} must be a nonempty finite matrix")
    return X


def median_bandwidth(Z) -> float:
    """Median pairwise distance; 1.0 when every point coincides."""
    Z = _check_finite(Z, "designs")
    if Z.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(Z)))
    return med if med > 0 else 1.0


def vendi_from_kernel(K) -> float:
    K = np.asarray(K, dtype=float)
    lam = np.linalg.eigvalsh(K / K.shape[0])
    lam = lam[lam > 0]
    return float(np.exp(-np.sum(lam * np.log(lam))))


def vendi_score(designs, bandwidth: Optional[float] = None) -> float:
    """Exponentiated eigenvalue entropy of the normalized RBF similarity matrix.

    Designs are expected to be standardized already.
    """
    Z = _check_finite(designs, "designs")
    h = median_bandwidth(Z) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise InvalidInput("bandwidth must be positive")
    K = np.exp(-cdist(Z, Z, "sqeuclidean") / (2.0 * h * h))
    return float(np.clip(vendi_from_kernel(K), 1.0, Z.shape[0]))


def knn_novelty(designs, train_designs, k: int = 5) -> float:
    """Mean distance from each design to its ``k`` nearest training rows."""
    if k < 1:
        raise InvalidK("k must be positive")
    Z = _check_finite(designs, "designs")
    T = _check_finite(train_designs, "train_designs")
    if k > T.shape[0]:
        raise InvalidK("k exceeds the number of training rows")
    dist, _ = cKDTree(T).query(Z, k=k)
    return float(np.mean(np.reshape(dist, (Z.shape[0], k))))


def binned_correlation(records, n_bins: int = 20, min_per_bin: int = 20) -> Optional[float]:
    """Pearson r between bin-center likelihood and per-bin feasible fraction.

    Bins split [0, 1] evenly and are closed on the right. Returns None when
    fewer than three bins keep enough records or a side has no variance.
    """
    recs = np.asarray([(float(l), float(bool(f))) for l, f in records]).reshape(-1, 2)
    if recs.shape[0] == 0:
        raise InvalidInput("no records")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    # right-closed: (e_{i-1}, e_i], with 0 in the first bin
    which = np.clip(np.searchsorted(edges, recs[:, 0], side="left") - 1, 0, n_bins - 1)
    centers, fracs = [], []
    for i in range(n_bins):
        sel = which == i
        if sel.sum() >= min_per_bin:
            centers.append(0.5 * (edges[i] + edges[i + 1]))
            fracs.append(recs[sel, 1].mean())
    if len(centers) < 3 or np.ptp(fracs) == 0:
        return None
    return float(np.corrcoef(centers, fracs)[0, 1])


def surviving_bins(records, n_bins: int = 20, min_per_bin: int = 20) -> int:
    L = np.asarray([float(r[0]) for r in records])
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    which = np.clip(np.searchsorted(edges, L, side="left") - 1, 0, n_bins - 1)
    return int(np.sum(np.bincount(which, minlength=n_bins) >= min_per_bin))


def maxmin_subset(designs, m: int, seed: int = 0) -> list[int]:
    """Greedy farthest-point selection starting from a random index."""
    X = np.atleast_2d(np.asarray(designs, dtype=float))
    n = X.shape[0]
    if m > n or m < 0:
        raise InvalidSubsetSize(f"cannot pick {m} of {n}")
    if m == 0:
        return []
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    gap = np.linalg.norm(X - X[chosen[0]], axis=1)
    while len(chosen) < m:
        gap[chosen] = -1.0
        nxt = int(np.argmax(gap))
        chosen.append(nxt)
        gap = np.minimum(gap, np.linalg.norm(X - X[nxt], axis=1))
    return chosen


@dataclass
class MetricsReport:
    feasibility_rate: float
    vendi: float
    knn_novelty: float
    pearson_r: Optional[float] = None
    n_designs: int = 0

    def __post_init__(self):
        if not 0 <= self.feasibility_rate <= 1:
            raise InvalidInput("feasibility_rate outside [0, 1]")
        if self.vendi < 1 - 1e-9 or self.knn_novelty < 0:
            raise InvalidInput("vendi must be >= 1 and knn_novelty >= 0")
        if self.pearson_r is not None and not -1 - 1e-9 <= self.pearson_r <= 1 + 1e-9:
            raise InvalidInput("pearson_r outside [-1, 1]")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def evaluate_designs(designs, target: TargetSpec, stats: NormStats, train_designs,
                     oracle_cfg: Optional[OracleConfig] = None, k: int = 5,
                     pearson_r: Optional[float] = None) -> MetricsReport:
    X = np.atleast_2d(np.asarray(designs, dtype=float))
    Z = (X - stats.mean) / stats.std
    T = (np.asarray(train_designs, dtype=float) - stats.mean) / stats.std
    return MetricsReport(feasibility_rate(X, target, oracle_cfg), vendi_score(Z),
                         knn_novelty(Z, T, k), pearson_r, X.shape[0])
