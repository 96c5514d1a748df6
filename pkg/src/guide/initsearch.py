"""Particle swarm search for a first design with nonzero likelihood.

The swarm maximizes a smooth stand-in for the likelihood, which underflows to
exactly zero far from the target. After every iteration the swarm's best
design is integrated properly; the first positive value ends the search. If
the iteration budget runs out first, the target is reported as unsupported.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr

from .core import NormStats, TargetSpec, check_constraints_batch
from .errors import IllConditioned, InvalidInput
from .likelihood import DEFAULT_N_MC, likelihood_from_distribution
from .surrogate import distributions_from_moments, predict_mean_std_batch

log = logging.getLogger(__name__)

LOG_FLOOR = np.log(1e-300)


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 80
    c1: float = 1.49445
    c2: float = 1.49445
    w: float = 0.729
    alpha: float = 4.0
    max_iters: int = 300
    lam: float = 1.0
    t_stabilizer: float = 1e-3

    def __post_init__(self):
        if self.swarm_size < 2:
            raise InvalidInput("swarm_size must be at least 2")
        if min(self.w, self.c1, self.c2, self.alpha, self.t_stabilizer) <= 0:
            raise InvalidInput("w, c1, c2, alpha and t_stabilizer must be positive")
        if self.max_iters < 1:
            raise InvalidInput("max_iters must be at least 1")


@dataclass
class SupportResult:
    found: bool
    x0: Optional[np.ndarray]
    likelihood0: Optional[float]
    iterations_used: int
    best_objective: float
    history: list = field(default_factory=list, repr=False)


def mahalanobis(y_star, mu, cov) -> float:
    """Covariance-weighted distance, by triangular solve against the Cholesky factor."""
    r = np.asarray(y_star, dtype=float) - np.asarray(mu, dtype=float)
    try:
        L = np.linalg.cholesky(np.asarray(cov, dtype=float))
    except np.linalg.LinAlgError:
        raise IllConditioned("covariance is not positive definite") from None
    z = solve_triangular(L, r, lower=True)
    return float(np.sqrt(z @ z))


def _coverage_logs(r, tau):
    hi, lo = r + tau, r - tau
    # evaluate in the tail nearest to the interval for precision
    upper = lo > 0
    mass = np.where(upper, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(np.maximum(mass, 0.0)), LOG_FLOOR)


def _active(target: TargetSpec):
    tol = target.effective_tolerance()
    idx = np.nonzero(np.isfinite(tol))[0]
    if idx.size == 0:
        raise InvalidInput("target has no finite tolerance")
    return idx, tol[idx]


def objective_score(target: TargetSpec, pred, lam: float = 1.0, t: float = 1e-3) -> float:
    """Distance penalty plus weighted per-point coverage, over finite-tolerance points."""
    idx, tol = _active(target)
    k = idx.size
    dist = mahalanobis(target.values[idx], pred.mean[idx], pred.cov[np.ix_(idx, idx)])
    score = -np.log(t + dist / np.sqrt(k))
    if lam:
        sd = np.sqrt(np.diag(pred.cov)[idx])
        r = (target.values[idx] - pred.mean[idx]) / sd
        score += lam / k * float(np.sum(_coverage_logs(r, tol / sd)))
    return float(score)


def objective_scores(target: TargetSpec, preds, lam: float = 1.0, t: float = 1e-3) -> np.ndarray:
    """``objective_score`` over a list of distributions in one batched solve."""
    idx, tol = _active(target)
    k = idx.size
    mus = np.stack([p.mean[idx] for p in preds])
    covs = np.stack([p.cov[np.ix_(idx, idx)] for p in preds])
    resid = target.values[idx] - mus
    sol = np.linalg.solve(covs, resid[:, :, None])[:, :, 0]
    dist = np.sqrt(np.maximum(np.einsum("nk,nk->n", resid, sol), 0.0))
    score = -np.log(t + dist / np.sqrt(k))
    if lam:
        sd = np.sqrt(np.diagonal(covs, axis1=1, axis2=2))
        score = score + lam / k * _coverage_logs(resid / sd, tol / sd).sum(axis=1)
    return score


def search_bounds(stats: NormStats, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    return np.maximum(0.0, stats.mean - alpha * stats.std), stats.mean + alpha * stats.std


def _uniform_valid(rng, low, high, n, max_tries=10_000):
    """``n`` uniform draws in the box, each redrawn until the constraints hold."""
    out = rng.uniform(low, high, size=(n, low.size))
    bad = ~check_constraints_batch(out)
    tries = 0
    while np.any(bad):
        tries += 1
        if tries > max_tries:
            raise InvalidInput("search box holds almost no valid designs")
        out[bad] = rng.uniform(low, high, size=(int(bad.sum()), low.size))
        bad = ~check_constraints_batch(out)
    return out


class _Scorer:
    def __init__(self, model, target, cfg):
        self.model, self.target, self.cfg = model, target, cfg

    def __call__(self, X):
        mu, sigma = predict_mean_std_batch(self.model, X)
        preds = distributions_from_moments(self.model, mu, sigma)
        return objective_scores(self.target, preds, self.cfg.lam, self.cfg.t_stabilizer), preds


def pso_search(model, target: TargetSpec, dataset_stats: NormStats,
               cfg: PsoConfig = PsoConfig(), seed: int = 0, n_mc: int = DEFAULT_N_MC,
               likelihood_seed: Optional[int] = None,
               init_positions=None) -> SupportResult:
    """Constriction-factor PSO with a global-best (star) topology.

    ``init_positions`` optionally seeds the first particles; remaining ones
    are drawn uniformly inside the search box.
    """
    rng = np.random.default_rng(seed)
    lik_seed = seed if likelihood_seed is None else likelihood_seed
    low, high = search_bounds(dataset_stats, cfg.alpha)
    d, n = low.size, cfg.swarm_size
    span = high - low

    pos = _uniform_valid(rng, low, high, n)
    if init_positions is not None:
        init = np.atleast_2d(np.asarray(init_positions, dtype=float))[:n]
        pos[:len(init)] = init
    vel = 0.1 * rng.uniform(-span, span, size=(n, d))

    score_fn = _Scorer(model, target, cfg)
    scores, preds = score_fn(pos)
    pbest, pbest_score = pos.copy(), scores.copy()
    g = int(np.argmax(scores))
    gbest, gbest_score, gbest_pred = pos[g].copy(), scores[g], preds[g]
    history = []
    tested = None

    for it in range(1, cfg.max_iters + 1):
        if it > 1:
            r1 = rng.random((n, d))
            r2 = rng.random((n, d))
            vel = cfg.w * vel + cfg.c1 * r1 * (pbest - pos) + cfg.c2 * r2 * (gbest - pos)
            pos = np.clip(pos + vel, low, high)
            bad = ~check_constraints_batch(pos)
            if np.any(bad):
                pos[bad] = _uniform_valid(rng, low, high, int(bad.sum()))
            scores, preds = score_fn(pos)
            improved = scores > pbest_score
            pbest[improved] = pos[improved]
            pbest_score[improved] = scores[improved]
            g = int(np.argmax(scores))
            if scores[g] > gbest_score:
                gbest, gbest_score, gbest_pred = pos[g].copy(), scores[g], preds[g]
        history.append(float(gbest_score))

        key = gbest.tobytes()
        if key != tested:
            tested = key
            res = likelihood_from_distribution(gbest_pred, target, n_mc, lik_seed)
            if res.p > 0:
                log.info("support found at iteration %d (likelihood %.3g)", it, res.p)
                return SupportResult(True, gbest.copy(), res.p, it, float(gbest_score), history)

    log.info("no support after %d iterations; best objective %.3f", cfg.max_iters, gbest_score)
    return SupportResult(False, None, None, cfg.max_iters, float(gbest_score), history)
