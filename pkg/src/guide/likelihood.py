"""Probability that the predicted response lands inside the tolerance box.

The box probability of a multivariate normal is computed with the sequential
conditioning transform: after a Cholesky factorization every coordinate's
admissible interval depends only on the coordinates before it, which maps the
integral onto the unit hypercube where plain Monte Carlo applies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .core import TargetSpec, tolerance_bounds
from .errors import IllConditioned, InvalidDimension, NotCholesky

PROB_CLIP = 1e-16
DEFAULT_N_MC = 4096


@dataclass(frozen=True)
class BoxProbabilityResult:
    p: float
    std_error: float
    n_samples: int
    underflow: bool = False


def _phinv(q):
    return ndtri(np.clip(q, PROB_CLIP, 1.0 - PROB_CLIP))


def nested_bounds(L, a, b, z_prefix) -> tuple[float, float]:
    """CDF-space limits for coordinate ``u = len(z_prefix)`` given earlier draws."""
    L = np.asarray(L, dtype=float)
    z_prefix = np.asarray(z_prefix, dtype=float)
    u = z_prefix.size
    if u >= L.shape[0]:
        raise InvalidDimension("prefix covers every coordinate")
    luu = L[u, u]
    if not luu > 0:
        raise NotCholesky(f"diagonal entry {u} of the factor is not positive")
    shift = float(L[u, :u] @ _phinv(z_prefix)) if u else 0.0
    lo, hi = a[u], b[u]
    d = 0.0 if lo == -np.inf else float(ndtr((lo - shift) / luu))
    e = 1.0 if hi == np.inf else float(ndtr((hi - shift) / luu))
    return d, e


def _interval_draw_plain(lo, hi, w):
    d, e = ndtr(lo), ndtr(hi)
    mass = np.maximum(e - d, 0.0)
    return mass, _phinv(d + w * mass)


def _interval_draw(lo, hi, w):
    """Mass of [lo, hi] under N(0, 1) and the inverse-CDF draw at fraction ``w``.

    Intervals entirely in the upper tail are handled through complements so
    that neither the mass nor the draw collapses at 1 - eps.
    """
    upper = lo > 0
    d = np.where(upper, ndtr(-lo), ndtr(lo))
    e = np.where(upper, ndtr(-hi), ndtr(hi))
    mass = np.where(upper, d - e, e - d)
    mass = np.maximum(mass, 0.0)
    q = np.where(upper, d - w * mass, d + w * mass)
    y = np.where(upper, -_phinv(q), _phinv(q))
    return mass, y


def mvn_box_probability(mu, cov, a, b, n_mc: int = DEFAULT_N_MC, seed: int = 0,
                        reorder: bool = True, tail_robust: bool = True) -> BoxProbabilityResult:
    """Monte Carlo estimate of Pr(a <= Y <= b) for Y ~ N(mu, cov).

    Bounds may be infinite. Pass ``mu = 0`` for bounds already expressed on
    the centered deviation. Deterministic for a fixed seed.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    k = cov.shape[0]
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (k,) or b.shape != (k,) or cov.shape != (k, k):
        raise InvalidDimension("bounds and covariance sizes disagree")
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (k,))
    a, b = a - mu, b - mu
    if np.any(a > b):
        return BoxProbabilityResult(0.0, 0.0, 0, False)

    active = ~(np.isneginf(a) & np.isposinf(b))
    if not np.any(active):
        return BoxProbabilityResult(1.0, 0.0, n_mc, False)

    if reorder:
        sd = np.sqrt(np.diag(cov))
        with np.errstate(invalid="ignore", divide="ignore"):
            width = np.where(active, (b - a) / sd, np.inf)
        order = np.argsort(width, kind="stable")
        cov = cov[np.ix_(order, order)]
        a, b = a[order], b[order]
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise IllConditioned("covariance is not positive definite") from None

    # unconstrained trailing coordinates contribute a factor of one
    k_eff = int(np.max(np.nonzero(~(np.isneginf(a) & np.isposinf(b)))[0])) + 1

    rng = np.random.default_rng(seed)
    W = rng.random((n_mc, k_eff))
    Yp = np.zeros((n_mc, k_eff))
    prod = np.ones(n_mc)
    for u in range(k_eff):
        shift = Yp[:, :u] @ L[u, :u] if u else 0.0
        lo = (a[u] - shift) / L[u, u]
        hi = (b[u] - shift) / L[u, u]
        mass, Yp[:, u] = (_interval_draw if tail_robust else _interval_draw_plain)(lo, hi, W[:, u])
        prod *= mass
        if not np.any(prod):
            return BoxProbabilityResult(0.0, 0.0, n_mc, True)

    p = float(prod.mean())
    se = float(prod.std(ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else 0.0
    return BoxProbabilityResult(min(max(p, 0.0), 1.0), se, n_mc, False)


def likelihood_from_distribution(pred, target: TargetSpec, n_mc: int = DEFAULT_N_MC,
                                 seed: int = 0) -> BoxProbabilityResult:
    masked = target if target.mask is None else target.with_tolerance(target.effective_tolerance())
    a, b = tolerance_bounds(masked, pred.mean)
    return mvn_box_probability(0.0, pred.cov, a, b, n_mc, seed)


def likelihood(model, x, target: TargetSpec, n_mc: int = DEFAULT_N_MC,
               seed: int = 0) -> BoxProbabilityResult:
    """Probability, under the surrogate, that design ``x`` meets the target."""
    from .surrogate import predict_distribution

    return likelihood_from_distribution(predict_distribution(model, x), target, n_mc, seed)
