"""Probabilistic forward model.

A bootstrap ensemble of ridge regressions on random cosine features supplies a
pointwise mean and spread over the response grid. A full covariance is grafted
on top with a squared-exponential kernel in the strain coordinate, and then
conditioned with the smallest diagonal jitter that makes it safely factorable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy import linalg

from .core import Dataset, NormStats, zscore_normalize
from .errors import DegenerateStats, IllConditioned, InvalidDimension, InvalidInput, InvalidStd, TrainingFailed

FORMAT_TAG = "guide-ensemble/1"
DEFAULT_GAMMA_GRID = np.round(np.arange(1, 41) * 0.05, 10)


@dataclass(frozen=True)
class MemberConfig:
    feature_dim: int = 512
    lengthscale: float = 2.5
    ridge: float = 1e-3


@dataclass(frozen=True)
class PredictiveDistribution:
    mean: np.ndarray
    std: np.ndarray
    cov: np.ndarray
    jitter: float
    chol: Optional[np.ndarray] = field(default=None, repr=False, compare=False)


# ---------------------------------------------------------------------------
# covariance construction


def graft_covariance(sigma, grid, gamma: float) -> np.ndarray:
    """sigma_i sigma_j exp(-gamma (s_i - s_j)^2).

    ``gamma = inf`` gives the diagonal limit; ``gamma = 0`` the rank-one one.
    """
    sigma = np.asarray(sigma, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if sigma.shape != grid.shape:
        raise InvalidDimension("sigma and grid lengths differ")
    if np.any(sigma < 0) or np.any(np.isnan(sigma)):
        raise InvalidStd("standard deviations must be nonnegative")
    if gamma < 0:
        raise InvalidInput("gamma must be nonnegative")
    if np.isinf(gamma):
        return np.diag(sigma ** 2)
    diff2 = (grid[:, None] - grid[None, :]) ** 2
    kernel = np.exp(-gamma * diff2)
    return sigma[:, None] * sigma[None, :] * kernel


def fit_gamma(train_cov, sigma_bar, grid, gamma_grid=DEFAULT_GAMMA_GRID) -> float:
    """Grid value whose grafted covariance is closest in Frobenius norm.

    Ties go to the smaller gamma.
    """
    train_cov = np.asarray(train_cov, dtype=float)
    gamma_grid = np.asarray(gamma_grid, dtype=float)
    if gamma_grid.size == 0:
        raise InvalidInput("gamma grid is empty")
    best, best_err = None, np.inf
    for g in np.sort(gamma_grid):
        err = np.linalg.norm(graft_covariance(sigma_bar, grid, g) - train_cov, "fro")
        if err < best_err:
            best, best_err = float(g), err
    return best


def condition_number(cov) -> float:
    """Ratio of the extreme eigenvalues; infinite when the matrix is not PD."""
    eig = np.linalg.eigvalsh(np.asarray(cov, dtype=float))
    if eig[0] <= 0:
        return np.inf
    return float(eig[-1] / eig[0])


def jitter_ladder(cov: np.ndarray, eta0: Optional[float] = None, steps: int = 16) -> list[float]:
    if eta0 is None:
        scale = float(np.mean(np.diag(cov)))
        eta0 = 1e-12 * scale if scale > 0 else 1e-12
    return [0.0] + [eta0 * 10.0 ** i for i in range(steps)]


def condition_jitter(cov, target_condition: float = 1e8, eta0: Optional[float] = None,
                     steps: int = 16) -> tuple[np.ndarray, float]:
    """Add the smallest ladder jitter that factorizes and meets the condition target."""
    out, eta, _ = _condition_batch(np.asarray(cov, dtype=float)[None], target_condition,
                                   eta0, steps)
    return out[0], float(eta[0])


def _condition_batch(covs, target_condition=1e8, eta0=None, steps=16):
    """Vectorized jitter selection over a stack of covariances.

    Adding eta shifts every eigenvalue by eta, so one eigen-decomposition per
    matrix predicts the condition number on every rung; Cholesky then
    confirms the chosen rung and failures move one rung up.
    """
    covs = np.asarray(covs, dtype=float)
    if covs.ndim != 3 or covs.shape[1] != covs.shape[2]:
        raise InvalidDimension("covariance must be square")
    n, k, _ = covs.shape
    eig = np.linalg.eigvalsh(covs)
    lo, hi = eig[:, 0], eig[:, -1]
    out = np.empty_like(covs)
    chols = np.empty_like(covs)
    etas = np.empty(n)
    eye = np.eye(k)
    for i in range(n):
        for eta in jitter_ladder(covs[i], eta0, steps):
            if lo[i] + eta <= 0 or (hi[i] + eta) > target_condition * (lo[i] + eta):
                continue
            cand = covs[i] + eta * eye if eta else covs[i]
            try:
                chols[i] = np.linalg.cholesky(cand)
            except np.linalg.LinAlgError:
                continue
            out[i], etas[i] = cand, eta
            break
        else:
            raise IllConditioned("jitter ladder exhausted without reaching the condition target")
    return out, etas, chols


# ---------------------------------------------------------------------------
# ensemble


@dataclass(frozen=True)
class EnsembleModel:
    """Trained ensemble; weights are stacked along the leading member axis.

    ``proj`` is (T, d, D), ``phase`` (T, D), ``coef`` (T, D + d + 1, k).
    Predictions are in the original response units.
    """

    proj: np.ndarray
    phase: np.ndarray
    coef: np.ndarray
    y_center: np.ndarray
    y_scale: float
    norm: NormStats
    grid: np.ndarray
    gamma: float
    kernel_scale: float = 100.0
    sigma_floor: float = 1e-3
    target_condition: float = 1e8
    jitter_eta0: Optional[float] = None
    member_config: MemberConfig = MemberConfig()
    seed: int = 0

    @property
    def T(self) -> int:
        return self.proj.shape[0]

    @property
    def d(self) -> int:
        return self.proj.shape[1]

    @property
    def k(self) -> int:
        return self.grid.size

    @property
    def kernel_grid(self) -> np.ndarray:
        return self.grid * self.kernel_scale

    def with_gamma(self, gamma: float) -> "EnsembleModel":
        return replace(self, gamma=float(gamma))

    def member_predictions(self, X) -> np.ndarray:
        """Raw member outputs, shape (T, n, k)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise InvalidDimension(f"expected {self.d} design parameters")
        Z = zscore_normalize(X, self.norm)
        feats = _features(Z, self.proj, self.phase)
        out = np.matmul(feats, self.coef)
        return out * self.y_scale + self.y_center

    # persistence

    def save(self, path, extra: Optional[dict] = None) -> None:
        meta = {
            "format": FORMAT_TAG,
            "y_scale": self.y_scale,
            "norm": self.norm.to_dict(),
            "gamma": self.gamma,
            "kernel_scale": self.kernel_scale,
            "sigma_floor": self.sigma_floor,
            "target_condition": self.target_condition,
            "jitter_eta0": self.jitter_eta0,
            "member_config": vars(self.member_config),
            "seed": self.seed,
        }
        if extra:
            meta["extra"] = extra
        with open(path, "wb") as fh:
            np.savez(fh, proj=self.proj, phase=self.phase, coef=self.coef,
                     y_center=self.y_center, grid=self.grid,
                     meta=np.array(json.dumps(meta, sort_keys=True)))

    @classmethod
    def load(cls, path) -> "EnsembleModel":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format") != FORMAT_TAG:
                raise InvalidInput(f"{path} is not a {FORMAT_TAG} model file")
            return cls(
                proj=z["proj"], phase=z["phase"], coef=z["coef"],
                y_center=z["y_center"], y_scale=float(meta["y_scale"]),
                norm=NormStats.from_dict(meta["norm"]), grid=z["grid"],
                gamma=float(meta["gamma"]), kernel_scale=float(meta["kernel_scale"]),
                sigma_floor=float(meta["sigma_floor"]),
                target_condition=float(meta["target_condition"]),
                jitter_eta0=meta["jitter_eta0"],
                member_config=MemberConfig(**meta["member_config"]),
                seed=int(meta["seed"]),
            )


def _features(Z: np.ndarray, proj: np.ndarray, phase: np.ndarray) -> np.ndarray:
    """Cosine random features plus the raw inputs and a bias column, per member."""
    D = proj.shape[2]
    cos = np.sqrt(2.0 / D) * np.cos(np.matmul(Z, proj) + phase[:, None, :])
    T, n = proj.shape[0], Z.shape[0]
    lin = np.broadcast_to(Z, (T,) + Z.shape)
    bias = np.ones((T, n, 1))
    return np.concatenate([cos, lin, bias], axis=2)


def _solve_ridge(F: np.ndarray, Y: np.ndarray, ridge: float) -> np.ndarray:
    A = F.T @ F
    B = F.T @ Y
    for lam in (ridge, ridge * 100.0):
        try:
            c = linalg.cho_factor(A + lam * np.eye(A.shape[0]), lower=True)
        except linalg.LinAlgError:
            continue
        coef = linalg.cho_solve(c, B)
        if np.all(np.isfinite(coef)):
            return coef
    raise TrainingFailed("ridge normal equations stayed singular after raising the penalty")


def training_covariance(responses) -> np.ndarray:
    return np.atleast_2d(np.cov(np.asarray(responses, dtype=float), rowvar=False, ddof=1))


def train(dataset: Dataset, T: int = 30, member_config: MemberConfig = MemberConfig(),
          seed: int = 0, gamma: Union[str, float] = "fit", sigma_floor: float = 1e-3,
          kernel_scale: float = 100.0, gamma_grid=DEFAULT_GAMMA_GRID,
          target_condition: float = 1e8) -> EnsembleModel:
    """Fit ``T`` members, each on its own bootstrap resample and feature draw."""
    if T < 2:
        raise InvalidInput("an ensemble needs at least two members")
    if len(dataset) == 0:
        raise InvalidInput("dataset is empty")
    if dataset.norm is None:
        raise DegenerateStats("dataset has no normalization statistics (constant columns?)")
    X, Y = dataset.designs, dataset.responses
    h, d = X.shape
    D = member_config.feature_dim
    Z = zscore_normalize(X, dataset.norm)
    y_center = Y.mean(axis=0)
    y_scale = float(Y.std())
    if not y_scale > 0:
        y_scale = 1.0
    Yn = (Y - y_center) / y_scale

    proj = np.empty((T, d, D))
    phase = np.empty((T, D))
    coef = np.empty((T, D + d + 1, Y.shape[1]))
    for t in range(T):
        rng = np.random.default_rng([seed, t])
        idx = rng.integers(0, h, size=h)
        proj[t] = rng.normal(0.0, 1.0 / member_config.lengthscale, size=(d, D))
        phase[t] = rng.uniform(0.0, 2.0 * np.pi, size=D)
        F = _features(Z[idx], proj[t:t + 1], phase[t:t + 1])[0]
        coef[t] = _solve_ridge(F, Yn[idx], member_config.ridge)

    if gamma == "fit":
        train_cov = training_covariance(Y)
        sigma_bar = np.sqrt(np.clip(np.diag(train_cov), 0.0, None))
        gamma_val = fit_gamma(train_cov, sigma_bar, dataset.grid * kernel_scale, gamma_grid)
    else:
        gamma_val = float(gamma)
    return EnsembleModel(proj, phase, coef, y_center, y_scale, dataset.norm,
                         dataset.grid.copy(), gamma_val, kernel_scale, sigma_floor,
                         target_condition, None, member_config, seed)


def predict_mean_std_batch(model: EnsembleModel, X) -> tuple[np.ndarray, np.ndarray]:
    preds = model.member_predictions(X)
    mu = preds.mean(axis=0)
    sigma = np.maximum(preds.std(axis=0), model.sigma_floor)
    return mu, sigma


def predict_mean_std(model: EnsembleModel, x) -> tuple[np.ndarray, np.ndarray]:
    mu, sigma = predict_mean_std_batch(model, np.asarray(x, dtype=float)[None, :])
    return mu[0], sigma[0]


def distributions_from_moments(model: EnsembleModel, mu, sigma) -> list[PredictiveDistribution]:
    """Grafted, conditioned distributions for stacked (n, k) moments."""
    mu = np.atleast_2d(mu)
    sigma = np.atleast_2d(sigma)
    if np.any(sigma < 0):
        raise InvalidStd("standard deviations must be nonnegative")
    kern = graft_covariance(np.ones(model.k), model.kernel_grid, model.gamma)
    covs = sigma[:, :, None] * sigma[:, None, :] * kern
    covs, etas, chols = _condition_batch(covs, model.target_condition, model.jitter_eta0)
    return [PredictiveDistribution(mu[i], sigma[i], covs[i], float(etas[i]), chols[i])
            for i in range(mu.shape[0])]


def distribution_from_moments(model: EnsembleModel, mu, sigma) -> PredictiveDistribution:
    return distributions_from_moments(model, mu, sigma)[0]


def predict_distribution(model: EnsembleModel, x) -> PredictiveDistribution:
    mu, sigma = predict_mean_std(model, x)
    return distribution_from_moments(model, mu, sigma)


def validation_rmse(model: EnsembleModel, dataset: Dataset) -> float:
    mu, _ = predict_mean_std_batch(model, dataset.designs)
    return float(np.sqrt(np.mean((mu - dataset.responses) ** 2)))
