"""Random-walk Metropolis over designs with constraint-aware proposals."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import NormStats, TargetSpec, check_constraints_batch
from .errors import InvalidChainState, InvalidInput, ProposalStuck
from .likelihood import DEFAULT_N_MC, likelihood


@dataclass(frozen=True)
class ChainConfig:
    prior_low: np.ndarray
    prior_high: np.ndarray
    sigma_q_init: np.ndarray
    burn_in: int = 20
    n_keep: int = 50
    psi: Optional[float] = None
    max_resample: int = 1000
    shrinkage: float = 0.5

    def __post_init__(self):
        low = np.asarray(self.prior_low, dtype=float)
        high = np.asarray(self.prior_high, dtype=float)
        sq = np.asarray(self.sigma_q_init, dtype=float)
        if not (low.shape == high.shape == sq.shape) or low.ndim != 1:
            raise InvalidInput("prior bounds and sigma_q_init must be vectors of length d")
        if np.any(low >= high):
            raise InvalidInput("prior_low must be below prior_high")
        if self.burn_in < 0 or self.n_keep < 1:
            raise InvalidInput("need burn_in >= 0 and n_keep >= 1")
        if np.any(sq <= 0):
            raise InvalidInput("sigma_q_init entries must be positive")
        if self.psi is None:
            object.__setattr__(self, "psi", 2.38 / np.sqrt(low.size))
        elif not self.psi > 0:
            raise InvalidInput("psi must be positive")
        object.__setattr__(self, "prior_low", low)
        object.__setattr__(self, "prior_high", high)
        object.__setattr__(self, "sigma_q_init", sq)

    @property
    def d(self) -> int:
        return self.prior_low.size

    @classmethod
    def from_stats(cls, stats: NormStats, prior_alpha: float = 6.0,
                   step_fraction: float = 0.05, **kw) -> "ChainConfig":
        """Uniform prior on [0, mean + prior_alpha * std]; proposal steps scaled to std."""
        return cls(np.zeros_like(stats.mean), stats.mean + prior_alpha * stats.std,
                   step_fraction * stats.std, **kw)


@dataclass(frozen=True)
class ChainRecord:
    x: np.ndarray
    likelihood: float
    accepted: bool
    iteration: int

    def to_json(self) -> str:
        return json.dumps({"x": [float(v) for v in self.x], "likelihood": float(self.likelihood),
                           "accepted": bool(self.accepted), "iteration": int(self.iteration)})

    @classmethod
    def from_json(cls, line: str) -> "ChainRecord":
        d = json.loads(line)
        return cls(np.asarray(d["x"], dtype=float), float(d["likelihood"]),
                   bool(d["accepted"]), int(d["iteration"]))


def design_constraints(x) -> bool:
    return bool(check_constraints_batch(np.asarray(x)[None, :])[0])


def _in_prior(x, cfg: ChainConfig) -> bool:
    return bool(np.all(x >= cfg.prior_low) and np.all(x <= cfg.prior_high))


def propose(x_c, psi: float, sigma_q, cfg: ChainConfig, rng,
            constraint: Callable = design_constraints, zero_noise: bool = False):
    """Gaussian random-walk step, redrawn until the design is valid and inside the prior."""
    x_c = np.asarray(x_c, dtype=float)
    if zero_noise:
        return x_c.copy()
    chol = np.linalg.cholesky(np.asarray(sigma_q, dtype=float))
    for _ in range(cfg.max_resample):
        x_new = x_c + psi * (chol @ rng.standard_normal(x_c.size))
        if _in_prior(x_new, cfg) and constraint(x_new):
            return x_new
    raise ProposalStuck(f"no valid proposal in {cfg.max_resample} draws")


def accept(l_new: float, l_old: float, rng) -> bool:
    """Metropolis rule for a symmetric proposal and a flat prior."""
    if not l_old > 0:
        raise InvalidChainState("current state has zero likelihood")
    if l_new >= l_old:
        return True
    return bool(rng.random() < l_new / l_old)


def adapted_covariance(states: np.ndarray, sigma_q_init: np.ndarray, shrinkage: float = 0.5,
                       jitter: float = 1e-6) -> np.ndarray:
    """Burn-in sample covariance shrunk toward its diagonal.

    Falls back to the initial proposal where the burn-in never moved.
    """
    init = np.diag(sigma_q_init ** 2)
    if states.shape[0] < 2:
        return init
    emp = np.atleast_2d(np.cov(states, rowvar=False))
    var = np.diag(emp).copy()
    stuck = var <= 0
    if np.all(stuck):
        return init
    blend = (1.0 - shrinkage) * emp + shrinkage * np.diag(var)
    blend[stuck, :] = 0.0
    blend[:, stuck] = 0.0
    diag = np.where(stuck, sigma_q_init ** 2, np.diag(blend) * (1.0 + jitter))
    np.fill_diagonal(blend, diag)
    return blend


def metropolis(lik_fn: Callable, x0, cfg: ChainConfig, seed: int = 0,
               constraint: Callable = design_constraints) -> list[ChainRecord]:
    """Generic chain driver; ``lik_fn`` maps a design to a nonnegative likelihood.

    Likelihoods are cached by design so rejected repeats are not re-integrated.
    """
    rng = np.random.default_rng(seed)
    cache: dict[bytes, float] = {}

    def lik(x):
        key = x.tobytes()
        if key not in cache:
            cache[key] = float(lik_fn(x))
        return cache[key]

    x = np.asarray(x0, dtype=float).copy()
    l_cur = lik(x)
    if not l_cur > 0:
        raise InvalidChainState("starting design has zero likelihood")

    sigma_q = np.diag(cfg.sigma_q_init ** 2)
    burn_states = []
    records = []
    for it in range(cfg.burn_in + cfg.n_keep):
        if it == cfg.burn_in and cfg.burn_in > 0:
            sigma_q = adapted_covariance(np.array(burn_states), cfg.sigma_q_init, cfg.shrinkage)
        try:
            x_new = propose(x, cfg.psi, sigma_q, cfg, rng, constraint)
        except ProposalStuck:
            ok = False
        else:
            l_new = lik(x_new)
            ok = accept(l_new, l_cur, rng)
            if ok:
                x, l_cur = x_new, l_new
        if it < cfg.burn_in:
            burn_states.append(x.copy())
        else:
            records.append(ChainRecord(x.copy(), l_cur, ok, it))
    return records


def run_chain(model, target: TargetSpec, x0, cfg: ChainConfig, n_mc: int = DEFAULT_N_MC,
              seed: int = 0, likelihood_seed: Optional[int] = None) -> list[ChainRecord]:
    """Sample the design posterior for ``target`` starting from a supported ``x0``.

    The Monte Carlo stream of the likelihood is held fixed across the chain
    (``likelihood_seed``, default ``seed``) so the likelihood is a
    deterministic function of the design.
    """
    lik_seed = seed if likelihood_seed is None else likelihood_seed
    return metropolis(lambda x: likelihood(model, x, target, n_mc, lik_seed).p, x0, cfg, seed)


def save_trace(records, path, meta: Optional[dict] = None) -> None:
    """JSON Lines, one record per line; ``meta`` goes first as ``{"meta": ...}``."""
    with open(path, "w") as fh:
        if meta is not None:
            fh.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for r in records:
            fh.write(r.to_json() + "\n")


def load_trace(path) -> list[ChainRecord]:
    with open(path) as fh:
        lines = [line for line in fh if line.strip()]
    return [ChainRecord.from_json(line) for line in lines if "meta" not in json.loads(line)]
