"""Comparison solutions sharing the GP and acquisition stack of W-DBO.

* GP-UCB: spatial kernel only, append-only dataset.
* R-GP-UCB: GP-UCB whose dataset is cleared every ``N`` queries.
* TV-GP-UCB: covariance discounted by ``(1 - eps)^{|i - j| / 2}`` where ``i, j``
  are query sequence numbers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .controller import AcquisitionConfig, DBOptimizer
from .gp import Dataset, Hyperparameters, MleSettings, fit_mle, log_marginal_likelihood
from .kernels import KernelFamily, spatial_correlation

log = logging.getLogger(__name__)

EPS_GRID = (0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5)
VARIANTS = ("gp-ucb", "r-gp-ucb", "tv-gp-ucb")


@dataclass(frozen=True)
class BaselineConfig:
    variant: str = "gp-ucb"
    epsilon: Optional[float] = None  # TV: None means estimate on a grid
    reset_period: int = 30
    acq: AcquisitionConfig = AcquisitionConfig()
    spatial: KernelFamily = field(default_factory=lambda: KernelFamily("matern", 2.5, None))
    mle: MleSettings = MleSettings()
    eps_grid: tuple = EPS_GRID

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown baseline {self.variant!r}")
        if self.epsilon is not None and not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.reset_period < 1:
            raise ValueError("reset period must be positive")


def tv_covariance(x_i, i: int, x_j, j: int, h: Hyperparameters, eps: float) -> float:
    """``lam k_S(||x_i - x_j||) (1 - eps)^{|i - j| / 2}``."""
    r = float(np.linalg.norm(np.asarray(x_i, float) - np.asarray(x_j, float)))
    return h.lam * spatial_correlation(r, h) * (1.0 - eps) ** (abs(i - j) / 2.0)


class GPUCB(DBOptimizer):
    name = "gp-ucb"

    def __init__(self, d: int, config: BaselineConfig = BaselineConfig(), seed: int = 0):
        fam = KernelFamily(config.spatial.spatial, config.spatial.nu, None)
        super().__init__(d, fam, seed, config.acq, config.mle)
        self.config = config


class RGPUCB(GPUCB):
    """Clears the dataset (initial design included) before optimizer queries
    number ``N + 1``, ``2N + 1``, ...; after ``k > N`` queries it holds
    ``(k - 1) mod N + 1`` observations."""

    name = "r-gp-ucb"

    def _before_append(self) -> None:
        if self.n_steps > 0 and self.n_steps % self.config.reset_period == 0:
            self.data = Dataset.empty(self.d)

    @property
    def n_resets(self) -> int:
        return max(self.n_steps - 1, 0) // self.config.reset_period


class TVGPUCB(DBOptimizer):
    name = "tv-gp-ucb"

    def __init__(self, d: int, config: BaselineConfig = BaselineConfig("tv-gp-ucb"), seed: int = 0):
        fam = KernelFamily(config.spatial.spatial, config.spatial.nu, "tv")
        eps = 0.0 if config.epsilon is None else config.epsilon
        h0 = Hyperparameters(1.0, 0.2, 0.2, 0.05, fam, eps=eps)
        super().__init__(d, fam, seed, config.acq, config.mle, h0)
        self.config = config

    def _kernel_time(self, t: float) -> float:
        return float(self.n_queries)

    def _fit(self, z: Dataset) -> Hyperparameters:
        h = fit_mle(z, self.family, self.h, self.mle, seed=self.seed * 100_003 + self.n_fits)
        if self.config.epsilon is not None:
            return h
        # one coordinate-ascent pass over the discount grid
        best, best_val = h, log_marginal_likelihood(z, h)
        for eps in self.config.eps_grid:
            cand = replace(h, eps=eps)
            try:
                val = log_marginal_likelihood(z, cand)
            except (FloatingPointError, np.linalg.LinAlgError):
                continue
            if val > best_val:
                best, best_val = cand, val
        return best


def make_baseline(variant: str, d: int, seed: int = 0, **kw) -> DBOptimizer:
    cfg = BaselineConfig(variant, **kw)
    cls = {"gp-ucb": GPUCB, "r-gp-ucb": RGPUCB, "tv-gp-ucb": TVGPUCB}[variant]
    return cls(d, cfg, seed)
