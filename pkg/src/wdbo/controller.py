"""The W-DBO loop: acquire, observe, fit, prune, advance the removal budget.

The shared optimizer machinery (dataset bookkeeping, output standardization,
hyperparameter fitting and GP-UCB acquisition) lives in :class:`DBOptimizer`
so the baselines differ only in kernel and dataset policy.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .criterion import relevancy_ratios
from .gp import Dataset, GramState, MleSettings, fit_mle
from .kernels import Hyperparameters, KernelFamily

log = logging.getLogger(__name__)


# -- removal budget ----------------------------------------------------------


@dataclass(frozen=True)
class RemovalBudget:
    b: float = 1.0
    alpha: float = 0.25

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not self.b >= 1.0:
            raise ValueError("budget must be at least 1")


def budget_advance(budget: RemovalBudget, dt: float, l_t: float) -> RemovalBudget:
    """``b <- b (1 + alpha)^(dt / l_T)``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if not l_t > 0:
        raise ValueError("l_T must be positive")
    return replace(budget, b=budget.b * (1.0 + budget.alpha) ** (dt / l_t))


@dataclass(frozen=True)
class PruneResult:
    dataset: Dataset
    budget: RemovalBudget
    removed: list  # (original index, ratio) pairs in removal order
    state: Optional[GramState]


def prune(state: GramState, budget: RemovalBudget, t0: float) -> PruneResult:
    """Greedy removal of the least relevant observation while the budget allows.

    Ratios are recomputed on the shrinking dataset after every removal; ties go
    to the lowest index and at least one observation is always kept.
    """
    removed = []
    origin = np.arange(state.n)
    b = budget.b
    while b > 1.0 and state.n > 1:
        ratios = relevancy_ratios(state, t0).ratios
        i = int(np.argmin(ratios))  # first occurrence on ties
        r = float(ratios[i])
        if not b > 1.0 + r:
            break
        b /= 1.0 + r
        removed.append((int(origin[i]), r))
        origin = np.delete(origin, i)
        state = GramState.build(state.data.remove(i), state.h)
    return PruneResult(state.data, replace(budget, b=max(b, 1.0)), removed, state)


# -- acquisition -------------------------------------------------------------


@dataclass(frozen=True)
class AcquisitionConfig:
    beta: float = 4.0
    n_candidates: int = 64
    n_refine: int = 4
    maxiter: int = 50


def acquire(state: Optional[GramState], t0: float, d: int, cfg: AcquisitionConfig,
            rng: np.random.Generator, time_of: Callable[[float], float] = lambda t: t) -> np.ndarray:
    """Maximize ``mu + sqrt(beta) sigma`` over ``[0, 1]^d`` at time ``t0``."""
    if state is None or state.n == 0:
        return rng.random(d)
    tk = time_of(t0)
    root_beta = math.sqrt(cfg.beta)

    def ucb(X):
        mu, var = state.predict(X, tk)
        return mu + root_beta * np.sqrt(var)

    seed = int(rng.integers(2 ** 31))
    cand = qmc.Sobol(d, scramble=True, seed=seed).random(cfg.n_candidates)
    vals = ucb(cand)
    order = np.argsort(-vals, kind="stable")
    best_x, best_v = cand[order[0]], float(vals[order[0]])
    for j in order[: cfg.n_refine]:
        try:
            res = optimize.minimize(lambda x: -float(ucb(x[None, :])[0]), cand[j],
                                    method="L-BFGS-B", bounds=[(0.0, 1.0)] * d,
                                    options={"maxiter": cfg.maxiter})
        except (ValueError, FloatingPointError) as exc:
            log.warning("acquisition refinement failed: %s", exc)
            continue
        if np.all(np.isfinite(res.x)) and -res.fun > best_v:
            best_x, best_v = np.clip(res.x, 0.0, 1.0), float(-res.fun)
    return np.asarray(best_x, dtype=float)


# -- optimizers --------------------------------------------------------------


@dataclass(frozen=True)
class StepResult:
    x: np.ndarray
    t: float
    y: float
    n_data: int
    removed: list
    dt: float  # response time in clock units (seconds)
    budget: float
    l_t: float


def default_hyperparameters(family: KernelFamily) -> Hyperparameters:
    return Hyperparameters(lam=1.0, l_s=0.2, l_t=0.2, sigma2=0.05, family=family)


class DBOptimizer:
    """Common state of a dynamic BO solution.

    Observations keep their raw values; each fit standardizes them. Subclasses
    choose the kernel family and may override :meth:`_after_fit` (dataset
    policy) and :meth:`_kernel_time` (the time coordinate seen by the GP).
    """

    name = "base"

    def __init__(self, d: int, family: KernelFamily, seed: int = 0,
                 acq: AcquisitionConfig = AcquisitionConfig(),
                 mle: MleSettings = MleSettings(),
                 h0: Optional[Hyperparameters] = None):
        self.d = d
        self.family = family
        self.acq = acq
        self.mle = mle
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        self.h = h0 if h0 is not None else default_hyperparameters(family)
        self.data = Dataset.empty(d)  # raw y, GP time coordinate
        self.state: Optional[GramState] = None
        self.n_queries = 0  # including the initial design
        self.n_steps = 0  # optimizer queries only
        self.n_fits = 0

    # hooks
    def _kernel_time(self, t: float) -> float:
        return t

    def _before_append(self) -> None:
        pass

    def _after_fit(self, t0: float) -> list:
        return []

    def _on_advance(self, dt_norm: float) -> None:
        pass

    @property
    def budget_value(self) -> float:
        return 1.0

    # core
    def _standardized(self, data: Dataset) -> Dataset:
        if data.n == 0:
            return data
        mean = float(data.y.mean())
        std = float(data.y.std())
        if not std > 1e-12:
            std = 1.0
        self._y_shift, self._y_scale = mean, std
        return data.with_values((data.y - mean) / std)

    def refit(self) -> None:
        z = self._standardized(self.data)
        if z.n >= 2:
            self.h = self._fit(z)
        self.n_fits += 1
        self.state = GramState.build(z, self.h) if z.n else None

    def _fit(self, z: Dataset) -> Hyperparameters:
        return fit_mle(z, self.family, self.h, self.mle, seed=self.seed * 100_003 + self.n_fits)

    def initialize(self, X, t, y) -> None:
        for x, ti, yi in zip(np.atleast_2d(X), t, y):
            self.data = self.data.append(x, self._kernel_time(float(ti)), float(yi))
            self.n_queries += 1
        self.refit()

    def suggest(self, t0: float) -> np.ndarray:
        return acquire(self.state, t0, self.d, self.acq, self.rng, self._kernel_time)

    def observe(self, x, t0: float, y: float) -> list:
        """Append one observation, refit, apply the dataset policy."""
        self._before_append()
        tk = self._kernel_time(t0)
        self.data = self.data.append(x, tk, float(y))
        self.n_queries += 1
        self.n_steps += 1
        self.refit()
        return self._after_fit(tk)

    def advance(self, dt_norm: float) -> None:
        self._on_advance(dt_norm)

    def step(self, clock, objective) -> StepResult:
        """One iteration at the clock's present time.

        ``clock`` provides ``now()`` (normalized time), ``response_time(n, wall)``
        (seconds) and ``normalize_span(seconds)``; ``objective(x, t)`` returns
        the noisy observation.
        """
        t0 = clock.now()
        start = time.perf_counter()
        x = self.suggest(t0)
        y = float(objective(x, t0))
        removed = self.observe(x, t0, y)
        wall = time.perf_counter() - start
        dt = clock.response_time(self.data.n, wall)
        self.advance(clock.normalize_span(dt))
        return StepResult(x, t0, y, self.data.n, removed, dt, self.budget_value, self.h.l_t)


@dataclass(frozen=True)
class WdboConfig:
    alpha: float = 0.25
    acq: AcquisitionConfig = AcquisitionConfig()
    family: KernelFamily = field(default_factory=lambda: KernelFamily("matern", 2.5, "matern", 1))
    mle: MleSettings = MleSettings()
    n_init: int = 15

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")


class WDBO(DBOptimizer):
    name = "wdbo"

    def __init__(self, d: int, config: WdboConfig = WdboConfig(), seed: int = 0):
        super().__init__(d, config.family, seed, config.acq, config.mle)
        self.config = config
        self.budget = RemovalBudget(1.0, config.alpha)
        self.n_removed = 0

    @property
    def budget_value(self) -> float:
        return self.budget.b

    def _after_fit(self, t0: float) -> list:
        if self.state is None:
            return []
        res = prune(self.state, self.budget, t0)
        if res.removed:
            keep = np.ones(self.data.n, dtype=bool)
            keep[[i for i, _ in res.removed]] = False
            self.data = self.data.subset(keep)
            self.state = res.state
            self.n_removed += len(res.removed)
        self.budget = res.budget
        return [r for _, r in res.removed]

    def _on_advance(self, dt_norm: float) -> None:
        self.budget = budget_advance(self.budget, dt_norm, self.h.l_t)

