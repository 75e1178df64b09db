"""Spatio-temporal GP posterior, marginal likelihood fitting and the
leave-one-out block decomposition of the precision matrix."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional

import numpy as np
from scipy import linalg, optimize

from .kernels import (
    Hyperparameters,
    KernelFamily,
    Observation,
    SpaceTimePoint,
    covariance_with_grads,
    cross_covariance,
    pack_log,
    unpack_log,
)

log = logging.getLogger(__name__)

NOISE_FLOOR = 1e-6  # relative to lam


def effective_noise(h: Hyperparameters) -> float:
    return max(h.sigma2, NOISE_FLOOR * h.lam)


@dataclass(frozen=True)
class Dataset:
    """Observations stored column-wise; insertion order is preserved."""

    X: np.ndarray
    t: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        t = np.asarray(self.t, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(len(t), -1) if len(t) else X.reshape(0, max(X.size, 1))
        if not (X.shape[0] == t.size == y.size):
            raise ValueError("X, t and y must have matching lengths")
        if not np.all(np.isfinite(y)):
            raise ValueError("observation values must be finite")
        for name, arr in (("X", X), ("t", t), ("y", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls, d: int) -> "Dataset":
        return cls(np.zeros((0, d)), np.zeros(0), np.zeros(0))

    @classmethod
    def from_observations(cls, obs: Iterable[Observation]) -> "Dataset":
        obs = list(obs)
        if not obs:
            raise ValueError("use Dataset.empty(d) for an empty dataset")
        return cls(np.stack([o.point.x for o in obs]),
                   np.array([o.point.t for o in obs]),
                   np.array([o.y for o in obs]))

    def __len__(self) -> int:
        return self.y.size

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def observations(self) -> list[Observation]:
        return [Observation(SpaceTimePoint(x, t), y) for x, t, y in zip(self.X, self.t, self.y)]

    def append(self, x, t: float, y: float) -> "Dataset":
        x = np.asarray(x, dtype=float).reshape(1, -1)
        return Dataset(np.vstack([self.X, x]), np.append(self.t, t), np.append(self.y, y))

    def remove(self, i: int) -> "Dataset":
        keep = np.arange(self.n) != i
        return self.subset(keep)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.t[idx], self.y[idx])

    def with_values(self, y) -> "Dataset":
        return Dataset(self.X, self.t, y)


@dataclass(frozen=True)
class GramState:
    """Factorized ``Delta = k(X, X) + sigma^2 I`` for one dataset and one
    hyperparameter setting. Read-only once built."""

    data: Dataset
    h: Hyperparameters
    K: np.ndarray = field(repr=False)
    chol: Optional[tuple] = field(repr=False)
    alpha: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, data: Dataset, h: Hyperparameters) -> "GramState":
        n = data.n
        if n == 0:
            return cls(data, h, np.zeros((0, 0)), None, np.zeros(0))
        K = cross_covariance(data.X, data.t, data.X, data.t, h)
        delta = K + effective_noise(h) * np.eye(n)
        chol = linalg.cho_factor(delta, lower=True, check_finite=False)
        alpha = linalg.cho_solve(chol, data.y, check_finite=False)
        return cls(data, h, K, chol, alpha)

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def noise(self) -> float:
        return effective_noise(self.h)

    @cached_property
    def delta(self) -> np.ndarray:
        return self.K + self.noise * np.eye(self.n)

    @cached_property
    def inv(self) -> np.ndarray:
        """Dense ``Delta^{-1}``, symmetrized."""
        if self.n == 0:
            return np.zeros((0, 0))
        P = linalg.cho_solve(self.chol, np.eye(self.n), check_finite=False)
        return 0.5 * (P + P.T)

    def solve(self, b):
        return linalg.cho_solve(self.chol, b, check_finite=False)

    def predict(self, X, t):
        """Posterior mean and variance at the rows of ``X`` with times ``t``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
        prior = np.full(X.shape[0], self.h.lam)
        if self.n == 0:
            return np.zeros(X.shape[0]), prior
        Kq = cross_covariance(X, t, self.data.X, self.data.t, self.h)
        mu = Kq @ self.alpha
        v = linalg.solve_triangular(self.chol[0], Kq.T, lower=True, check_finite=False)
        var = prior - (v * v).sum(0)
        return mu, np.maximum(var, 0.0)


def posterior(state: GramState, q: SpaceTimePoint) -> tuple[float, float]:
    if state.n and q.d != state.data.d:
        raise ValueError("query dimension does not match the dataset")
    mu, var = state.predict(q.x[None, :], [q.t])
    return float(mu[0]), float(var[0])


# -- leave-one-out decomposition ---------------------------------------------


@dataclass(frozen=True)
class BlockInverseParts:
    """Blocks of ``Delta_D^{-1}`` with the removed observation ordered first."""

    E: float
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray

    def assemble(self) -> np.ndarray:
        m = self.F.shape[0]
        out = np.empty((m + 1, m + 1))
        out[0, 0] = self.E
        out[0, 1:] = self.G
        out[1:, 0] = self.H
        out[1:, 1:] = self.F
        return out


@dataclass(frozen=True)
class DiffCoefficients:
    a: float
    b: np.ndarray
    c: np.ndarray
    M: np.ndarray


def _check_index(state: GramState, i: int) -> None:
    if state.n < 1:
        raise ValueError("dataset is empty")
    if not 0 <= i < state.n:
        raise IndexError(f"remove_index {i} out of range for n={state.n}")


def block_inverse(state: GramState, remove_index: int) -> BlockInverseParts:
    """Blocks of the inverse built from the reduced system, block by block."""
    _check_index(state, remove_index)
    i = remove_index
    rest = np.arange(state.n) != i
    s = state.delta[i, i]  # lam + sigma^2
    if state.n == 1:
        z = np.zeros(0)
        return BlockInverseParts(1.0 / s, np.zeros((0, 0)), z, z)
    k = state.K[rest, i]
    delta_r = state.delta[np.ix_(rest, rest)]
    cf = linalg.cho_factor(delta_r, lower=True, check_finite=False)
    dk = linalg.cho_solve(cf, k, check_finite=False)
    E = 1.0 / (s - k @ dk)
    F = linalg.inv(delta_r - np.outer(k, k) / s)
    G = -E * dk
    H = -(F @ k) / s
    return BlockInverseParts(float(E), F, G, H)


def block_inverse_fast(state: GramState, remove_index: int) -> BlockInverseParts:
    """Same blocks read off the shared full inverse in O(n^2)."""
    _check_index(state, remove_index)
    P = state.inv
    i = remove_index
    rest = np.arange(state.n) != i
    return BlockInverseParts(float(P[i, i]), P[np.ix_(rest, rest)], P[i, rest].copy(), P[rest, i].copy())


def diff_coefficients(state: GramState, remove_index: int,
                      parts: Optional[BlockInverseParts] = None) -> DiffCoefficients:
    """Coefficients of the mean and variance differences caused by removing
    one observation (full posterior minus reduced posterior)."""
    if parts is None:
        parts = block_inverse_fast(state, remove_index)
    i = remove_index
    y = state.data.y
    rest = np.arange(state.n) != i
    y1, yr = y[i], y[rest]
    # F - Delta_reduced^{-1} = H G / E (Schur complement identity)
    M = np.outer(parts.H, parts.G) / parts.E if parts.E != 0 else np.zeros_like(parts.F)
    M = 0.5 * (M + M.T)
    a = parts.E * y1 + parts.G @ yr
    b = parts.H * y1 + M @ yr
    c = parts.G + parts.H
    return DiffCoefficients(float(a), b, c, M)


# -- marginal likelihood -----------------------------------------------------


def log_marginal_likelihood(data: Dataset, h: Hyperparameters) -> float:
    if data.n < 1:
        raise ValueError("log marginal likelihood needs at least one observation")
    state = GramState.build(data, h)
    L = state.chol[0]
    val = (-0.5 * float(data.y @ state.alpha) - float(np.log(np.diag(L)).sum())
           - 0.5 * data.n * math.log(2 * math.pi))
    if not math.isfinite(val):
        raise FloatingPointError("non-finite log marginal likelihood")
    return val


def _neg_lml_and_grad(theta, data: Dataset, template: Hyperparameters):
    h = unpack_log(theta, template)
    K, grads = covariance_with_grads(data.X, data.t, h)
    n = data.n
    noise = effective_noise(h)
    try:
        cf = linalg.cho_factor(K + noise * np.eye(n), lower=True, check_finite=False)
    except linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)
    alpha = linalg.cho_solve(cf, data.y, check_finite=False)
    val = (0.5 * data.y @ alpha + np.log(np.diag(cf[0])).sum() + 0.5 * n * math.log(2 * math.pi))
    W = np.outer(alpha, alpha) - linalg.cho_solve(cf, np.eye(n), check_finite=False)
    g = [0.5 * float((W * dK).sum()) for dK in grads]
    g.append(0.5 * float(np.trace(W)) * h.sigma2 if h.sigma2 >= NOISE_FLOOR * h.lam else 0.0)
    return float(val), -np.asarray(g)


@dataclass(frozen=True)
class MleSettings:
    n_starts: int = 4
    maxiter: int = 60
    lam_bounds: tuple = (1e-3, 1e3)  # times the sample variance
    l_s_bounds: tuple = (1e-2, 10.0)
    l_t_bounds: tuple = (1e-2, 10.0)
    sigma2_bounds: tuple = (1e-6, 1.0)  # times the sample variance


def _log_bounds(template: Hyperparameters, d: int, var: float, s: MleSettings):
    b = [(math.log(s.lam_bounds[0] * var), math.log(s.lam_bounds[1] * var))]
    n_len = d if template.ard is not None else 1
    b += [(math.log(s.l_s_bounds[0]), math.log(s.l_s_bounds[1]))] * n_len
    if template.family.has_lengthscale_t:
        b.append((math.log(s.l_t_bounds[0]), math.log(s.l_t_bounds[1])))
    b.append((math.log(s.sigma2_bounds[0] * var), math.log(s.sigma2_bounds[1] * var)))
    return b


def fit_mle(data: Dataset, family: KernelFamily, prev: Hyperparameters,
            settings: MleSettings = MleSettings(), seed: int = 0) -> Hyperparameters:
    """Multi-start L-BFGS-B maximization of the log marginal likelihood in log
    space, warm-started at ``prev``. Never returns anything worse than the
    (bound-clipped) warm start."""
    if data.n < 2:
        raise ValueError("fit_mle needs at least two observations")
    if prev.family != family:
        prev = Hyperparameters(prev.lam, prev.l_s, prev.l_t, prev.sigma2, family, prev.ard, prev.eps)
    var = float(np.var(data.y))
    if not var > 1e-12:
        var = 1.0
    bounds = _log_bounds(prev, data.d, var, settings)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    warm = np.clip(pack_log(prev), lo, hi)
    rng = np.random.default_rng(seed)
    starts = [warm] + [rng.uniform(lo, hi) for _ in range(settings.n_starts - 1)]

    best_theta = warm
    best_val, _ = _neg_lml_and_grad(warm, data, prev)
    for x0 in starts:
        try:
            res = optimize.minimize(_neg_lml_and_grad, x0, args=(data, prev), jac=True,
                                    method="L-BFGS-B", bounds=bounds,
                                    options={"maxiter": settings.maxiter})
        except (ValueError, FloatingPointError, linalg.LinAlgError) as exc:
            log.warning("MLE restart failed: %s", exc)
            continue
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_theta = float(res.fun), np.clip(res.x, lo, hi)
    if not np.isfinite(best_val):
        log.warning("MLE did not converge; keeping previous hyperparameters")
        return prev
    return unpack_log(best_theta, prev)
