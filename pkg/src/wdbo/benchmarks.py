"""Dynamic synthetic objectives and the regret oracle.

Each function is defined over ``d' = d + 1`` raw coordinates; the last one is
time. All functions are minimized in raw form; the harness negates them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.stats import qmc


def rastrigin(Z, a=10.0):
    dp = Z.shape[1]
    return a * dp + (Z * Z - a * np.cos(2 * np.pi * Z)).sum(1)


def schwefel(Z):
    return 418.9829 * Z.shape[1] - (Z * np.sin(np.sqrt(np.abs(Z)))).sum(1)


def styblinski_tang(Z):
    return 0.5 * (Z ** 4 - 16 * Z ** 2 + 5 * Z).sum(1)


def eggholder(Z):
    z1, z2 = Z[:, 0], Z[:, 1]
    return (-(z2 + 47) * np.sin(np.sqrt(np.abs(z2 + z1 / 2 + 47)))
            - z1 * np.sin(np.sqrt(np.abs(z1 - z2 - 47))))


def ackley(Z, a=20.0, b=0.2, c=2 * np.pi):
    dp = Z.shape[1]
    # grouped so that both pairs cancel exactly at the origin
    return ((a - a * np.exp(-b * np.sqrt((Z * Z).sum(1) / dp)))
            + (math.e - np.exp(np.cos(c * Z).sum(1) / dp)))


def rosenbrock(Z):
    return (100.0 * (Z[:, 1:] - Z[:, :-1] ** 2) ** 2 + (Z[:, :-1] - 1) ** 2).sum(1)


SHEKEL_BETA = np.array([1, 2, 2, 4, 4, 6, 3, 7, 5, 5]) / 10.0
SHEKEL_C = np.array([
    [4, 1, 8, 6, 3, 2, 5, 8, 6, 7],
    [4, 1, 8, 6, 7, 9, 3, 1, 2, 3.6],
    [4, 1, 8, 6, 3, 2, 5, 8, 6, 7],
    [4, 1, 8, 6, 7, 9, 3, 1, 2, 3.6],
])


def shekel(Z):
    diff = Z[:, :, None] - SHEKEL_C[None, :, :]  # (n, 4, m)
    return -(1.0 / ((diff * diff).sum(1) + SHEKEL_BETA)).sum(1)


HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
HARTMANN3_A = np.array([[3, 10, 30], [0.1, 10, 35], [3, 10, 30], [0.1, 10, 35]])
HARTMANN3_P = 1e-4 * np.array([[3689, 1170, 2673], [4699, 4387, 7470],
                               [1091, 8732, 5547], [381, 5743, 8828]])
HARTMANN6_A = np.array([[10, 3, 17, 3.5, 1.7, 8], [0.05, 10, 17, 0.1, 8, 14],
                        [3, 3.5, 1.7, 10, 17, 8], [17, 8, 0.05, 10, 0.1, 14]])
HARTMANN6_P = 1e-4 * np.array([[1312, 1696, 5569, 124, 8283, 5886],
                               [2329, 4135, 8307, 3736, 1004, 9991],
                               [2348, 1451, 3522, 2883, 3047, 6650],
                               [4047, 8828, 8732, 5743, 1091, 381]])


def _hartmann(Z, A, P):
    inner = (A[None] * (Z[:, None, :] - P[None]) ** 2).sum(2)
    return -(HARTMANN_ALPHA * np.exp(-inner)).sum(1)


def hartmann3(Z):
    return _hartmann(Z, HARTMANN3_A, HARTMANN3_P)


def hartmann6(Z):
    return _hartmann(Z, HARTMANN6_A, HARTMANN6_P)


def powell(Z):
    out = np.zeros(Z.shape[0])
    for k in range(Z.shape[1] // 4):
        a, b, c, d = (Z[:, 4 * k + j] for j in range(4))
        out += (a + 10 * b) ** 2 + 5 * (c - d) ** 2 + (b - 2 * c) ** 4 + 10 * (a - d) ** 4
    return out


@dataclass(frozen=True)
class BenchmarkProblem:
    name: str
    dim: int  # total raw dimension d' (space + time)
    lower: float
    upper: float
    fn: Callable = field(repr=False, compare=False)

    @property
    def d(self) -> int:
        """Spatial dimension."""
        return self.dim - 1

    def to_raw(self, u):
        return self.lower + np.asarray(u, dtype=float) * (self.upper - self.lower)

    def to_unit(self, z):
        return (np.asarray(z, dtype=float) - self.lower) / (self.upper - self.lower)

    def raw(self, Z):
        """Evaluate on raw coordinates, rows of shape ``(dim,)``."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.dim:
            raise ValueError(f"{self.name} expects {self.dim} coordinates, got {Z.shape[1]}")
        span = 1e-9 * (self.upper - self.lower)
        if np.any(Z < self.lower - span) or np.any(Z > self.upper + span):
            raise ValueError(f"point outside the {self.name} domain [{self.lower}, {self.upper}]")
        return self.fn(np.clip(Z, self.lower, self.upper))

    def __call__(self, X, t):
        """Raw value at normalized spatial points ``X`` and normalized time ``t``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        tt = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
        U = np.column_stack([X, tt])
        return self.raw(self.to_raw(U))


REGISTRY: dict[str, BenchmarkProblem] = {
    p.name: p for p in [
        BenchmarkProblem("rastrigin", 5, -4.0, 4.0, rastrigin),
        BenchmarkProblem("schwefel", 4, -500.0, 500.0, schwefel),
        BenchmarkProblem("styblinski_tang", 4, -5.0, 5.0, styblinski_tang),
        BenchmarkProblem("eggholder", 2, -512.0, 512.0, eggholder),
        BenchmarkProblem("ackley", 4, -32.0, 32.0, ackley),
        BenchmarkProblem("rosenbrock", 3, -1.0, 1.5, rosenbrock),
        BenchmarkProblem("shekel", 4, 0.0, 10.0, shekel),
        BenchmarkProblem("hartmann3", 3, 0.0, 1.0, hartmann3),
        BenchmarkProblem("hartmann6", 6, 0.0, 1.0, hartmann6),
        BenchmarkProblem("powell", 4, -4.0, 5.0, powell),
    ]
}


def get_benchmark(name: str) -> BenchmarkProblem:
    key = name.lower().replace("-", "_")
    if key not in REGISTRY:
        raise KeyError(f"unknown benchmark {name!r}")
    return REGISTRY[key]


def evaluate_benchmark(name: str, z) -> float:
    """Raw value at a single raw point ``z``; raises outside the domain."""
    return float(get_benchmark(name).raw(np.asarray(z, dtype=float)[None, :])[0])


@lru_cache(maxsize=None)
def signal_variance(name: str, n: int = 10_000) -> float:
    """Variance of ``f`` over a scrambled Halton sample of the space-time domain."""
    p = get_benchmark(name)
    U = qmc.Halton(p.dim, scramble=True, seed=0).random(n)
    return float(np.var(p.raw(p.to_raw(U))))


# -- regret oracle -----------------------------------------------------------


def _fd_grad(fun, x, step=1e-7):
    """Central differences kept inside the unit cube."""
    g = np.empty_like(x)
    for i in range(x.size):
        lo, hi = x.copy(), x.copy()
        lo[i] = max(x[i] - step, 0.0)
        hi[i] = min(x[i] + step, 1.0)
        g[i] = (fun(hi) - fun(lo)) / (hi[i] - lo[i])
    return g


def minimize_slice(problem: BenchmarkProblem, t: float, starts, tol: float = 1e-10):
    """Local refinement of ``min_x f(x, t)`` from each start; returns the best."""
    best_x, best_f = None, np.inf
    bounds = [(0.0, 1.0)] * problem.d

    def fun(x):
        return float(problem(np.clip(x, 0.0, 1.0)[None, :], t)[0])

    for x0 in np.atleast_2d(starts):
        # explicit gradient: scipy's own differences can step past the bounds
        res = optimize.minimize(fun, np.clip(x0, 0.0, 1.0), jac=lambda x: _fd_grad(fun, x),
                                method="L-BFGS-B", bounds=bounds,
                                options={"ftol": tol, "gtol": 1e-9, "maxiter": 200})
        if res.fun < best_f:
            best_x, best_f = np.clip(res.x, 0.0, 1.0), float(res.fun)
    return best_x, best_f


class RegretOracle:
    """Best raw value ``min_x f(x, t)`` over the unit spatial cube.

    Each slice of a time lattice keeps its best grid cells (cell midpoints)
    and a refined minimizer, refined from those cells and from the previous
    slice's minimizer. A query at ``t`` refines all of these for the two
    bracketing slices at ``t`` itself. Answers depend on ``t`` only, never on
    earlier queries.
    """

    EXACT_SCAN = 4096

    def __init__(self, problem: BenchmarkProblem, resolution: int = 64,
                 n_slices: int = 64, cap: int = 2 ** 20, top_k: int = 4):
        if resolution < 2:
            raise ValueError("grid resolution must be at least 2 per axis")
        self.problem = problem
        d = problem.d
        per_axis = resolution
        while per_axis ** d > cap:
            per_axis -= 1
        self.per_axis = max(per_axis, 2)
        self.times = np.linspace(0.0, 1.0, n_slices)
        self.top_k = top_k
        self._cells: dict[int, np.ndarray] = {}
        self._best: list = []
        self._cache: dict[float, float] = {}

    def _grid(self, per_axis=None):
        n = per_axis or self.per_axis
        ax = (np.arange(n) + 0.5) / n
        mesh = np.meshgrid(*([ax] * self.problem.d), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], 1)

    def _best_cells(self, t: float, per_axis=None) -> np.ndarray:
        G = self._grid(per_axis)
        vals = np.concatenate([self.problem(G[s:s + 65536], t)
                               for s in range(0, G.shape[0], 65536)])
        order = np.argsort(vals, kind="stable")[: self.top_k]
        return G[order]

    def _slice_cells(self, k: int) -> np.ndarray:
        if k not in self._cells:
            self._cells[k] = self._best_cells(self.times[k])
        return self._cells[k]

    def _slice_best(self, k: int) -> np.ndarray:
        while len(self._best) <= k:
            j = len(self._best)
            starts = [self._slice_cells(j)] + ([self._best[-1][None, :]] if j else [])
            self._best.append(minimize_slice(self.problem, self.times[j], np.vstack(starts))[0])
        return self._best[k]

    def __call__(self, t: float) -> float:
        t = float(t)
        if t in self._cache:
            return self._cache[t]
        k = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 1))
        starts = []
        for j in {k, min(k + 1, len(self.times) - 1)}:
            starts += [self._slice_cells(j), self._slice_best(j)[None, :]]
        fine = int(self.EXACT_SCAN ** (1.0 / self.problem.d) + 1e-9)
        if fine >= self.per_axis:
            starts.append(self._best_cells(t, fine))  # cheap enough to scan at t itself
        _, f = minimize_slice(self.problem, t, np.vstack(starts))
        self._cache[t] = f
        return f
