"""Continuous-time experiment engine.

A run starts with 15 observations drawn uniformly in ``[0,1]^d x [0, 1/40]``;
then each iteration queries at the present time and the clock moves forward
by the solution's response time. Simulated seconds ``s`` in ``[0, duration]``
map to normalized time ``1/40 + (39/40) s / duration``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .baselines import BaselineConfig, GPUCB, RGPUCB, TVGPUCB
from .benchmarks import BenchmarkProblem, RegretOracle, get_benchmark, signal_variance
from .controller import AcquisitionConfig, DBOptimizer, WDBO, WdboConfig

log = logging.getLogger(__name__)

INIT_SPAN = 1.0 / 40.0
ALGORITHMS = ("wdbo", "gp-ucb", "r-gp-ucb", "tv-gp-ucb")


@dataclass(frozen=True)
class CostModel:
    """Response time per iteration: synthetic ``c0 + c1 n + c3 n^3`` or wall-clock."""

    mode: str = "synthetic"
    c0: float = 0.05
    c1: float = 0.0
    c3: float = 2e-6

    def __post_init__(self):
        if self.mode not in ("synthetic", "wall"):
            raise ValueError(f"unknown cost model {self.mode!r}")
        if min(self.c0, self.c1, self.c3) < 0:
            raise ValueError("cost coefficients must be non-negative")
        if self.mode == "synthetic" and self.c0 + self.c1 + self.c3 <= 0:
            raise ValueError("synthetic cost model needs a positive coefficient")

    def __call__(self, n: int, wall: float) -> float:
        if self.mode == "wall":
            return max(wall, 1e-9)
        return self.c0 + self.c1 * n + self.c3 * n ** 3


class SimClock:
    def __init__(self, duration: float, cost: CostModel):
        self.duration = duration
        self.cost = cost
        self.sim = 0.0

    def now(self) -> float:
        if self.duration <= 0:
            return INIT_SPAN
        return INIT_SPAN + (1.0 - INIT_SPAN) * min(self.sim / self.duration, 1.0)

    def response_time(self, n: int, wall: float) -> float:
        return self.cost(n, wall)

    def normalize_span(self, seconds: float) -> float:
        return (1.0 - INIT_SPAN) * seconds / self.duration if self.duration > 0 else 0.0


@dataclass(frozen=True)
class RunRecord:
    sim_time: float
    x: tuple
    y: float
    f_true: float
    regret: float
    avg_regret: float
    n_data: int
    n_removed: int
    dt: float
    budget: float
    t: float = 0.0
    l_t: float = float("nan")
    ratios: tuple = ()


@dataclass
class RunResult:
    records: list
    algorithm: str
    benchmark: str
    seed: int
    config: dict
    error: Optional[str] = None
    n_init: int = 15

    @property
    def final_avg_regret(self) -> float:
        return self.records[-1].avg_regret if self.records else float("nan")

    @property
    def total_removed(self) -> int:
        return sum(r.n_removed for r in self.records)

    @property
    def final_size(self) -> int:
        return self.records[-1].n_data if self.records else self.n_init

    def summary(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "benchmark": self.benchmark,
            "seed": self.seed,
            "n_steps": len(self.records),
            "final_avg_regret": self.final_avg_regret,
            "total_removed": self.total_removed,
            "final_dataset_size": self.final_size,
            "error": self.error,
            "config": self.config,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    duration: float = 300.0
    seed: int = 0
    cost: CostModel = CostModel()
    noise_fraction: float = 0.05
    n_init: int = 15
    alpha: float = 0.25
    beta: float = 4.0
    grid: int = 64
    max_steps: Optional[int] = None
    reset_period: int = 30
    epsilon: Optional[float] = None


def make_algorithm(name: str, d: int, cfg: ExperimentConfig) -> DBOptimizer:
    acq = AcquisitionConfig(beta=cfg.beta)
    if name == "wdbo":
        return WDBO(d, WdboConfig(alpha=cfg.alpha, acq=acq, n_init=cfg.n_init), seed=cfg.seed)
    if name == "gp-ucb":
        return GPUCB(d, BaselineConfig("gp-ucb", acq=acq), seed=cfg.seed)
    if name == "r-gp-ucb":
        return RGPUCB(d, BaselineConfig("r-gp-ucb", reset_period=cfg.reset_period, acq=acq), seed=cfg.seed)
    if name == "tv-gp-ucb":
        return TVGPUCB(d, BaselineConfig("tv-gp-ucb", epsilon=cfg.epsilon, acq=acq), seed=cfg.seed)
    raise KeyError(f"unknown algorithm {name!r}")


_ORACLES: dict = {}


def get_oracle(problem: BenchmarkProblem, grid: int) -> RegretOracle:
    key = (problem.name, grid)
    if key not in _ORACLES:
        _ORACLES[key] = RegretOracle(problem, resolution=grid)
    return _ORACLES[key]


def run_experiment(algorithm: str, problem: BenchmarkProblem | str,
                   cfg: ExperimentConfig = ExperimentConfig(),
                   on_record: Optional[Callable[[RunRecord], None]] = None) -> RunResult:
    """Drive one replication until the simulated clock reaches ``cfg.duration``.

    Values are negated so that every solution maximizes. Exceptions raised by
    the solution or the objective end the run; the partial trace is returned
    with ``error`` set.
    """
    if isinstance(problem, str):
        problem = get_benchmark(problem)
    d = problem.d
    alg = make_algorithm(algorithm, d, cfg)
    rng = np.random.default_rng([cfg.seed, 7919])  # noise and initial design
    noise_sd = math.sqrt(cfg.noise_fraction * signal_variance(problem.name))
    oracle = get_oracle(problem, cfg.grid)
    clock = SimClock(cfg.duration, cfg.cost)
    result = RunResult([], algorithm, problem.name, cfg.seed,
                       _config_echo(algorithm, problem, cfg), n_init=cfg.n_init)

    X0 = rng.random((cfg.n_init, d))
    t0 = rng.random(cfg.n_init) * INIT_SPAN
    f0 = np.array([problem(x[None, :], t)[0] for x, t in zip(X0, t0)])
    y0 = -f0 + noise_sd * rng.standard_normal(cfg.n_init)
    alg.initialize(X0, t0, y0)

    last = {}

    def objective(x, t):
        f = float(problem(np.asarray(x)[None, :], t)[0])
        last["f"] = f
        return -f + noise_sd * rng.standard_normal()

    cum_regret = 0.0
    try:
        while clock.sim < cfg.duration:
            if cfg.max_steps is not None and len(result.records) >= cfg.max_steps:
                break
            sim = clock.sim
            step = alg.step(clock, objective)
            f = last["f"]
            best = min(oracle(step.t), f)
            regret = f - best
            cum_regret += regret
            rec = RunRecord(sim, tuple(float(v) for v in step.x), step.y, f, regret,
                            cum_regret / (len(result.records) + 1), step.n_data,
                            len(step.removed), step.dt, step.budget, step.t, step.l_t,
                            tuple(step.removed))
            result.records.append(rec)
            if on_record is not None:
                on_record(rec)
            clock.sim = sim + step.dt
    except Exception as exc:  # partial trace is still useful
        log.error("run aborted: %s", exc)
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def _config_echo(algorithm, problem, cfg: ExperimentConfig) -> dict:
    out = asdict(cfg)
    out["algorithm"] = algorithm
    out["benchmark"] = problem.name
    return out


# -- output ------------------------------------------------------------------


def trace_header(d: int) -> list:
    return (["sim_time"] + [f"x_{k + 1}" for k in range(d)]
            + ["y", "f_true", "regret", "avg_regret", "n_data", "n_removed", "dt", "budget"])


def write_trace(result: RunResult, path: Path) -> None:
    d = get_benchmark(result.benchmark).d
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace_header(d))
        for r in result.records:
            w.writerow([repr(r.sim_time), *map(repr, r.x), repr(r.y), repr(r.f_true),
                        repr(r.regret), repr(r.avg_regret), r.n_data, r.n_removed,
                        repr(r.dt), repr(r.budget)])


def write_summary(result: RunResult, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(result.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
