"""Command-line entry point.

Subcommands: ``run`` (one algorithm, one or more seeds), ``sensitivity``
(alpha grid with min-max normalized regret), ``diag-conv`` (convolution and
approximation-error diagnostics) and ``list``.

Flags override values from ``--config FILE``, a flat ``key = value`` file
whose keys are the long flag names (``cost-model = synthetic``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy import integrate

from . import __version__
from .benchmarks import REGISTRY, get_benchmark
from .convolutions import approx_error_A, critical_lengthscale, spatial_selfconv
from .harness import ALGORITHMS, CostModel, ExperimentConfig, run_experiment, write_summary, write_trace
from .kernels import Hyperparameters, KernelFamily, spatial_correlation

log = logging.getLogger("wdbo")

DEFAULTS = {
    "bench": "rastrigin",
    "algo": "wdbo",
    "alpha": "0.25",
    "seed": "0",
    "seeds": None,
    "duration": "300",
    "cost_model": "synthetic",
    "c0": "0.05",
    "c1": "0.0",
    "c3": "2e-6",
    "beta": "4.0",
    "out": "results",
    "jobs": "1",
    "grid": "64",
    "family": "se",
    "d": "1",
    "x_i": None,
    "x_j": None,
    "samples": "100000",
    "n_grid": "25",
}

FAMILIES = {
    "se": KernelFamily("se", 2.5, None),
    "matern12": KernelFamily("matern", 0.5, None),
    "matern32": KernelFamily("matern", 1.5, None),
    "matern52": KernelFamily("matern", 2.5, None),
}


class CliError(Exception):
    pass


def read_config_file(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in DEFAULTS:
                raise CliError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def _resolve(args) -> dict:
    merged = dict(DEFAULTS)
    if args.config:
        merged.update(read_config_file(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _floats(text) -> list:
    return [float(v) for v in str(text).split(",") if v.strip()]


def _seeds(cfg: dict) -> list:
    if cfg["seeds"] is not None:
        s = str(cfg["seeds"])
        if "," in s:
            return [int(v) for v in s.split(",") if v.strip()]
        return list(range(int(s)))
    return [int(cfg["seed"])]


def _benchmarks(text: str) -> list:
    names = [n.strip() for n in str(text).split(",") if n.strip()]
    out = []
    for n in names:
        try:
            out.append(get_benchmark(n).name)
        except KeyError:
            raise CliError(f"unknown benchmark {n!r}; see 'wdbo list'") from None
    return out


def _algorithm(name: str) -> str:
    if name not in ALGORITHMS:
        raise CliError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
    return name


def _experiment_config(cfg: dict, seed: int, alpha: float) -> ExperimentConfig:
    cost = CostModel(cfg["cost_model"],
                     float(cfg["c0"]), float(cfg["c1"]), float(cfg["c3"]))
    return ExperimentConfig(duration=float(cfg["duration"]), seed=seed, cost=cost,
                            alpha=alpha, beta=float(cfg["beta"]), grid=int(cfg["grid"]))


def _one_run(job):
    algo, bench, ecfg, out = job
    res = run_experiment(algo, bench, ecfg)
    stem = f"{bench}_{algo}_seed{ecfg.seed}"
    if ecfg.alpha is not None and algo == "wdbo":
        stem = f"{bench}_{algo}_a{ecfg.alpha:g}_seed{ecfg.seed}"
    if out is not None:
        write_trace(res, Path(out) / f"{stem}.csv")
        write_summary(res, Path(out) / f"{stem}.json")
    return res.summary()


def _map(jobs: list, n_jobs: int) -> list:
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_one_run(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_one_run, jobs))


def _mean_se(values) -> tuple:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def cmd_run(cfg: dict) -> int:
    bench = _benchmarks(cfg["bench"])
    if len(bench) != 1:
        raise CliError("run takes exactly one benchmark")
    algo = _algorithm(cfg["algo"])
    seeds = _seeds(cfg)
    out = Path(cfg["out"])
    alpha = float(cfg["alpha"])
    jobs = [(algo, bench[0], _experiment_config(cfg, s, alpha), out) for s in seeds]
    summaries = _map(jobs, int(cfg["jobs"]))
    failed = [s for s in summaries if s["error"]]
    for s in summaries:
        print(f"{s['benchmark']} {s['algorithm']} seed={s['seed']} steps={s['n_steps']} "
              f"avg_regret={s['final_avg_regret']:.6g} removed={s['total_removed']} "
              f"size={s['final_dataset_size']}" + (f" error={s['error']}" if s["error"] else ""))
    if len(seeds) > 1:
        mean, se = _mean_se([s["final_avg_regret"] for s in summaries])
        agg = {"benchmark": bench[0], "algorithm": algo, "seeds": seeds,
               "mean_avg_regret": mean, "se_avg_regret": se,
               "mean_final_dataset_size": float(np.mean([s["final_dataset_size"] for s in summaries])),
               "mean_total_removed": float(np.mean([s["total_removed"] for s in summaries]))}
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{bench[0]}_{algo}_aggregate.json", "w") as fh:
            json.dump(agg, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"mean avg_regret={mean:.6g} (se {se:.3g}) over {len(seeds)} seeds")
    return 1 if failed else 0


def normalize_minmax(values) -> list:
    """Min-max normalization to [0, 1]; a zero range maps everything to 0."""
    v = np.asarray(values, dtype=float)
    span = float(v.max() - v.min())
    if span <= 0:
        return [0.0] * v.size
    return [float(x) for x in (v - v.min()) / span]


def cmd_sensitivity(cfg: dict) -> int:
    alphas = _floats(cfg["alpha"])
    if len(alphas) < 2:
        raise CliError("sensitivity needs at least two alphas, e.g. --alpha 0.1,0.25,0.5")
    benches = _benchmarks(cfg["bench"])
    seeds = _seeds(cfg)
    out = Path(cfg["out"])
    rows = []
    for bench in benches:
        jobs = [("wdbo", bench, _experiment_config(cfg, s, a), out) for a in alphas for s in seeds]
        summaries = _map(jobs, int(cfg["jobs"]))
        if any(s["error"] for s in summaries):
            raise CliError(f"a run failed on {bench}")
        stats = []
        for k, a in enumerate(alphas):
            chunk = summaries[k * len(seeds):(k + 1) * len(seeds)]
            stats.append(_mean_se([s["final_avg_regret"] for s in chunk]))
        norm = normalize_minmax([m for m, _ in stats])
        for a, (m, se), nv in zip(alphas, stats, norm):
            rows.append({"benchmark": bench, "alpha": a, "mean_avg_regret": m,
                         "se_avg_regret": se, "normalized_regret": nv})
    mean_norm = {a: float(np.mean([r["normalized_regret"] for r in rows if r["alpha"] == a]))
                 for a in alphas}
    best = min(alphas, key=lambda a: (mean_norm[a], alphas.index(a)))
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sensitivity.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["benchmark", "alpha", "mean_avg_regret", "se_avg_regret",
                    "normalized_regret", "mean_normalized_regret", "best_alpha"])
        for r in rows:
            w.writerow([r["benchmark"], repr(r["alpha"]), repr(r["mean_avg_regret"]),
                        repr(r["se_avg_regret"]), repr(r["normalized_regret"]),
                        repr(mean_norm[r["alpha"]]), repr(best)])
    print(f"wrote {path}; best alpha {best:g}")
    return 0


def _conv_oracle(dist: float, d: int, h: Hyperparameters, samples: int, seed: int) -> float:
    """Independent estimate of the spatial self-convolution at distance ``dist``."""
    if d == 1 or h.family.spatial == "se":
        # SE factorizes per axis; place the offset on the first axis
        def one_axis(delta):
            f = lambda u: (spatial_correlation(abs(u), h) * spatial_correlation(abs(delta - u), h))
            lo, hi = min(0.0, delta) - 40 * h.l_s, max(0.0, delta) + 40 * h.l_s
            pts = sorted({0.0, delta}) if h.family.spatial != "se" else None
            return integrate.quad(f, lo, hi, points=pts, limit=500, epsabs=0, epsrel=1e-12)[0]
        if d == 1:
            return one_axis(dist)
        return one_axis(dist) * one_axis(0.0) ** (d - 1)
    rng = np.random.default_rng(seed)
    scale = h.l_s + 0.5 * dist
    Z = rng.standard_normal((samples, d))
    X = scale * Z
    X[:, 0] += 0.5 * dist
    logq = -0.5 * (Z * Z).sum(1) - d * math.log(scale) - 0.5 * d * math.log(2 * math.pi)
    shift = np.zeros(d)
    shift[0] = dist
    vals = (spatial_correlation(np.linalg.norm(X, axis=1), h)
            * spatial_correlation(np.linalg.norm(X - shift, axis=1), h) * np.exp(-logq))
    return float(vals.mean())


def cmd_diag_conv(cfg: dict) -> int:
    fam_name = cfg["family"]
    if fam_name not in FAMILIES:
        raise CliError(f"unsupported kernel family {fam_name!r}; choose from {', '.join(FAMILIES)}")
    d = int(cfg["d"])
    if d < 1:
        raise CliError("d must be at least 1")
    x_i = np.array(_floats(cfg["x_i"])) if cfg["x_i"] else np.full(d, 0.3)
    x_j = np.array(_floats(cfg["x_j"])) if cfg["x_j"] else np.full(d, 0.6)
    if x_i.size != d or x_j.size != d:
        raise CliError("x_i and x_j must have d coordinates")
    samples = int(float(cfg["samples"]))
    fam = FAMILIES[fam_name]
    dist = float(np.linalg.norm(x_i - x_j))
    crit = critical_lengthscale(x_i, x_j, d)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"diag_conv_{fam_name}_d{d}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["l_s", "A_estimate", "A_stderr", "closed_form", "oracle", "rel_error",
                    "critical_lengthscale"])
        for k, l_s in enumerate(np.logspace(-2, 1, int(cfg["n_grid"]))):
            h = Hyperparameters(1.0, float(l_s), 1.0, 0.0, fam)
            try:
                closed = spatial_selfconv(dist, d, h)
            except ValueError as exc:
                raise CliError(str(exc)) from None
            oracle = _conv_oracle(dist, d, h, samples, seed=k)
            A = approx_error_A(x_i, x_j, h, mc_samples=samples, seed=k)
            rel = abs(closed - oracle) / abs(oracle) if oracle else float("nan")
            w.writerow([repr(float(l_s)), repr(A.value), repr(A.stderr), repr(closed),
                        repr(oracle), repr(rel), repr(crit)])
    print(f"wrote {path}; critical lengthscale {crit:.6g}")
    return 0


def cmd_list(cfg: dict) -> int:
    print("benchmarks:")
    for p in REGISTRY.values():
        print(f"  {p.name:16s} d'={p.dim}  domain=[{p.lower:g}, {p.upper:g}]")
    print("algorithms:")
    for a in ALGORITHMS:
        print(f"  {a}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wdbo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value file; flags take precedence")
        sp.add_argument("--out")
        return sp

    def experiment(sp):
        sp.add_argument("--bench", help="benchmark name (comma list for sensitivity)")
        sp.add_argument("--seed", help="single seed")
        sp.add_argument("--seeds", help="seed count N (seeds 0..N-1) or comma list")
        sp.add_argument("--duration", help="simulated seconds per run")
        sp.add_argument("--cost-model", dest="cost_model", choices=["wall", "synthetic"])
        sp.add_argument("--c0")
        sp.add_argument("--c1")
        sp.add_argument("--c3")
        sp.add_argument("--beta", help="UCB exploration parameter")
        sp.add_argument("--jobs", help="parallel seed workers")
        sp.add_argument("--grid", help="regret-oracle grid points per axis")

    sp = common(sub.add_parser("run", help="run one algorithm on one benchmark"))
    experiment(sp)
    sp.add_argument("--algo")
    sp.add_argument("--alpha")

    sp = common(sub.add_parser("sensitivity", help="alpha sensitivity of W-DBO"))
    experiment(sp)
    sp.add_argument("--alpha", help="comma-separated alpha grid")

    sp = common(sub.add_parser("diag-conv", help="convolution and approximation-error diagnostics"))
    sp.add_argument("--family", help=f"one of {', '.join(FAMILIES)}")
    sp.add_argument("--d")
    sp.add_argument("--x-i", dest="x_i", help="comma-separated coordinates")
    sp.add_argument("--x-j", dest="x_j")
    sp.add_argument("--samples", help="Monte-Carlo samples")
    sp.add_argument("--n-grid", dest="n_grid", help="number of lengthscales")

    common(sub.add_parser("list", help="list benchmarks and algorithms"))
    return p


COMMANDS = {"run": cmd_run, "sensitivity": cmd_sensitivity,
            "diag-conv": cmd_diag_conv, "list": cmd_list}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg)
    except (CliError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
