"""Experiment machinery behind the command-line interface.

Every command follows the same pattern: resolve a problem instance and a
hyperparameter grid from a JSON config, train exact predictors per grid
point and seed, evaluate them empirically, attach the analytical prediction
for the same point, and emit a long-format CSV plus an SVG rendering of it.
Results are deterministic: seeded sampling, deterministic solves, and a
fixed (method, param, seed, metric) output order.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _rng
from .analytic import (
    cdt_coefficients,
    confusion_probabilities_mc,
    la_coefficients,
    ma_approximation_coefficients,
    mm_coefficients,
    per_class_errors_mc,
    score_statistics,
)
from .evaluation import ErrorReport, evaluate_scores, merge_reports
from .gd import LossSpec, gd_train, save_trajectory_csv
from .instances import Dataset, ProblemInstance, make_instance, sample_train
from .kernel_lab import kernel_classify, load_features, rbf_kernel, distance_from_theory, subsample_profile
from .margin import MarginProblem, Predictor, solve_primal
from .svgplot import Series, line_plot
from .tuners import (
    LONGTAIL_10_LISTED,
    LONGTAIL_10_MODIFIED,
    cdt_failure_instance,
    cdt_limit_worst_error,
    exp_longtail_profile,
    geometric_profile,
    la_iota_star,
    ma_delta_star,
    wcelb_ma_opt,
)

__all__ = [
    "ConfigError",
    "SweepConfig",
    "parse_sweep_config",
    "run_sweep",
    "run_dim_scan",
    "run_rho_scan",
    "run_implicit_bias",
    "run_kernel",
    "run_cdt_failure",
    "evaluate_gaussian",
    "default_threads",
    "METRICS",
]

METRICS = ("worst_class_error", "balanced_error", "macro_f1")
KNOWN_METHODS = ("mm", "mm_nobias", "ma", "ma_nobias", "la", "cdt")

THREADS_ENV = "IMBALANCE_LAB_THREADS"


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, n)


def _require(cfg: dict, key: str, kind=None):
    if key not in cfg:
        raise ConfigError(f"config is missing required key {key!r}")
    value = cfg[key]
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"config key {key!r} has wrong type {type(value).__name__}")
    return value


def _parse_rho(value) -> float:
    if value in ("inf", "Infinity", None):
        return math.inf
    rho = float(value)
    if rho < 0:
        raise ConfigError(f"rho must be nonnegative, got {rho}")
    return rho


def parse_instance(cfg: dict) -> ProblemInstance:
    c = int(_require(cfg, "c"))
    d = int(_require(cfg, "d"))
    seed = int(cfg.get("seed", 0))
    if "N" in cfg:
        N = [int(v) for v in cfg["N"]]
    elif "profile" in cfg:
        p = cfg["profile"]
        kind = p.get("kind", "exp")
        if kind == "exp":
            N = list(exp_longtail_profile(c, int(p["n_max"]), float(p["ratio"])))
        elif kind == "geometric":
            N = list(geometric_profile(c, int(p["n_max"]), float(p["ratio"])))
        elif kind == "longtail10":
            N = list(LONGTAIL_10_LISTED)
        elif kind == "modified10":
            N = list(LONGTAIL_10_MODIFIED)
        else:
            raise ConfigError(f"unknown profile kind {kind!r}")
        if len(N) != c:
            raise ConfigError(f"profile produced {len(N)} classes, expected {c}")
    else:
        raise ConfigError("instance needs either N or profile")
    if "s" in cfg:
        s = [float(v) for v in cfg["s"]]
    elif "signal" in cfg:
        sg = cfg["signal"]
        kind = sg.get("kind", "equal")
        if kind == "equal":
            s = [float(sg["value"])] * c
        elif kind == "inverse_sqrt":
            coef = float(sg.get("coef", 1.2))
            s = [coef / math.sqrt(n) for n in N]
        else:
            raise ConfigError(f"unknown signal kind {kind!r}")
    else:
        raise ConfigError("instance needs either s or signal")
    try:
        return make_instance(c, d, N, s, seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_grid(cfg: dict) -> list[float]:
    if "grid" not in cfg:  # reference sweep setup
        cfg = {**cfg, "grid": {"from": 0.0, "to": 2.0, "steps": 21}}
    grid = _require(cfg, "grid", dict)
    lo = float(_require(grid, "from"))
    hi = float(_require(grid, "to"))
    steps = int(_require(grid, "steps"))
    if steps < 1:
        raise ConfigError("grid.steps must be >= 1")
    if steps == 1:
        return [lo]
    if grid.get("log", False):
        if lo <= 0 or hi <= 0:
            raise ConfigError("log grid needs positive endpoints")
        return list(np.geomspace(lo, hi, steps))
    return list(np.linspace(lo, hi, steps))


@dataclass(frozen=True)
class SweepConfig:
    instance: ProblemInstance
    methods: tuple[str, ...]
    tuning: str
    grid: tuple[float, ...]
    seeds: tuple[int, ...]
    rho: float
    mc_samples: int
    test_per_class: int


def parse_sweep_config(cfg: dict) -> SweepConfig:
    instance = parse_instance(_require(cfg, "instance", dict))
    methods = tuple(_require(cfg, "methods", list))
    if not methods:
        raise ConfigError("methods list is empty")
    for m in methods:
        if m not in KNOWN_METHODS:
            raise ConfigError(f"unknown method {m!r}; known: {KNOWN_METHODS}")
    tuning = cfg.get("tuning", "theoretical")
    if tuning not in ("theoretical", "standard"):
        raise ConfigError(f"tuning must be theoretical or standard, got {tuning!r}")
    grid = tuple(_parse_grid(cfg))
    if not grid:
        raise ConfigError("empty hyperparameter grid")
    if len(set(grid)) != len(grid):
        raise ConfigError("hyperparameter grid has duplicate points")
    seeds = tuple(int(v) for v in cfg.get("seeds", [0, 1, 2, 3, 4]))
    if not seeds:
        raise ConfigError("seeds list is empty")
    return SweepConfig(
        instance=instance,
        methods=methods,
        tuning=tuning,
        grid=grid,
        seeds=seeds,
        rho=_parse_rho(cfg.get("rho", 1.0)),
        mc_samples=int(cfg.get("mc_samples", 10_000)),
        test_per_class=int(cfg.get("test_per_class", 500)),
    )


def _method_rho(method: str, rho: float) -> float:
    return math.inf if method.endswith("_nobias") or method == "cdt" else rho


def _hyper_vector(
    method: str, tuning: str, param: float, instance: ProblemInstance, rho: float
):
    """Resolve the per-class hyperparameter vector of a grid point."""
    sizes = instance.sizes
    eff_rho = _method_rho(method, rho)
    if method in ("mm", "mm_nobias"):
        return np.ones(instance.c)
    if method in ("ma", "ma_nobias"):
        if tuning == "theoretical":
            return ma_delta_star(instance, eff_rho) ** param
        return sizes ** (-param)
    if method == "la":
        if tuning == "theoretical":
            return param * la_iota_star(instance, rho)
        return param * np.log(sizes)
    if method == "cdt":
        return sizes ** (-param)
    raise ConfigError(f"unknown method {method!r}")


def _coefficients(method: str, instance: ProblemInstance, vec: np.ndarray, rho: float):
    eff_rho = _method_rho(method, rho)
    if method in ("mm", "mm_nobias"):
        return mm_coefficients(instance, eff_rho)
    if method in ("ma", "ma_nobias"):
        return ma_approximation_coefficients(instance, vec, eff_rho)
    if method == "la":
        return la_coefficients(instance, rho, vec)
    if method == "cdt":
        return cdt_coefficients(instance, vec)
    raise ConfigError(f"unknown method {method!r}")


def _macro_f1_from_probs(conf: np.ndarray) -> float:
    c = conf.shape[0]
    f1 = np.zeros(c)
    for y in range(c):
        tp = conf[y, y]
        fp = conf[:, y].sum() - tp
        fn = conf[y, :].sum() - tp
        denom = 2 * tp + fp + fn
        f1[y] = 0.0 if denom == 0 else 2 * tp / denom
    return float(f1.mean())


def analytic_metrics(
    method: str,
    instance: ProblemInstance,
    vec: np.ndarray,
    rho: float,
    mc_samples: int,
    mc_seed: int = 0,
) -> dict[str, float]:
    """Analytical worst-class / balanced error and macro F1 for a grid point."""
    coeffs = _coefficients(method, instance, vec, rho)
    stats = score_statistics(instance, coeffs)
    per_class = per_class_errors_mc(stats, n_samples=mc_samples, seed=mc_seed)
    conf = confusion_probabilities_mc(stats, n_samples=mc_samples, seed=mc_seed)
    return {
        "worst_class_error": float(per_class.max()),
        "balanced_error": float(per_class.mean()),
        "macro_f1": _macro_f1_from_probs(conf),
    }


def evaluate_gaussian(
    predictor: Predictor,
    instance: ProblemInstance,
    per_class: int,
    seed: int,
    max_chunk_elems: int = 5_000_000,
) -> ErrorReport:
    """Evaluate on a balanced Gaussian test set without materializing it.

    Streams each class's test points in chunks drawn from the same noise
    substream as sample_test, so the result is identical to evaluating on
    the full in-memory test set.
    """
    mu = instance.means()
    sigma = math.sqrt(instance.sigma2)
    rows = max(1, max_chunk_elems // instance.d)
    shards = []
    for k in range(instance.c):
        g = _rng.substream(seed, _rng.TEST_NOISE, k)
        remaining = per_class
        while remaining > 0:
            m = min(rows, remaining)
            X = mu[:, k][None, :] + sigma * g.standard_normal((m, instance.d))
            scores = X @ predictor.W + predictor.b[None, :]
            shards.append(evaluate_scores_partial(scores, k, instance.c))
            remaining -= m
    return merge_reports(shards)


def evaluate_scores_partial(scores: np.ndarray, label: int, c: int) -> ErrorReport:
    y = np.full(scores.shape[0], label, dtype=np.int64)
    n = scores.shape[0]
    pred = np.argmax(scores, axis=1)
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (y, pred), 1)
    per_class = np.zeros(c)
    per_class[label] = 1.0 - confusion[label, label] / n
    true_scores = scores[:, label]
    beats = (scores > true_scores[:, None]).astype(np.float64)
    pairwise = np.zeros((c, c))
    pairwise[label] = beats.sum(axis=0) / n
    return ErrorReport(
        per_class_error=per_class,
        worst_class_error=float(per_class.max()),
        balanced_error=float(per_class.mean()),
        macro_f1=0.0,
        confusion=confusion,
        pairwise=pairwise,
    )


def train_point(
    instance: ProblemInstance,
    method: str,
    tuning: str,
    param: float,
    rho: float,
    train: Dataset | None = None,
) -> Predictor:
    """Solve the exact margin problem of one grid point."""
    if train is None:
        train = sample_train(instance)
    eff_rho = _method_rho(method, rho)
    vec = _hyper_vector(method, tuning, param, instance, rho)
    if method == "la":
        base = solve_primal(train, MarginProblem.max_margin(instance.c, rho))
        return Predictor(W=base.W, b=base.b - vec, beta=base.beta, meta={**base.meta, "iota": list(vec)})
    if method in ("mm", "mm_nobias"):
        problem = MarginProblem.max_margin(instance.c, eff_rho)
    elif method in ("ma", "ma_nobias"):
        problem = MarginProblem.margin_adjust(vec, eff_rho)
    else:
        problem = MarginProblem.class_temperature(vec)
    return solve_primal(train, problem)


def _sweep_job(args) -> list[dict]:
    """All grid points of one (method, seed): exploits shared solves."""
    config, method, seed = args
    instance = replace(config.instance, seed=seed)
    train = sample_train(instance)
    rows: list[dict] = []
    base_mm: Predictor | None = None
    for param in config.grid:
        if method == "la":
            if base_mm is None:
                base_mm = solve_primal(train, MarginProblem.max_margin(instance.c, config.rho))
            vec = _hyper_vector(method, config.tuning, param, instance, config.rho)
            predictor = Predictor(W=base_mm.W, b=base_mm.b - vec, beta=base_mm.beta)
        else:
            predictor = train_point(instance, method, config.tuning, param, config.rho, train)
        report = evaluate_gaussian(predictor, instance, config.test_per_class, seed=seed + 7_777)
        empirical = {
            "worst_class_error": report.worst_class_error,
            "balanced_error": report.balanced_error,
            "macro_f1": report.macro_f1,
        }
        for metric in METRICS:
            rows.append(
                {
                    "method": method,
                    "param": param,
                    "seed": seed,
                    "metric": metric,
                    "value": empirical[metric],
                }
            )
    return rows


def _attach_analytic(rows: list[dict], config: SweepConfig) -> None:
    cache: dict[tuple[str, float], dict[str, float]] = {}
    for row in rows:
        key = (row["method"], row["param"])
        if key not in cache:
            vec = _hyper_vector(row["method"], config.tuning, row["param"], config.instance, config.rho)
            cache[key] = analytic_metrics(
                row["method"], config.instance, vec, config.rho, config.mc_samples
            )
        row["analytic_value"] = cache[key][row["metric"]]


def _write_rows_csv(rows: list[dict], path: Path) -> None:
    rows = sorted(rows, key=lambda r: (r["method"], r["param"], r["seed"], r["metric"]))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "param", "seed", "metric", "value", "analytic_value"])
        for r in rows:
            analytic = r.get("analytic_value", "")
            writer.writerow(
                [
                    r["method"],
                    f"{r['param']:.12g}",
                    r["seed"],
                    r["metric"],
                    f"{r['value']:.12g}",
                    "" if analytic == "" else f"{analytic:.12g}",
                ]
            )


def _plot_rows(rows: list[dict], out_dir: Path, stem: str, xlabel: str, log_x: bool = False) -> list[Path]:
    paths = []
    by_metric: dict[str, dict[str, dict[float, list[float]]]] = {}
    analytic: dict[str, dict[str, dict[float, float]]] = {}
    for r in rows:
        m = by_metric.setdefault(r["metric"], {}).setdefault(r["method"], {})
        m.setdefault(r["param"], []).append(r["value"])
        if r.get("analytic_value", "") != "":
            analytic.setdefault(r["metric"], {}).setdefault(r["method"], {})[r["param"]] = r["analytic_value"]
    for metric, methods in sorted(by_metric.items()):
        series = []
        for method, pts in sorted(methods.items()):
            xs = sorted(pts)
            means = [float(np.mean(pts[x])) for x in xs]
            stds = [float(np.std(pts[x])) for x in xs]
            over = analytic.get(metric, {}).get(method)
            series.append(
                Series(
                    label=method,
                    x=xs,
                    y=means,
                    band_low=[m - 2 * s for m, s in zip(means, stds)],
                    band_high=[m + 2 * s for m, s in zip(means, stds)],
                    overlay=[over[x] for x in xs] if over else None,
                )
            )
        path = out_dir / f"{stem}_{metric}.svg"
        line_plot(path, series, title=f"{metric} (band: +-2 std over seeds; dashed: analytic)",
                  xlabel=xlabel, ylabel=metric, log_x=log_x)
        paths.append(path)
    return paths


def _run_jobs(jobs, worker, threads: int) -> list:
    if threads <= 1:
        return [worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, jobs))


def run_sweep(config: SweepConfig, out_dir: Path, threads: int = 1) -> Path:
    """Hyperparameter sweep: CSV of empirical vs analytic metrics, plus SVGs."""
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(config, method, seed) for method in config.methods for seed in config.seeds]
    rows = [r for chunk in _run_jobs(jobs, _sweep_job, threads) for r in chunk]
    _attach_analytic(rows, config)
    csv_path = out_dir / "sweep.csv"
    _write_rows_csv(rows, csv_path)
    _plot_rows(rows, out_dir, "sweep", xlabel="tuning parameter")
    return csv_path


def run_dim_scan(cfg: dict, out_dir: Path, threads: int = 1) -> Path:
    """Worst-class error versus dimension at theoretical tuning."""
    out_dir.mkdir(parents=True, exist_ok=True)
    base = parse_instance(_require(cfg, "instance", dict))
    dims = cfg.get("dims")
    if dims is None:
        g = cfg.get("dim_grid", {"from": 1e3, "to": 1e5, "steps": 5})
        dims = [int(v) for v in np.geomspace(float(g["from"]), float(g["to"]), int(g["steps"]))]
    methods = tuple(cfg.get("methods", ["mm_nobias", "ma", "la", "cdt"]))
    seeds = tuple(int(v) for v in cfg.get("seeds", [0, 1, 2, 3, 4]))
    rho = _parse_rho(cfg.get("rho", 1.0))
    mc_samples = int(cfg.get("mc_samples", 10_000))
    per_class = int(cfg.get("test_per_class", 500))
    rows = []
    for d in dims:
        inst = replace(base, d=int(d))
        sub = SweepConfig(
            instance=inst, methods=methods, tuning="theoretical", grid=(1.0,),
            seeds=seeds, rho=rho, mc_samples=mc_samples, test_per_class=per_class,
        )
        jobs = [(sub, method, seed) for method in methods for seed in seeds]
        for chunk in _run_jobs(jobs, _sweep_job, threads):
            for r in chunk:
                r["param"] = float(d)
                rows.append(r)
        cache = {
            m: analytic_metrics(m, inst, _hyper_vector(m, "theoretical", 1.0, inst, rho), rho, mc_samples)
            for m in methods
        }
        for r in rows:
            if r["param"] == float(d) and "analytic_value" not in r:
                r["analytic_value"] = cache[r["method"]][r["metric"]]
    csv_path = out_dir / "dim_scan.csv"
    _write_rows_csv(rows, csv_path)
    _plot_rows(rows, out_dir, "dim_scan", xlabel="dimension", log_x=True)
    return csv_path


def run_rho_scan(cfg: dict, out_dir: Path, threads: int = 1) -> Path:
    """Error versus bias coupling rho at theoretical tuning (param = rho)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    inst = parse_instance(_require(cfg, "instance", dict))
    rhos = cfg.get("rhos")
    if rhos is None:
        g = cfg.get("rho_grid", {"from": 0.1, "to": 100.0, "steps": 8, "scale_sqrt_d": True})
        lo, hi = float(g["from"]), float(g["to"])
        if g.get("scale_sqrt_d", True):
            lo, hi = lo * math.sqrt(inst.d), hi * math.sqrt(inst.d)
        rhos = list(np.geomspace(lo, hi, int(g["steps"])))
    methods = tuple(cfg.get("methods", ["mm", "ma", "la"]))
    seeds = tuple(int(v) for v in cfg.get("seeds", [0, 1, 2, 3, 4]))
    mc_samples = int(cfg.get("mc_samples", 10_000))
    per_class = int(cfg.get("test_per_class", 500))
    jobs = []
    for rho in rhos:
        sub = SweepConfig(
            instance=inst, methods=methods, tuning="theoretical", grid=(1.0,),
            seeds=seeds, rho=float(rho), mc_samples=mc_samples, test_per_class=per_class,
        )
        jobs.extend((sub, method, seed) for method in methods for seed in seeds)
    rows = []
    for (sub, method, seed), chunk in zip(jobs, _run_jobs(jobs, _sweep_job, threads)):
        for r in chunk:
            r["param"] = sub.rho
            rows.append(r)
    cache: dict[tuple[str, float], dict] = {}
    for r in rows:
        key = (r["method"], r["param"])
        if key not in cache:
            vec = _hyper_vector(r["method"], "theoretical", 1.0, inst, r["param"])
            cache[key] = analytic_metrics(r["method"], inst, vec, r["param"], mc_samples)
        r["analytic_value"] = cache[key][r["metric"]]
    csv_path = out_dir / "rho_scan.csv"
    _write_rows_csv(rows, csv_path)
    _plot_rows(rows, out_dir, "rho_scan", xlabel="rho", log_x=True)
    return csv_path


def run_implicit_bias(cfg: dict, out_dir: Path, threads: int = 1) -> Path:
    """Gradient-descent direction convergence toward the margin solutions."""
    out_dir.mkdir(parents=True, exist_ok=True)
    inst = parse_instance(_require(cfg, "instance", dict))
    losses = tuple(cfg.get("losses", ["ce", "ma", "la", "cdt"]))
    seeds = tuple(int(v) for v in cfg.get("seeds", [0]))
    rho = _parse_rho(cfg.get("rho", "inf"))
    steps = int(cfg.get("steps", 20_000))
    step_rule = cfg.get("step_rule", "polyak")
    gamma = float(cfg.get("gamma", 1.0))
    summary = []
    curves = []
    for loss in losses:
        for seed in seeds:
            instance = replace(inst, seed=seed)
            train = sample_train(instance)
            if loss in ("ce", "la"):
                problem = MarginProblem.max_margin(inst.c, rho)
            elif loss == "ma":
                delta = ma_delta_star(instance, rho) ** gamma
                problem = MarginProblem.margin_adjust(delta, rho)
            elif loss == "cdt":
                delta = instance.sizes ** (-gamma)
                problem = MarginProblem.class_temperature(delta)
            else:
                raise ConfigError(f"unknown loss {loss!r}")
            reference = solve_primal(train, problem)
            spec = _loss_spec(loss, problem, rho, instance, gamma)
            traj = gd_train(train, spec, steps=steps, step_rule=step_rule, reference=reference)
            traj_path = out_dir / f"trajectory_{loss}_seed{seed}.csv"
            save_trajectory_csv(traj, traj_path)
            curves.append(
                Series(
                    label=f"{loss} seed{seed}",
                    x=[max(p.step, 1) for p in traj.points],
                    y=[p.cosine_to_reference for p in traj.points],
                )
            )
            summary.append(
                {
                    "method": loss,
                    "param": gamma,
                    "seed": seed,
                    "metric": "final_cosine",
                    "value": traj.final.cosine_to_reference,
                    "analytic_value": 1.0,
                }
            )
    csv_path = out_dir / "implicit_bias.csv"
    _write_rows_csv(summary, csv_path)
    line_plot(out_dir / "implicit_bias.svg", curves, title="direction cosine to margin solution",
              xlabel="step", ylabel="cosine", log_x=True)
    return csv_path


def _loss_spec(loss: str, problem: MarginProblem, rho: float, instance: ProblemInstance, gamma: float) -> LossSpec:
    if loss == "ce":
        return LossSpec(kind="ce", rho=rho)
    if loss == "ma":
        return LossSpec(kind="ma", delta=problem.delta, rho=rho)
    if loss == "cdt":
        return LossSpec(kind="cdt", delta=problem.delta, rho=math.inf)
    if loss == "la":
        iota = tuple(gamma * la_iota_star(instance, rho))
        return LossSpec(kind="la", iota=iota, rho=rho)
    raise ConfigError(f"unknown loss {loss!r}")


def run_kernel(cfg: dict, out_dir: Path, threads: int = 1) -> Path:
    """RBF-kernel classification over a (zeta, method, param, seed) grid."""
    out_dir.mkdir(parents=True, exist_ok=True)
    normalize = bool(cfg.get("normalize", False))
    train_all = load_features(_require(cfg, "train_features", str), normalize=normalize)
    test = load_features(_require(cfg, "test_features", str), c=train_all.c, normalize=normalize)
    profile = cfg.get("profile")
    if profile == "longtail10":
        sizes = LONGTAIL_10_LISTED
    elif profile == "modified10":
        sizes = LONGTAIL_10_MODIFIED
    elif profile is None:
        sizes = tuple(train_all.class_counts())
    else:
        sizes = tuple(int(v) for v in profile)
    zetas = [float(z) for z in cfg.get("zetas", [5.0, 6.0, 7.0, 8.0])]
    methods = tuple(cfg.get("methods", ["ma", "la", "cdt"]))
    grid = tuple(_parse_grid(cfg)) if "grid" in cfg else (1.0,)
    seeds = tuple(int(v) for v in cfg.get("seeds", [0]))
    rho = _parse_rho(cfg.get("rho", 1.0))

    rows = []
    details = []
    for seed in seeds:
        sub = subsample_profile(train_all, sizes, seed=seed)
        sizes_arr = np.asarray(sizes, dtype=np.float64)
        for zeta in zetas:
            dt = distance_from_theory(rbf_kernel(sub.X, zeta), sub.y)
            details.append({"zeta": zeta, "seed": seed, "distance_from_theory": dt})
            for method in methods:
                for param in grid:
                    vec, problem, post_iota = _kernel_point(method, param, sizes_arr, rho)
                    if post_iota is not None:
                        from .margin import solve_kernel
                        from .kernel_lab import rbf_cross
                        sol = solve_kernel(rbf_kernel(sub.X, zeta), sub.y, problem)
                        scores = rbf_cross(sub.X, test.X, zeta).T @ sol.beta + (sol.bias - post_iota)[None, :]
                        report = evaluate_scores(scores, test.y, test.c)
                    else:
                        report = kernel_classify(sub, test, zeta, problem)
                    for metric in METRICS:
                        rows.append(
                            {
                                "method": f"{method}@zeta={zeta:g}",
                                "param": param,
                                "seed": seed,
                                "metric": metric,
                                "value": getattr(report, metric),
                                "analytic_value": "",
                            }
                        )
                    details.append(
                        {
                            "zeta": zeta,
                            "method": method,
                            "param": param,
                            "seed": seed,
                            "report": report.to_dict(),
                        }
                    )
    csv_path = out_dir / "kernel.csv"
    _write_rows_csv(rows, csv_path)
    (out_dir / "kernel.json").write_text(json.dumps(details, indent=2) + "\n")
    _plot_rows(rows, out_dir, "kernel", xlabel="tuning parameter")
    return csv_path


def _kernel_point(method: str, param: float, sizes: np.ndarray, rho: float):
    """Margin problem (and optional post-hoc bias shift) of a kernel run point.

    Real-feature tuning treats signals as equal: delta = N^-param for MA and
    CDT, iota = param * N / sum(N) for LA.
    """
    if method in ("mm", "mm_nobias"):
        return None, MarginProblem.max_margin(sizes.size, _method_rho(method, rho)), None
    if method in ("ma", "ma_nobias"):
        delta = sizes ** (-param)
        return delta, MarginProblem.margin_adjust(delta, _method_rho(method, rho)), None
    if method == "cdt":
        delta = sizes ** (-param)
        return delta, MarginProblem.class_temperature(delta), None
    if method == "la":
        iota = param * sizes / sizes.sum()
        return iota, MarginProblem.max_margin(sizes.size, rho), iota
    raise ConfigError(f"unknown method {method!r}")


def run_cdt_failure(epsilon: float, c: int, out_dir: Path) -> Path:
    """Construct and audit a hard instance for class-dependent temperature."""
    out_dir.mkdir(parents=True, exist_ok=True)
    N, s = cdt_failure_instance(epsilon, c)
    inst = make_instance(c, max(c, 1000), N, s, seed=0)
    gammas = np.linspace(0.0, 3.0, 61)
    bounds = [cdt_limit_worst_error(inst, inst.sizes ** (-g)) for g in gammas]
    ma_value = wcelb_ma_opt(inst, math.inf)
    payload = {
        "epsilon": epsilon,
        "c": c,
        "N": list(N),
        "s": list(s),
        "gamma_grid": [float(g) for g in gammas],
        "cdt_worst_class_bound": [float(b) for b in bounds],
        "min_cdt_bound": float(min(bounds)),
        "target": 0.5 - epsilon,
        "wcelb_ma_opt_nobias": float(ma_value),
    }
    (out_dir / "cdt_failure.json").write_text(json.dumps(payload, indent=2) + "\n")
    rows = [
        {"method": "cdt", "param": float(g), "seed": 0, "metric": "worst_class_bound",
         "value": float(b), "analytic_value": float(b)}
        for g, b in zip(gammas, bounds)
    ]
    csv_path = out_dir / "cdt_failure.csv"
    _write_rows_csv(rows, csv_path)
    line_plot(
        out_dir / "cdt_failure.svg",
        [Series(label="cdt bound", x=[float(g) for g in gammas], y=[float(b) for b in bounds]),
         Series(label="ma (optimal margins)", x=[float(g) for g in gammas], y=[ma_value] * len(gammas))],
        title=f"limit worst-class bound, c={c}, eps={epsilon}",
        xlabel="gamma (delta = N^-gamma)", ylabel="bound",
    )
    return csv_path
