"""Declarative experiments: Monte Carlo runs, random search, sparsity sweeps,
per-iteration timing and ingestion of external streams."""
import copy
import csv
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path as FsPath

import numpy as np
import yaml

from .baselines import AdaptiveVar
from .cgp import (
    SignalStream,
    _parse_numeric_csv,
    generate_filter_coeffs,
    load_stream_csv,
    simulate_cgp,
    simulate_switching_cgp,
)
from .core import AdaCGP, EstimatorConfig
from .graphs import (
    ParameterError,
    Topology,
    generate_gso,
    load_gso_csv,
    save_gso_csv,
)
from .metrics import classify_edges
from .trace import run_adacgp

# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

# nested section -> keys it may hold; top-level keys are looked up here too
SECTIONS = {
    "graph": ("topology", "n", "gso_path"),
    "process": ("P", "T", "burn_in", "switch_every", "stream_path", "mask_path", "normalize"),
    "run": ("variant", "seeds", "monte_carlo_runs", "workers", "out", "window", "baseline"),
}

SEARCH_DEFAULTS = {
    "trials": 200,
    "seed": 0,
    "mu": [0.001, 1.0],
    "eta": [0.005, 0.1, 0.005],
    "gamma": [0.05, 2.0, 0.05],
    "lam": [0.80, 0.99, 0.01],
}
BENCH_DEFAULTS = {
    "sizes": [25, 50, 100, 200, 400],
    "reps": 3,
    "steps": 20,
    "min_time": 0.05,
    "algorithms": ["adacgp", "baseline"],
    "step_size": 1e-4,
}


@dataclass
class ExperimentConfig:
    """Everything one experiment needs; see ``configs/SCHEMA.md`` for the file format.

    ``estimator`` holds :class:`~adacgp.core.EstimatorConfig` overrides,
    ``baseline`` (or ``None``) the keyword arguments of
    :class:`~adacgp.baselines.AdaptiveVar`.
    """

    topology: str = "random"
    n: int = 50
    gso_path: object = None
    P: int = 3
    T: int = 10000
    burn_in: int = 1000
    switch_every: object = None
    stream_path: object = None
    mask_path: object = None
    normalize: bool = True
    variant: str = "p1-debias"
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    monte_carlo_runs: object = None
    workers: int = 1
    out: object = None
    window: object = None
    baseline: object = None
    estimator: dict = field(default_factory=dict)
    search: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    bench: dict = field(default_factory=dict)

    def __post_init__(self):
        self.topology = Topology.parse(self.topology).value
        self.n, self.P, self.T, self.burn_in = int(self.n), int(self.P), int(self.T), int(self.burn_in)
        if self.T <= 0 or self.burn_in < 0 or self.n < 1:
            raise ParameterError("need T > 0, burn_in >= 0 and n >= 1")
        if self.monte_carlo_runs is not None:
            # the first k listed seeds, or 0..k-1 when too few are listed
            k = int(self.monte_carlo_runs)
            self.seeds = list(self.seeds)[:k] if len(self.seeds) >= k else list(range(k))
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ParameterError("at least one seed is required")
        self.estimator = dict(self.estimator or {})
        self.estimator_config()  # validate early
        self.search = {**SEARCH_DEFAULTS, **(self.search or {})}
        self.bench = {**BENCH_DEFAULTS, **(self.bench or {})}
        self.sweep = dict(self.sweep or {})

    def estimator_config(self, **overrides):
        kw = {**self.estimator, **overrides}
        kw.setdefault("P", self.P)
        if self.mask_path is not None and "mask" not in kw:
            kw["mask"] = load_mask_csv(self.mask_path)
        return EstimatorConfig.from_variant(self.variant, **kw)

    @property
    def patience_window(self):
        if self.window is not None:
            return int(self.window)
        return int(self.estimator.get("patience", EstimatorConfig.patience))

    def to_dict(self):
        d = asdict(self)
        for k in ("gso_path", "stream_path", "mask_path", "out"):
            if d[k] is not None:
                d[k] = str(d[k])
        return d

    def with_(self, **changes):
        d = copy.deepcopy(self.to_dict())
        d.update(changes)
        return ExperimentConfig(**d)


def _flatten(raw):
    known = {f.name for f in fields(ExperimentConfig)}
    flat = {}
    for key, value in raw.items():
        if key in SECTIONS and isinstance(value, dict):
            for sub, v in value.items():
                if sub not in SECTIONS[key]:
                    raise ParameterError(f"unknown key {sub!r} in section [{key}]")
                flat[sub] = v
        elif key in known:
            flat[key] = value
        else:
            raise ParameterError(f"unknown config key {key!r}")
    return flat


def config_from_dict(raw):
    return ExperimentConfig(**_flatten(raw or {}))


def load_config(path):
    """Read a YAML experiment config (flat keys and/or nested sections)."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ParameterError(f"{path}: top level must be a mapping")
    return config_from_dict(raw)


def save_config(config, path):
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------

def seed_streams(seed):
    """Independent integer seeds for the GSO, the coefficients and the noise."""
    return [int(s) for s in np.random.SeedSequence(int(seed)).generate_state(3)]


def make_problem(config, seed):
    """``(gso_list, coeffs, stream)`` for one Monte Carlo seed."""
    g_seed, h_seed, x_seed = seed_streams(seed)
    h = generate_filter_coeffs(config.P, h_seed)
    if config.gso_path is not None:
        gsos = [load_gso_csv(config.gso_path)]
    elif config.switch_every:
        n_seg = math.ceil(config.T / int(config.switch_every))
        gsos = [generate_gso(config.topology, config.n, g_seed + k) for k in range(n_seg)]
    else:
        gsos = [generate_gso(config.topology, config.n, g_seed)]
    if len(gsos) > 1:
        stream = simulate_switching_cgp(gsos, h, int(config.switch_every), config.T, config.burn_in, x_seed)
    else:
        stream = simulate_cgp(gsos[0], h, config.T, config.burn_in, x_seed)
    return gsos, h, stream


def load_mask_csv(path):
    m = _parse_numeric_csv(path, what="mask")
    if m.shape[0] != m.shape[1]:
        raise ParameterError(f"{path}: mask must be square, got {m.shape[0]}x{m.shape[1]}")
    if not np.all((m == 0) | (m == 1)):
        raise ParameterError(f"{path}: mask cells must be 0 or 1")
    return m.astype(bool)


def ingest_stream(path, mask_path=None, normalize=True):
    """Load a CSV stream (rows = time) and an optional ``N x N`` 0/1 mask.

    Each channel is shifted/scaled to zero mean and unit standard deviation
    unless ``normalize=False``; a constant channel is set to zero with a warning.
    """
    stream = load_stream_csv(path)
    x = stream.samples
    if normalize:
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        flat = std == 0
        if np.any(flat):
            warnings.warn(f"{path}: constant channel(s) {np.flatnonzero(flat).tolist()} set to zero",
                          RuntimeWarning, stacklevel=2)
        x = np.where(flat, 0.0, (x - mean) / np.where(flat, 1.0, std))
    mask = None
    if mask_path is not None:
        mask = load_mask_csv(mask_path)
        if mask.shape != (x.shape[1], x.shape[1]):
            raise ParameterError(
                f"{mask_path}: mask is {mask.shape[0]}x{mask.shape[1]} but the stream has {x.shape[1]} nodes"
            )
    return SignalStream(x), mask


# ---------------------------------------------------------------------------
# Monte Carlo runs
# ---------------------------------------------------------------------------

METRICS = ("nmse_psi", "nmse_h", "nmse_w", "p_miss", "p_false_alarm", "f1", "nnz_w")


def _window_metrics(trace, w_true, window):
    out = {k: trace.window_mean(k, window) for k in METRICS}
    if w_true is not None and trace.final_W is not None:
        rep = classify_edges(w_true, trace.final_W)
        out["est_nnz"], out["true_nnz"] = rep.est_nnz, rep.true_nnz
    return out


def _make_estimator(config, algorithm, n, est_cfg):
    if algorithm == "adacgp":
        return AdaCGP(n, est_cfg)
    kw = {"P": config.P, **(config.baseline or {})}
    return AdaptiveVar(n, **kw)


def run_single(config, seed, algorithm="adacgp", est_overrides=None, stream=None, w_true=None):
    """One estimator on one seed; returns ``(record, trace, gsos)``."""
    gsos = None
    if stream is None and config.stream_path is not None:
        stream, _ = ingest_stream(config.stream_path, normalize=config.normalize)
        if config.gso_path is not None:
            gsos = [load_gso_csv(config.gso_path)]
            w_true = gsos[0].weights
    elif stream is None:
        gsos, _, stream = make_problem(config, seed)
        w_true = gsos[-1].weights
    est_cfg = config.estimator_config(**(est_overrides or {}))
    est = _make_estimator(config, algorithm, stream.n, est_cfg)
    t0 = time.perf_counter()
    est, trace = run_adacgp(stream, est_cfg, w_true=w_true, estimator=est)
    elapsed = time.perf_counter() - t0
    record = {
        "seed": int(seed),
        "algorithm": algorithm,
        "steps": len(trace),
        "diverged_at": trace.diverged_at,
        "switch_step": trace.switch_step,
        "terminal_step": trace.terminal_step,
        "metrics": _window_metrics(trace, w_true, config.patience_window),
        "seconds": elapsed,
    }
    return record, trace, gsos


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def aggregate(records):
    """Mean and (population) standard deviation of every metric over non-diverged records."""
    ok = [r for r in records if r["diverged_at"] is None]
    keys = sorted({k for r in ok for k in r["metrics"]})
    agg = {}
    for k in keys:
        vals = np.array([r["metrics"][k] for r in ok if r["metrics"].get(k) is not None], dtype=float)
        vals = vals[np.isfinite(vals)]
        agg[k] = {"mean": float(vals.mean()) if vals.size else math.nan,
                  "std": float(vals.std()) if vals.size else math.nan,
                  "count": int(vals.size)}
    return agg


@dataclass
class ResultSet:
    config: dict
    records: list
    summary: dict
    traces: dict = field(default_factory=dict, repr=False)

    def to_json(self):
        return {"config": _clean(self.config), "summary": _clean(self.summary),
                "records": _clean([{k: v for k, v in r.items() if k != "seconds"} for r in self.records])}

    def mean(self, algorithm, metric):
        return self.summary[algorithm][metric]["mean"]

    def per_seed(self, algorithm, metric):
        return [r["metrics"].get(metric) for r in self.records if r["algorithm"] == algorithm]


def _job(args):
    config, seed, algorithm = args
    record, trace, gsos = run_single(config, seed, algorithm)
    return record, trace, gsos


def run_experiment(config, write=True):
    """Run every seed (and the baseline when configured) and aggregate.

    Divergent runs are kept in ``records`` with ``diverged_at`` set and left
    out of the summary.  With ``config.out`` set and ``write=True`` the
    directory receives ``results.json``, ``results.csv``, ``timing.json``,
    ``trace.jsonl`` and ``gso_*.csv``.
    """
    algorithms = ["adacgp"] + (["baseline"] if config.baseline is not None else [])
    jobs = [(config, s, a) for a in algorithms for s in config.seeds]
    if config.workers and int(config.workers) > 1:
        with ProcessPoolExecutor(max_workers=int(config.workers)) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    records = [r for r, _, _ in results]
    summary = {a: aggregate([r for r in records if r["algorithm"] == a]) for a in algorithms}
    rs = ResultSet(config.to_dict(), records, summary,
                   traces={(r["algorithm"], r["seed"]): t for r, t, _ in results})
    if write and config.out is not None:
        write_results(rs, results, config.out)
    return rs


def write_results(rs, results, out):
    out = FsPath(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.json", "w") as fh:
        json.dump(rs.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "timing.json", "w") as fh:
        json.dump([{"algorithm": r["algorithm"], "seed": r["seed"], "seconds": r["seconds"]} for r in rs.records],
                  fh, indent=2)
    metric_names = sorted({k for r in rs.records for k in r["metrics"]})
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["algorithm", "seed", "diverged_at", *metric_names])
        for r in rs.records:
            w.writerow([r["algorithm"], r["seed"], r["diverged_at"] if r["diverged_at"] is not None else "",
                        *[_fmt(r["metrics"].get(k)) for k in metric_names]])
    with open(out / "trace.jsonl", "w") as fh:
        for record, trace, _ in results:
            for row in trace.rows():
                fh.write(json.dumps({"algorithm": record["algorithm"], "seed": record["seed"], **row}) + "\n")
    for record, trace, gsos in results:
        tag = f"{record['algorithm']}_seed{record['seed']}"
        if gsos is not None and record["algorithm"] == "adacgp":
            save_gso_csv(out / f"gso_true_seed{record['seed']}.csv", gsos[-1])
        if trace.final_W is not None:
            save_gso_csv(out / f"gso_est_{tag}.csv", trace.final_W)
        for t, W in zip(trace.snapshot_steps, trace.snapshots):
            save_gso_csv(out / f"gso_snap_{tag}_t{t}.csv", W)


def _fmt(v):
    if v is None:
        return ""
    v = float(v)
    return repr(v) if math.isfinite(v) else ""


# ---------------------------------------------------------------------------
# hyper-parameter search and sparsity sweep
# ---------------------------------------------------------------------------

def _grid(lo, hi, step):
    # half-open (lo, hi] on a regular lattice
    k = np.arange(1, int(round((hi - lo) / step)) + 1)
    return np.round(lo + k * step, 10)


def sample_hyperparameters(rng, space):
    lo, hi = space["mu"]
    mu = float(hi - (hi - lo) * rng.random())  # uniform on (lo, hi]
    return {
        "mu": mu,
        "eta": float(rng.choice(_grid(*space["eta"]))),
        "gamma": float(rng.choice(_grid(*space["gamma"]))),
        "lam": float(rng.choice(_grid(*space["lam"]))),
    }


def objective_value(record):
    """Steady-state NMSE(x_h); prediction NMSE of the filter bank when no coefficient stage ran."""
    m = record["metrics"]
    v = m.get("nmse_h")
    if v is None or not math.isfinite(v):
        v = m.get("nmse_psi")
    return v if v is not None and math.isfinite(v) else math.inf


def evaluate_params(config, params):
    records = [run_single(config, s, "adacgp", est_overrides=params)[0] for s in config.seeds]
    diverged = [r["seed"] for r in records if r["diverged_at"] is not None]
    vals = [objective_value(r) for r in records if r["diverged_at"] is None]
    score = float(np.mean(vals)) if vals and not diverged else math.inf
    return {"params": params, "objective": score, "diverged_seeds": diverged,
            "metrics": aggregate(records)}


class SearchFailed(RuntimeError):
    def __init__(self, message, leaderboard):
        super().__init__(message)
        self.leaderboard = leaderboard


def _eval_job(args):
    config, params = args
    return evaluate_params(config, params)


def hyperparameter_search(config, trials=None, seed=None, candidates=None):
    """Random search; returns ``(best ExperimentConfig, leaderboard)``.

    The leaderboard is sorted by objective (diverged trials last, objective
    ``inf``).  ``candidates`` replaces random sampling with an explicit list of
    parameter dicts.
    """
    space = config.search
    trials = int(space["trials"] if trials is None else trials)
    if trials < 1 and candidates is None:
        raise ParameterError("need at least one trial")
    rng = np.random.default_rng(space["seed"] if seed is None else seed)
    if candidates is None:
        candidates = [sample_hyperparameters(rng, space) for _ in range(trials)]
    jobs = [(config, p) for p in candidates]
    if config.workers and int(config.workers) > 1:
        with ProcessPoolExecutor(max_workers=int(config.workers)) as pool:
            board = list(pool.map(_eval_job, jobs))
    else:
        board = [_eval_job(j) for j in jobs]
    for i, entry in enumerate(board):
        entry["trial"] = i
    board.sort(key=lambda e: (e["objective"], e["trial"]))
    if not math.isfinite(board[0]["objective"]):
        raise SearchFailed(f"all {len(board)} trials diverged", board)
    best = config.with_(estimator={**config.estimator, **board[0]["params"]})
    return best, board


def sparsity_sweep(config, mu_values=None):
    """Steady-state NMSE(x_h) and support size for each base sparsity weight.

    Returns one row per ``mu`` with seed-averaged ``nmse_h``, ``est_nnz`` and
    ``true_nnz``.
    """
    if mu_values is None:
        mu_values = config.sweep.get("mu", list(np.round(np.geomspace(0.01, 1.0, 9), 4)))
    rows = []
    for mu in mu_values:
        recs = [run_single(config, s, "adacgp", est_overrides={"mu": float(mu)})[0] for s in config.seeds]
        ok = [r for r in recs if r["diverged_at"] is None]

        def mean(key, fn=lambda m, k: m.get(k)):
            vals = [fn(r["metrics"], key) for r in ok]
            vals = [v for v in vals if v is not None and math.isfinite(v)]
            return float(np.mean(vals)) if vals else math.nan

        rows.append({
            "mu": float(mu),
            "objective": float(np.mean([objective_value(r) for r in ok])) if ok else math.inf,
            "nmse_h": mean("nmse_h"),
            "nmse_w": mean("nmse_w"),
            "est_nnz": mean("est_nnz"),
            "true_nnz": mean("true_nnz"),
            "diverged": len(recs) - len(ok),
        })
    return rows


# ---------------------------------------------------------------------------
# per-iteration timing
# ---------------------------------------------------------------------------

def _time_steps(make, samples, steps, min_time):
    """Seconds per ``step`` call, growing the loop until it spans ``min_time``."""
    loops = max(int(steps), 1)
    while True:
        est = make()
        for x in samples[:3]:  # warm-up (JIT compilation, caches)
            est.step(x)
        seq = samples[3:3 + loops] if len(samples) >= 3 + loops else np.resize(samples, (loops, samples.shape[1]))
        t0 = time.perf_counter()
        for x in seq:
            est.step(x)
        elapsed = time.perf_counter() - t0
        if elapsed >= min_time or loops >= 100000:
            return elapsed / loops, loops
        loops *= 2


def _time_matmul(n, min_time, rng):
    A, B = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    loops = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(loops):
            A @ B
        elapsed = time.perf_counter() - t0
        if elapsed >= min_time:
            return elapsed / loops
        loops *= 2


def fit_exponent(sizes, seconds, top_fraction=0.5):
    """Slope of ``log(seconds)`` on ``log(n)`` over the largest ``top_fraction`` of sizes."""
    sizes, seconds = np.asarray(sizes, dtype=float), np.asarray(seconds, dtype=float)
    order = np.argsort(sizes)
    sizes, seconds = sizes[order], seconds[order]
    k = max(int(math.ceil(len(sizes) * top_fraction)), 2)
    if len(sizes) < 2:
        return math.nan
    xs, ys = np.log(sizes[-k:]), np.log(seconds[-k:])
    return float(np.polyfit(xs, ys, 1)[0])


def benchmark_complexity(sizes=None, reps=None, config=None, algorithms=None, seed=0, out=None):
    """Per-iteration wall time against ``n`` and fitted scaling exponents.

    AdaCGP runs Path 1 with fixed step sizes and no debiasing; the baseline
    is the LMS adaptive VAR.  A dense matrix product serves as a cubic
    calibration control.  Returns ``{"rows": [...], "exponents": {...}}``.
    """
    bench = {**BENCH_DEFAULTS, **((config.bench if config is not None else {}) or {})}
    sizes = list(bench["sizes"] if sizes is None else sizes)
    reps = int(bench["reps"] if reps is None else reps)
    algorithms = list(bench["algorithms"] if algorithms is None else algorithms)
    if reps < 1:
        raise ParameterError("reps must be >= 1")
    if sizes != sorted(sizes):
        raise ParameterError("sizes must be sorted ascending")
    P = config.P if config is not None else 3
    step = float(bench["step_size"])
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        W = generate_gso("random", n, seed)
        h = generate_filter_coeffs(P, seed + 1)
        samples = simulate_cgp(W, h, int(bench["steps"]) + 3, burn_in=50, seed=seed + 2).samples
        makers = {
            "adacgp": lambda: AdaCGP(n, EstimatorConfig(P=P, path="p1", debias="none", step_mode="fixed",
                                                         step_size=step, w_step=step)),
            "baseline": lambda: AdaptiveVar(n, P, step_size=step),
        }
        for alg in algorithms:
            times = [_time_steps(makers[alg], samples, bench["steps"], bench["min_time"])[0] for _ in range(reps)]
            rows.append({"algorithm": alg, "n": n, "seconds": float(np.median(times))})
        mm = [_time_matmul(n, bench["min_time"], rng) for _ in range(reps)]
        rows.append({"algorithm": "matmul", "n": n, "seconds": float(np.median(mm))})
    exponents = {}
    for alg in algorithms + ["matmul"]:
        sel = [r for r in rows if r["algorithm"] == alg]
        exponents[alg] = fit_exponent([r["n"] for r in sel], [r["seconds"] for r in sel]) if len(sel) > 1 else None
    report = {"rows": rows, "exponents": exponents}
    if out is not None:
        out = FsPath(out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "scaling.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["algorithm", "n", "seconds"])
            w.writeheader()
            w.writerows(rows)
        with open(out / "results.json", "w") as fh:
            json.dump(_clean(report), fh, indent=2)
    return report

