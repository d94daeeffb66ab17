"""Command-line entry point: ``adacgp {simulate,estimate,search,bench,metrics}``."""
import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .cgp import generate_filter_coeffs, save_stream_csv, simulate_cgp
from .core import parse_variant
from .experiments import (
    ExperimentConfig,
    _clean,
    benchmark_complexity,
    hyperparameter_search,
    ingest_stream,
    load_config,
    run_experiment,
    save_config,
    seed_streams,
    sparsity_sweep,
)
from .graphs import ParameterError, generate_gso, load_gso_csv, save_gso_csv
from .metrics import classify_edges, gso_lag_stability, nmse_gso, out_in_degrees
from .trace import run_adacgp

VARIANTS = ("p1-debias", "p1-alt-debias", "p2-debias", "p2-alt-debias", "p1", "p2")


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.topology:
        changes["topology"] = args.topology
    if args.variant:
        changes["variant"] = args.variant
    if args.seed is not None:
        changes["seeds"] = [args.seed]
    if args.mask:
        changes["mask_path"] = args.mask
    if args.out:
        changes["out"] = args.out
    for key in ("n", "T"):
        if getattr(args, key, None) is not None:
            changes[key] = getattr(args, key)
    return cfg.with_(**changes) if changes else cfg


def _dump(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(args):
    cfg = _config(args)
    out = Path(cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seeds[0]
    g_seed, h_seed, x_seed = seed_streams(seed)
    W = generate_gso(cfg.topology, cfg.n, g_seed)
    h = generate_filter_coeffs(cfg.P, h_seed)
    stream = simulate_cgp(W, h, cfg.T, cfg.burn_in, x_seed)
    save_gso_csv(out / "gso_true.csv", W)
    save_stream_csv(out / "stream.csv", stream, comment=f"topology={cfg.topology} n={cfg.n} P={cfg.P} seed={seed}")
    _dump(out / "results.json", {"topology": cfg.topology, "n": cfg.n, "P": cfg.P, "T": cfg.T,
                                 "burn_in": cfg.burn_in, "seed": seed, "h": h.values.tolist()})
    print(f"wrote {out}/stream.csv ({stream.T} x {stream.n}) and gso_true.csv")


def cmd_estimate(args):
    cfg = _config(args)
    if args.stream:
        stream, mask = ingest_stream(args.stream, args.mask, normalize=not args.no_normalize)
        est_cfg = cfg.estimator_config(**({"mask": mask} if mask is not None else {}))
        w_true = load_gso_csv(args.truth).weights if args.truth else None
        est, trace = run_adacgp(stream, est_cfg, w_true=w_true)
        out = Path(cfg.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        trace.write_jsonl(out / "trace.jsonl")
        save_gso_csv(out / "gso_est.csv", trace.final_W)
        for t, W in zip(trace.snapshot_steps, trace.snapshots):
            save_gso_csv(out / f"gso_snap_t{t}.csv", W)
        window = cfg.patience_window
        summary = {k: trace.window_mean(k, window) for k in ("nmse_psi", "nmse_h", "nmse_w", "p_miss", "p_false_alarm")}
        _dump(out / "results.json", {"summary": summary, "h": trace.final_h.tolist(), "steps": len(trace),
                                     "switch_step": trace.switch_step, "terminal_step": trace.terminal_step,
                                     "diverged_at": trace.diverged_at})
        print(json.dumps(_clean(summary)))
        return
    rs = run_experiment(cfg)
    for alg, summ in rs.summary.items():
        line = ", ".join(f"{k}={v['mean']:.4g}+-{v['std']:.2g}" for k, v in summ.items()
                         if k in ("nmse_w", "p_miss", "p_false_alarm", "nmse_h"))
        print(f"{alg}: {line}")


def cmd_search(args):
    cfg = _config(args)
    out = Path(cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    if args.sweep:
        rows = sparsity_sweep(cfg)
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        _dump(out / "results.json", {"sweep": rows})
        for r in rows:
            print(f"mu={r['mu']:.4g} objective={r['objective']:.4f} est_nnz={r['est_nnz']:.1f} true_nnz={r['true_nnz']:.1f}")
        return
    best, board = hyperparameter_search(cfg, trials=args.trials, seed=args.search_seed)
    _dump(out / "results.json", {"best": best.estimator, "leaderboard": board})
    save_config(best.with_(out=None), out / "best_config.yaml")
    print(f"best objective {board[0]['objective']:.4f} with {board[0]['params']}")


def cmd_bench(args):
    cfg = load_config(args.config) if args.config else None
    sizes = [int(s) for s in args.sizes.split(",")] if args.sizes else None
    report = benchmark_complexity(sizes=sizes, reps=args.reps, config=cfg, seed=args.seed or 0, out=args.out or ".")
    for alg, e in report["exponents"].items():
        print(f"{alg}: exponent {e:.3f}" if e is not None else f"{alg}: exponent undefined")


def _load_matrix(path):
    return load_gso_csv(path).weights


def cmd_metrics(args):
    out = {}
    if args.estimate:
        W = _load_matrix(args.estimate)
        out["out_in_degree"] = out_in_degrees(W).tolist()
        if args.truth:
            W0 = _load_matrix(args.truth)
            out["nmse_w"] = nmse_gso(W0, W)
            out.update(classify_edges(W0, W, tol=args.tol).to_dict())
    if args.snapshots:
        snaps = [_load_matrix(p) for p in args.snapshots]
        diffs = gso_lag_stability(snaps, args.lag)
        out["lag"] = args.lag
        out["lag_differences"] = diffs.tolist()
        out["median_lag_difference"] = float(np.median(diffs))
    if not out:
        raise ParameterError("give --estimate and/or --snapshots")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        _dump(Path(args.out) / "results.json", out)
    print(json.dumps(_clean({k: v for k, v in out.items() if not isinstance(v, list)}), sort_keys=True))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config (see configs/SCHEMA.md)")
    common.add_argument("--seed", type=int, help="single seed overriding the config's seed list")
    common.add_argument("--out", help="output directory")
    common.add_argument("--topology", help="random, er, kr or sbm")
    common.add_argument("--variant", choices=VARIANTS, help="estimator path and debias mode")
    common.add_argument("--mask", help="N x N 0/1 CSV restricting admissible edges")

    p = argparse.ArgumentParser(prog="adacgp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="draw a GSO and simulate a stream")
    s.add_argument("--n", type=int)
    s.add_argument("--T", type=int)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", parents=[common], help="run the estimator (synthetic config or --stream CSV)")
    e.add_argument("--stream", help="CSV stream, one row per time step")
    e.add_argument("--truth", help="ground-truth GSO CSV for truth metrics")
    e.add_argument("--no-normalize", action="store_true", help="skip per-node standardisation of --stream")
    e.add_argument("--n", type=int)
    e.add_argument("--T", type=int)
    e.set_defaults(func=cmd_estimate)

    r = sub.add_parser("search", parents=[common], help="random hyper-parameter search or sparsity sweep")
    r.add_argument("--trials", type=int)
    r.add_argument("--search-seed", type=int)
    r.add_argument("--sweep", action="store_true", help="sweep the sparsity weight instead")
    r.add_argument("--n", type=int)
    r.add_argument("--T", type=int)
    r.set_defaults(func=cmd_search)

    b = sub.add_parser("bench", parents=[common], help="per-iteration timing against N")
    b.add_argument("--sizes", help="comma-separated node counts, ascending")
    b.add_argument("--reps", type=int)
    b.set_defaults(func=cmd_bench)

    m = sub.add_parser("metrics", parents=[common], help="compare GSO CSVs / snapshot stability")
    m.add_argument("--estimate", help="estimated GSO CSV")
    m.add_argument("--truth", help="ground-truth GSO CSV")
    m.add_argument("--tol", type=float, default=0.0)
    m.add_argument("--snapshots", nargs="+", help="GSO snapshot CSVs in time order")
    m.add_argument("--lag", type=int, default=1)
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "variant", None):
        parse_variant(args.variant)
    try:
        args.func(args)
    except (ParameterError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
