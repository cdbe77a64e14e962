"""Command line front end.

Subcommands::

    maxqnorm complete         --obs OBS.csv --shape 20,20,20 --lower 1 --upper 8 --out T.tns
    maxqnorm maxqnorm         --input T.tns --lower 0.5 --upper 4
    maxqnorm grid             --config grid.json --out results.csv [--jobs N]
    maxqnorm norm-experiment  --config norms.json --out norms.csv [--jobs N]

Exit status is 0 on success, 2 for bad flags or input files and 1 for
anything unexpected. Result CSVs print floats with 17 significant digits.
"""

import argparse
import csv
import json
import logging
import sys
import time
import traceback
import zlib
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .completion import complete_with_cv, estimate_max_qnorm, matricized_baseline
from .norms import balance_factors, max_qnorm_upper_bound, max_qnorm_value
from .observation import (SamplingDistribution, draw_indices, noise_level_from_db,
                          observe, read_observations_csv)
from .solvers import METHODS, SolverParams
from .tensor_core import frobenius, random_low_rank, read_tns, write_tns

logger = logging.getLogger(__name__)

DETAIL_COLUMNS = ["d", "N", "rank", "sample_rate", "noise_db", "method", "trial",
                  "rel_err_sq", "chosen_R", "seconds"]
SUMMARY_COLUMNS = ["d", "N", "rank", "sample_rate", "noise_db", "method", "trials",
                   "mean_rel_err_sq", "mean_chosen_R", "mean_seconds"]
NORM_COLUMNS = ["d", "N", "rank", "factor_kind", "trial", "maxqnorm_est"]

FEASIBILITY_TOL = 1e-12

GRID_METHODS = {"maxq_pgd": "pgd", "maxq_pqn": "pqn", "maxq_sgd": "sgd", "matricized": "pqn"}


class InputError(ValueError):
    """Bad flags, files or configuration."""


def fmt(x):
    return format(float(x), ".17g")


def load_schema(name):
    text = resources.files("maxqnorm").joinpath("schemas", name).read_text()
    return json.loads(text)


def load_config(path, schema_name):
    try:
        config = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})") from exc
    try:
        jsonschema.validate(config, load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"{path}: {where}: {exc.message}") from exc
    return config


def parse_shape(text):
    try:
        shape = tuple(int(s) for s in text.split(","))
    except ValueError:
        raise InputError(f"--shape must be comma separated integers, got {text!r}") from None
    if not shape or min(shape) < 1:
        raise InputError(f"--shape must list positive sizes, got {text!r}")
    return shape


def cell_seeds(master_seed, shape, rank, rate, trial, n=3):
    """Seeds for (truth, sampling, noise) that depend only on the cell coordinates."""
    entropy = [master_seed, len(shape), *shape, rank, round(rate * 1_000_000), trial]
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(entropy).spawn(n)]


def method_seed(master_seed, shape, rank, rate, trial, method):
    entropy = [master_seed, len(shape), *shape, rank, round(rate * 1_000_000), trial,
               zlib.crc32(method.encode())]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def solver_params(overrides, method="pqn"):
    return SolverParams(method=method, **(overrides or {}))


def size_label(shape):
    return str(shape[0]) if len(set(shape)) == 1 else "x".join(map(str, shape))


# ---------------------------------------------------------------- grid

def grid_cells(config):
    cells = []
    for rank in config["ranks"]:
        for rate in config["sample_rates"]:
            for method in config["methods"]:
                for trial in range(config["trials"]):
                    cells.append((rank, rate, method, trial))
    return cells


def grid_bounds(config, method):
    shape = config["shape"]
    alpha = config.get("alpha", 1.0)
    d = 2 if method == "matricized" and len(shape) > 2 else len(shape)
    lower = config.get("lower", alpha)
    upper = config.get("upper", max_qnorm_upper_bound(max(config["ranks"]), d, alpha))
    return lower, max(upper, lower)


def run_cell(config, rank, rate, method, trial):
    """Generate, sample and complete one grid cell; returns a detail row."""
    shape = tuple(config["shape"])
    d = len(shape)
    master = config.get("master_seed", 0)
    truth_seed, sample_seed, noise_seed = cell_seeds(master, shape, rank, rate, trial)
    _, T = random_low_rank(shape, rank, config.get("factor_kind", "gaussian"), seed=truth_seed)
    m = max(5, round(rate * T.size))
    idx = draw_indices(SamplingDistribution(shape), m, seed=sample_seed)
    noise_db = config.get("noise_db")
    sigma = 0.0 if noise_db is None else noise_level_from_db(T, noise_db)
    obs = observe(T, idx, sigma, seed=noise_seed)

    alpha = config.get("alpha", 1.0)
    lower, upper = grid_bounds(config, method)
    params = solver_params(config.get("solver"), GRID_METHODS[method])
    seed = method_seed(master, shape, rank, rate, trial, method)
    start = time.perf_counter()
    if method == "matricized":
        split = config.get("matricize_split", max(1, d // 2))
        res = matricized_baseline(obs, shape, split, lower, upper, params, alpha,
                                  config.get("width"), seed)
    else:
        res = complete_with_cv(obs, shape, lower, upper, params, alpha,
                               config.get("width"), seed)
    seconds = time.perf_counter() - start
    gap = res.solver_diag["max_feasibility_gap"]
    if gap > FEASIBILITY_TOL:
        raise RuntimeError(f"solver left the feasible set by {gap:g} in cell "
                           f"{(rank, rate, method, trial)}")
    rel = frobenius(res.recovered - T) ** 2 / frobenius(T) ** 2
    return {
        "d": d, "N": size_label(shape), "rank": rank, "sample_rate": rate,
        "noise_db": noise_db, "method": method, "trial": trial,
        "rel_err_sq": rel, "chosen_R": res.chosen_R, "seconds": seconds,
        "feasibility_gap": gap,
    }


def _run_cell_packed(args):
    return run_cell(*args)


def _map(func, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def run_grid(config, jobs=1):
    """Run every cell of ``config``; returns (detail rows, summary rows), sorted."""
    cells = grid_cells(config)
    rows = _map(_run_cell_packed, [(config, *c) for c in cells], jobs)
    order = {m: i for i, m in enumerate(config["methods"])}
    rows.sort(key=lambda r: (r["rank"], r["sample_rate"], order[r["method"]], r["trial"]))
    groups = defaultdict(list)
    for r in rows:
        groups[(r["rank"], r["sample_rate"], r["method"])].append(r)
    summary = []
    for key, members in groups.items():
        first = members[0]
        summary.append({
            "d": first["d"], "N": first["N"], "rank": first["rank"],
            "sample_rate": first["sample_rate"], "noise_db": first["noise_db"],
            "method": first["method"], "trials": len(members),
            "mean_rel_err_sq": float(np.mean([r["rel_err_sq"] for r in members])),
            "mean_chosen_R": float(np.mean([r["chosen_R"] for r in members])),
            "mean_seconds": float(np.mean([r["seconds"] for r in members])),
        })
    return rows, summary


def _cell_text(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return fmt(value)
    return str(value)


def write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for r in rows:
            writer.writerow([_cell_text(r[c]) for c in columns])


def summary_path(out):
    out = Path(out)
    return out.with_name(f"{out.stem}_summary{out.suffix or '.csv'}")


# ---------------------------------------------------- max-qnorm scaling

def norm_cells(config):
    cells = []
    for d in config["dims"]:
        for n in config["sizes"]:
            for rank in config["ranks"]:
                for trial in range(config["trials"]):
                    cells.append((d, n, rank, trial))
    return cells


def run_norm_cell(config, d, n, rank, trial):
    shape = (n,) * d
    kind = config.get("factor_kind", "sign")
    truth_seed, solver_seed, _ = cell_seeds(config.get("master_seed", 0), shape, rank, 1.0, trial)
    factors, T = random_low_rank(shape, rank, kind, seed=truth_seed)
    lower = config.get("lower", 0.5)
    # the generating factorization is feasible at its own value, so this brackets the norm
    upper = config.get("upper_factor", 2.0) * max_qnorm_value(balance_factors(factors))
    upper = max(upper, 2 * lower)
    params = SolverParams(method=config.get("method", "pqn"), seed=solver_seed,
                          **config.get("solver", {}))
    est, info = estimate_max_qnorm(T, lower, upper, params, full_output=True)
    gap = info["max_feasibility_gap"]
    if gap > FEASIBILITY_TOL:
        raise RuntimeError(f"solver left the feasible set by {gap:g} in cell {(d, n, rank, trial)}")
    return {"d": d, "N": n, "rank": rank, "factor_kind": kind, "trial": trial,
            "maxqnorm_est": est, "feasibility_gap": gap}


def _run_norm_packed(args):
    return run_norm_cell(*args)


def run_norm_experiment(config, jobs=1):
    rows = _map(_run_norm_packed, [(config, *c) for c in norm_cells(config)], jobs)
    rows.sort(key=lambda r: (r["d"], r["N"], r["rank"], r["trial"]))
    return rows


# ------------------------------------------------------------ commands

def cmd_complete_args(args):
    shape = parse_shape(args.shape)
    if args.upper < args.lower:
        raise InputError(f"--upper ({args.upper}) is below --lower ({args.lower})")
    if args.lower <= 0:
        raise InputError("--lower must be positive")
    obs = read_observations_csv(args.obs, shape)
    alpha = args.alpha if args.alpha is not None else float(np.max(np.abs(obs.values)))
    if alpha <= 0:
        raise InputError("--alpha must be positive (observed values are all zero)")
    params = SolverParams(method=args.solver, seed=args.seed,
                          **({"max_iters": args.max_iters} if args.max_iters else {}))
    res = complete_with_cv(obs, shape, args.lower, args.upper, params, alpha, args.width,
                           args.seed)
    write_tns(args.out, res.recovered)
    print(json.dumps({
        "chosen_R": res.chosen_R,
        "validation_rmse": res.validation_rmse,
        "iterations": res.solver_diag["iterations"],
        "outer_iterations": res.solver_diag["outer_iterations"],
        "solves": res.solver_diag["solves"],
        "bounds_trace": res.bounds_trace,
    }))
    return 0


def cmd_maxqnorm_args(args):
    if not 0 < args.lower < args.upper:
        raise InputError("need 0 < --lower < --upper")
    T = read_tns(args.input)
    params = SolverParams(method=args.solver, seed=args.seed,
                          **({"max_iters": args.max_iters} if args.max_iters else {}))
    est, info = estimate_max_qnorm(T, args.lower, args.upper, params, full_output=True)
    print(json.dumps({"estimate": est, "resolution": info["resolution"],
                      "iterations": info["iterations"]}))
    return 0


def cmd_grid_args(args):
    config = load_config(args.config, "grid.schema.json")
    d = len(config["shape"])
    split = config.get("matricize_split")
    if split is not None and not 1 <= split <= d - 1:
        raise InputError(f"matricize_split must lie in [1, {d - 1}]")
    if args.jobs < 1:
        raise InputError("--jobs must be at least 1")
    rows, summary = run_grid(config, args.jobs)
    write_rows(args.out, DETAIL_COLUMNS, rows)
    write_rows(summary_path(args.out), SUMMARY_COLUMNS, summary)
    return 0


def cmd_norm_experiment_args(args):
    config = load_config(args.config, "norm_experiment.schema.json")
    if config.get("method", "pqn") not in METHODS:
        raise InputError(f"method must be one of {METHODS}")
    if args.jobs < 1:
        raise InputError("--jobs must be at least 1")
    rows = run_norm_experiment(config, args.jobs)
    write_rows(args.out, NORM_COLUMNS, rows)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="maxqnorm", description="Max-qnorm constrained tensor completion.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("complete", help="complete a tensor from an observation CSV")
    p.add_argument("--obs", required=True, help="CSV with header i1,...,id,value (1-based)")
    p.add_argument("--shape", required=True, help="tensor shape, e.g. 20,20,20")
    p.add_argument("--lower", type=float, required=True)
    p.add_argument("--upper", type=float, required=True)
    p.add_argument("--alpha", type=float, default=None,
                   help="entry magnitude bound (default: largest observed magnitude)")
    p.add_argument("--solver", choices=METHODS, default="pqn")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=None, help="factor width (default 2*max N)")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--out", required=True, help="recovered tensor (.tns)")
    p.set_defaults(func=cmd_complete_args)

    p = sub.add_parser("maxqnorm", help="estimate the max-qnorm of a tensor by bisection")
    p.add_argument("--input", required=True, help="tensor file (.tns)")
    p.add_argument("--lower", type=float, required=True)
    p.add_argument("--upper", type=float, required=True)
    p.add_argument("--solver", choices=METHODS, default="pqn")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=None)
    p.set_defaults(func=cmd_maxqnorm_args)

    p = sub.add_parser("grid", help="run a recovery experiment grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="detail CSV; the summary goes to *_summary.csv")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_grid_args)

    p = sub.add_parser("norm-experiment", help="estimate max-qnorms of random low-rank tensors")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_norm_experiment_args)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


def cmd_complete(argv):
    return main(["complete", *argv])


def cmd_maxqnorm(argv):
    return main(["maxqnorm", *argv])


def cmd_grid(argv):
    return main(["grid", *argv])


def cmd_norm_experiment(argv):
    return main(["norm-experiment", *argv])


if __name__ == "__main__":
    sys.exit(main())
