"""Command-line surface: fit, select-k, simulate, benchmark.

Matrices travel as header-first CSV written with 17 significant digits so
they round-trip exactly; run metadata goes to JSON.  Exit codes: 0 on
success, 2 on malformed input or configuration, 3 on numerical failure.
Parallelism (``--threads`` or HETREG_THREADS) only spreads independent
replicates across processes; seeds are pre-assigned per replicate, so
results are identical for any thread count.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .baselines import fit_miv, fit_vns
from .core import ConfigError, Dataset, HetregError, Hyperparams, NumericalError
from .metrics import align_subgroups, ari, l1_weight_loss, rmse, rpe, tpr_fpr
from .simgen import SCENARIO_NAMES, Scenario, make_scenario
from .solver import assign_majority, fit, select_gamma, select_k

logger = logging.getLogger(__name__)

FLOAT_FMT = "%.17g"
RESULT_COLUMNS = (
    "scenario", "method", "replicate", "K_hat",
    "TPR", "FPR", "RMSE", "RPE", "L1", "ARI", "runtime_s",
)
METRIC_COLUMNS = RESULT_COLUMNS[3:]


class CliInputError(Exception):
    """Malformed input file or arguments; maps to exit code 2."""


def _fmt(v):
    return FLOAT_FMT % v


def write_matrix_csv(path, arr, colnames):
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    if arr.shape[1] != len(colnames):
        raise ValueError("column names do not match matrix width")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(colnames)
        for row in arr:
            writer.writerow([_fmt(v) for v in row])


def read_matrix_csv(path):
    """Read a header-first numeric CSV, reporting parse failures by
    line and column."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise CliInputError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CliInputError(f"{path}: file is empty") from None
        width = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise CliInputError(
                    f"{path}: line {lineno}: expected {width} fields, got {len(row)}"
                )
            parsed = []
            for colno, cell in enumerate(row, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise CliInputError(
                        f"{path}: line {lineno}, column {colno}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise CliInputError(f"{path}: no data rows")
    return header, np.asarray(rows)


def load_dataset(x_path, y_path):
    _, x = read_matrix_csv(x_path)
    y_header, y = read_matrix_csv(y_path)
    if y.shape[1] != 1:
        raise CliInputError(f"{y_path}: expected a single response column, got {y.shape[1]}")
    try:
        return Dataset(x, y[:, 0])
    except HetregError as exc:
        raise CliInputError(f"{x_path}/{y_path}: {exc}") from exc


def standardize_columns(x):
    """Column-standardize to mean 0, variance 1; constant columns are only
    centered.  Returns (standardized, means, scales)."""
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    flat = scale == 0.0
    if flat.any():
        logger.warning("%d constant feature column(s); left unscaled", int(flat.sum()))
        scale = np.where(flat, 1.0, scale)
    return (x - mean) / scale, mean, scale


def default_threads():
    env = os.environ.get("HETREG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning("ignoring non-integer HETREG_THREADS=%r", env)
    return os.cpu_count() or 1


def _hyperparams_from_args(args, gamma=None):
    return Hyperparams(
        m=args.fuzzifier,
        gamma=gamma if gamma is not None else args.gamma,
        cv_folds=args.cv_folds,
        max_outer_iters=args.max_iters,
        outer_tol=args.outer_tol,
        seed=args.seed,
    )


def _truth_metrics(data, result, truth_a, truth_u):
    """Metrics block for summary.json; matrix metrics need matching K."""
    k_hat = result.coef.k
    block = {"K_hat": k_hat, "K_true": truth_a.shape[1]}
    labels_true = assign_majority(truth_u)
    block["ARI"] = ari(result.labels, labels_true)
    if k_hat == truth_a.shape[1]:
        perm = align_subgroups(result.coef.a, result.weights.u, truth_a, truth_u)
        a_hat = result.coef.a[:, perm]
        u_hat = result.weights.u[perm, :]
        tpr, fpr = tpr_fpr(a_hat, truth_a)
        block.update(
            TPR=tpr,
            FPR=fpr,
            RMSE=rmse(a_hat, truth_a),
            RPE=rpe(data, a_hat, u_hat, truth_a, truth_u),
            L1=l1_weight_loss(u_hat, truth_u),
        )
    return block


def _write_fit_outputs(out_dir, data, result, runtime_s, args, standardization,
                       truth=None, extra=None):
    os.makedirs(out_dir, exist_ok=True)
    k = result.coef.k
    write_matrix_csv(
        os.path.join(out_dir, "weights.csv"),
        result.weights.u.T, [f"u{j + 1}" for j in range(k)],
    )
    write_matrix_csv(
        os.path.join(out_dir, "coefficients.csv"),
        result.coef.a, [f"a{j + 1}" for j in range(k)],
    )
    with open(os.path.join(out_dir, "labels.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"])
        for lab in result.labels:
            writer.writerow([int(lab)])
    summary = {
        "k": k,
        "n": data.n,
        "p": data.p,
        "objective": result.objective,
        "objective_trace": list(result.objective_trace),
        "bic": result.bic,
        "selected_lambdas": list(result.selected_lambdas),
        "selected_gamma": result.selected_gamma,
        "iters": result.iters,
        "converged": result.converged,
        "runtime_s": runtime_s,
        "seed": args.seed,
        "standardization": standardization,
    }
    if truth is not None:
        truth_a, truth_u = truth
        summary["metrics"] = _truth_metrics(data, result, truth_a, truth_u)
    if extra:
        summary.update(extra)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


def _load_truth(args):
    if bool(args.truth_a) != bool(args.truth_u):
        raise CliInputError("--truth-a and --truth-u must be given together")
    if not args.truth_a:
        return None
    _, ta = read_matrix_csv(args.truth_a)
    _, tu = read_matrix_csv(args.truth_u)
    return ta, tu.T  # truth_u.csv holds one sample per row


def _prepare_data(args):
    data = load_dataset(args.x, args.y)
    standardization = None
    if not args.no_standardize:
        xs, mean, scale = standardize_columns(data.x)
        data = Dataset(xs, data.y)
        standardization = {"mean": mean.tolist(), "scale": scale.tolist()}
    return data, standardization


def cmd_fit(args):
    data, standardization = _prepare_data(args)
    truth = _load_truth(args)
    h = _hyperparams_from_args(args)
    t0 = time.perf_counter()
    extra = {}
    if args.gamma_cv:
        h = replace(h, gamma=select_gamma(data, args.k, h))
        extra["gamma_cv"] = True
    result = fit(data, args.k, h)
    runtime_s = time.perf_counter() - t0
    _write_fit_outputs(args.out_dir, data, result, runtime_s, args,
                       standardization, truth=truth, extra=extra)
    return 0


def cmd_select_k(args):
    if args.k_min < 1 or args.k_max < args.k_min:
        raise CliInputError(f"need 1 <= k-min <= k-max, got {args.k_min}..{args.k_max}")
    data, standardization = _prepare_data(args)
    truth = _load_truth(args)
    h = _hyperparams_from_args(args)
    t0 = time.perf_counter()
    ks = list(range(args.k_min, args.k_max + 1))
    best_k, fits = select_k(data, ks, h)
    result = fits[ks.index(best_k)]
    extra = {"k_grid": ks, "selected_k": best_k}
    if args.gamma_cv:
        gamma = select_gamma(data, best_k, h)
        result = fit(data, best_k, replace(h, gamma=gamma))
        extra["gamma_cv"] = True
    runtime_s = time.perf_counter() - t0
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "bic_curve.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["K", "BIC"])
        for k, f in zip(ks, fits):
            writer.writerow([k, _fmt(f.bic)])
    _write_fit_outputs(args.out_dir, data, result, runtime_s, args,
                       standardization, truth=truth, extra=extra)
    return 0


def cmd_simulate(args):
    os.makedirs(args.out_dir, exist_ok=True)
    for r in range(args.replicates):
        sc = Scenario(
            name=args.scenario, n=args.n, p=args.p, sigma=args.sigma,
            balance=args.balance, rho=args.rho, seed=args.seed + r,
        )
        data, truth_a, truth_u = make_scenario(sc)
        rep_dir = os.path.join(args.out_dir, f"rep{r:03d}")
        os.makedirs(rep_dir, exist_ok=True)
        p, k, n = data.p, truth_a.k, data.n
        write_matrix_csv(os.path.join(rep_dir, "x.csv"), data.x,
                         [f"x{j + 1}" for j in range(p)])
        write_matrix_csv(os.path.join(rep_dir, "y.csv"), data.y[:, None], ["y"])
        write_matrix_csv(os.path.join(rep_dir, "truth_a.csv"), truth_a.a,
                         [f"a{j + 1}" for j in range(k)])
        write_matrix_csv(os.path.join(rep_dir, "truth_u.csv"), truth_u.u.T,
                         [f"u{j + 1}" for j in range(k)])
    return 0


def _benchmark_row(job):
    """One (scenario, method, replicate) cell; runs in a worker process."""
    (name, n, p, sigma, balance, rho, base_seed, replicate, method,
     k_fixed, k_grid, gamma, miv_starts, vns_iter_max, vns_neigh_max,
     fuzzifier, cv_folds, max_iters, outer_tol) = job
    sc = Scenario(name=name, n=n, p=p, sigma=sigma, balance=balance,
                  rho=rho, seed=base_seed + replicate)
    data, truth_a, truth_u = make_scenario(sc)
    h = Hyperparams(m=fuzzifier, gamma=gamma, cv_folds=cv_folds,
                    max_outer_iters=max_iters, outer_tol=outer_tol,
                    seed=base_seed + replicate)
    t0 = time.perf_counter()
    if method == "proposed":
        if k_grid is not None:
            k_hat, fits = select_k(data, k_grid, h)
            result = fits[sorted(set(k_grid)).index(k_hat)]
        else:
            result = fit(data, k_fixed, h)
            k_hat = k_fixed
    elif method == "miv":
        result = fit_miv(data, k_fixed, miv_starts, h)
        k_hat = k_fixed
    elif method == "vns":
        result = fit_vns(data, k_fixed, h, iter_max=vns_iter_max,
                         neigh_max=vns_neigh_max)
        k_hat = k_fixed
    else:
        raise ConfigError(f"unknown method {method!r}")
    runtime_s = time.perf_counter() - t0

    row = {c: float("nan") for c in METRIC_COLUMNS}
    row.update(scenario=name, method=method, replicate=replicate,
               K_hat=k_hat, runtime_s=runtime_s)
    row["ARI"] = ari(result.labels, assign_majority(truth_u))
    if result.coef.k == truth_a.k:
        perm = align_subgroups(result.coef.a, result.weights.u, truth_a.a, truth_u.u)
        a_hat = result.coef.a[:, perm]
        u_hat = result.weights.u[perm, :]
        row["TPR"], row["FPR"] = tpr_fpr(a_hat, truth_a.a)
        row["RMSE"] = rmse(a_hat, truth_a.a)
        row["L1"] = l1_weight_loss(u_hat, truth_u.u)
        if name != "MISSPEC":  # true mean response is not the linear mixture there
            row["RPE"] = rpe(data, a_hat, u_hat, truth_a.a, truth_u.u)
    return row


def cmd_benchmark(args):
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = set(methods) - {"proposed", "miv", "vns"}
    if unknown:
        raise CliInputError(f"unknown method(s): {sorted(unknown)}")
    if not methods:
        raise CliInputError("no methods requested")
    k_grid = None
    if args.k_min is not None or args.k_max is not None:
        if args.k_min is None or args.k_max is None:
            raise CliInputError("--k-min and --k-max must be given together")
        if set(methods) - {"proposed"}:
            raise CliInputError("K selection over a grid is only supported for 'proposed'")
        k_grid = list(range(args.k_min, args.k_max + 1))
        if not k_grid:
            raise CliInputError("empty K grid")
    sc_probe = Scenario(name=args.scenario, n=args.n, p=args.p, sigma=args.sigma,
                        balance=args.balance, rho=args.rho, seed=args.seed)
    k_fixed = args.k if args.k is not None else sc_probe.k

    jobs = [
        (args.scenario, args.n, args.p, args.sigma, args.balance, args.rho,
         args.seed, r, method, k_fixed, k_grid, args.gamma, args.miv_starts,
         args.vns_iter_max, args.vns_neigh_max, args.fuzzifier, args.cv_folds,
         args.max_iters, args.outer_tol)
        for r in range(args.replicates)
        for method in methods
    ]
    threads = args.threads if args.threads else default_threads()
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_benchmark_row, jobs))
    else:
        rows = [_benchmark_row(job) for job in jobs]
    rows.sort(key=lambda r: (r["scenario"], r["method"], r["replicate"]))

    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "results.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            writer.writerow(
                [row["scenario"], row["method"], row["replicate"]]
                + [_fmt(row[c]) for c in METRIC_COLUMNS]
            )
    _write_summary_stats(os.path.join(args.out_dir, "summary_stats.csv"), rows)
    return 0


def _write_summary_stats(path, rows):
    """Mean and sample s.d. per (scenario, method) cell."""
    groups = {}
    for row in rows:
        groups.setdefault((row["scenario"], row["method"]), []).append(row)
    header = ["scenario", "method"]
    for col in METRIC_COLUMNS:
        header += [f"{col}_mean", f"{col}_sd"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for (scenario, method), cells in sorted(groups.items()):
            out = [scenario, method]
            for col in METRIC_COLUMNS:
                vals = np.array([c[col] for c in cells], dtype=float)
                vals = vals[~np.isnan(vals)]
                if vals.size == 0:
                    out += [_fmt(float("nan"))] * 2
                else:
                    sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
                    out += [_fmt(float(vals.mean())), _fmt(sd)]
            writer.writerow(out)


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0, help="base RNG seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: HETREG_THREADS or all cores)")
    parser.add_argument("-v", "--verbose", action="store_true")


def _add_fit_options(parser):
    parser.add_argument("--gamma", type=float, default=1.0,
                        help="fusion strength (default 1.0)")
    parser.add_argument("--gamma-cv", action="store_true",
                        help="choose the fusion strength by five-fold CV")
    parser.add_argument("--fuzzifier", type=float, default=2.0,
                        help="weight exponent m (default 2)")
    parser.add_argument("--cv-folds", type=int, default=5)
    parser.add_argument("--max-iters", type=int, default=100)
    parser.add_argument("--outer-tol", type=float, default=1e-5)


def _add_data_options(parser):
    parser.add_argument("--x", required=True, help="feature CSV (header x1..xp)")
    parser.add_argument("--y", required=True, help="response CSV (header y)")
    parser.add_argument("--truth-a", help="true coefficient CSV to score against")
    parser.add_argument("--truth-u", help="true weight CSV to score against")
    parser.add_argument("--no-standardize", action="store_true",
                        help="fit features as given instead of column-standardizing")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hetreg",
        description="Regression-based heterogeneity analysis with overlapping subgroups",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit with a fixed number of subgroups")
    _add_data_options(p_fit)
    p_fit.add_argument("--k", type=int, required=True, help="number of subgroups")
    _add_fit_options(p_fit)
    p_fit.add_argument("--out-dir", required=True)
    _add_common(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_sel = sub.add_parser("select-k", help="choose the number of subgroups by BIC")
    _add_data_options(p_sel)
    p_sel.add_argument("--k-min", type=int, default=1)
    p_sel.add_argument("--k-max", type=int, default=6)
    _add_fit_options(p_sel)
    p_sel.add_argument("--out-dir", required=True)
    _add_common(p_sel)
    p_sel.set_defaults(func=cmd_select_k)

    p_sim = sub.add_parser("simulate", help="generate benchmark data")
    p_sim.add_argument("--scenario", required=True, choices=SCENARIO_NAMES)
    p_sim.add_argument("--n", type=int, required=True)
    p_sim.add_argument("--p", type=int, required=True)
    p_sim.add_argument("--sigma", type=float, required=True)
    p_sim.add_argument("--replicates", type=int, default=1)
    p_sim.add_argument("--balance", type=float, default=0.5)
    p_sim.add_argument("--rho", type=float, default=0.5)
    p_sim.add_argument("--out-dir", required=True)
    _add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser("benchmark", help="run methods over seeded replicates")
    p_bench.add_argument("--scenario", required=True, choices=SCENARIO_NAMES)
    p_bench.add_argument("--n", type=int, required=True)
    p_bench.add_argument("--p", type=int, required=True)
    p_bench.add_argument("--sigma", type=float, required=True)
    p_bench.add_argument("--replicates", type=int, default=1)
    p_bench.add_argument("--balance", type=float, default=0.5)
    p_bench.add_argument("--rho", type=float, default=0.5)
    p_bench.add_argument("--methods", default="proposed",
                         help="comma-separated subset of proposed,miv,vns")
    p_bench.add_argument("--k", type=int, default=None,
                         help="subgroup count given to every method (default: the truth)")
    p_bench.add_argument("--k-min", type=int, default=None,
                         help="select K over a grid instead (proposed only)")
    p_bench.add_argument("--k-max", type=int, default=None)
    p_bench.add_argument("--miv-starts", type=int, default=50)
    p_bench.add_argument("--vns-iter-max", type=int, default=5)
    p_bench.add_argument("--vns-neigh-max", type=int, default=15)
    _add_fit_options(p_bench)
    p_bench.add_argument("--out-dir", required=True)
    _add_common(p_bench)
    p_bench.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (CliInputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except HetregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
