"""Command-line front end.

``velokern generate|fit|predict|eval|gridsearch|verify|benchmark``; see
``velokern <command> --help``.

Exit status: 0 success, 2 configuration error, 3 data error, 4 numerical
error, 5 property failure.
"""

import argparse
import csv
import json
import logging
import statistics
import sys
import time
from pathlib import Path


from .exceptions import (
    ConfigError, DataError, InvalidInputError, NumericalError,
    SimulationDivergedError,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_PROPERTY = 5

log = logging.getLogger("velokern")


def _config(args):
    from .experiment import load_config

    if not args.config:
        raise ConfigError("--config is required")
    return load_config(args.config, seed=args.seed)


def _need(args, name):
    value = getattr(args, name)
    if not value:
        raise ConfigError(f"--{name} is required for '{args.command}'")
    return value


def _true_path(out):
    p = Path(out)
    return p.with_name(p.stem + "_true" + p.suffix)


def cmd_generate(args):
    from .experiment import generate
    from .signals import write_trajectory_csv

    cfg = _config(args)
    out = _need(args, "out")
    measured, true = generate(cfg)
    write_trajectory_csv(out, measured)
    if cfg.noise_variance > 0:
        write_trajectory_csv(_true_path(out), true)
    log.info("wrote %d samples to %s (seed %d)", measured.length, out, cfg.seed)
    return EXIT_OK


def cmd_fit(args):
    from .experiment import fit_from_config, make_system
    from .hyperopt import write_scores_csv
    from .regression import save_model
    from .signals import read_trajectory_csv

    cfg = _config(args)
    traj = read_trajectory_csv(_need(args, "data"))
    out = _need(args, "out")
    found = []
    t0 = time.perf_counter()
    model, solve_seconds = fit_from_config(cfg, traj, make_system(cfg),
                                           grid_result_out=found)
    fit_seconds = time.perf_counter() - t0
    if found:
        scores = Path(out).with_suffix(".scores.csv")
        write_scores_csv(scores, found[0].table)
        log.info("grid scores written to %s", scores)
    save_model(out, model, fit_seconds=fit_seconds)
    n_c = model.dims.N_c
    log.info("fitted %s model: N_c=%d, fit %.3fs (final solve %.3fs)",
             cfg.mode, n_c, fit_seconds, solve_seconds)
    return EXIT_OK


def cmd_predict(args):
    from .experiment import model_predict
    from .regression import load_model
    from .signals import read_trajectory_csv

    model = load_model(_need(args, "model"))
    traj = read_trajectory_csv(_need(args, "data"))
    (dy_hat, y_hat), data = model_predict(model, traj)
    d = model.dims
    Q = data.dims.N_c
    with open(_need(args, "out"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if dy_hat is not None:
            w.writerow(["window", "step", "output", "dy_hat"])
            arr = dy_hat.reshape(d.L, d.n_y, Q)
        else:
            w.writerow(["window", "step", "output", "y_hat"])
            arr = y_hat.reshape(d.L, d.n_y, Q)
        for q in range(Q):
            for t in range(d.L):
                for o in range(d.n_y):
                    w.writerow([q, t + 1, o + 1, repr(float(arr[t, o, q]))])
    return EXIT_OK


def cmd_eval(args):
    from .experiment import evaluate
    from .regression import load_model, model_metadata
    from .signals import read_trajectory_csv

    model_path = _need(args, "model")
    model = load_model(model_path)
    traj = read_trajectory_csv(_need(args, "data"))
    res = evaluate(model, traj)
    metrics = res.metrics(model_metadata(model_path).get("fit_seconds"))
    out = _need(args, "out")
    with open(out, "w") as fh:
        json.dump(metrics, fh, indent=2)
    plot = args.plot_data or str(Path(out).with_suffix(".plot.csv"))
    with open(plot, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", "step", "output", "dy_true", "dy_hat", "y_true",
                    "y_hat_a", "y_hat_b"])
        for row in res.plot_rows():
            w.writerow(list(row[:3]) + [repr(float(v)) for v in row[3:]])
    print(f"rmse_delta={res.rmse_delta:.6g} rmse_primal_a={res.rmse_primal_a:.6g} "
          f"rmse_primal_b={res.rmse_primal_b:.6g} n_c={res.n_c}")
    return EXIT_OK


def cmd_gridsearch(args):
    from dataclasses import replace

    from .experiment import GRID, fit_from_config, make_system
    from .hyperopt import write_scores_csv
    from .signals import read_trajectory_csv

    cfg = replace(_config(args), sigma=GRID, gamma=GRID)
    traj = read_trajectory_csv(_need(args, "data"))
    found = []
    fit_from_config(cfg, traj, make_system(cfg), grid_result_out=found)
    res = found[0]
    write_scores_csv(_need(args, "out"), res.table)
    print(f"best sigma={res.best_sigma:.6g} gamma={res.best_gamma:.6g}")
    return EXIT_OK


def cmd_verify(args):
    from .verification import run_all

    results = run_all(fault=args.fault, scale=args.scale)
    for r in results:
        print(r.line())
    report = {"passed": all(r.passed for r in results),
              "properties": [r.as_dict() for r in results]}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=2)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("failed properties: " + ", ".join(failed), file=sys.stderr)
        return EXIT_PROPERTY
    return EXIT_OK


def cmd_benchmark(args):
    from .experiment import run_benchmark

    cfg = _config(args)
    seeds = range(cfg.seed, cfg.seed + args.seeds)
    rows = run_benchmark(cfg, seeds, use_grid=not args.defaults)
    wins = sum(r.structured_rmse < r.unstructured_rmse for r in rows)
    ms = statistics.fmean(r.structured_rmse for r in rows)
    mu = statistics.fmean(r.unstructured_rmse for r in rows)
    summary = {
        "seeds": list(seeds), "structured_wins": wins,
        "mean_structured_rmse": ms, "mean_unstructured_rmse": mu,
        "relative_improvement": (mu - ms) / mu,
        "rows": [r.__dict__ for r in rows],
    }
    for r in rows:
        print(f"seed {r.seed}: structured {r.structured_rmse:.4f} "
              f"(sigma {r.structured_sigma:.4g}, gamma {r.structured_gamma:.4g}) "
              f"unstructured {r.unstructured_rmse:.4f} "
              f"(sigma {r.unstructured_sigma:.4g}, gamma {r.unstructured_gamma:.4g})")
    print(f"structured wins {wins}/{len(rows)}; mean {ms:.4f} vs {mu:.4f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(summary, fh, indent=2, default=float)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate, "fit": cmd_fit, "predict": cmd_predict,
    "eval": cmd_eval, "gridsearch": cmd_gridsearch, "verify": cmd_verify,
    "benchmark": cmd_benchmark,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="velokern",
        description="Structured kernel multi-step predictors of the velocity form.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--data")
        p.add_argument("--model")
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        if name == "eval":
            p.add_argument("--plot-data", dest="plot_data")
        if name == "verify":
            p.add_argument("--fault", choices=["kernel-scalar"])
            p.add_argument("--scale", type=float, default=1.0,
                           help="fraction of the default instance counts")
        if name == "benchmark":
            p.add_argument("--seeds", type=int, default=10)
            p.add_argument("--defaults", action="store_true",
                           help="use the documented hyper-parameters, no grid search")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, SimulationDivergedError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, InvalidInputError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
