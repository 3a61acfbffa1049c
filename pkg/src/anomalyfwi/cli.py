"""Command-line interface: ``anomalyfwi <command> <spec.json> [options]``."""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import AnomalyFwiError, ConfigError, NumericalFailure
from .harness import (STRATEGY_KEYS, ExperimentSpec, _finite, bench_all, landscape_scan,
                      make_evaluator, make_observation, run_strategy, write_landscape_csv)
from .signals import processed_misfits, write_seismograms_csv
from .surrogate import lhs_maximin, mo_train, save_model, so_train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _load(args) -> ExperimentSpec:
    spec = ExperimentSpec.load(args.spec)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        spec.threads = args.threads
    return spec


def _out_dir(args, spec) -> str:
    out = args.out or spec.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_finite(obj), fh, indent=1, sort_keys=True, allow_nan=False)


def cmd_simulate(args) -> int:
    spec = _load(args)
    out = _out_dir(args, spec)
    obs = make_observation(spec)
    path = os.path.join(out, "observation.csv")
    write_seismograms_csv(path, obs)
    print(f"wrote {path} ({obs.n_receivers} receivers, {obs.n_samples} samples)")
    return EXIT_OK


def cmd_landscape(args) -> int:
    spec = _load(args)
    out = _out_dir(args, spec)
    grid = landscape_scan(spec, args.nx, args.nz)
    path = os.path.join(out, "landscape.csv")
    write_landscape_csv(path, grid)
    xm, sm = grid.argmin()
    print(f"wrote {path}; grid minimum S = {sm:.6g} at ({xm[0]:.2f}, {xm[1]:.2f}) mm")
    return EXIT_OK


def cmd_invert(args) -> int:
    spec = _load(args)
    out = _out_dir(args, spec)
    res = run_strategy(args.strategy, spec)
    d = res.to_json()
    d["wall_time"] = res.wall_time
    d["distance_mm"] = res.distance_to(spec.true_anomaly)
    path = os.path.join(out, "result.json")
    _write_json(path, d)
    if res.status != "ok":
        print(f"{res.strategy} failed: {res.error}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"{res.strategy}: ({res.x[0]:.3f}, {res.x[1]:.3f}) mm, S = {res.misfit:.6g}, "
          f"{res.calls} forward calls; wrote {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    spec = _load(args)
    out = _out_dir(args, spec)
    block = spec.gp
    seed = spec.strategy_seed(block, 3)
    rng = np.random.default_rng(seed)
    obs = make_observation(spec)
    ev = make_evaluator(spec, obs)
    X = lhs_maximin(int(block["n_doe"]), spec.bounds, rng, int(block["lhs_iterations"]),
                    int(block["lhs_swaps"]))
    sims = [ev.simulate(x) for x in X]
    train_rng = np.random.default_rng([seed, 1])
    if args.kind == "so":
        y = np.array([processed_misfits(obs, s, spec.tau).sum() for s in sims])
        model = so_train(X, y, obs, spec.tau, spec.bounds, objective=block["objective"], rng=train_rng)
    else:
        model = mo_train(X, sims, spec.bounds, float(block["explained_variance"]),
                         objective=block["objective"], rng=train_rng, threads=spec.threads)
    path = os.path.join(out, "model.json")
    save_model(model, path)
    print(f"wrote {path} ({len(sims)} training runs)")
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = _load(args)
    out = _out_dir(args, spec)
    report = bench_all(spec, out)
    for r in report["rows"]:
        if r.x is None:
            print(f"{r.strategy:<11} failed: {r.error}")
        else:
            print(f"{r.strategy:<11} ({r.x[0]:8.3f}, {r.x[1]:8.3f}) mm  "
                  f"dist {r.distance_to(spec.true_anomaly):6.3f} mm  calls {r.calls}")
    print(f"wrote {os.path.join(out, 'results.json')}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the experiment seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--threads", type=int, default=None, help="worker threads for batches")

    p = argparse.ArgumentParser(prog="anomalyfwi", description=__doc__, parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write the synthetic observation")
    s.add_argument("spec")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("landscape", parents=[common], help="scan the misfit on a grid")
    s.add_argument("spec")
    s.add_argument("--nx", type=int, default=None)
    s.add_argument("--nz", type=int, default=None)
    s.set_defaults(func=cmd_landscape)

    s = sub.add_parser("invert", parents=[common], help="run one inversion strategy")
    s.add_argument("spec")
    s.add_argument("--strategy", required=True, choices=sorted(STRATEGY_KEYS))
    s.set_defaults(func=cmd_invert)

    s = sub.add_parser("train-surrogate", parents=[common], help="train and save a surrogate")
    s.add_argument("spec")
    s.add_argument("--kind", required=True, choices=["so", "mo"])
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("bench", parents=[common], help="run all strategies and compare")
    s.add_argument("spec")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (AnomalyFwiError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
