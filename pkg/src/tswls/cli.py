"""Command line front end.

    tswls estimate --scenario scene.json --noise noise.json --seed 3
    tswls sweep --config sweep.json --out results.csv [--threads N]

Exit codes: 0 success, 1 unreadable or invalid input, 2 solver failure,
3 output could not be written.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import bias as bias_mod
from .estimator import estimate
from .exceptions import TSWLSError
from .experiments import AllTrialsFailed, SweepConfig, format_summary, run_sweep, threads_from_env, write_csv
from .geometry import Scenario, true_parameters
from .measurement import NoiseModel, synthesize

EXIT_PARSE, EXIT_SOLVER, EXIT_WRITE = 1, 2, 3


class InputError(Exception):
    pass


def _read_json(path, what):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise InputError(f"cannot read {what} file {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{what} file {path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def cmd_estimate(scenario_file, noise_file, seed, out=None, with_bias=False) -> int:
    out = out or sys.stdout
    try:
        try:
            scenario = Scenario.from_dict(_read_json(scenario_file, "scenario"))
            noise = NoiseModel.from_dict(_read_json(noise_file, "noise"), scenario.n_ris)
        except (ValueError, TypeError, KeyError) as exc:
            raise InputError(str(exc)) from None
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        params = true_parameters(scenario)
        meas = synthesize(params, noise, int(seed))
        est = estimate(meas, scenario, noise)
        doc = {"seed": int(seed), "n_ris": scenario.n_ris, "q_true": scenario.mu.tolist(), **est.to_dict()}
        if with_bias and not noise.is_zero:
            doc["bias"] = bias_mod.predict(scenario, noise).to_dict()
    except (TSWLSError, ValueError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    json.dump(doc, out, indent=2)
    out.write("\n")
    return 0


def cmd_sweep(config_file, out_csv, threads=None, quiet=False) -> int:
    try:
        raw = _read_json(config_file, "config")
        if not isinstance(raw, dict):
            raise InputError("config must be a JSON object")
        try:
            from pathlib import Path

            config = SweepConfig.from_dict(raw, base_dir=Path(config_file).parent)
        except (ValueError, TypeError, KeyError) as exc:
            raise InputError(f"config file {config_file}: {exc}") from None
        if threads is None:
            try:
                threads = threads_from_env()
            except ValueError as exc:
                raise InputError(str(exc)) from None
        if threads < 1:
            raise InputError("--threads must be >= 1")
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        results = run_sweep(config, threads=threads)
    except (TSWLSError, AllTrialsFailed, ValueError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    try:
        write_csv(results, out_csv)
    except OSError as exc:
        print(f"error: cannot write {out_csv}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_WRITE
    if not quiet:
        print(format_summary(results))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="tswls", description="TSWLS RIS-aided 3D positioning")
    sub = ap.add_subparsers(dest="command", required=True)
    e = sub.add_parser("estimate", help="estimate one position from synthesized measurements")
    e.add_argument("--scenario", required=True, help="scenario JSON (bs, ris, mu)")
    e.add_argument("--noise", required=True, help="noise JSON (sigma_a, sigma_t)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--bias", action="store_true", help="also print the theoretical bias report")
    s = sub.add_parser("sweep", help="run a Monte Carlo sweep and write CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int, default=None, help="worker threads (default: $TSWLS_THREADS or 1)")
    s.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "estimate":
        return cmd_estimate(args.scenario, args.noise, args.seed, with_bias=args.bias)
    return cmd_sweep(args.config, args.out, threads=args.threads, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
