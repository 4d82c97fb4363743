"""Command-line entry point: ``emphatic-rl <experiment> [options]``.

Exit codes: 0 success, 1 configuration error, 2 oracle verification
failure, 3 every run diverged.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .experiments import (
    EXPERIMENTS,
    ConfigError,
    ExperimentConfig,
    run_control_experiment,
    run_emphasis_experiment,
    run_policy_eval_experiment,
)
from .records import write_csv
from .verify import run_oracle_verify

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_DIVERGED = 0, 1, 2, 3

_RUNNERS = {
    "emphasis": run_emphasis_experiment,
    "policy-eval": run_policy_eval_experiment,
    "control": run_control_experiment,
}


def parse_sweep(text: str) -> tuple[float, ...]:
    """``lo:hi:factor`` -> (hi, hi/factor, hi/factor^2, ...) down to lo."""
    try:
        lo, hi, factor = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"sweep must be lo:hi:factor, got {text!r}") from None
    if not (0 < lo <= hi and factor > 1):
        raise ConfigError("sweep needs 0 < lo <= hi and factor > 1")
    n = int(np.floor(np.log(hi / lo) / np.log(factor) + 1e-9)) + 1
    return tuple(hi / factor ** k for k in range(n))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emphatic-rl", description=__doc__.splitlines()[0])
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--features", default="onehot",
                        help="original, onehot, zerohot or aliased")
    parser.add_argument("--pi-solid", type=float, help="target probability of the solid action")
    parser.add_argument("--gamma", type=float, default=0.99)
    parser.add_argument("--eta", type=float, help="ridge weight")
    parser.add_argument("--alpha", type=float,
                        help="GEM rate (policy-eval) or initial critic rate (control)")
    parser.add_argument("--alpha2", type=float, help="single GEM-ETD value rate instead of a sweep")
    parser.add_argument("--beta", type=float, help="initial actor rate (control)")
    parser.add_argument("--c0", type=float, default=10.0, help="adaptive step-size threshold")
    parser.add_argument("--steps", type=int)
    parser.add_argument("--runs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--out", help="output path; CSV (JSON lines for oracle-verify)")
    parser.add_argument("--sweep", help="learning-rate grid lo:hi:factor")
    parser.add_argument("--log-every", type=int,
                        help="log every N steps (default: every step to 1e5, then every 10)")
    parser.add_argument("--snapshot-every", type=int, default=100,
                        help="policy snapshot interval for control")
    parser.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    return parser


def config_from_args(args) -> ExperimentConfig:
    return ExperimentConfig(
        experiment=args.experiment, features=args.features, pi_solid=args.pi_solid,
        gamma=args.gamma, eta=args.eta, alpha=args.alpha, alpha2=args.alpha2, beta=args.beta,
        c0=args.c0, steps=args.steps, runs=args.runs, master_seed=args.seed,
        sweep=parse_sweep(args.sweep) if args.sweep else None, out=args.out,
        log_every=args.log_every, snapshot_every=args.snapshot_every, n_jobs=args.jobs)


def _verify(cfg: ExperimentConfig, stdout) -> int:
    result = run_oracle_verify(cfg)
    for check in result.checks:
        print(check.line(), file=stdout)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            for check in result.checks:
                fh.write(json.dumps({"check": check.name, "status": check.status,
                                     "residual": check.residual, "tolerance": check.tolerance,
                                     "detail": check.detail}) + "\n")
            for key, value in result.report:
                fh.write(json.dumps({"key": key, "value": value}) + "\n")
    return EXIT_OK if result.passed else EXIT_VERIFY


def main(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = config_from_args(args)
        if cfg.experiment == "oracle-verify":
            return _verify(cfg, stdout)
        result = _RUNNERS[cfg.experiment](cfg)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            write_csv(result.records(), fh)
    else:
        write_csv(result.records(), stdout)
    for alg, stats in result.summary.items():
        print(f"{alg}: {json.dumps(stats)}", file=sys.stderr)
    return EXIT_DIVERGED if result.all_diverged else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
