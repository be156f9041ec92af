# Copyright (c) 2020, ISACLAB DEVELOPERS.
"""
Command line front end.

    isac-lab sweep --figure fig5 --config two_sided.toml --seed 42 \
        --trials 100 --out fig5.csv
    isac-lab eval --config two_sided.toml --seed 42

Exit codes: 0 ok, 1 configuration error, 2 infeasible scenario, 3 solver
failure, 64 command line usage error.
"""
import argparse
import logging
import sys

import pandas as pd

import isaclab
from isaclab import sdp
from isaclab.channels import make_rng
from isaclab.config import DEFAULT_SCENARIO, load_scenario_file
from isaclab.isaclab import IsacLabError
from isaclab.optimizer import DEFAULT_BISECT_TOL, DEFAULT_ROUNDS
from isaclab.sweeps import (
    DEFAULT_SEED,
    DEFAULT_TRIALS,
    FIGURES,
    SolverOptions,
    evaluate_once,
    figure_spec,
    run_sweep,
    sweep_to_csv,
)
from isaclab.waveforms import assemble_frame, write_waveform

logger = logging.getLogger(__name__)

USAGE_ERROR = 64


class _Parser(argparse.ArgumentParser):
    """Keeps usage errors apart from the infeasible scenario code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _add_common(parser):
    parser.add_argument(
        "--config",
        default=DEFAULT_SCENARIO,
        help="scenario TOML file (default: bundled two-sided scenario)",
    )
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--rounds", type=int, default=DEFAULT_ROUNDS)
    parser.add_argument(
        "--bisect-tol", type=float, default=DEFAULT_BISECT_TOL
    )
    parser.add_argument("--sdp-tol", type=float, default=sdp.DEFAULT_TOL)
    parser.add_argument(
        "--max-iter", type=int, default=sdp.DEFAULT_MAX_ITER
    )
    parser.add_argument(
        "--noise-regime",
        choices=("auto", "low", "high", "exact"),
        default="auto",
    )
    parser.add_argument(
        "--randomize",
        action="store_true",
        help="try Gaussian randomization next to eigenvector recovery",
    )
    parser.add_argument("--log-file", help="CSV event log")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
    )


def build_parser():
    parser = _Parser(
        prog="isac-lab",
        description="Hybrid STAR-RIS ISAC simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="Monte Carlo sweep for a figure")
    sweep.add_argument("--figure", required=True, choices=FIGURES)
    sweep.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    sweep.add_argument("--out", help="CSV path (default: <figure>.csv)")
    sweep.add_argument(
        "--workers",
        type=int,
        default=None,
        help="worker processes (default: PARALLEL_LEVEL, 0 = serial)",
    )
    _add_common(sweep)

    ev = sub.add_parser("eval", help="evaluate one channel draw")
    ev.add_argument(
        "--no-optimize",
        action="store_true",
        help="report the uniform initialization only",
    )
    ev.add_argument(
        "--scheme", choices=("hybrid", "passive"), default="hybrid"
    )
    ev.add_argument("--dump-waveform", help="CSV path for a sensing stream")
    ev.add_argument("--out", help="CSV path for the metrics row")
    _add_common(ev)
    return parser


def _options(args, optimize=True):
    return SolverOptions(
        rounds=args.rounds,
        bisect_tol=args.bisect_tol,
        sdp_tol=args.sdp_tol,
        max_iter=args.max_iter,
        noise_regime=args.noise_regime,
        randomize=args.randomize,
        optimize=optimize,
    )


def _sweep(args):
    config, scenario = load_scenario_file(args.config)
    spec = figure_spec(args.figure, trials=args.trials, seed=args.seed)
    frame = run_sweep(
        spec, config, scenario, options=_options(args), workers=args.workers
    )
    out = args.out or f"{args.figure}.csv"
    sweep_to_csv(frame, out)
    print(f"wrote {len(frame)} rows to {out}")


def _eval(args):
    config, scenario = load_scenario_file(args.config)
    report = evaluate_once(
        config,
        scenario,
        args.seed,
        scheme=args.scheme,
        options=_options(args, optimize=not args.no_optimize),
    )
    print(report.format())
    if args.out:
        pd.DataFrame([report.row()]).to_csv(
            args.out, index=False, float_format="%.12g"
        )
    if args.dump_waveform:
        frame = assemble_frame(
            report.W,
            len(scenario.users),
            report.config,
            make_rng(args.seed, 2),
        )
        write_waveform(frame, args.dump_waveform)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.log_file:
        isaclab.reinitialize(
            logging=True, log_file_name=args.log_file, level=args.log_level
        )
    try:
        if args.command == "sweep":
            _sweep(args)
        else:
            _eval(args)
    except IsacLabError as e:
        print(f"isac-lab: {type(e).__name__}: {e}", file=sys.stderr)
        return e.errcode
    finally:
        isaclab._flush_logs()
    return 0


if __name__ == "__main__":
    sys.exit(main())
