"""Command-line entry point.

    polywind <experiment> [flags]     run one experiment
    polywind replay <run_dir> [--replica R]
                                      recompute one replica from its logged
                                      seed and compare to the stored rows

The experiment may come from the positional argument or from a config file
(--config) with flat key=value lines; flags override file values.  Exit
status: 0 on success, 1 when a replica fails or an asserted gate fails,
2 on configuration errors.
"""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, ConfigError, build_config, read_config_file
from .runner import replay, run


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polywind",
        description="Winding-number statistics of a periodically driven polymer.",
    )
    parser.add_argument(
        "experiment",
        nargs="?",
        default=None,
        metavar="EXPERIMENT",
        help="one of: " + ", ".join(EXPERIMENTS),
    )
    parser.add_argument("--config", default=None, help="flat key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--replicas", type=int, default=None, help="replica count")
    parser.add_argument("--beta", type=float, default=None, help="coupling strength")
    parser.add_argument("--N", type=int, default=None, help="time horizon in whole units")
    parser.add_argument("--M", type=int, default=None, help="grid points per unit length")
    parser.add_argument("--L", type=int, default=None, help="circumference in unit lengths")
    parser.add_argument("--J", type=int, default=None, help="winding blocks kept on each side")
    parser.add_argument("--steps", type=int, default=None, help="time steps per unit")
    parser.add_argument("--threads", type=int, default=None, help="worker processes (0 = auto)")
    parser.add_argument("--out", default=None, help="output directory root")
    parser.add_argument(
        "--assert",
        dest="assert_gates",
        action="store_const",
        const=True,
        default=None,
        help="evaluate pass/fail gates; exit 1 and write failure.json on violation",
    )
    return parser


def _replay_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polywind replay",
        description="Recompute one replica of a finished run from its logged seed.",
    )
    parser.add_argument("run_dir", help="run directory containing manifest.json")
    parser.add_argument("--replica", type=int, default=None, help="replica index (default: first)")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "replay":
        args = _replay_parser().parse_args(argv[1:])
        try:
            return replay(args.run_dir, args.replica)
        except FileNotFoundError as err:
            print(f"replay error: {err}", file=sys.stderr)
            return 2

    args = _build_parser().parse_args(argv)
    flags = {
        "experiment": args.experiment,
        "seed": args.seed,
        "replicas": args.replicas,
        "beta": args.beta,
        "N": args.N,
        "M": args.M,
        "L": args.L,
        "J": args.J,
        "steps": args.steps,
        "threads": args.threads,
        "out": args.out,
        "assert": args.assert_gates,
    }
    try:
        file_values = read_config_file(args.config) if args.config else None
        config = build_config(file_values, flags)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2

    outcome = run(config)
    _print_outcome(config, outcome)
    return outcome.status


def _print_outcome(config, outcome):
    print(f"{config.experiment} [{config.config_hash()}] -> {outcome.run_dir}")
    summary = outcome.summary
    error = summary.get("error")
    if error:
        print(f"FAILED: {error['message']}")
        print(f"  replay: {error['replay']}")
        return
    for key in ("sigma_annealed", "sigma_stationary", "mixing_rate", "tail_profile"):
        report = summary.get(key)
        if report:
            print(f"  {key}: {report['value']:.6g} +/- {report['std_error']:.3g}")
    ks = summary.get("ks")
    if ks and "statistic" in ks:
        print(f"  ks: statistic={ks['statistic']:.4f} p={ks['p_value']:.4f}")
    gates = summary.get("gates")
    if gates is not None:
        failed = [g for g in gates if not g["passed"]]
        if failed:
            names = ", ".join(g["gate"] for g in failed)
            print(f"  gates FAILED: {names}")
        else:
            print(f"  gates passed: {len(gates)}")


if __name__ == "__main__":
    raise SystemExit(main())
