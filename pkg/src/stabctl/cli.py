"""Command-line entry point: ``stabctl <verb> [flags]``.

Exit codes: 0 success, 1 numerical failure (blow-up, fit failure, failed
check), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from stabctl import verify
from stabctl.errors import ConfigError, DomainError, FitError, FluxModelError, NumericalError
from stabctl.harness import (
    atomic_write,
    configure_logging,
    csv_text,
    json_text,
    run_approx_control,
    run_calibrate,
    run_stabilise,
)

log = logging.getLogger("stabctl")

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stabctl", description="Stabilise viscous conservation laws by a one-dimensional control.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def scenario_args(sp):
        sp.add_argument("--config", required=True, help="scenario TOML file, or a shipped name (s1..s5)")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--seed", type=int, help="override the scenario seed")

    scenario_args(sub.add_parser("stabilise", help="calibrate and run the stabilising control"))
    scenario_args(sub.add_parser("calibrate", help="estimate the controller constants only"))
    sp = sub.add_parser("approx-control", help="report the time at which the distance drops below epsilon")
    scenario_args(sp)
    sp.add_argument("--epsilon", type=float, required=True)
    sp.add_argument("--metric", choices=("c2sigma", "l1"), default="c2sigma")
    sp = sub.add_parser("verify", help="run a verification suite")
    sp.add_argument("--suite", required=True, help=", ".join(verify.SUITES))
    sp.add_argument("--out", type=Path)
    sp = sub.add_parser("convergence", help="dyadic refinement studies and observed orders")
    sp.add_argument("--out", type=Path)
    return p


def _emit(text: str, out: Path | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write(out / name, text)
        print(f"wrote {out / name}")


def _cmd_stabilise(args) -> int:
    run = run_stabilise(args.config, args.out, args.seed)
    r = run.result
    c = run.checks
    print(f"windows={c['completed_windows']} final_d_l1={r.d_l1[-1]:.3e} "
          f"q1_bound={c['q1_bound']:.6g} q1_observed={c['q1_observed']:.6g} "
          f"pulses={c['pulse_count']} neither={c['neither_count']}")
    fit = run.decay_fit or {}
    if "alpha" in fit:
        print(f"decay fit: alpha={fit['alpha']:.6g} r_squared={fit['r_squared']:.6g}")
    if run.failed:
        log.error("numerical failure in window %s: %s", r.failure.window, r.failure)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    doc = run_calibrate(args.config, args.out, args.seed)
    if args.out is None:
        sys.stdout.write(json_text(doc))
    else:
        print(f"wrote {args.out / 'calibration.json'}")
    return EXIT_OK


def _cmd_approx(args) -> int:
    report = run_approx_control(args.config, args.epsilon, args.out, args.seed, metric=args.metric)
    if report["hit"]:
        print(f"hit: T={report['T']:g} persisted={report['persisted']} window_max={report['window_max']}")
    else:
        print(f"failure: horizon exhausted, closing distance {report['closing_distance']:.6g}")
    return EXIT_OK if report["hit"] and report["persisted"] is not False else EXIT_NUMERICAL


def _cmd_verify(args) -> int:
    if args.suite not in verify.SUITES:
        raise ConfigError(f"unknown suite {args.suite!r}; known: {', '.join(verify.SUITES)}")
    rows = verify.run_suite(args.suite)
    _emit(csv_text(["case", "margin", "tolerance", "pass"],
                   [(r.case, r.margin, r.tolerance, str(r.passed).lower()) for r in rows]),
          args.out, f"verify_{args.suite}.csv")
    failed = [r.case for r in rows if not r.passed]
    for case in failed:
        log.error("failed: %s", case)
    return EXIT_NUMERICAL if failed else EXIT_OK


def _cmd_convergence(args) -> int:
    studies = {
        "heat_space": verify.heat_space_errors(),
        "heat_time_backward_euler": verify.heat_time_errors("implicit_backward_euler"),
        "heat_time_crank_nicolson": verify.heat_time_errors("crank_nicolson"),
        "mms_burgers_space": verify.mms_space_errors(),
        "mms_burgers_time_backward_euler": verify.mms_time_errors("implicit_backward_euler"),
        "mms_burgers_time_crank_nicolson": verify.mms_time_errors("crank_nicolson"),
    }
    rows = []
    for name, (sizes, errs) in studies.items():
        orders = np.concatenate([[np.nan], verify.observed_orders(sizes, errs)])
        rows.extend((name, s, e, o) for s, e, o in zip(sizes, errs, orders))
    _emit(csv_text(["study", "size", "error", "order"], rows), args.out, "convergence.csv")
    return EXIT_OK


COMMANDS = {
    "stabilise": _cmd_stabilise,
    "calibrate": _cmd_calibrate,
    "approx-control": _cmd_approx,
    "verify": _cmd_verify,
    "convergence": _cmd_convergence,
}


def main(argv=None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.verb](args)
    except (ConfigError, DomainError, FileNotFoundError) as exc:
        print(f"stabctl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FitError, FluxModelError) as exc:
        print(f"stabctl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
