"""
Command-line entry point.

Exit codes: 0 success, 2 blow-up, 3 configuration error, 4 a check
threshold was missed (energy-audit flag, rate outside tolerance, unstable
commutator ratios).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import experiments
from .config import parse_config
from .errors import BlowUpError, CFLError, ConfigError

EXIT_OK = 0
EXIT_BLOWUP = 2
EXIT_CONFIG = 3
EXIT_THRESHOLD = 4

log = logging.getLogger("oldroyd")


def _common(p):
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    p.add_argument("--workers", type=int, default=None, help="parallel jobs for sweeps")
    p.add_argument("--seed", type=int, default=None, help="seed for the initial data / ensemble")


def build_parser():
    parser = argparse.ArgumentParser(prog="oldroyd", description="Spectral Oldroyd-B solver and Besov toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("simulate", "evolve one configuration and write ledgers"),
        ("nu-sweep", "inviscid-limit rate study"),
        ("energy-audit", "energy ledger with the quadratic-bound fit"),
        ("commutator-test", "commutator ensemble report"),
    ]:
        _common(sub.add_parser(name, help=help_))
    p = sub.add_parser("besov-norm", help="per-block Besov ledger of a checkpoint")
    _common(p)
    p.add_argument("--field", default=None, help="checkpoint file (overrides besov.field)")
    p.add_argument("--component", choices=("u", "tau"), default=None)
    p.add_argument("--s", type=float, default=None, help="regularity exponent")
    return parser


def _load(args):
    cfg = parse_config(args.config)
    changes = {}
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("must be >= 1", "workers")
        changes["workers"] = args.workers
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("must be an unsigned 64-bit integer", "initial.seed")
        changes["initial"] = dataclasses.replace(cfg.initial, seed=args.seed)
    return cfg.replace(**changes) if changes else cfg


def run(args):
    cfg = _load(args)
    cmd = args.command
    if cmd == "simulate":
        res = experiments.run_simulate(cfg, args.out)
        print(f"{res.status}: t={res.summary['t_final']:.6g}, output in {res.out_dir}")
        return EXIT_BLOWUP if res.status == "blowup" else EXIT_OK
    if cmd == "energy-audit":
        res = experiments.run_energy_audit(cfg, args.out)
        print(f"{res.status}: C_fit={res.summary['c_fit']:.6g}, flag={res.summary['flag']}")
        if res.status == "blowup":
            return EXIT_BLOWUP
        return EXIT_THRESHOLD if res.summary["flag"] else EXIT_OK
    if cmd == "nu-sweep":
        rep = experiments.run_nu_sweep(cfg, args.out)
        print(f"slope={rep.slope:.4f} residual={rep.fit_residual:.3g} nu0~{rep.nu0_estimate}")
        for w in rep.warnings:
            print(f"warning: {w}")
        return EXIT_OK if experiments.sweep_passes(rep) else EXIT_THRESHOLD
    if cmd == "besov-norm":
        _, _, text = experiments.run_besov_norm(cfg, args.out, args.field, args.component, args.s)
        sys.stdout.write(text)
        return EXIT_OK
    if cmd == "commutator-test":
        report, summary = experiments.run_commutator_test(cfg, args.out)
        print(f"max ratio {report.max_ratio:.6g} over {len(report.rows)} samples")
        ok = summary["admissible"] and summary.get("refinement_stable", True)
        return EXIT_OK if ok else EXIT_THRESHOLD
    raise AssertionError(cmd)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CFLError as exc:
        print(f"time step too large: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
