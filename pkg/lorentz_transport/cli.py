import argparse
import logging
import os
import sys
from dataclasses import fields
from typing import List, Optional

from .errors import ConfigError, LorentzTransportError, NotCausallyRelatedError
from .kantorovich import METHODS
from .measures import PROFILES, WEIGHT_KINDS
from .pipeline import (CHECKS, CUSTOM_PROFILE, EXIT_ERROR, EXIT_HYPOTHESIS, EXIT_PASS, RunConfig, Tolerances,
                       compare_pivots, run_pipeline, sweep, verify_files, write_json)

logger = logging.getLogger(__name__)

LAST_STAGE = {"generate": "instance", "solve": "regularity", "potential": "potentials", "map": "map",
              "regularity": "regularity"}


def _add_logging_arguments(parser: argparse.ArgumentParser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    group.add_argument("-q", "--quiet", action="store_true", help="log errors only")


def _add_run_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--dim", type=int, default=1, help="spatial dimension n of R^{1+n}")
    parser.add_argument("--mu", type=int, default=20, help="number of source points")
    parser.add_argument("--nu", type=int, default=20, help="number of target points")
    parser.add_argument("--profile", default="slices", choices=PROFILES + (CUSTOM_PROFILE,))
    parser.add_argument("--instance", default=None, help="instance JSON file; implies --profile custom-file")
    parser.add_argument("--slab-time", type=float, default=3.0)
    parser.add_argument("--radius", type=float, default=1.0)
    parser.add_argument("--weights", default=WEIGHT_KINDS[0], choices=WEIGHT_KINDS)
    parser.add_argument("--method", default=METHODS[0], choices=METHODS, help="LP backend")
    parser.add_argument("--nodes", type=int, default=33, help="grid nodes per axis for the regularity checks")
    parser.add_argument("--max-cycle-len", type=int, default=4)
    parser.add_argument("--checks", default=",".join(CHECKS), help=f"comma-separated subset of {','.join(CHECKS)}")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--workers", type=int, default=1)
    _add_tolerance_arguments(parser)


def _add_tolerance_arguments(parser: argparse.ArgumentParser):
    defaults = Tolerances()
    for f in fields(Tolerances):
        parser.add_argument(f"--tol-{f.name.replace('_', '-')}", dest=f"tol_{f.name}", type=float,
                            default=getattr(defaults, f.name))


def _tolerances(args: argparse.Namespace) -> Tolerances:
    return Tolerances(**{f.name: getattr(args, f"tol_{f.name}") for f in fields(Tolerances)})


def config_from_args(args: argparse.Namespace, last_stage: str = "regularity") -> RunConfig:
    checks = frozenset(c.strip() for c in args.checks.split(",") if c.strip())
    profile = CUSTOM_PROFILE if args.instance is not None else args.profile
    config = RunConfig(seed=args.seed, dimension=args.dim, sizes=(args.mu, args.nu), profile=profile,
                       instance_path=args.instance, slab_time=args.slab_time, radius=args.radius,
                       weights=args.weights, method=args.method, max_cycle_len=args.max_cycle_len,
                       nodes=args.nodes, checks=checks, last_stage=last_stage, tolerances=_tolerances(args),
                       out_dir=args.out, workers=args.workers)
    config.validate()
    return config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lorentz-transport",
                                     description="Optimal transport for the Lorentzian cost c2 on Minkowski space.")
    _add_logging_arguments(parser)
    commands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("generate", "write a seeded instance"),
                            ("solve", "run the full pipeline and write all artifacts"),
                            ("potential", "solve and build the pi-solution"),
                            ("map", "solve, build potentials and recover the transport map"),
                            ("regularity", "run the full pipeline including the regularity checks")):
        _add_run_arguments(commands.add_parser(name, help=help_text))

    verify = commands.add_parser("verify", help="re-check stored artifacts")
    verify.add_argument("--instance", required=True)
    verify.add_argument("--plan", required=True)
    verify.add_argument("--potentials", default=None)
    verify.add_argument("--max-cycle-len", type=int, default=4)
    verify.add_argument("--out", default=None, help="write verify.json into this directory")
    _add_tolerance_arguments(verify)

    sweep_parser = commands.add_parser("sweep", help="run many seeds and aggregate one CSV row per run")
    _add_run_arguments(sweep_parser)
    sweep_parser.add_argument("--seeds", type=int, default=10, help="number of consecutive seeds")
    sweep_parser.add_argument("--profiles", default=None, help="comma-separated profiles; defaults to --profile")
    sweep_parser.add_argument("--csv", default="sweep.csv", help="aggregate CSV file name inside --out")

    compare = commands.add_parser("compare-pivots", help="compare LP backends on one instance")
    _add_run_arguments(compare)
    return parser


def _configure_logging(args: argparse.Namespace):
    level = logging.DEBUG if args.verbose else (logging.ERROR if args.quiet else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        if args.command in LAST_STAGE:
            result = run_pipeline(config_from_args(args, LAST_STAGE[args.command]))
            return result.exit_code
        if args.command == "verify":
            exit_code, reports = verify_files(args.instance, args.plan, args.potentials, _tolerances(args),
                                              args.max_cycle_len)
            for report in reports:
                logger.info(f"{report.name}: {'pass' if report.passed else 'FAIL'}")
            if args.out is not None:
                os.makedirs(args.out, exist_ok=True)
                write_json(os.path.join(args.out, "verify.json"),
                           {"exit_code": exit_code, "checks": {r.name: r.to_dict() for r in reports}})
            return exit_code
        if args.command == "sweep":
            config = config_from_args(args)
            profiles = None if args.profiles is None else [p.strip() for p in args.profiles.split(",") if p.strip()]
            os.makedirs(config.out_dir, exist_ok=True)
            sweep(config, range(config.seed, config.seed + args.seeds), os.path.join(config.out_dir, args.csv),
                  profiles, config.workers)
            return EXIT_PASS
        if args.command == "compare-pivots":
            comparison = compare_pivots(config_from_args(args))
            logger.info(f"Optimal costs {comparison['costs']}, same plan: {comparison['same_plan']}")
            return EXIT_PASS
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_ERROR
    except LorentzTransportError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_HYPOTHESIS if isinstance(e, NotCausallyRelatedError) else EXIT_ERROR
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_ERROR
    return EXIT_ERROR


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
