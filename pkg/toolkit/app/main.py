"""
Command-line entry point: ``python -m app.main <command> [options]``.

Exit codes: 0 success, 1 failed criterion or check, 2 usage or
configuration error, 3 solver failure.
"""

import argparse
import logging
import sys

from app.api import branch, coefficients, lyapunov, spectrum, verify
from app.core.config import Settings, load_settings
from app.core.deps import get_writer
from app.core.errors import VortexStripError
from app.core.logging import configure_logging

logger = logging.getLogger(__name__)


def _criteria(value: str) -> list[int]:
    try:
        numbers = sorted({int(v) for v in value.split(",") if v.strip()})
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"criteria must be comma-separated integers, got '{value}'") from e
    if not numbers or any(n not in verify.CRITERIA for n in numbers):
        raise argparse.ArgumentTypeError(f"criteria must lie in 1..{len(verify.CRITERIA)}")
    return numbers


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vortexstrip",
        description="Soliton and solitonic-vortex solutions of the GP equation on a strip",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key-value config file with SCHEMA_VERSION=1")
    common.add_argument("--out", help="output directory")
    common.add_argument("--nx", type=int, help="x grid points (odd)")
    common.add_argument("--half-length", type=float, help="half length L of the x interval")
    common.add_argument("--modes", type=int, help="retained cosine modes K")
    common.add_argument("--tol", type=float, help="Newton and fixed-point tolerance")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    scan = argparse.ArgumentParser(add_help=False)
    scan.add_argument("--k", type=int, help="mode index of the branch")
    scan.add_argument("--workers", type=int, help="worker processes for scans")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("coefficients", parents=[common], help="ω, Λ, 𝓔 and their bounds")
    sub.add_parser("spectrum", parents=[common, scan], help="T_k and strip spectra against d")
    sub.add_parser("branch", parents=[common, scan], help="continue the vortex branch in d")
    sub.add_parser("lyapunov", parents=[common, scan], help="bifurcation function J(d, λ)")
    v = sub.add_parser("verify", parents=[common], help="run the acceptance criteria")
    v.add_argument("--criteria", type=_criteria, help="comma-separated criterion numbers")
    return parser


def settings_from_args(args: argparse.Namespace) -> Settings:
    overrides = {
        "domain": {"nx": args.nx, "half_length": args.half_length, "n_modes": args.modes},
        "solver": {"newton_tol": args.tol, "fp_tol": args.tol},
        "scan": {"k": getattr(args, "k", None), "workers": getattr(args, "workers", None)},
        "output": {"out_dir": args.out},
    }
    return load_settings(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        settings = settings_from_args(args)
        writer = get_writer(settings)
        logger.info("running %s with nx=%d, L=%g, K=%d", args.command, settings.domain.nx, settings.domain.half_length, settings.domain.n_modes)
        if args.command == "verify":
            return verify.run(settings, writer, args.criteria)
        module = {"coefficients": coefficients, "spectrum": spectrum, "branch": branch, "lyapunov": lyapunov}[args.command]
        return module.run(settings, writer)
    except VortexStripError as e:
        logger.error("%s %s", e, e.details if e.details else "")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
