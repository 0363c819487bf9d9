"""Main entry point for the contextuality-nonlocality simulator."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

# Add src to path
sys.path.insert(0, str(Path(__file__).parent))

from rich.console import Console
from rich.table import Table

from src.config.settings import settings
from src.core.exceptions import ConfigurationError, ContextualityError, ReportIOError
from src.core.logging import setup_logging

# Setup logging
setup_logging()
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERDICT_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_IO_ERROR = 3

SUBCOMMAND_MODES = {
    "simulate": "quantum-exact",
    "bounds": "bounds",
    "sample": "sample",
    "calibrate": "calibrate",
    "significance": "significance",
    "nosignal": "no-signaling",
}

SIGN_MODES = {"absolute": "absolute", "fixed": "fixed-sign"}


class _Parser(argparse.ArgumentParser):
    """Argument errors are configuration errors (exit 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario config file")
    common.add_argument(
        "--out", help=f"Output directory (default: {settings.output_dir})"
    )
    common.add_argument("--seed", type=int, help="Master RNG seed (u64)")
    common.add_argument("--shots", type=int, help="Emitted pairs per configuration")
    common.add_argument("--sign-mode", choices=sorted(SIGN_MODES), help="S sign mode")
    common.add_argument("--state-white-noise", type=float, help="State visibility v")
    common.add_argument("--phase-error", type=float, help="Singlet phase error (rad)")
    common.add_argument(
        "--measurement-visibility", type=float, help="Between-measurement η"
    )
    common.add_argument(
        "--detection-efficiency", type=float, help="Fair-sampling efficiency"
    )
    common.add_argument(
        "--calibrated", action="store_true", help="Use the calibrated noise model"
    )
    common.add_argument(
        "--assert",
        dest="assert_verdicts",
        action="store_true",
        help="Exit 1 unless every verdict holds",
    )
    common.add_argument(
        "--record-timing", action="store_true", help="Include wall time in reports"
    )

    parser = _Parser(
        description="Nonlocality-from-contextuality simulator",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s simulate                         # Ideal chi, S, omega
  %(prog)s simulate --calibrated            # Calibrated noisy prediction
  %(prog)s bounds --model nchv              # NCHV sweep (max 4)
  %(prog)s bounds --model lhv --past-only   # LHV sweep, past-only Alice
  %(prog)s sample --shots 100000 --seed 7   # Finite-shot estimates
  %(prog)s calibrate                        # Fit the measured 5.817 / 11.430
  %(prog)s significance --value 17.247 --se 0.019 --bound 16
  %(prog)s nosignal --calibrated            # Exact and sampled no-signaling

Exit codes: 0 success, 1 verdict failure or infeasible calibration,
2 configuration error, 3 I/O error.
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("simulate", parents=[common], help="Exact quantum prediction")

    bounds = sub.add_parser("bounds", parents=[common], help="Hidden-variable sweeps")
    bounds.add_argument("--model", choices=["nchv", "lhv", "nc-local"])
    bounds.add_argument("--past-only", action="store_true", default=None)
    bounds.add_argument("--bob-all-plus", action="store_true", default=None)

    sample = sub.add_parser("sample", parents=[common], help="Finite-shot sampling")
    sample.add_argument("--chi-source", choices=["dedicated", "marginal"])

    calibrate = sub.add_parser("calibrate", parents=[common], help="Fit noise model")
    calibrate.add_argument("--chi-target", type=float)
    calibrate.add_argument("--s-target", type=float)
    calibrate.add_argument("--axes", choices=["eta-phi", "eta-v"])

    significance = sub.add_parser(
        "significance", parents=[common], help="Standard deviations above a bound"
    )
    significance.add_argument("--value", type=float)
    significance.add_argument("--se", type=float)
    significance.add_argument("--bound", type=float)

    nosignal = sub.add_parser("nosignal", parents=[common], help="No-signaling checks")
    nosignal.add_argument(
        "--exact-only", action="store_true", help="Skip the sampled check"
    )
    return parser


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Turn the flags that were actually given into config overrides."""
    flags = {
        "output_dir": args.out,
        "seed": args.seed,
        "shots": args.shots,
        "sign_mode": SIGN_MODES.get(args.sign_mode) if args.sign_mode else None,
        "bound_model": getattr(args, "model", None),
        "past_only": getattr(args, "past_only", None),
        "bob_all_plus": getattr(args, "bob_all_plus", None),
        "chi_source": getattr(args, "chi_source", None),
        "chi_target": getattr(args, "chi_target", None),
        "s_target": getattr(args, "s_target", None),
        "calibration_axes": getattr(args, "axes", None),
        "value": getattr(args, "value", None),
        "standard_error": getattr(args, "se", None),
        "bound": getattr(args, "bound", None),
    }
    overrides = {k: v for k, v in flags.items() if v is not None}
    overrides["mode"] = SUBCOMMAND_MODES[args.command]
    if args.calibrated:
        overrides["use_calibrated_noise"] = True
    if args.assert_verdicts:
        overrides["assert_verdicts"] = True
    if args.record_timing:
        overrides["record_timing"] = True
    if getattr(args, "exact_only", False):
        overrides["include_sampled"] = False

    noise = {
        "state_white_noise": args.state_white_noise,
        "prep_phase_error": args.phase_error,
        "per_measurement_visibility": args.measurement_visibility,
        "detection_efficiency": args.detection_efficiency,
    }
    noise = {k: v for k, v in noise.items() if v is not None}
    if noise:
        overrides["noise"] = noise
    return overrides


def print_verdicts(report) -> None:
    console = Console()
    table = Table(title=f"{report.mode.value} verdicts")
    for column in ("verdict", "bound", "value", "threshold", "margin", "holds"):
        table.add_column(column)
    for v in report.verdicts:
        table.add_row(
            v.name,
            v.bound,
            f"{v.value:.6g}",
            f"{v.threshold:.6g}",
            f"{v.margin:+.6g}",
            "yes" if v.holds else "no",
        )
    console.print(table)


def main(argv: Optional[list] = None) -> int:
    """Main entry point."""
    from src.services.report_service import ReportService
    from src.services.scenario_service import (
        ScenarioService,
        calibration_failed,
        load_config,
    )

    args = build_parser().parse_args(argv)

    logger.info("=" * 80)
    logger.info("CONTEXTUALITY-NONLOCALITY SIMULATOR")
    logger.info("=" * 80)
    logger.info(f"Command: {args.command}")
    logger.info(f"Environment: {settings.environment}")

    try:
        config = load_config(args.config, collect_overrides(args))
        report = ScenarioService().run_scenario(config)
        paths = ReportService().emit_report(report)
    except ConfigurationError as e:
        logger.error(
            f"❌ Configuration error: {e.message}",
            extra={"code": e.code, "details": e.details},
        )
        print(f"configuration error: {e.message}", file=sys.stderr)
        for err in e.details.get("errors", []):
            print(f"  {err['path']}: {err['message']}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ReportIOError as e:
        logger.error(
            f"❌ I/O error: {e.message}", extra={"code": e.code, "details": e.details}
        )
        print(f"I/O error: {e.message} ({e.details})", file=sys.stderr)
        return EXIT_IO_ERROR
    except ContextualityError as e:
        logger.error(f"❌ {e.code}: {e.message}", exc_info=True)
        print(f"error: {e.code}: {e.message}", file=sys.stderr)
        return EXIT_VERDICT_FAILURE
    except KeyboardInterrupt:
        logger.info("\n👋 Interrupted")
        return EXIT_VERDICT_FAILURE
    except Exception as e:
        logger.error(f"❌ Fatal error: {e}", exc_info=True)
        return EXIT_VERDICT_FAILURE

    print_verdicts(report)
    for path in paths:
        print(path)

    if calibration_failed(report):
        logger.warning("Calibration targets not reached within tolerance")
        return EXIT_VERDICT_FAILURE
    if config.assert_verdicts and not report.all_verdicts_hold:
        logger.warning("Asserted verdicts do not all hold")
        return EXIT_VERDICT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
