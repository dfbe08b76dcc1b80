#!/usr/bin/env python3
"""
Command-line interface for Eigenspec.
Handles argument parsing, run-config loading and the main entry point.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Optional

from pydantic import ValidationError

from config import RunConfig, settings
from errors import ConfigError, ConvergenceError, EigenspecError
from processors import DiagnosisPipeline
from utils import format_error_message, setup_logging

__version__ = "1.0.0"

EXIT_OK = 0
EXIT_CONFIG = ConfigError.exit_code
EXIT_DATA = 3
EXIT_CONVERGENCE = ConvergenceError.exit_code

# CLI flags that override RunConfig fields of the same name
OVERRIDE_FIELDS = (
    "seed",
    "out",
    "snr_db",
    "rank",
    "components",
    "coding",
    "standardize",
    "with_normal",
    "ingest_format",
    "solver",
    "explain_samples",
)


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """JSON config file (if any) overlaid with explicitly given CLI flags."""
    data: dict[str, Any] = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"Cannot read config file {args.config}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file {args.config} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {args.config} must hold a JSON object")

    for name in OVERRIDE_FIELDS:
        value = getattr(args, name, None)
        if value is not None and value is not False:
            data[name] = value
    return RunConfig.model_validate(data)


def _optional_path(value: Optional[str]) -> Optional[Path]:
    return Path(value) if value else None


def run_command(args: argparse.Namespace) -> None:
    """Dispatch a parsed command to the pipeline."""
    config = load_run_config(args)
    pipeline = DiagnosisPipeline(config)

    if args.command == "simulate":
        paths = pipeline.simulate()
        print(f"✅ Wrote {len(paths)} signal files to {pipeline.store.signals_dir}")
    elif args.command == "ingest":
        sources = [Path(p) for p in (args.paths or config.ingest_paths)]
        if not sources:
            raise ConfigError("ingest needs at least one file or directory")
        report = pipeline.ingest(sources)
        print(
            f"✅ Ingested {len(report['accepted'])} file(s), "
            f"rejected {len(report['rejected'])}"
        )
        for item in report["rejected"]:
            print(f"   ⚠️  {item['file']}: {item['reason']}")
    elif args.command == "build-dataset":
        train, test = pipeline.build_dataset(_optional_path(args.signals))
        print(
            f"✅ Dataset: {train.n_samples} train / {test.n_samples} test images "
            f"in {pipeline.store.dataset_dir}"
        )
    elif args.command == "train":
        report = pipeline.train(_optional_path(args.dataset))
        summary = ", ".join(f"{k} {v:.2%}" for k, v in report.accuracies.items())
        print(f"✅ Accuracy: {summary}, CV mean {report.to_dict()['cv_mean_accuracy']:.2%}")
    elif args.command == "evaluate":
        report = pipeline.evaluate(
            _optional_path(args.dataset), _optional_path(args.model_dir)
        )
        for name, value in report.accuracies.items():
            print(f"✅ Accuracy on {name}: {value:.2%}")
    elif args.command == "export-modes":
        paths = pipeline.export_modes(_optional_path(args.basis))
        print(f"✅ Exported {len(paths)} files to {pipeline.store.modes_dir}")
    elif args.command == "explain":
        rows = pipeline.explain(_optional_path(args.dataset), _optional_path(args.basis))
        for row in rows:
            thetas = " ".join(f"{t:.3f}" for t in row.mean_thetas)
            print(f"   {row.label}: theta = [{thetas}], gamma {row.mean_gamma:.3f}")
        print(f"✅ Interpretation written to {pipeline.store.explain_dir}")


def build_parser() -> argparse.ArgumentParser:
    """Parser with one subcommand per pipeline stage."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="JSON file mirroring RunConfig")
    common.add_argument("--seed", type=int, help="Master seed (u64)")
    common.add_argument("--out", "-o", help=f"Output directory (default: {settings.OUTPUT_DIR})")
    common.add_argument("--snr-db", type=float, help="Noise level in dB")
    common.add_argument("--rank", type=int, help="rSVD target rank r")
    common.add_argument("--components", type=int, help="Retained eigen-spectrograms k")
    common.add_argument(
        "--coding", choices=["one-vs-one", "one-vs-all"], help="ECOC coding design"
    )
    common.add_argument(
        "--standardize", action="store_true", help="z-score features before the SVM"
    )
    common.add_argument("--debug", "-d", action="store_true", help="Enable debug output")

    parser = argparse.ArgumentParser(
        prog="eigenspec",
        description="Bearing fault diagnosis with eigen-spectrograms and ECOC-SVM",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s simulate --out runs/snr10                     # 12 noisy fault signals
  %(prog)s build-dataset --out runs/snr10                # 1440 train / 360 test images
  %(prog)s train --out runs/snr10                        # rPCA + ECOC-SVM + 5-fold CV
  %(prog)s simulate --snr-db 1 --seed 7 --out runs/snr1
  %(prog)s ingest --format raw data/cwru/ --out runs/cwru
  %(prog)s export-modes --out runs/snr10                 # mode_j.pgm + singular values
  %(prog)s explain --out runs/snr10                      # class-mean theta report
        """,
    )
    parser.add_argument(
        "--version", "-v", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", parents=[common], help="Simulate fault signals")
    simulate.add_argument(
        "--with-normal", action="store_true", help="Add a fault-free Normal class"
    )

    ingest = sub.add_parser("ingest", parents=[common], help="Import external signals")
    ingest.add_argument("paths", nargs="*", help="Signal files or directories")
    ingest.add_argument(
        "--format",
        dest="ingest_format",
        choices=["csv", "raw"],
        help="Format for files without a .csv/.f32 suffix (also picks them up in directories)",
    )

    build = sub.add_parser(
        "build-dataset", parents=[common], help="Build spectrogram train/test matrices"
    )
    build.add_argument("--signals", help="Signal directory (default: <out>/signals)")

    train = sub.add_parser("train", parents=[common], help="Fit basis and ECOC-SVM")
    train.add_argument("--dataset", help="Training matrix (default: <out>/dataset/train.espc)")
    train.add_argument(
        "--solver", choices=["randomized", "deterministic"], help="SVD solver"
    )

    evaluate = sub.add_parser("evaluate", parents=[common], help="Score a dataset")
    evaluate.add_argument("--dataset", help="Matrix to score (default: <out>/dataset/test.espc)")
    evaluate.add_argument("--model-dir", help="Model directory (default: <out>/model)")

    export = sub.add_parser(
        "export-modes", parents=[common], help="Write eigen-spectrograms as PGM"
    )
    export.add_argument("--basis", help="Basis file (default: <out>/model/basis.espb)")

    explain = sub.add_parser(
        "explain", parents=[common], help="Class-mean interpretation coefficients"
    )
    explain.add_argument("--dataset", help="Matrix to explain (default: <out>/dataset/train.espc)")
    explain.add_argument("--basis", help="Basis file (default: <out>/model/basis.espb)")
    explain.add_argument(
        "--samples", dest="explain_samples", type=int, help="Samples per class"
    )
    return parser


def run(argv: Optional[list[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(args.debug or None)

    try:
        run_command(args)
    except ValidationError as e:
        print(
            format_error_message(
                f"Invalid configuration: {e}",
                ["Check field names and ranges against RunConfig"],
            ),
            file=sys.stderr,
        )
        return EXIT_CONFIG
    except ConvergenceError as e:
        suggestions = ["Raise max_pair_updates or tol", "Try --standardize"]
        print(
            format_error_message(f"{e} (KKT gap {e.kkt_gap:.3g})", suggestions),
            file=sys.stderr,
        )
        return EXIT_CONVERGENCE
    except EigenspecError as e:
        print(format_error_message(str(e)), file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(format_error_message(f"I/O failure on {e.filename}: {e.strerror}"), file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    """Main entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
