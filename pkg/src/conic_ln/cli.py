"""
Command line entry point:

    conic-ln <command> --config <path> [--out <dir>] [--cache <dir>] [--seed <u64>]

Exit codes: 0 success, 2 configuration error, 3 precondition error,
4 convergence failure, 5 oracle or acceptance failure.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

try:
    from dotenv import load_dotenv
except ImportError:

    def load_dotenv():
        pass

    print(
        "Warning: python-dotenv not found. Environment variables will not be loaded from .env file.",
        file=sys.stderr,
    )

from .artifacts import read_csv
from .config import RunConfig, parse_config
from .errors import ConfigError, ConicLNError
from .pipeline.factory import StageFactory
from .pipeline.manager import PipelineManager

logger = logging.getLogger(__name__)

LIST_COMMAND = "stages"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conic-ln",
        description="Singular Loewner-Nirenberg solutions on cones over spherical caps.",
    )
    parser.add_argument(
        "command", choices=sorted(StageFactory.get_available_stages()) + [LIST_COMMAND]
    )
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument("--out", type=Path, help="artifact directory (overrides the config)")
    parser.add_argument("--cache", type=Path, help="cache directory (overrides the config)")
    parser.add_argument("--no-cache", action="store_true", help="recompute every stage")
    parser.add_argument("--seed", type=int, help="seed of the randomized checks")
    parser.add_argument(
        "--log-level",
        default=os.getenv("CONIC_LN_LOG_LEVEL", "INFO"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    return parser


def load_config(path: Path, seed: Optional[int]) -> RunConfig:
    """
    Raises:
        ConfigError: If the file is unreadable or invalid.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    config = parse_config(text)
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", key_path="seed")
        config = config.model_copy(update={"seed": seed})
    return config


def print_stages() -> None:
    for name, description in StageFactory.get_available_stages().items():
        artifacts = ", ".join(StageFactory.create_stage(name).get_capabilities())
        print(f"{name:10s} {description}")
        print(f"{'':10s} -> {artifacts}")


def print_suite_table(out_dir: Path) -> None:
    path = out_dir / "suite.csv"
    if not path.exists():
        return
    rows = [row for row in read_csv(path) if row and not row[0].startswith("#")]
    for row in rows:
        print("  ".join(f"{cell:<14s}" for cell in row).rstrip())


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.command == LIST_COMMAND:
        print_stages()
        return 0
    if args.config is None:
        logger.error("--config is required for %s", args.command)
        return ConfigError.exit_code

    try:
        config = load_config(args.config, args.seed)
    except ConfigError as e:
        logger.error("configuration error: %s", e)
        return e.exit_code

    out_dir = args.out or Path(config.output_dir)
    cache_dir = None if args.no_cache else (args.cache or Path(config.cache_dir))
    manager = PipelineManager(config, out_dir, cache_dir)
    status = 0
    try:
        manager.run_command(args.command)
    except ConicLNError as e:
        logger.error("%s", e)
        status = e.exit_code
    if args.command == "suite":
        print_suite_table(out_dir)
    return status


if __name__ == "__main__":
    sys.exit(main())
