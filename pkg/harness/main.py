"""Command line: `cocycle-lab curve|edge|sweep|ladder|check|fit --config <path> [--set key=value]...`.

Logs go to stderr; stdout carries one JSON summary. The exit code is 0 on
success, 2 for invalid input, 3 for numeric failures and 4 for bad energy
brackets.
"""
import argparse
import logging
import sys
from typing import List, Optional

from config.run_config import load_run_config
from config.settings import current_config
from errors import LabError
from harness.commands import COMMANDS, cmd_fit
from harness.manifest import RunManifest
from harness.writers import to_json_text

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1


def setup_logging() -> None:
    log_level = getattr(logging, current_config.LOG_LEVEL.upper(), logging.INFO)
    if not logging.getLogger().handlers:
        logging.basicConfig(level=log_level, format=current_config.LOG_FORMAT,
                            handlers=[logging.StreamHandler(sys.stderr)])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cocycle-lab",
                                     description="Numerical lab for Schrodinger cocycles near the lowest spectral edge.")
    subparsers = parser.add_subparsers(dest="command", required=True)
    helps = {
        "curve": "invariant curves at one energy",
        "edge": "bisect the spectral edge",
        "sweep": "measure the gap laws on an energy schedule",
        "ladder": "build the scale ladder and check its conditions",
        "check": "run the identity and property suite",
        "fit": "fit an existing sweep CSV",
    }
    for name, text in helps.items():
        sub = subparsers.add_parser(name, help=text)
        sub.add_argument("--config", help="INI or JSON run configuration")
        sub.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                         help="override a config value, e.g. cocycle.lambda_sq=30 (repeatable)")
        if name == "fit":
            sub.add_argument("--input", help="sweep CSV to fit (default: sweep.csv in the output dir)")
    return parser


def _write_manifest(manifest: Optional[RunManifest], directory: Optional[str]) -> None:
    if manifest is None or directory is None:
        return
    try:
        manifest.write(directory)
    except OSError as e:
        logger.error(f"Could not write the manifest: {e}", exc_info=True)


def main(argv: Optional[List[str]] = None) -> int:
    """Runs one command and returns its exit code."""
    setup_logging()
    args = build_parser().parse_args(argv)
    manifest, directory = None, None
    try:
        config = load_run_config(args.config, args.overrides)
        directory = config.output.dir
        manifest = RunManifest.start(args.command, config)
        logger.info(f"cocycle-lab {args.command}: config {manifest.config_hash[:12]}, output in {directory}")
        if args.command == "fit":
            summary = cmd_fit(config, manifest, input_path=args.input)
        else:
            summary = COMMANDS[args.command](config, manifest)
        manifest.finish(EXIT_OK)
        _write_manifest(manifest, directory)
        sys.stdout.write(to_json_text({"command": args.command, "status": "ok", "summary": summary}))
        return EXIT_OK
    except LabError as e:
        logger.error(f"{args.command} failed: {e}")
        if manifest is not None:
            manifest.finish(e.exit_code, e.to_dict())
            _write_manifest(manifest, directory)
        sys.stdout.write(to_json_text({"command": args.command, "status": "failed", **e.to_dict()}))
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error in {args.command}: {e}", exc_info=True)
        if manifest is not None:
            manifest.finish(EXIT_UNEXPECTED, {"error": type(e).__name__, "message": str(e)})
            _write_manifest(manifest, directory)
        return EXIT_UNEXPECTED


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
