import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from pfp.commands import covering, region, ri, simulate, typicality
from pfp.commands.base import config_from_args, load_replay_config
from pfp.core.config import get_settings
from pfp.core.exceptions import PfpError

logger = logging.getLogger("pfp")

COMMANDS = {
    "region": region,
    "simulate": simulate,
    "covering": covering,
    "typicality": typicality,
    "ri": ri,
}


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    settings = get_settings()
    # stdout carries artifacts, so log records go to stderr
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    log_file = log_file or settings.PFP_LOG_FILE
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(
        level=(level or settings.PFP_LOG_LEVEL).upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfp", description="Secret-key-assisted private channel toolkit")
    parser.add_argument("--log-level", help="overrides PFP_LOG_LEVEL")
    parser.add_argument("--log-file", help="overrides PFP_LOG_FILE")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for module in COMMANDS.values():
        module.register(subparsers)
    replay = subparsers.add_parser("replay", help="re-run from the config logged in an artifact")
    replay.add_argument("artifact")
    replay.add_argument("--out", help="output path ('-' or omitted: stdout)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level, args.log_file)
    try:
        if args.subcommand == "replay":
            config = load_replay_config(args.artifact, args.out)
            logger.info(f"REPLAY: {config.subcommand} from {args.artifact}")
        else:
            config = config_from_args(args.subcommand, args)
        return COMMANDS[config.subcommand].run(config)
    except ValidationError as e:
        logger.error(f"❌ CONFIG: invalid arguments: {e}")
        return 2
    except PfpError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
