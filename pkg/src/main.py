import argparse
import asyncio
import sys

from loguru import logger
from pydantic import ValidationError

from src.core import logging
from src.core.config import settings
from src.core.errors import BatfillError, FormatError

PROG = "batfill"


def build_parser() -> argparse.ArgumentParser:
    from src.cli.handlers import root_router

    return root_router.build_parser(PROG)


def _describe(error: Exception) -> str:
    if isinstance(error, ValidationError):
        first = error.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        return f"invalid value for '{where}': {first['msg']}" if where else first["msg"]
    return str(error)


async def run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.setup_logger(settings.LOG_FILE, args.log_level or settings.LOG_LEVEL)

    if args.from_manifest:
        from src.core import repositories

        manifest = repositories.manifests.read(args.from_manifest)
        logger.info(f"replaying '{manifest.subcommand}' from {args.from_manifest}")
        code = await run(manifest.argv)
        stale = manifest.verify()
        if code == 0 and stale:
            raise FormatError(f"replay does not reproduce recorded outputs: {', '.join(sorted(stale))}")
        return code

    if args.subcommand is None:
        parser.print_help(sys.stderr)
        return 2

    args.argv = list(argv)
    return await args.handler(args)


async def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return await run(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    except (BatfillError, ValidationError, OSError) as e:
        logger.opt(exception=e).debug("command failed")
        print(f"{PROG}: error: {_describe(e)}", file=sys.stderr)
        return 1


def cli():
    sys.exit(asyncio.run(main()))
