import logging
import sys

from loguru import logger


class InterceptHandler(logging.Handler):
    def emit(self, record):
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        logger.opt(depth=6, exception=record.exc_info).log(level, record.getMessage())


def setup_logger(logfile: str | None = None, level: str = "INFO"):
    logger.remove()

    logger.add(
        sys.stderr,
        level=level.upper(),
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> | {message}",
    )

    if logfile:
        logger.add(logfile, rotation="10 MB", compression="gz", level="DEBUG")

    logging.basicConfig(handlers=[InterceptHandler()], level=0, force=True)
    logging.getLogger().handlers = [InterceptHandler()]
    logging.getLogger().setLevel(logging.DEBUG)

    logging.getLogger("PIL").setLevel(logging.INFO)

    logger.debug("Logger successfully initialized")
