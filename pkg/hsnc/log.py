import logging
import sys

from .config import settings

_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: str | None = None) -> None:
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format=_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def progress_enabled() -> bool:
    return sys.stderr.isatty()
