import logging
import sys

import structlog


_configured = False


def configure_logging(level=logging.INFO, force=False):
    """
    Sets structlog to render key-value events on stderr, filtering below `level`.
    Only the first call takes effect unless `force` is given.
    """
    global _configured
    if _configured and not force:
        return
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="%H:%M:%S"),
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        logger_factory=lambda *args: structlog.PrintLogger(file=sys.stderr),
        cache_logger_on_first_use=False,
    )
    _configured = True


def level_from_flags(verbose, quiet):
    if quiet:
        return logging.WARNING
    if verbose:
        return logging.DEBUG
    return logging.INFO
