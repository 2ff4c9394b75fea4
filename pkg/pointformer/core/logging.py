"""Logging setup: library loggers rendered through rich."""

from __future__ import annotations

import logging

from rich.console import Console
from rich.logging import RichHandler

_configured = False


def setup_logging(level: str = "INFO", console: Console | None = None) -> None:
    """Route the ``pointformer`` logger hierarchy to a RichHandler.

    Safe to call more than once; later calls only change the level.
    """
    global _configured
    logger = logging.getLogger("pointformer")
    logger.setLevel(level.upper())
    if _configured:
        return
    handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
        markup=False,
    )
    handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
    logger.addHandler(handler)
    logger.propagate = False
    _configured = True
