"""Logging setup shared by the CLI and library modules."""

import logging

from rich.console import Console
from rich.logging import RichHandler

_CONFIGURED = False


def configure_logging(verbose: bool = False, console: Console | None = None) -> None:
    """Route the ``aerie`` logger tree through a rich handler."""
    global _CONFIGURED
    root = logging.getLogger("aerie")
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    if _CONFIGURED:
        return
    handler = RichHandler(
        console=console or Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
        markup=False,
    )
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    root.addHandler(handler)
    root.propagate = False
    _CONFIGURED = True
