"""Small output helpers shared by the CSV writers."""

from __future__ import annotations

import contextlib
from pathlib import Path
from typing import IO


@contextlib.contextmanager
def open_out(target: str | Path | IO[str]):
    """Yield a text stream for a path or pass an open stream through unclosed."""
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w", newline="") as fh:
            yield fh
