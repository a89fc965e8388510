"""Host recursion limit for the recursive tree walkers."""

import contextlib
import sys
from typing import Iterator, Optional

from .config import config


@contextlib.contextmanager
def deep_recursion(limit: Optional[int] = None) -> Iterator[None]:
    """Temporarily raise Python's recursion limit to MICRORELAY_RECURSION_LIMIT."""
    previous = sys.getrecursionlimit()
    wanted = limit or config.RECURSION_LIMIT
    if wanted > previous:
        sys.setrecursionlimit(wanted)
    try:
        yield
    finally:
        sys.setrecursionlimit(previous)
