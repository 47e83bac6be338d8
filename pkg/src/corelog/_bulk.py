"""Helpers for building large object graphs."""

from __future__ import annotations

import gc
from contextlib import contextmanager
from typing import Iterator


@contextmanager
def gc_paused() -> Iterator[None]:
    """Suspend the cyclic garbage collector for the duration of the block.

    Encoding and decoding logs allocates millions of small acyclic objects,
    which otherwise triggers repeated full collections. Reference counting
    still frees everything; only cycle detection is deferred. Also works as
    a decorator and nests safely.
    """
    enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if enabled:
            gc.enable()
