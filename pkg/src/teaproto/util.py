"""Injectable clocks and identifier factories."""
from __future__ import annotations

import itertools
import secrets
import threading
import time
from typing import Callable, Protocol


class Clock(Protocol):
    def now(self) -> float: ...


class SystemClock:
    def now(self) -> float:
        return time.time()


class ManualClock:
    """Deterministic clock for tests: each read advances by ``step``."""

    def __init__(self, start: float = 1_700_000_000.0, step: float = 1.0):
        self._t = start
        self._step = step
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            t = self._t
            self._t += self._step
            return t


def random_id() -> str:
    """128-bit random identifier as 32 hex characters."""
    return secrets.token_hex(16)


def counter_ids(prefix: str = "") -> Callable[[], str]:
    """Deterministic 32-hex identifiers, for mirrored runtimes in tests."""
    counter = itertools.count(1)
    lock = threading.Lock()

    def make() -> str:
        with lock:
            n = next(counter)
        return (prefix + format(n, "x")).rjust(32, "0")[-32:]

    return make
