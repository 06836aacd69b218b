from __future__ import annotations

import threading
import time
from collections import deque
from typing import Callable

_SLACK = 1e-9


class RateLimiter:
    """Sliding-window limiter: at most ``max_requests`` dispatches in any
    half-open window of ``window_s`` seconds. Shared by all workers of a
    backend.
    """

    def __init__(
        self,
        max_requests: int,
        window_s: float,
        *,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_requests < 1:
            raise ValueError("max_requests must be >= 1")
        if window_s <= 0:
            raise ValueError("window_s must be positive")
        self.max_requests = max_requests
        self.window_s = window_s
        self._clock = clock
        self._sleep = sleep
        self._sent: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        """Block until a slot is free; return the dispatch timestamp."""
        with self._lock:
            while True:
                now = self._clock()
                # the slack keeps a sleep that lands one float ulp short of the edge from spinning forever
                while self._sent and self._sent[0] + self.window_s <= now + _SLACK:
                    self._sent.popleft()
                if len(self._sent) < self.max_requests:
                    self._sent.append(now)
                    return now
                self._sleep(self._sent[0] + self.window_s - now)
