from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

from .backends import Backend, TransportError
from .cache import ResponseCache
from .ratelimit import RateLimiter
from .types import AnnotatorRequest, AnnotatorResponse

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    base_delay_s: float = 0.5
    max_delay_s: float = 8.0

    def delay(self, retry_index: int) -> float:
        return min(self.max_delay_s, self.base_delay_s * (2 ** retry_index))


@dataclass
class _Registered:
    backend: Backend
    retry: RetryPolicy
    limiter: Optional[RateLimiter]


@dataclass
class CallRecord:
    request_key: str
    backend_id: str
    purpose: str
    subject: str
    status: str
    from_cache: bool
    attempts: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class AnnotatorGateway:
    """Single entry point for annotator calls: cache, rate limit, retries.

    Safe to share between threads. Only ``ok`` responses are cached; a
    refused or empty response is returned to the caller, who quarantines
    the sample.
    """

    def __init__(
        self,
        cache: Optional[ResponseCache] = None,
        *,
        call_log_path=None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cache = cache
        self.calls: list[CallRecord] = []
        self._backends: dict[str, _Registered] = {}
        self._sleep = sleep
        self._lock = threading.Lock()
        self._inflight: dict[str, threading.Lock] = {}
        self._log_fh = open(call_log_path, "a", encoding="utf-8") if call_log_path else None

    def register(
        self,
        backend_id: str,
        backend: Backend,
        *,
        retry: RetryPolicy = RetryPolicy(),
        rate_limit: Optional[RateLimiter] = None,
    ) -> None:
        self._backends[backend_id] = _Registered(backend, retry, rate_limit)

    def close(self) -> None:
        if self._log_fh:
            self._log_fh.close()
            self._log_fh = None

    def _record(self, rec: CallRecord) -> None:
        with self._lock:
            self.calls.append(rec)
            if self._log_fh:
                self._log_fh.write(json.dumps(rec.to_dict()) + "\n")
                self._log_fh.flush()

    def _key_lock(self, key: str) -> threading.Lock:
        with self._lock:
            return self._inflight.setdefault(key, threading.Lock())

    def complete(self, req: AnnotatorRequest) -> AnnotatorResponse:
        reg = self._backends.get(req.backend_id)
        if reg is None:
            raise LookupError(f"backend {req.backend_id!r} is not registered")
        key = req.request_key

        # one in-flight call per key, so a stochastic backend cannot race itself into the cache
        with self._key_lock(key):
            if self.cache is not None:
                hit = self.cache.get(req.backend_id, key)
                if hit is not None:
                    self._record(CallRecord(key, req.backend_id, req.purpose, req.subject, hit["status"], True, 0))
                    return AnnotatorResponse(key, hit["text"], hit["status"], 0, True)

            status, text, attempts = "transport_error", "", 0
            started = time.monotonic()
            for attempt in range(reg.retry.max_attempts):
                attempts = attempt + 1
                if reg.limiter is not None:
                    reg.limiter.acquire()
                try:
                    result = reg.backend.invoke(req)
                except TransportError as exc:
                    log.warning("backend %s attempt %d failed: %s", req.backend_id, attempts, exc)
                    if attempt + 1 < reg.retry.max_attempts:
                        self._sleep(reg.retry.delay(attempt))
                    continue
                text = result.text or ""
                status = result.status
                if status == "ok" and not text.strip():
                    status = "empty"
                break
            latency = int((time.monotonic() - started) * 1000)

            if status == "ok" and self.cache is not None:
                self.cache.put(req.backend_id, key, req.canonical(), text, status)
            if status != "ok":
                text = ""
            self._record(CallRecord(key, req.backend_id, req.purpose, req.subject, status, False, attempts))
            return AnnotatorResponse(key, text, status, latency, False)
