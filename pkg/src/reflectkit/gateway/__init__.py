from .backends import BackendResult, CallableBackend, HTTPBackend, MockBackend, TransportError
from .cache import CacheConflictError, ResponseCache
from .core import AnnotatorGateway, CallRecord, RetryPolicy
from .ratelimit import RateLimiter
from .types import AnnotatorRequest, AnnotatorResponse, BackendTarget, DecodeParams

__all__ = [
    "AnnotatorGateway",
    "AnnotatorRequest",
    "AnnotatorResponse",
    "BackendResult",
    "CacheConflictError",
    "CallRecord",
    "BackendTarget",
    "CallableBackend",
    "DecodeParams",
    "HTTPBackend",
    "MockBackend",
    "RateLimiter",
    "ResponseCache",
    "RetryPolicy",
    "TransportError",
]


def mock_backend(script) -> MockBackend:
    """Build a scripted backend from ``(pattern, response)`` pairs or a
    mapping of pattern to response (insertion order is match order)."""
    if isinstance(script, dict):
        script = list(script.items())
    return MockBackend(script)
