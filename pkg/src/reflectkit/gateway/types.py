from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional

STATUSES = ("ok", "transport_error", "refused", "empty")


@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 0.7
    max_output_tokens: int = 1024

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")

    def canonical(self) -> dict:
        return {"temperature": float(self.temperature), "max_output_tokens": int(self.max_output_tokens)}


@dataclass(frozen=True)
class AnnotatorRequest:
    """One prompt for one backend.

    ``purpose`` and ``subject`` label the call in the run log (e.g. which
    prompt role and which sample). They are not part of ``request_key``, so
    two samples issuing the same prompt share a cache entry.
    """

    backend_id: str
    model_id: str
    prompt: str
    image_ref: Optional[str] = None
    decode_params: DecodeParams = DecodeParams()
    purpose: str = ""
    subject: str = ""

    def canonical(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "model_id": self.model_id,
            "prompt": self.prompt,
            "image_ref": self.image_ref,
            "decode_params": self.decode_params.canonical(),
        }

    @property
    def request_key(self) -> str:
        blob = json.dumps(self.canonical(), ensure_ascii=False, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class AnnotatorResponse:
    request_key: str
    text: str
    status: str
    latency_ms: int = 0
    from_cache: bool = False

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "ok" and not self.text:
            raise ValueError("status ok requires non-empty text")
        if self.latency_ms < 0:
            raise ValueError("latency_ms must be non-negative")

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class BackendTarget:
    """Which backend/model a pipeline role talks to, and how to decode."""

    backend_id: str
    model_id: str
    decode_params: DecodeParams = DecodeParams()

    def request(self, prompt: str, image_ref: Optional[str] = None, *, purpose: str = "", subject: str = "") -> AnnotatorRequest:
        return AnnotatorRequest(
            backend_id=self.backend_id,
            model_id=self.model_id,
            prompt=prompt,
            image_ref=image_ref,
            decode_params=self.decode_params,
            purpose=purpose,
            subject=subject,
        )
