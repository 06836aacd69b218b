"""Annotator backends: the scripted mock, a plain-callable adapter, and a
generic JSON-over-HTTP adapter."""
from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Protocol, Union

import httpx

from .types import AnnotatorRequest


class TransportError(RuntimeError):
    """Retryable failure talking to a backend."""


@dataclass(frozen=True)
class BackendResult:
    text: str
    status: str = "ok"  # "ok" | "refused" | "empty"


class Backend(Protocol):
    def invoke(self, req: AnnotatorRequest) -> BackendResult: ...


class MockBackend:
    """Answers from an ordered script of ``(pattern, response)`` pairs.

    A pattern is a plain substring of the prompt, or a regular expression
    when prefixed with ``re:``. The first matching entry wins; unmatched
    prompts are refused. ``{image_ref}`` in a response is replaced by the
    request's image reference.
    """

    def __init__(self, script: Iterable[tuple[str, str]] = (), *, delay_s: float = 0.0):
        self.script = [(p, r) for p, r in script]
        self.delay_s = delay_s
        self._compiled = [
            re.compile(p[3:], re.DOTALL) if p.startswith("re:") else None for p, _ in self.script
        ]

    @classmethod
    def from_file(cls, path, **kwargs) -> "MockBackend":
        script = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                entry = json.loads(line)
                if not isinstance(entry.get("pattern"), str) or not isinstance(entry.get("response"), str):
                    raise ValueError(f"{path}:{lineno}: script entries need string 'pattern' and 'response'")
                script.append((entry["pattern"], entry["response"]))
        return cls(script, **kwargs)

    def match(self, prompt: str) -> Optional[str]:
        for (pattern, response), rx in zip(self.script, self._compiled):
            hit = rx.search(prompt) if rx is not None else pattern in prompt
            if hit:
                return response
        return None

    def invoke(self, req: AnnotatorRequest) -> BackendResult:
        if self.delay_s:
            time.sleep(self.delay_s)
        response = self.match(req.prompt)
        if response is None:
            return BackendResult("", "refused")
        return BackendResult(response.replace("{image_ref}", req.image_ref or ""))


class CallableBackend:
    """Wrap ``fn(request) -> str | BackendResult``; handy in tests."""

    def __init__(self, fn: Callable[[AnnotatorRequest], Union[str, BackendResult]]):
        self.fn = fn

    def invoke(self, req: AnnotatorRequest) -> BackendResult:
        out = self.fn(req)
        return out if isinstance(out, BackendResult) else BackendResult(out)


class HTTPBackend:
    """POSTs ``{model, prompt, image, temperature, max_output_tokens}`` as
    JSON and reads the completion from ``response_field`` of the reply.

    The API key is looked up in the environment at call time under
    ``api_key_env``; only the variable name is ever stored.
    """

    RETRYABLE = {408, 409, 425, 429, 500, 502, 503, 504}

    def __init__(
        self,
        endpoint: str,
        *,
        api_key_env: Optional[str] = None,
        response_field: str = "text",
        timeout_s: float = 60.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.response_field = response_field
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise TransportError(f"environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def invoke(self, req: AnnotatorRequest) -> BackendResult:
        payload = {
            "model": req.model_id,
            "prompt": req.prompt,
            "image": req.image_ref,
            **req.decode_params.canonical(),
        }
        try:
            resp = self._client.post(self.endpoint, json=payload, headers=self._headers())
        except httpx.HTTPError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from None
        if resp.status_code in self.RETRYABLE:
            raise TransportError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            return BackendResult("", "refused")
        try:
            body = resp.json()
        except ValueError:
            raise TransportError("reply is not JSON") from None
        if body.get("refused"):
            return BackendResult("", "refused")
        text = body.get(self.response_field) or ""
        return BackendResult(text, "ok" if text.strip() else "empty")

    def close(self) -> None:
        self._client.close()
