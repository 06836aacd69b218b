"""Content-addressed, write-once response cache on local disk.

Layout: ``<root>/<backend_id>/<key[:2]>/<key>.json``.
"""
from __future__ import annotations

import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional


class CacheConflictError(RuntimeError):
    """A different text was about to be stored under an existing key."""


class ResponseCache:
    def __init__(self, root):
        self.root = Path(root)

    def path_for(self, backend_id: str, key: str) -> Path:
        return self.root / backend_id / key[:2] / f"{key}.json"

    def get(self, backend_id: str, key: str) -> Optional[dict]:
        path = self.path_for(backend_id, key)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return json.load(fh)
        except FileNotFoundError:
            return None

    def put(self, backend_id: str, key: str, request: dict, text: str, status: str = "ok") -> dict:
        entry = {
            "request": request,
            "text": text,
            "status": status,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        path = self.path_for(backend_id, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, ensure_ascii=False, indent=1)
                fh.flush()
                os.fsync(fh.fileno())
            try:
                # link() fails if the target exists, which gives write-once semantics
                os.link(tmp, path)
            except FileExistsError:
                existing = self.get(backend_id, key)
                if existing is not None and existing.get("text") != text:
                    raise CacheConflictError(
                        f"cache entry {key} for backend {backend_id} already holds different text"
                    ) from None
                return existing or entry
            except OSError:
                if path.exists():
                    existing = self.get(backend_id, key)
                    if existing is not None and existing.get("text") != text:
                        raise CacheConflictError(f"cache entry {key} already holds different text") from None
                    return existing or entry
                os.replace(tmp, path)
                tmp = None
        finally:
            if tmp is not None and os.path.exists(tmp):
                os.unlink(tmp)
        return entry
