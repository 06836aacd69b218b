"""Read seed corpora (JSON Lines) and normalize them into SeedRecords."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Optional

from .records import SOURCES, SeedRecord, short_hash

FORMATS = ("jsonl_images", "jsonl_mc_vqa")
DEFAULT_SOURCE = {"jsonl_images": "vg_like", "jsonl_mc_vqa": "mc_vqa_like"}
_IMAGE_SOURCES = ("vg_like", "coco_like")


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str

    def to_dict(self) -> dict:
        return {"line": self.line, "reason": self.reason}


class LineError(ValueError):
    pass


def _opt_str(obj: dict, key: str) -> Optional[str]:
    value = obj.get(key)
    if value is None:
        return None
    if not isinstance(value, str):
        raise LineError(f"field {key!r} must be a string")
    return value


def _parse_line(obj, fmt: str, source: str) -> dict:
    if not isinstance(obj, dict):
        raise LineError("line is not a JSON object")
    image = obj.get("image")
    if not isinstance(image, str) or not image.strip():
        raise LineError("missing or empty 'image'")
    if fmt == "jsonl_images":
        return {"image_ref": image, "source": source}

    question = obj.get("question")
    if not isinstance(question, str) or not question.strip():
        raise LineError("missing or empty 'question'")
    choices = obj.get("choices")
    if not isinstance(choices, list) or not all(isinstance(c, str) for c in choices):
        raise LineError("'choices' must be a list of strings")
    if len(choices) < 2:
        raise LineError("fewer than two choices")
    idx = obj.get("answer_idx")
    # bool is an int subclass; reject it explicitly
    if not isinstance(idx, int) or isinstance(idx, bool):
        raise LineError("'answer_idx' must be an integer")
    if not 0 <= idx < len(choices):
        raise LineError("choice index out of range")
    return {
        "image_ref": image,
        "source": source,
        "question": question,
        "choices": tuple(choices),
        "correct_choice_index": idx,
        "given_rationale": _opt_str(obj, "rationale"),
        "context_text": _opt_str(obj, "context"),
    }


def _iter_lines(path) -> Iterator[tuple[int, Optional[str]]]:
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, 1):
            try:
                yield lineno, raw.decode("utf-8").rstrip("\r\n")
            except UnicodeDecodeError:
                yield lineno, None


def ingest_corpus(
    path,
    fmt: str,
    *,
    source: Optional[str] = None,
    on_reject: Optional[Callable[[Reject], None]] = None,
) -> Iterator[SeedRecord]:
    """Stream SeedRecords from ``path``.

    Malformed lines never abort the run; each one is passed to ``on_reject``
    with its 1-based line number. An unreadable path raises ``OSError``.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    source = source or DEFAULT_SOURCE[fmt]
    if source not in SOURCES:
        raise ValueError(f"unknown source {source!r}")
    if (fmt == "jsonl_images") != (source in _IMAGE_SOURCES):
        raise ValueError(f"source {source!r} does not fit format {fmt!r}")

    reject = on_reject or (lambda r: None)
    seen: dict[str, int] = {}
    for lineno, line in _iter_lines(path):
        if line is None:
            reject(Reject(lineno, "invalid UTF-8"))
            continue
        if not line.strip():
            reject(Reject(lineno, "blank line"))
            continue
        try:
            fields = _parse_line(json.loads(line), fmt, source)
        except json.JSONDecodeError as exc:
            reject(Reject(lineno, f"invalid JSON: {exc.msg}"))
            continue
        except LineError as exc:
            reject(Reject(lineno, str(exc)))
            continue

        content = {k: (list(v) if isinstance(v, tuple) else v) for k, v in fields.items()}
        base = f"{source}-{short_hash(content, length=12)}"
        n = seen.get(base, 0)
        seen[base] = n + 1
        seed_id = base if n == 0 else f"{base}~{n}"
        yield SeedRecord(seed_id=seed_id, **fields)


def read_corpus(path, fmt: str, *, source: Optional[str] = None) -> tuple[list[SeedRecord], list[Reject]]:
    rejects: list[Reject] = []
    records = list(ingest_corpus(path, fmt, source=source, on_reject=rejects.append))
    return records, rejects


def dedupe_seeds(records: Iterable[SeedRecord]) -> tuple[list[SeedRecord], int]:
    """Drop records whose (image_ref, question, choices) was already seen.

    Returns the survivors in input order and the number dropped.
    """
    seen = set()
    kept = []
    dropped = 0
    for rec in records:
        key = rec.dedupe_key
        if key in seen:
            dropped += 1
            continue
        seen.add(key)
        kept.append(rec)
    return kept, dropped
