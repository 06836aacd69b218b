"""Domain records shared by the pipeline stages, plus their JSON forms.

All records serialize to plain dicts with a fixed key order so that
stage outputs are byte-stable across runs.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional

SOURCES = ("vg_like", "coco_like", "mc_vqa_like", "scienceqa_like")
MC_SOURCES = ("mc_vqa_like", "scienceqa_like")
TASK_TYPES = ("multiple_choice", "short_answer", "open_ended", "yes_no")
SAMPLE_STATUSES = ("generated", "validated", "filtered_out", "quarantined", "accepted")
VARIANTS = ("separate_pos", "separate_neg", "pos_first", "neg_first", "response_only")


def short_hash(*parts: Any, length: int = 16) -> str:
    payload = json.dumps(parts, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:length]


def dump_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False) + "\n"


def iter_jsonl(path) -> Iterator[tuple[int, str]]:
    """Yield ``(line_number, raw_line)`` for every line, blank ones included."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            yield lineno, line.rstrip("\n")


def read_jsonl(path) -> list[dict]:
    out = []
    for lineno, line in iter_jsonl(path):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    return out


@dataclass(frozen=True)
class SeedRecord:
    seed_id: str
    image_ref: str
    source: str
    question: Optional[str] = None
    choices: Optional[tuple[str, ...]] = None
    correct_choice_index: Optional[int] = None
    given_rationale: Optional[str] = None
    context_text: Optional[str] = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if self.correct_choice_index is not None:
            if not self.choices:
                raise ValueError("correct_choice_index without choices")
            if not 0 <= self.correct_choice_index < len(self.choices):
                raise ValueError("choice index out of range")
        if self.source in MC_SOURCES and (not self.question or not self.choices):
            raise ValueError(f"{self.source} record needs question and choices")

    @property
    def dedupe_key(self) -> tuple:
        return (self.image_ref, self.question, self.choices)

    def to_dict(self) -> dict:
        return {
            "seed_id": self.seed_id,
            "image_ref": self.image_ref,
            "source": self.source,
            "question": self.question,
            "choices": list(self.choices) if self.choices is not None else None,
            "correct_choice_index": self.correct_choice_index,
            "given_rationale": self.given_rationale,
            "context_text": self.context_text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SeedRecord":
        choices = d.get("choices")
        return cls(
            seed_id=d["seed_id"],
            image_ref=d["image_ref"],
            source=d["source"],
            question=d.get("question"),
            choices=tuple(choices) if choices is not None else None,
            correct_choice_index=d.get("correct_choice_index"),
            given_rationale=d.get("given_rationale"),
            context_text=d.get("context_text"),
        )


@dataclass
class Rationale:
    polarity: str  # "positive" | "negative"
    target_response: str
    text: str
    word_count: int = 0
    noun_count: int = 0
    origin: str = "generated"  # "generated" | "human"

    def to_dict(self) -> dict:
        return {
            "polarity": self.polarity,
            "target_response": self.target_response,
            "text": self.text,
            "word_count": self.word_count,
            "noun_count": self.noun_count,
            "origin": self.origin,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Rationale":
        return cls(**{k: d[k] for k in ("polarity", "target_response", "text", "word_count", "noun_count", "origin") if k in d})


@dataclass
class PairVerdict:
    neg_index: int
    verdict: str  # "consistent" | "inconsistent" | "unknown"
    judge_request_key: Optional[str]
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "neg_index": self.neg_index,
            "verdict": self.verdict,
            "judge_request_key": self.judge_request_key,
            "detail": self.detail,
        }


@dataclass
class FilterVerdict:
    sample_id: str
    checked_pairs: list[PairVerdict] = field(default_factory=list)
    final: str = "keep"  # "keep" | "drop" | "quarantine"

    @staticmethod
    def fold(verdicts: list[str]) -> str:
        if any(v == "inconsistent" for v in verdicts):
            return "drop"
        if any(v == "unknown" for v in verdicts):
            return "quarantine"
        return "keep"

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "checked_pairs": [p.to_dict() for p in self.checked_pairs],
            "final": self.final,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FilterVerdict":
        return cls(
            sample_id=d["sample_id"],
            checked_pairs=[PairVerdict(**p) for p in d.get("checked_pairs", [])],
            final=d["final"],
        )


@dataclass
class AnnotatedSample:
    sample_id: str
    seed_id: str
    image_ref: str
    source: str
    instruction: str = ""
    task_type: str = "open_ended"
    positive_response: str = ""
    negative_responses: list[str] = field(default_factory=list)
    pos_rationale: Optional[Rationale] = None
    neg_rationales: list[Rationale] = field(default_factory=list)
    status: str = "generated"
    provenance: dict[str, Any] = field(default_factory=dict)
    reasons: list[str] = field(default_factory=list)
    raw_text: Optional[str] = None
    verdict: Optional[FilterVerdict] = None

    def quarantine(self, reason: str, raw_text: Optional[str] = None) -> "AnnotatedSample":
        self.status = "quarantined"
        self.reasons.append(reason)
        if raw_text is not None:
            self.raw_text = raw_text
        return self

    def rationales(self) -> list[Rationale]:
        head = [self.pos_rationale] if self.pos_rationale is not None else []
        return head + list(self.neg_rationales)

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "seed_id": self.seed_id,
            "image_ref": self.image_ref,
            "source": self.source,
            "instruction": self.instruction,
            "task_type": self.task_type,
            "positive_response": self.positive_response,
            "negative_responses": list(self.negative_responses),
            "pos_rationale": self.pos_rationale.to_dict() if self.pos_rationale else None,
            "neg_rationales": [r.to_dict() for r in self.neg_rationales],
            "status": self.status,
            "provenance": self.provenance,
            "reasons": list(self.reasons),
            "raw_text": self.raw_text,
            "verdict": self.verdict.to_dict() if self.verdict else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotatedSample":
        pos = d.get("pos_rationale")
        verdict = d.get("verdict")
        return cls(
            sample_id=d["sample_id"],
            seed_id=d["seed_id"],
            image_ref=d["image_ref"],
            source=d["source"],
            instruction=d.get("instruction", ""),
            task_type=d.get("task_type", "open_ended"),
            positive_response=d.get("positive_response", ""),
            negative_responses=list(d.get("negative_responses", [])),
            pos_rationale=Rationale.from_dict(pos) if pos else None,
            neg_rationales=[Rationale.from_dict(r) for r in d.get("neg_rationales", [])],
            status=d.get("status", "generated"),
            provenance=d.get("provenance", {}),
            reasons=list(d.get("reasons", [])),
            raw_text=d.get("raw_text"),
            verdict=FilterVerdict.from_dict(verdict) if verdict else None,
        )


@dataclass
class Message:
    role: str  # "user" | "assistant"
    text: str
    loss: bool


_ROLE_TO_WIRE = {"user": "human", "assistant": "gpt"}
_WIRE_TO_ROLE = {v: k for k, v in _ROLE_TO_WIRE.items()}


@dataclass
class ConversationSample:
    conv_id: str
    image_ref: Optional[str]
    messages: list[Message]
    variant: str
    source_sample_id: str
    neg_index: Optional[int] = None

    def to_dict(self) -> dict:
        d = {
            "id": self.conv_id,
            "image": self.image_ref,
            "variant": self.variant,
            "conversations": [
                {"from": _ROLE_TO_WIRE[m.role], "value": m.text, "loss": m.loss}
                for m in self.messages
            ],
            "source_sample_id": self.source_sample_id,
        }
        if self.neg_index is not None:
            d["neg_index"] = self.neg_index
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConversationSample":
        return cls(
            conv_id=d["id"],
            image_ref=d.get("image"),
            messages=[
                Message(_WIRE_TO_ROLE[m["from"]], m["value"], m.get("loss", m["from"] == "gpt"))
                for m in d["conversations"]
            ],
            variant=d["variant"],
            source_sample_id=d["source_sample_id"],
            neg_index=d.get("neg_index"),
        )
