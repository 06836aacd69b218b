"""Accepted samples -> multi-turn training conversations.

Every conversation opens with the instruction/response turn; rationale
turns follow. Loss is on every assistant message, including the repeated
response turn of each separate-context conversation.
"""
from __future__ import annotations

import json
import random
from pathlib import Path
from typing import Iterable, Optional

from .prompts import PromptCatalog, PromptTemplate
from .records import AnnotatedSample, ConversationSample, Message, VARIANTS, short_hash

CONTEXT_VARIANTS = ("separate", "pos_first", "neg_first", "response_only")
_VARIANT_ORDER = {v: i for i, v in enumerate(VARIANTS)}


class FormatError(ValueError):
    pass


class SchemaError(ValueError):
    pass


def _conv_id(sample_id: str, variant: str, neg_index: Optional[int] = None) -> str:
    return f"conv-{short_hash(sample_id, variant, neg_index)}"


def _check(sample: AnnotatedSample) -> None:
    if sample.status != "accepted":
        raise FormatError(f"{sample.sample_id}: only accepted samples can be formatted (status={sample.status})")
    if sample.pos_rationale is None or not sample.pos_rationale.text:
        raise FormatError(f"{sample.sample_id}: positive rationale missing")
    if len(sample.neg_rationales) != len(sample.negative_responses):
        raise FormatError(f"{sample.sample_id}: negative rationale count does not match negatives")


def _opening(sample: AnnotatedSample) -> list[Message]:
    return [
        Message("user", sample.instruction, False),
        Message("assistant", sample.positive_response, True),
    ]


def _pos_turns(sample: AnnotatedSample, tpl: PromptTemplate) -> list[Message]:
    return [
        Message("user", tpl.render(incorrect_answer=None), False),
        Message("assistant", sample.pos_rationale.text, True),
    ]


def _neg_turns(sample: AnnotatedSample, i: int, tpl: PromptTemplate) -> list[Message]:
    return [
        Message("user", tpl.render(incorrect_answer=sample.negative_responses[i]), False),
        Message("assistant", sample.neg_rationales[i].text, True),
    ]


def rationale_provenance(sample: AnnotatedSample) -> str:
    """Which length-specific positive prompt applies: the seed source for
    human-written rationales, ``generated`` otherwise."""
    if sample.pos_rationale is not None and sample.pos_rationale.origin == "human":
        return sample.source
    return "generated"


def training_prompts(catalog: PromptCatalog, sample: AnnotatedSample, variant: str = "d") -> tuple[PromptTemplate, PromptTemplate]:
    pos = catalog.get("train_pos_rationale", variant, rationale_provenance(sample))
    neg = catalog.get("train_neg_rationale", variant)
    return pos, neg


def build_separate_context(
    sample: AnnotatedSample, prompts: tuple[PromptTemplate, PromptTemplate]
) -> list[ConversationSample]:
    """One conversation for the positive rationale plus one per negative."""
    _check(sample)
    pos_tpl, neg_tpl = prompts
    out = [
        ConversationSample(
            _conv_id(sample.sample_id, "separate_pos"),
            sample.image_ref,
            _opening(sample) + _pos_turns(sample, pos_tpl),
            "separate_pos",
            sample.sample_id,
        )
    ]
    for i in range(len(sample.negative_responses)):
        out.append(
            ConversationSample(
                _conv_id(sample.sample_id, "separate_neg", i),
                sample.image_ref,
                _opening(sample) + _neg_turns(sample, i, neg_tpl),
                "separate_neg",
                sample.sample_id,
                i,
            )
        )
    return out


def build_joint_context(
    sample: AnnotatedSample, order: str, prompts: tuple[PromptTemplate, PromptTemplate]
) -> ConversationSample:
    """All rationales in a single conversation, positive first or last."""
    if order not in ("pos_first", "neg_first"):
        raise ValueError(f"unknown order {order!r}")
    _check(sample)
    pos_tpl, neg_tpl = prompts
    pos = _pos_turns(sample, pos_tpl)
    negs = [m for i in range(len(sample.negative_responses)) for m in _neg_turns(sample, i, neg_tpl)]
    turns = pos + negs if order == "pos_first" else negs + pos
    return ConversationSample(
        _conv_id(sample.sample_id, order), sample.image_ref, _opening(sample) + turns, order, sample.sample_id
    )


def build_response_only(sample: AnnotatedSample) -> ConversationSample:
    if sample.status != "accepted":
        raise FormatError(f"{sample.sample_id}: only accepted samples can be formatted")
    return ConversationSample(
        _conv_id(sample.sample_id, "response_only"), sample.image_ref, _opening(sample), "response_only", sample.sample_id
    )


def format_sample(
    sample: AnnotatedSample, context_variant: str, catalog: PromptCatalog, prompt_variant: str = "d"
) -> list[ConversationSample]:
    if context_variant == "response_only":
        return [build_response_only(sample)]
    prompts = training_prompts(catalog, sample, prompt_variant)
    if context_variant == "separate":
        return build_separate_context(sample, prompts)
    if context_variant in ("pos_first", "neg_first"):
        return [build_joint_context(sample, context_variant, prompts)]
    raise ValueError(f"unknown context variant {context_variant!r}")


def format_samples(
    samples: Iterable[AnnotatedSample], context_variant: str, catalog: PromptCatalog, prompt_variant: str = "d"
) -> list[ConversationSample]:
    """Format a corpus; output ordered by source sample id, variant, then
    negative index."""
    convs = [c for s in samples for c in format_sample(s, context_variant, catalog, prompt_variant)]
    convs.sort(key=lambda c: (c.source_sample_id, _VARIANT_ORDER[c.variant], -1 if c.neg_index is None else c.neg_index))
    return convs


def check_conversation(conv: ConversationSample) -> list[str]:
    """Structural invariants of a conversation; empty list when sound."""
    problems = []
    for i, m in enumerate(conv.messages):
        expected = "user" if i % 2 == 0 else "assistant"
        if m.role != expected:
            problems.append(f"message {i} should be {expected}")
        if m.loss and m.role != "assistant":
            problems.append(f"message {i}: loss on a user message")
    n = len(conv.messages)
    if conv.variant in ("separate_pos", "separate_neg") and n != 4:
        problems.append(f"separate-context conversation has {n} messages")
    if conv.variant == "response_only" and n != 2:
        problems.append(f"response-only conversation has {n} messages")
    if conv.variant in ("pos_first", "neg_first") and (n < 4 or n % 2):
        problems.append(f"joint conversation has {n} messages")
    return problems


def validate_record(obj, locus: str) -> dict:
    """Check one record of the conversation file schema; fill ``loss``
    defaults (true on gpt turns, false on human turns). Raises SchemaError."""
    if not isinstance(obj, dict):
        raise SchemaError(f"{locus}: record is not an object")
    if not isinstance(obj.get("id"), (str, int)) or isinstance(obj.get("id"), bool):
        raise SchemaError(f"{locus}: 'id' must be a string")
    if "image" in obj and obj["image"] is not None and not isinstance(obj["image"], str):
        raise SchemaError(f"{locus}: 'image' must be a string")
    convs = obj.get("conversations")
    if not isinstance(convs, list) or not convs:
        raise SchemaError(f"{locus}: 'conversations' must be a non-empty list")
    fixed = []
    for j, turn in enumerate(convs):
        if not isinstance(turn, dict) or turn.get("from") not in ("human", "gpt") or not isinstance(turn.get("value"), str):
            raise SchemaError(f"{locus}: conversations[{j}] needs from=human|gpt and a string value")
        loss = turn.get("loss", turn["from"] == "gpt")
        if not isinstance(loss, bool):
            raise SchemaError(f"{locus}: conversations[{j}].loss must be a boolean")
        fixed.append({**turn, "loss": loss})
    return {**obj, "conversations": fixed}


def read_conversation_file(path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            locus = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{locus}: invalid JSON ({exc.msg})") from None
            out.append(validate_record(obj, locus))
    return out


def mix_datasets(a_path, b_path, seed: int) -> list[dict]:
    """Concatenate two conversation files and shuffle with a seeded PRNG.

    Each record gains an ``origin`` field naming the file it came from.
    """
    records = []
    for path in (a_path, b_path):
        origin = Path(path).name
        records.extend({**r, "origin": origin} for r in read_conversation_file(path))
    random.Random(seed).shuffle(records)
    return records
