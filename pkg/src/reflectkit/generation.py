"""Turn seeds into annotated samples: instructions, positive and hard
negative responses, and one rationale per response."""
from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from typing import Optional

from .gateway import AnnotatorGateway, AnnotatorResponse, BackendTarget
from .prompts import PromptCatalog, PromptTemplate
from .records import MC_SOURCES, AnnotatedSample, Rationale, SeedRecord, short_hash
from .stats import noun_count, word_count

_TAG_RX = re.compile(
    r"^\s*(?:[-*•]\s*|\d+[.)]\s*)?\**\s*"
    r"(instruction|task\s*type|type|positive(?:\s+response)?|negative(?:\s+response)?)"
    r"(?:\s*#?\s*\d+)?\s*\**\s*[:：]\s*\**\s*(.*)$",
    re.IGNORECASE,
)
_YES_NO = {"yes", "no"}


def _option_label(i: int) -> str:
    return string.ascii_uppercase[i] if i < 26 else str(i + 1)


def render_choices(choices) -> str:
    return "\n".join(f"{_option_label(i)}. {c}" for i, c in enumerate(choices or ()))


def render_mc_instruction(seed: SeedRecord) -> str:
    parts = [seed.question.strip(), render_choices(seed.choices)]
    if seed.context_text and seed.context_text.strip():
        parts.append(f"Context: {seed.context_text.strip()}")
    return "\n".join(parts)


def classify_task_type(declared: Optional[str], positive: str) -> str:
    """Map a declared TYPE tag to a task type, falling back to the shape of
    the positive response when the tag is missing or unrecognized."""
    if declared:
        d = declared.lower()
        if "multiple" in d or "choice" in d:
            return "multiple_choice"
        if "yes" in d or re.search(r"\bno\b", d) or "binary" in d:
            return "yes_no"
        if "short" in d:
            return "short_answer"
        if "open" in d:
            return "open_ended"
    words = positive.lower().split()
    if words and words[0].strip(string.punctuation) in _YES_NO:
        return "yes_no"
    return "short_answer" if word_count(positive) <= 3 else "open_ended"


@dataclass
class ParsedBlock:
    instruction: str = ""
    type: Optional[str] = None
    positive: str = ""
    negatives: list[str] = field(default_factory=list)


def parse_instruction_output(text: str) -> list[ParsedBlock]:
    """Parse the tagged INSTRUCTION/TYPE/POSITIVE/NEGATIVE format.

    Tags are case-insensitive and may carry bullets, numbering or bold
    markers. Untagged lines continue the previous field. A new INSTRUCTION
    tag starts a new block.
    """
    blocks: list[ParsedBlock] = []
    current: Optional[ParsedBlock] = None
    field_name: Optional[str] = None
    for line in (text or "").splitlines():
        m = _TAG_RX.match(line)
        if m:
            tag = re.sub(r"\s+", " ", m.group(1).lower())
            value = m.group(2).strip()
            if tag == "instruction" or current is None:
                current = ParsedBlock()
                blocks.append(current)
            if tag == "instruction":
                current.instruction, field_name = value, "instruction"
            elif tag in ("type", "task type"):
                current.type, field_name = value, "type"
            elif tag.startswith("positive"):
                current.positive, field_name = value, "positive"
            else:
                current.negatives.append(value)
                field_name = "negative"
            continue
        extra = line.strip()
        if not extra or current is None or field_name is None:
            continue
        if field_name == "negative":
            current.negatives[-1] = f"{current.negatives[-1]} {extra}".strip()
        elif field_name == "type":
            continue
        else:
            setattr(current, field_name, f"{getattr(current, field_name)} {extra}".strip())
    for b in blocks:
        b.negatives = [n for n in b.negatives if n]
    return blocks


def _prompt_values(sample: AnnotatedSample, incorrect: Optional[str] = None, **extra) -> dict:
    return {
        "question": sample.instruction,
        "answer": sample.positive_response,
        "incorrect_answer": incorrect,
        # MC instructions already list their options; generated samples have none
        "choices": None,
        "context": "",
        **extra,
    }


def _failure_reason(resp: AnnotatorResponse, empty_reason: str) -> str:
    if resp.status == "empty" or (resp.status == "ok" and not resp.text.strip()):
        return empty_reason
    return f"annotator {resp.status}"


def make_rationale(polarity: str, target: str, text: str, origin: str = "generated", lexicon=None) -> Rationale:
    text = text.strip()
    return Rationale(
        polarity=polarity,
        target_response=target,
        text=text,
        word_count=word_count(text),
        noun_count=noun_count(text, lexicon),
        origin=origin,
    )


def sample_id_for(seed_id: str, index: int) -> str:
    return f"smp-{short_hash(seed_id, index)}"


def generate_instruction_and_responses(
    seed: SeedRecord,
    tpl: PromptTemplate,
    gateway: AnnotatorGateway,
    target: BackendTarget,
    count: int = 2,
) -> list[AnnotatedSample]:
    """Ask the annotator for ``count`` instructions about an image seed.

    Returns up to ``count`` samples (status ``generated``); blocks that fail
    to parse come back quarantined with the raw text kept.
    """
    if seed.source in MC_SOURCES:
        raise ValueError(f"seed {seed.seed_id} already carries QA; use adapt_mc_seed")
    if tpl.role != "instruction_response_gen":
        raise ValueError(f"template {tpl.template_id} has role {tpl.role}")

    prompt = tpl.render(count=count, question=None, answer=None, incorrect_answer=None, choices=None, context=None)
    resp = gateway.complete(target.request(prompt, seed.image_ref, purpose=tpl.role, subject=seed.seed_id))

    def blank(i: int) -> AnnotatedSample:
        return AnnotatedSample(
            sample_id=sample_id_for(seed.seed_id, i),
            seed_id=seed.seed_id,
            image_ref=seed.image_ref,
            source=seed.source,
            provenance={"instruction": resp.request_key},
        )

    if not resp.ok:
        return [blank(0).quarantine(_failure_reason(resp, "empty annotator output"), resp.text)]
    blocks = parse_instruction_output(resp.text)
    if not blocks:
        return [blank(0).quarantine("unparseable annotator output", resp.text)]

    out = []
    for i, block in enumerate(blocks[:count]):
        s = blank(i)
        key = resp.request_key
        s.instruction = block.instruction
        s.positive_response = block.positive
        s.negative_responses = list(block.negatives)
        s.task_type = classify_task_type(block.type, block.positive)
        s.provenance.update(
            positive_response=key,
            negative_responses=key,
            task_type=key if block.type else "fallback",
        )
        if not block.instruction:
            s.quarantine("missing instruction", resp.text)
        elif not block.positive:
            s.quarantine("missing positive", resp.text)
        elif not block.negatives:
            s.quarantine("missing negatives", resp.text)
        out.append(s)
    return out


def adapt_mc_seed(seed: SeedRecord, lexicon=None) -> AnnotatedSample:
    """Multiple-choice seed -> sample. Every wrong choice becomes a negative
    response, in original order; a human rationale, if any, is kept as the
    positive rationale."""
    if seed.source not in MC_SOURCES:
        raise ValueError(f"seed {seed.seed_id} is not a multiple-choice seed")
    idx = seed.correct_choice_index
    if idx is None or not seed.choices or not 0 <= idx < len(seed.choices):
        raise ValueError(f"seed {seed.seed_id}: choice index out of range")
    positive = seed.choices[idx]
    sample = AnnotatedSample(
        sample_id=sample_id_for(seed.seed_id, 0),
        seed_id=seed.seed_id,
        image_ref=seed.image_ref,
        source=seed.source,
        instruction=render_mc_instruction(seed),
        task_type="multiple_choice",
        positive_response=positive,
        negative_responses=[c for i, c in enumerate(seed.choices) if i != idx],
        provenance={"instruction": "seed", "positive_response": "seed", "negative_responses": "seed", "task_type": "seed"},
    )
    if seed.given_rationale and seed.given_rationale.strip():
        sample.pos_rationale = make_rationale("positive", positive, seed.given_rationale, "human", lexicon)
        sample.provenance["pos_rationale"] = "human"
    return sample


def generate_pos_rationale(
    sample: AnnotatedSample,
    tpl: PromptTemplate,
    gateway: AnnotatorGateway,
    target: BackendTarget,
    lexicon=None,
) -> Optional[Rationale]:
    """Attach a generated positive rationale; on failure quarantine the
    sample and return None."""
    if not sample.positive_response:
        raise ValueError(f"{sample.sample_id}: no positive response")
    if sample.pos_rationale is not None:
        raise ValueError(f"{sample.sample_id}: positive rationale already present")
    prompt = tpl.render(**_prompt_values(sample))
    resp = gateway.complete(target.request(prompt, sample.image_ref, purpose=tpl.role, subject=sample.sample_id))
    sample.provenance["pos_rationale"] = resp.request_key
    if not resp.ok or not resp.text.strip():
        sample.quarantine(_failure_reason(resp, "empty rationale"))
        return None
    sample.pos_rationale = make_rationale("positive", sample.positive_response, resp.text, lexicon=lexicon)
    return sample.pos_rationale


def generate_neg_rationales(
    sample: AnnotatedSample,
    tpl: PromptTemplate,
    gateway: AnnotatorGateway,
    target: BackendTarget,
    lexicon=None,
) -> list[Rationale]:
    """One rationale per negative response, order-aligned. Any failure
    quarantines the whole sample and attaches nothing."""
    keys, rationales = [], []
    for i, negative in enumerate(sample.negative_responses):
        prompt = tpl.render(**_prompt_values(sample, incorrect=negative))
        resp = gateway.complete(
            target.request(prompt, sample.image_ref, purpose=tpl.role, subject=f"{sample.sample_id}#{i}")
        )
        keys.append(resp.request_key)
        if not resp.ok or not resp.text.strip():
            sample.provenance["neg_rationales"] = keys
            sample.quarantine(f"{_failure_reason(resp, 'empty rationale')} (negative {i})")
            return []
        rationales.append(make_rationale("negative", negative, resp.text, lexicon=lexicon))
    sample.provenance["neg_rationales"] = keys
    sample.neg_rationales = rationales
    return rationales


def annotate_seed(
    seed: SeedRecord,
    catalog: PromptCatalog,
    gateway: AnnotatorGateway,
    target: BackendTarget,
    *,
    instructions_per_image: int = 2,
    lexicon=None,
) -> list[AnnotatedSample]:
    """Full per-seed flow: instructions/responses (or MC adaptation), then
    positive and negative rationales. Calls within a seed are sequential."""
    if seed.source in MC_SOURCES:
        samples = [adapt_mc_seed(seed, lexicon)]
    else:
        samples = generate_instruction_and_responses(
            seed, catalog.get("instruction_response_gen"), gateway, target, instructions_per_image
        )
    pos_tpl = catalog.get("pos_rationale_gen")
    neg_tpl = catalog.get("neg_rationale_gen")
    for s in samples:
        if s.status == "quarantined":
            continue
        if s.pos_rationale is None:
            generate_pos_rationale(s, pos_tpl, gateway, target, lexicon)
            if s.status == "quarantined":
                continue
        generate_neg_rationales(s, neg_tpl, gateway, target, lexicon)
    return samples
