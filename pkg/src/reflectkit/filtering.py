"""Noise removal: structural validation, then a text-only judge that checks
the positive rationale against each negative rationale."""
from __future__ import annotations

import re
import string

from .gateway import AnnotatorGateway, BackendTarget
from .prompts import PromptTemplate
from .records import TASK_TYPES, AnnotatedSample, FilterVerdict, PairVerdict

_WS = re.compile(r"\s+")
ROUTE = {"keep": "accepted", "drop": "filtered_out", "quarantine": "quarantined"}


def normalize_response(text: str) -> str:
    return _WS.sub(" ", (text or "").casefold()).strip(string.punctuation + " ")


def structural_problems(sample: AnnotatedSample) -> list[str]:
    problems = []
    if not sample.instruction.strip():
        problems.append("missing instruction")
    if not sample.positive_response.strip():
        problems.append("missing positive")
    if sample.task_type not in TASK_TYPES:
        problems.append(f"unknown task type {sample.task_type!r}")
    if sample.task_type == "multiple_choice" and not sample.negative_responses:
        problems.append("missing negatives")
    pos_norm = normalize_response(sample.positive_response)
    if any(normalize_response(n) == pos_norm for n in sample.negative_responses):
        problems.append("degenerate negative")
    if any(not n.strip() for n in sample.negative_responses):
        problems.append("empty negative response")

    pos = sample.pos_rationale
    if pos is None or not pos.text.strip():
        problems.append("missing positive rationale")
    elif pos.polarity != "positive" or pos.target_response != sample.positive_response:
        problems.append("positive rationale target mismatch")

    if len(sample.neg_rationales) != len(sample.negative_responses):
        problems.append("rationale count mismatch")
    else:
        for i, (r, neg) in enumerate(zip(sample.neg_rationales, sample.negative_responses)):
            if not r.text.strip():
                problems.append(f"empty negative rationale {i}")
            if r.polarity != "negative" or r.target_response != neg:
                problems.append(f"negative rationale target mismatch {i}")
    return problems


def validate_structure(sample: AnnotatedSample) -> AnnotatedSample:
    """Route a generated sample to ``validated`` or ``quarantined``. Never raises."""
    if sample.status != "generated":
        return sample
    problems = structural_problems(sample)
    if problems:
        sample.status = "quarantined"
        sample.reasons.extend(problems)
    else:
        sample.status = "validated"
    return sample


def parse_judge_verdict(text: str) -> str:
    """First line must start with CONSISTENT or INCONSISTENT (any case)."""
    lines = (text or "").strip().splitlines()
    first = lines[0].strip().upper() if lines else ""
    if first.startswith("INCONSISTENT"):
        return "inconsistent"
    if first.startswith("CONSISTENT"):
        return "consistent"
    return "unknown"


def consistency_filter(
    sample: AnnotatedSample,
    judge_tpl: PromptTemplate,
    gateway: AnnotatorGateway,
    target: BackendTarget,
) -> FilterVerdict:
    """Judge every (positive rationale, negative rationale) pair and route
    the sample: all consistent -> accepted, any inconsistent -> filtered_out,
    otherwise any unknown -> quarantined."""
    if sample.status != "validated":
        raise ValueError(f"{sample.sample_id}: expected status validated, got {sample.status}")
    if sample.pos_rationale is None:
        raise ValueError(f"{sample.sample_id}: positive rationale missing")

    pairs = []
    for i, (neg, rat) in enumerate(zip(sample.negative_responses, sample.neg_rationales)):
        prompt = judge_tpl.render(
            question=sample.instruction,
            answer=sample.positive_response,
            incorrect_answer=neg,
            choices=None,
            context=None,
            pos_rationale=sample.pos_rationale.text,
            neg_rationale=rat.text,
        )
        resp = gateway.complete(target.request(prompt, None, purpose=judge_tpl.role, subject=f"{sample.sample_id}#{i}"))
        if resp.ok:
            verdict = parse_judge_verdict(resp.text)
            detail = resp.text.strip().splitlines()[0][:200] if resp.text.strip() else ""
        else:
            verdict, detail = "unknown", f"judge {resp.status}"
        pairs.append(PairVerdict(i, verdict, resp.request_key, detail))

    result = FilterVerdict(sample.sample_id, pairs, FilterVerdict.fold([p.verdict for p in pairs]))
    sample.verdict = result
    sample.status = ROUTE[result.final]
    if result.final == "drop":
        sample.reasons.append("inconsistent rationales")
    elif result.final == "quarantine":
        sample.reasons.append("judge verdict unknown")
    return result


def filter_sample(
    sample: AnnotatedSample,
    judge_tpl: PromptTemplate,
    gateway: AnnotatorGateway,
    target: BackendTarget,
) -> AnnotatedSample:
    """Validate then judge. Samples that arrive quarantined stay quarantined."""
    validate_structure(sample)
    if sample.status == "validated":
        consistency_filter(sample, judge_tpl, gateway, target)
    return sample
