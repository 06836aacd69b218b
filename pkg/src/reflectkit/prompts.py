"""Prompt templates and the on-disk catalog they live in.

A template file is plain text with a YAML front-matter block::

    ---
    template_id: train_neg_d
    role: train_neg_rationale
    variant: d
    ---
    Explain why this answer is wrong: {incorrect_answer}. ...

Only the placeholders in ``PLACEHOLDERS`` are substituted; any other
``{name}`` token is rejected at load time. Literal braces that do not form a
lowercase identifier are left alone.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

ROLES = (
    "instruction_response_gen",
    "pos_rationale_gen",
    "neg_rationale_gen",
    "consistency_check",
    "train_pos_rationale",
    "train_neg_rationale",
)
NEG_ROLES = ("neg_rationale_gen", "train_neg_rationale")
TRAIN_ROLES = ("train_pos_rationale", "train_neg_rationale")
PROMPT_VARIANTS = ("a", "b", "c", "d")
PLACEHOLDERS = (
    "question",
    "answer",
    "incorrect_answer",
    "choices",
    "context",
    "count",
    "pos_rationale",
    "neg_rationale",
)
BUNDLED_DIR = Path(__file__).parent / "templates"

_PLACEHOLDER_RX = re.compile(r"\{([a-z_]+)\}")
_FRONT_RX = re.compile(r"\A---\s*\n(.*?)\n---\s*\n", re.DOTALL)


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    role: str
    text: str
    variant: Optional[str] = None
    provenance: Optional[str] = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise TemplateError(f"{self.template_id}: unknown role {self.role!r}")
        if self.variant is not None and self.variant not in PROMPT_VARIANTS:
            raise TemplateError(f"{self.template_id}: unknown variant {self.variant!r}")
        if self.role in TRAIN_ROLES and self.variant is None:
            raise TemplateError(f"{self.template_id}: training templates need a variant")
        unknown = set(self.placeholders) - set(PLACEHOLDERS)
        if unknown:
            raise TemplateError(f"{self.template_id}: unknown placeholders {sorted(unknown)}")
        if self.role in NEG_ROLES and "incorrect_answer" not in self.placeholders:
            raise TemplateError(f"{self.template_id}: negative templates must use {{incorrect_answer}}")

    @property
    def placeholders(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(_PLACEHOLDER_RX.findall(self.text)))

    def render(self, **values) -> str:
        missing = [p for p in self.placeholders if p not in values]
        if missing:
            raise TemplateError(f"{self.template_id}: no value for {missing}")

        def sub(m: re.Match) -> str:
            value = values[m.group(1)]
            return "" if value is None else str(value)

        return _PLACEHOLDER_RX.sub(sub, self.text)

    @classmethod
    def parse(cls, raw: str, name: str = "<template>") -> "PromptTemplate":
        m = _FRONT_RX.match(raw)
        if not m:
            raise TemplateError(f"{name}: missing front-matter block")
        meta = yaml.safe_load(m.group(1)) or {}
        if "template_id" not in meta or "role" not in meta:
            raise TemplateError(f"{name}: front-matter needs template_id and role")
        variant = meta.get("variant")
        return cls(
            template_id=str(meta["template_id"]),
            role=str(meta["role"]),
            text=raw[m.end():].strip(),
            variant=str(variant) if variant is not None else None,
            provenance=meta.get("provenance"),
        )


class PromptCatalog:
    def __init__(self, templates: list[PromptTemplate]):
        self.templates = sorted(templates, key=lambda t: t.template_id)
        ids = [t.template_id for t in self.templates]
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise TemplateError(f"duplicate template ids: {sorted(dupes)}")

    @classmethod
    def load(cls, directory=None) -> "PromptCatalog":
        directory = Path(directory) if directory else BUNDLED_DIR
        files = sorted(directory.glob("*.txt"))
        if not files:
            raise TemplateError(f"no templates found in {directory}")
        return cls([PromptTemplate.parse(f.read_text(encoding="utf-8"), f.name) for f in files])

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for t in self.templates:
            h.update(repr((t.template_id, t.role, t.variant, t.provenance, t.text)).encode("utf-8"))
        return h.hexdigest()[:16]

    def get(self, role: str, variant: Optional[str] = None, provenance: Optional[str] = None) -> PromptTemplate:
        matches = [t for t in self.templates if t.role == role]
        if role in TRAIN_ROLES:
            matches = [t for t in matches if t.variant == (variant or "d")]
        if len(matches) > 1 and provenance is not None:
            narrowed = [t for t in matches if t.provenance == provenance]
            matches = narrowed or [t for t in matches if t.provenance == "generated"]
        if not matches:
            raise TemplateError(f"no template for role={role} variant={variant} provenance={provenance}")
        return matches[0]

    def training_pair(self, variant: str = "d") -> tuple[PromptTemplate, PromptTemplate]:
        return self.get("train_pos_rationale", variant), self.get("train_neg_rationale", variant)
