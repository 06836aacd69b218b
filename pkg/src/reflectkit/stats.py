"""Dataset statistics: instance accounting, task-type distribution and
rationale length / noun-count histograms.

Noun counting is lexicon lookup. The bundled lexicon (``data/nouns.txt``)
holds the 5,000 most frequent English words whose most likely tag is a
singular noun, plus their plurals. Words mostly used as verbs or adjectives
("run", "red", "saw") are left out even when they can be nouns, and noun
uses of a word like "light" still count when it is used as an adjective,
so counts are exact only relative to the lexicon. ``heuristic_noun_count``
is a lexicon-free fallback that is cruder still.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Union

from .records import TASK_TYPES, AnnotatedSample

DATA_DIR = Path(__file__).parent / "data"
WORD_EDGES = (0, 5, 10, 15, 20, 25, 30, 40, 50, 75, 100, math.inf)
NOUN_EDGES = (0, 2, 4, 6, 8, 10, 15, math.inf)

_HAS_ALNUM = re.compile(r"\w", re.UNICODE)
_EDGE_PUNCT = re.compile(r"^[^\w]+|[^\w]+$", re.UNICODE)
_POSSESSIVE = re.compile(r"(?:'s|’s|'|’)$")

Lexicon = frozenset


def word_count(text: str) -> int:
    """Whitespace-delimited tokens, ignoring tokens made only of punctuation."""
    if not text:
        return 0
    return sum(1 for tok in text.split() if _HAS_ALNUM.search(tok))


def _noun_tokens(text: str) -> list[str]:
    out = []
    for tok in (text or "").lower().split():
        tok = _EDGE_PUNCT.sub("", tok)
        tok = _POSSESSIVE.sub("", tok)
        if tok:
            out.append(tok)
    return out


@lru_cache(maxsize=None)
def bundled_lexicon() -> Lexicon:
    return load_lexicon(DATA_DIR / "nouns.txt")


@lru_cache(maxsize=None)
def function_words() -> Lexicon:
    return load_lexicon(DATA_DIR / "function_words.txt")


def load_lexicon(path) -> Lexicon:
    """One lowercase noun per line. Raises ``OSError`` if unreadable."""
    with open(path, "r", encoding="utf-8") as fh:
        return frozenset(line.strip().lower() for line in fh if line.strip())


@lru_cache(maxsize=8)
def _cached_lexicon(path: str) -> Lexicon:
    return load_lexicon(path)


def noun_count(text: str, lexicon: Union[None, str, Path, Iterable[str]] = None) -> int:
    """Count noun occurrences (not distinct nouns) in ``text``: tokens,
    lowercased with edge punctuation and possessive endings removed, that
    appear in the lexicon.

    ``lexicon`` may be a path to a lexicon file, a set of words, or None for
    the bundled list. Plurals count only if the lexicon lists them.
    """
    if lexicon is None:
        lex = bundled_lexicon()
    elif isinstance(lexicon, (str, Path)):
        lex = _cached_lexicon(str(Path(lexicon).resolve()))
    else:
        lex = frozenset(w.lower() for w in lexicon)
    return sum(1 for tok in _noun_tokens(text) if tok in lex)


_VERB_ADV_SUFFIXES = ("ly", "ing", "ed", "ize", "ise", "ify", "ate")
_ADJ_SUFFIXES = ("ous", "ful", "ive", "able", "ible", "ic", "al", "less", "ish")


def heuristic_noun_count(text: str) -> int:
    """Lexicon-free estimate: tokens that are alphabetic, not function words,
    and do not carry a typical verb/adverb/adjective suffix. Over-counts
    bare verbs and adjectives; use only when no lexicon fits the corpus."""
    stop = function_words()
    n = 0
    for tok in _noun_tokens(text):
        if not tok.isalpha() or tok in stop or len(tok) < 2:
            continue
        if tok.endswith(_VERB_ADV_SUFFIXES) or tok.endswith(_ADJ_SUFFIXES):
            continue
        n += 1
    return n


def bucket_labels(edges) -> list[str]:
    labels = []
    for lo, hi in zip(edges, edges[1:]):
        labels.append(f"{lo}+" if math.isinf(hi) else f"{lo}-{hi - 1}")
    return labels


def bucket_index(value: int, edges) -> int:
    for i, (lo, hi) in enumerate(zip(edges, edges[1:])):
        if lo <= value < hi:
            return i
    raise ValueError(f"{value} outside histogram range")


@dataclass
class DatasetStats:
    n_images: int = 0
    n_instructions: int = 0
    n_pos_responses: int = 0
    n_neg_responses: int = 0
    n_instances: int = 0
    task_type_counts: dict[str, int] = field(default_factory=lambda: {t: 0 for t in TASK_TYPES})
    rationale_length_hist: dict[str, int] = field(default_factory=lambda: dict.fromkeys(bucket_labels(WORD_EDGES), 0))
    noun_count_hist: dict[str, int] = field(default_factory=lambda: dict.fromkeys(bucket_labels(NOUN_EDGES), 0))
    avg_negatives_per_instruction: float = 0.0

    def to_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "n_instructions": self.n_instructions,
            "n_pos_responses": self.n_pos_responses,
            "n_neg_responses": self.n_neg_responses,
            "n_instances": self.n_instances,
            "task_type_counts": dict(self.task_type_counts),
            "rationale_length_hist": dict(self.rationale_length_hist),
            "noun_count_hist": dict(self.noun_count_hist),
            "avg_negatives_per_instruction": self.avg_negatives_per_instruction,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_table(self) -> str:
        rows = [
            ("images", self.n_images),
            ("instructions", self.n_instructions),
            ("positive responses", self.n_pos_responses),
            ("negative responses", self.n_neg_responses),
            ("training instances", self.n_instances),
            ("avg negatives / instruction", f"{self.avg_negatives_per_instruction:.4f}"),
        ]
        lines = ["counts"]
        lines += [f"  {k:<30}{v:>12}" for k, v in rows]
        for title, hist in (
            ("task types", self.task_type_counts),
            ("rationale length (words)", self.rationale_length_hist),
            ("nouns per rationale", self.noun_count_hist),
        ):
            total = sum(hist.values())
            lines.append(title)
            for k, v in hist.items():
                share = f"{100 * v / total:6.2f}%" if total else "     -"
                lines.append(f"  {k:<30}{v:>12}  {share}")
        return "\n".join(lines) + "\n"


class StatsAccumulator:
    """Per-sample partial counts; ``merge`` is associative and commutative."""

    def __init__(self):
        self.images: set[str] = set()
        self.n_instructions = 0
        self.n_neg = 0
        self.task_types = dict.fromkeys(TASK_TYPES, 0)
        self.word_hist = [0] * (len(WORD_EDGES) - 1)
        self.noun_hist = [0] * (len(NOUN_EDGES) - 1)

    def add(self, sample: AnnotatedSample, lexicon=None) -> None:
        self.images.add(sample.image_ref)
        self.n_instructions += 1
        self.n_neg += len(sample.negative_responses)
        self.task_types[sample.task_type] = self.task_types.get(sample.task_type, 0) + 1
        for r in sample.rationales():
            self.word_hist[bucket_index(word_count(r.text), WORD_EDGES)] += 1
            nouns = noun_count(r.text, lexicon) if lexicon is not None else r.noun_count
            self.noun_hist[bucket_index(nouns, NOUN_EDGES)] += 1

    def merge(self, other: "StatsAccumulator") -> "StatsAccumulator":
        out = StatsAccumulator()
        out.images = self.images | other.images
        out.n_instructions = self.n_instructions + other.n_instructions
        out.n_neg = self.n_neg + other.n_neg
        for k in set(self.task_types) | set(other.task_types):
            out.task_types[k] = self.task_types.get(k, 0) + other.task_types.get(k, 0)
        out.word_hist = [a + b for a, b in zip(self.word_hist, other.word_hist)]
        out.noun_hist = [a + b for a, b in zip(self.noun_hist, other.noun_hist)]
        return out

    def result(self) -> DatasetStats:
        n_pos = self.n_instructions
        return DatasetStats(
            n_images=len(self.images),
            n_instructions=self.n_instructions,
            n_pos_responses=n_pos,
            n_neg_responses=self.n_neg,
            n_instances=n_pos + self.n_neg,
            task_type_counts=dict(self.task_types),
            rationale_length_hist=dict(zip(bucket_labels(WORD_EDGES), self.word_hist)),
            noun_count_hist=dict(zip(bucket_labels(NOUN_EDGES), self.noun_hist)),
            avg_negatives_per_instruction=(self.n_neg / self.n_instructions) if self.n_instructions else 0.0,
        )


def compute_stats(accepted: Iterable[AnnotatedSample], lexicon=None) -> DatasetStats:
    """Statistics over accepted samples.

    Noun counts come from each rationale's cached ``noun_count`` unless a
    ``lexicon`` is given, in which case they are recomputed with it.
    """
    acc = StatsAccumulator()
    for sample in accepted:
        acc.add(sample, lexicon)
    return acc.result()

