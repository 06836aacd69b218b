"""Scoring of model predictions: yes/no probes (accuracy, precision, recall,
F1), multiple-choice accuracy and open-ended exact match, each with a
per-group breakdown."""
from __future__ import annotations

import json
import re
import string
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

BINARY_GROUPS = ("random", "popular", "adversarial")
MC_GROUPS = ("AR", "CP", "FP-S", "FP-C", "LR", "RR")
OPEN_GROUPS = ("attribute", "object", "relation", "global", "category")
DEFAULT_GROUPS = {"yes_no": BINARY_GROUPS, "multiple_choice": MC_GROUPS, "open_ended": OPEN_GROUPS}
UNGROUPED = "ungrouped"

_CLAUSE_SPLIT = re.compile(r"[.,;:!?\n]+")
_WORD = re.compile(r"[a-z0-9']+")
_ARTICLES = {"a", "an", "the"}


@dataclass
class EvalRecord:
    qid: str
    task: str
    gold: Union[str, int]
    prediction_text: str = ""
    choices: Optional[list[str]] = None
    group_label: Optional[str] = None

    def __post_init__(self):
        if self.task not in DEFAULT_GROUPS:
            raise ValueError(f"{self.qid}: unknown task {self.task!r}")
        if self.task == "multiple_choice" and not self.choices:
            raise ValueError(f"{self.qid}: multiple-choice record without choices")


@dataclass
class ScoreReport:
    task: str
    overall: dict[str, float] = field(default_factory=dict)
    per_group: dict[str, dict[str, float]] = field(default_factory=dict)
    group_sizes: dict[str, int] = field(default_factory=dict)
    n_scored: int = 0
    n_unparseable: int = 0

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "overall": self.overall,
            "per_group": self.per_group,
            "group_sizes": self.group_sizes,
            "n_scored": self.n_scored,
            "n_unparseable": self.n_unparseable,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_table(self) -> str:
        cols = ["accuracy", "precision", "recall", "f1"] if self.task == "yes_no" else ["accuracy"]
        heads = {"accuracy": "Accuracy", "precision": "Precision", "recall": "Recall", "f1": "F1 Score"}
        lines = [f"{'Group':<14}{'N':>7}" + "".join(f"{heads[c]:>11}" for c in cols)]
        rows = [(g, self.group_sizes.get(g, 0), m) for g, m in self.per_group.items()]
        rows.append(("overall", self.n_scored, self.overall))
        for name, n, metrics in rows:
            lines.append(f"{name:<14}{n:>7}" + "".join(f"{100 * metrics[c]:>11.2f}" for c in cols))
        lines.append(f"unparseable predictions: {self.n_unparseable}")
        return "\n".join(lines) + "\n"


def _words(text: str) -> list[str]:
    return _WORD.findall((text or "").lower())


def normalize_yes_no(prediction_text: str) -> str:
    """Return ``yes``, ``no`` or ``unparseable``.

    The first standalone yes/no token wins, unless clauses open with
    conflicting answers ("Yes, no.") or neither word occurs.
    """
    openers = set()
    for clause in _CLAUSE_SPLIT.split(prediction_text or ""):
        words = _words(clause)
        if words and words[0] in ("yes", "no"):
            openers.add(words[0])
    if len(openers) > 1:
        return "unparseable"
    for w in _words(prediction_text):
        if w in ("yes", "no"):
            return w
    return "unparseable"


def _gold_yes_no(gold) -> str:
    g = str(gold).strip().lower()
    if g not in ("yes", "no"):
        raise ValueError(f"gold label {gold!r} is not yes/no")
    return g


def _check_groups(records: Sequence[EvalRecord], vocabulary: Optional[Sequence[str]]) -> None:
    if vocabulary is None:
        return
    allowed = set(vocabulary)
    for r in records:
        if r.group_label is not None and r.group_label not in allowed:
            raise ValueError(f"{r.qid}: group label {r.group_label!r} not in vocabulary {sorted(allowed)}")


def _partition(records: Sequence[EvalRecord]) -> dict[str, list[EvalRecord]]:
    if not any(r.group_label is not None for r in records):
        return {}
    groups: dict[str, list[EvalRecord]] = defaultdict(list)
    for r in records:
        groups[r.group_label if r.group_label is not None else UNGROUPED].append(r)
    return dict(sorted(groups.items()))


def binary_metrics(tp: int, fp: int, tn: int, fn: int) -> dict[str, float]:
    n = tp + fp + tn + fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": (tp + tn) / n if n else 0.0, "precision": precision, "recall": recall, "f1": f1}


def confusion(records: Iterable[EvalRecord], positive_label: str = "yes") -> tuple[int, int, int, int, int]:
    """(TP, FP, TN, FN, unparseable). An unparseable prediction is the wrong
    class: FN for a positive gold, FP for a negative gold."""
    tp = fp = tn = fn = bad = 0
    for r in records:
        gold_pos = _gold_yes_no(r.gold) == positive_label
        pred = normalize_yes_no(r.prediction_text)
        if pred == "unparseable":
            bad += 1
            pred_pos = not gold_pos
        else:
            pred_pos = pred == positive_label
        if gold_pos and pred_pos:
            tp += 1
        elif gold_pos:
            fn += 1
        elif pred_pos:
            fp += 1
        else:
            tn += 1
    return tp, fp, tn, fn, bad


def score_binary(
    records: Sequence[EvalRecord], positive_label: str = "yes", groups: Optional[Sequence[str]] = BINARY_GROUPS
) -> ScoreReport:
    records = list(records)
    if not records:
        raise ValueError("no records")
    if any(r.task != "yes_no" for r in records):
        raise ValueError("score_binary needs task=yes_no records")
    _check_groups(records, groups)
    tp, fp, tn, fn, bad = confusion(records, positive_label)
    report = ScoreReport("yes_no", binary_metrics(tp, fp, tn, fn), n_scored=len(records), n_unparseable=bad)
    for g, rs in _partition(records).items():
        report.per_group[g] = binary_metrics(*confusion(rs, positive_label)[:4])
        report.group_sizes[g] = len(rs)
    return report


_LEADING_LETTER = re.compile(r"^\s*[\(\[]?([A-Z])[\)\]]?(?=$|[\s.):,])")
_PAREN_LETTER = re.compile(r"[\(\[]([A-Za-z])[\)\]]")
_ANSWER_IS = re.compile(r"\b(?i:answer)\s*(?:(?i:is)\s*)?:?\s*[\(\[]?([A-Z])[\)\]]?(?![A-Za-z])")


def parse_choice(prediction_text: str, choices: Sequence[str]) -> Optional[int]:
    """Map a free-form prediction to a choice index, or None.

    Order: a leading option letter ("B", "B.", "(B) ..."), a parenthesized
    letter anywhere ("... (c) granite"), "answer is X", then the longest
    choice text contained in the prediction.
    """
    text = prediction_text or ""
    n = len(choices)
    m = _LEADING_LETTER.match(text)
    if m and (len(text.strip()) <= 3 or not re.match(r"^\s*[A-Z]\s+[a-z]", text)):
        idx = ord(m.group(1)) - ord("A")
        if idx < n:
            return idx
    for rx in (_PAREN_LETTER, _ANSWER_IS):
        m = rx.search(text)
        if m:
            idx = ord(m.group(1).upper()) - ord("A")
            if idx < n:
                return idx
    low = text.lower()
    hits = [
        (len(c), i)
        for i, c in enumerate(choices)
        if c.strip() and re.search(rf"(?<!\w){re.escape(c.strip().lower())}(?!\w)", low)
    ]
    if hits:
        return max(hits)[1]
    return None


def _gold_index(gold, choices: Sequence[str]) -> int:
    if isinstance(gold, int) and not isinstance(gold, bool):
        return gold
    g = str(gold).strip()
    # exact choice text wins over a letter reading ("y" among choices x, y)
    lowered = [c.strip().lower() for c in choices]
    if g.lower() in lowered:
        return lowered.index(g.lower())
    if len(g) == 1 and g.isalpha():
        return ord(g.upper()) - ord("A")
    if g.isdigit():
        return int(g)
    raise ValueError(f"cannot interpret gold {gold!r}")


def _accuracy_report(task: str, records: list[EvalRecord], correct: list[bool], bad: int) -> ScoreReport:
    report = ScoreReport(task, {"accuracy": sum(correct) / len(records)}, n_scored=len(records), n_unparseable=bad)
    by_qid = {id(r): c for r, c in zip(records, correct)}
    for g, rs in _partition(records).items():
        report.per_group[g] = {"accuracy": sum(by_qid[id(r)] for r in rs) / len(rs)}
        report.group_sizes[g] = len(rs)
    return report


def score_multiple_choice(records: Sequence[EvalRecord], groups: Optional[Sequence[str]] = MC_GROUPS) -> ScoreReport:
    records = list(records)
    if not records:
        raise ValueError("no records")
    if any(r.task != "multiple_choice" for r in records):
        raise ValueError("score_multiple_choice needs task=multiple_choice records")
    _check_groups(records, groups)
    correct, bad = [], 0
    for r in records:
        pred = parse_choice(r.prediction_text, r.choices)
        if pred is None:
            bad += 1
        correct.append(pred is not None and pred == _gold_index(r.gold, r.choices))
    return _accuracy_report("multiple_choice", records, correct, bad)


def normalize_answer(text: str) -> str:
    """Lowercase; drop apostrophes; other ASCII punctuation becomes a space;
    remove the articles a/an/the; collapse whitespace."""
    t = (text or "").lower().replace("'", "").replace("’", "")
    t = t.translate({ord(c): " " for c in string.punctuation})
    return " ".join(w for w in t.split() if w not in _ARTICLES)


def score_open_ended(records: Sequence[EvalRecord], groups: Optional[Sequence[str]] = OPEN_GROUPS) -> ScoreReport:
    records = list(records)
    if not records:
        raise ValueError("no records")
    if any(r.task != "open_ended" for r in records):
        raise ValueError("score_open_ended needs task=open_ended records")
    _check_groups(records, groups)
    correct, bad = [], 0
    for r in records:
        pred = normalize_answer(r.prediction_text)
        if not pred:
            bad += 1
        correct.append(bool(pred) and pred == normalize_answer(str(r.gold)))
    return _accuracy_report("open_ended", records, correct, bad)


SCORERS = {"yes_no": score_binary, "multiple_choice": score_multiple_choice, "open_ended": score_open_ended}


def load_eval_records(gold_path, pred_path, task: Optional[str] = None) -> tuple[list[EvalRecord], int]:
    """Join a gold file with a predictions file on ``qid``.

    Gold records without a prediction are scored with empty text (and thus
    count as unparseable). Returns the records and the number of
    predictions whose qid is not in the gold file.
    """
    preds = {}
    with open(pred_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                obj = json.loads(line)
                if "qid" not in obj or "text" not in obj:
                    raise ValueError(f"{pred_path}:{lineno}: prediction needs qid and text")
                preds[str(obj["qid"])] = obj["text"]
    records = []
    with open(gold_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            try:
                rec = EvalRecord(
                    qid=str(obj["qid"]),
                    task=obj.get("task", task),
                    gold=obj["gold"],
                    prediction_text=preds.pop(str(obj["qid"]), ""),
                    choices=obj.get("choices"),
                    group_label=obj.get("group_label"),
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{gold_path}:{lineno}: {exc}") from None
            records.append(rec)
    return records, len(preds)
