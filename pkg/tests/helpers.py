"""Builders shared by the test modules."""
from __future__ import annotations

import json
from pathlib import Path

from reflectkit.gateway import AnnotatorGateway, BackendTarget, DecodeParams, MockBackend, ResponseCache
from reflectkit.records import AnnotatedSample, Rationale

TARGET = BackendTarget("mock", "mock-model", DecodeParams(0.7, 1024))


def rationale(polarity: str, target: str, text: str | None = None, origin: str = "generated") -> Rationale:
    text = text or f"Because of the {polarity} details that settle {target}."
    return Rationale(polarity, target, text, len(text.split()), 0, origin)


def accepted_sample(n_neg: int, idx: int = 0, *, status: str = "accepted", task_type: str = "short_answer") -> AnnotatedSample:
    negatives = [f"wrong answer {idx}-{i}" for i in range(n_neg)]
    return AnnotatedSample(
        sample_id=f"s{idx:06d}",
        seed_id=f"seed{idx:06d}",
        image_ref=f"img/{idx}.jpg",
        source="vg_like",
        instruction=f"Question number {idx}?",
        task_type=task_type,
        positive_response=f"right answer {idx}",
        negative_responses=negatives,
        pos_rationale=rationale("positive", f"right answer {idx}", f"pos rationale {idx}"),
        neg_rationales=[rationale("negative", n, f"neg rationale {idx}-{i}") for i, n in enumerate(negatives)],
        status=status,
    )


def gateway(script, cache_dir=None, **kwargs) -> AnnotatorGateway:
    gw = AnnotatorGateway(ResponseCache(cache_dir) if cache_dir else None, sleep=lambda s: None)
    backend = script if hasattr(script, "invoke") else MockBackend(script)
    gw.register("mock", backend, **kwargs)
    return gw


def write_jsonl(path: Path, rows) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


# A complete mock script for image seeds: two instructions per image, a
# yes/no one and a counting one with two negatives, whose "Four" rationale
# is judged inconsistent.
FULL_SCRIPT = [
    {
        "pattern": "### Task: instruction generation",
        "response": (
            "INSTRUCTION: How many birds sit on the fence in {image_ref}?\n"
            "TYPE: short-answer\nPOSITIVE: Three birds.\nNEGATIVE: Two birds.\nNEGATIVE: Four birds.\n\n"
            "INSTRUCTION: Is the sky in {image_ref} clear?\nTYPE: yes/no\nPOSITIVE: Yes\nNEGATIVE: No"
        ),
    },
    {
        "pattern": "re:### Task: positive rationale[\\s\\S]*Correct answer: Yes",
        "response": "The sky shows no clouds at all and the light is even across the scene, so the sky is clear.",
    },
    {
        "pattern": "### Task: positive rationale",
        "response": "Counting along the fence there is one bird near the post, one in the middle and one at the far end.",
    },
    {
        "pattern": "### Task: negative rationale",
        "response": "A careful count along the top rail of the fence finds a different number of birds than this answer.",
    },
    {"pattern": "re:### Task: consistency check[\\s\\S]*Incorrect answer: Four", "response": "INCONSISTENT\nCounts disagree."},
    {"pattern": "### Task: consistency check", "response": "CONSISTENT\nNo conflict."},
]


def write_mock_project(root: Path, n_seeds: int = 20, delay_ms: float = 0.0, batch_size: int = 16) -> Path:
    """Seeds, script and config for an end-to-end mock run; returns the config path."""
    root.mkdir(parents=True, exist_ok=True)
    write_jsonl(root / "seeds.jsonl", [{"image": f"img/{i:03d}.jpg"} for i in range(n_seeds)])
    write_jsonl(root / "script.jsonl", FULL_SCRIPT)
    cfg = root / "config.yaml"
    cfg.write_text(
        "backends:\n"
        "  - id: mock\n    kind: mock\n    script: script.jsonl\n"
        f"    delay_ms: {delay_ms}\n"
        "generator_backend: mock\njudge_backend: mock\n"
        f"batch_size: {batch_size}\nconcurrency: 2\n"
        "inputs:\n  - {path: seeds.jsonl, format: jsonl_images}\n",
        encoding="utf-8",
    )
    return cfg
