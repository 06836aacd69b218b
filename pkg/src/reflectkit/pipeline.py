"""Stage runner: run directories, job state, batching and resumability.

Each run lives in ``<out>/<run_id>/``. Streaming stages (annotate, filter)
append to their outputs one batch at a time and commit the byte offset of
every output plus a cursor to ``state.json`` after each batch; on resume the
outputs are cut back to the committed offsets and work continues after the
cursor. The other stages write their outputs atomically in one go.
"""
from __future__ import annotations

import logging
import os
import secrets
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from .config import ConfigError, PipelineConfig
from .filtering import filter_sample
from .formatting import format_samples, mix_datasets
from .gateway import (
    AnnotatorGateway,
    BackendTarget,
    DecodeParams,
    HTTPBackend,
    MockBackend,
    RateLimiter,
    ResponseCache,
    RetryPolicy,
)
from .generation import annotate_seed
from .ingest import dedupe_seeds, ingest_corpus
from .prompts import PromptCatalog
from .records import AnnotatedSample, SeedRecord, dump_line, read_jsonl
from .scoring import SCORERS, load_eval_records
from .state import JobState, ResumeError, StageState, atomic_write_text
from .stats import compute_stats

log = logging.getLogger(__name__)

STAGES = ("ingest", "annotate", "filter", "format", "stats", "score", "mix")
ALL_STAGES = ("ingest", "annotate", "filter", "format", "stats")

SEEDS = "seeds.jsonl"
REJECTS = "seeds.rejects.jsonl"
ANNOTATED = "annotated.jsonl"
ACCEPTED = "accepted.jsonl"
FILTERED_OUT = "filtered_out.jsonl"
QUARANTINE = "quarantine.jsonl"
TRAIN = "train.jsonl"
STATS_JSON = "stats.json"
STATS_TXT = "stats.txt"
REPORT_JSON = "report.json"
REPORT_TXT = "report.txt"
MIXED = "mixed.jsonl"
STATE = "state.json"
CALLS = "calls.jsonl"


def new_run_id() -> str:
    return time.strftime("%Y%m%d-%H%M%S") + "-" + secrets.token_hex(3)


@dataclass
class Run:
    """An open run directory with its config and committed job state."""

    dir: Path
    cfg: PipelineConfig
    catalog: PromptCatalog
    state: JobState
    _gateway: Optional[AnnotatorGateway] = field(default=None, repr=False)

    @classmethod
    def open(cls, out_dir, cfg: PipelineConfig, *, resume: Optional[str] = None, run_id: Optional[str] = None) -> "Run":
        catalog = PromptCatalog.load(cfg.prompt_catalog)
        fingerprint = cfg.fingerprint(catalog.fingerprint())
        out_dir = Path(out_dir).resolve()
        if resume:
            run_dir = out_dir / resume
            if not (run_dir / STATE).is_file():
                raise ResumeError(f"no run {resume!r} under {out_dir} (missing {STATE})")
            state = JobState.load(run_dir / STATE)
            state.check_resume(fingerprint)
        else:
            run_id = run_id or new_run_id()
            run_dir = out_dir / run_id
            if run_dir.exists():
                raise ResumeError(f"run directory {run_dir} already exists; pass --resume {run_id} to continue it")
            run_dir.mkdir(parents=True)
            state = JobState(run_id, fingerprint)
            state.save(run_dir / STATE)
        return cls(run_dir, cfg, catalog, state)

    def path(self, name: str) -> Path:
        return self.dir / name

    def commit(self) -> None:
        self.state.save(self.path(STATE))

    def remember_args(self, stage: str, args: dict) -> dict:
        """Store a stage's inputs on first use; on resume insist they match."""
        stored = self.state.args.get(stage)
        if stored is None:
            self.state.args[stage] = args
            self.commit()
            return args
        given = {k: v for k, v in args.items() if v is not None}
        clash = {k for k, v in given.items() if stored.get(k) != v}
        if clash:
            raise ResumeError(f"{stage}: arguments {sorted(clash)} differ from the ones this run was started with")
        return stored

    @property
    def gateway(self) -> AnnotatorGateway:
        if self._gateway is None:
            self._gateway = build_gateway(self.cfg, self.path(CALLS))
        return self._gateway

    def target(self, role: str) -> BackendTarget:
        backend_id = getattr(self.cfg, f"{role}_backend")
        if backend_id is None:
            raise ConfigError([f"{role}_backend must be set to run this stage"])
        b = self.cfg.backend(backend_id)
        return BackendTarget(b.id, b.model_id, DecodeParams(b.decode.temperature, b.decode.max_output_tokens))

    def close(self) -> None:
        if self._gateway is not None:
            self._gateway.close()


def build_gateway(cfg: PipelineConfig, call_log=None) -> AnnotatorGateway:
    gw = AnnotatorGateway(ResponseCache(cfg.cache_dir), call_log_path=call_log)
    for b in cfg.backends:
        if b.kind == "mock":
            backend = MockBackend.from_file(b.script, delay_s=b.delay_ms / 1000.0)
        else:
            backend = HTTPBackend(
                b.endpoint, api_key_env=b.api_key_env, response_field=b.response_field, timeout_s=b.timeout_s
            )
        limiter = RateLimiter(b.rate_limit.requests, b.rate_limit.window_s) if b.rate_limit else None
        retry = RetryPolicy(b.retries.max_attempts, b.retries.base_delay_s, b.retries.max_delay_s)
        gw.register(b.id, backend, retry=retry, rate_limit=limiter)
    return gw


def _write_atomic_lines(path: Path, rows) -> None:
    atomic_write_text(path, "".join(dump_line(r) for r in rows))


def _run_batched(
    run: Run,
    stage: str,
    items: Sequence,
    key: Callable,
    process: Callable,
    outputs: Sequence[str],
) -> StageState:
    """Process ``items`` in batches; ``process(item)`` returns a list of
    ``(output_name, record_dict, count_kind)`` triples."""
    st = run.state.stage(stage)
    if st.done:
        return st
    start = 0
    if st.cursor is not None:
        keys = [key(it) for it in items]
        if st.cursor not in keys:
            raise ResumeError(f"{stage}: committed cursor {st.cursor} not found in the input")
        start = keys.index(st.cursor) + 1

    handles = {}
    try:
        for name in outputs:
            path = run.path(name)
            committed = st.offsets.get(name, 0)
            if committed and not path.exists():
                raise ResumeError(f"{stage}: output {path} vanished after commit")
            fh = open(path, "a+b")
            fh.truncate(committed)
            handles[name] = fh
        size = run.cfg.batch_size
        with ThreadPoolExecutor(max_workers=run.cfg.concurrency) as pool:
            for lo in range(start, len(items), size):
                batch = items[lo:lo + size]
                results = list(pool.map(process, batch))
                for triples in results:
                    for name, record, kind in triples:
                        handles[name].write(dump_line(record).encode("utf-8"))
                        st.counts[kind] += 1
                st.counts["in"] += len(batch)
                for name, fh in handles.items():
                    fh.flush()
                    os.fsync(fh.fileno())
                    st.offsets[name] = fh.tell()
                st.cursor = key(batch[-1])
                run.commit()
    finally:
        for fh in handles.values():
            fh.close()
    st.done = True
    run.commit()
    return st


# -- stages -------------------------------------------------------------------


def stage_ingest(run: Run, inputs: list[dict]) -> StageState:
    """``inputs``: list of ``{"path", "format", "source"}``."""
    st = run.state.stage("ingest")
    if st.done:
        return st
    inputs = run.remember_args("ingest", {"inputs": inputs})["inputs"]
    if not inputs:
        raise ConfigError(["ingest needs at least one input corpus"])
    records: list[SeedRecord] = []
    rejects: list[dict] = []
    n_lines = 0
    for spec in inputs:
        file_rejects = []
        recs = list(ingest_corpus(spec["path"], spec["format"], source=spec.get("source"), on_reject=file_rejects.append))
        records.extend(recs)
        n_lines += len(recs) + len(file_rejects)
        for r in file_rejects:
            row = r.to_dict()
            if len(inputs) > 1:
                row["file"] = str(spec["path"])
            rejects.append(row)
    kept, dropped = dedupe_seeds(records)
    _write_atomic_lines(run.path(SEEDS), (r.to_dict() for r in kept))
    _write_atomic_lines(run.path(REJECTS), rejects)
    st.counts = {"in": n_lines, "ok": len(kept), "quarantined": len(rejects), "dropped": dropped}
    st.done = True
    run.commit()
    return st


def stage_annotate(run: Run, seeds_path) -> StageState:
    seeds_path = run.remember_args("annotate", {"input": str(seeds_path)})["input"]
    seeds = sorted((SeedRecord.from_dict(d) for d in read_jsonl(seeds_path)), key=lambda s: s.seed_id)
    target = run.target("generator")
    gateway = run.gateway
    lexicon = run.cfg.noun_lexicon

    def process(seed: SeedRecord):
        samples = annotate_seed(
            seed, run.catalog, gateway, target, instructions_per_image=run.cfg.instructions_per_image, lexicon=lexicon
        )
        return [
            (ANNOTATED, s.to_dict(), "quarantined" if s.status == "quarantined" else "ok") for s in samples
        ]

    return _run_batched(run, "annotate", seeds, lambda s: s.seed_id, process, [ANNOTATED])


def stage_filter(run: Run, annotated_path) -> StageState:
    annotated_path = run.remember_args("filter", {"input": str(annotated_path)})["input"]
    samples = [AnnotatedSample.from_dict(d) for d in read_jsonl(annotated_path)]
    target = run.target("judge")
    judge_tpl = run.catalog.get("consistency_check")
    gateway = run.gateway
    route = {
        "accepted": (ACCEPTED, "ok"),
        "filtered_out": (FILTERED_OUT, "dropped"),
        "quarantined": (QUARANTINE, "quarantined"),
    }

    def process(sample: AnnotatedSample):
        filter_sample(sample, judge_tpl, gateway, target)
        name, kind = route[sample.status]
        return [(name, sample.to_dict(), kind)]

    return _run_batched(run, "filter", samples, lambda s: s.sample_id, process, [ACCEPTED, FILTERED_OUT, QUARANTINE])


def stage_format(run: Run, accepted_path) -> StageState:
    st = run.state.stage("format")
    if st.done:
        return st
    accepted_path = run.remember_args("format", {"input": str(accepted_path)})["input"]
    samples = [AnnotatedSample.from_dict(d) for d in read_jsonl(accepted_path)]
    convs = format_samples(samples, run.cfg.context_variant, run.catalog, run.cfg.prompt_variant)
    _write_atomic_lines(run.path(TRAIN), (c.to_dict() for c in convs))
    st.counts = {"in": len(samples), "ok": len(convs), "quarantined": 0, "dropped": 0}
    st.done = True
    run.commit()
    return st


def stage_stats(run: Run, accepted_path) -> StageState:
    st = run.state.stage("stats")
    if st.done:
        return st
    accepted_path = run.remember_args("stats", {"input": str(accepted_path)})["input"]
    samples = [AnnotatedSample.from_dict(d) for d in read_jsonl(accepted_path)]
    stats = compute_stats(samples, run.cfg.noun_lexicon)
    atomic_write_text(run.path(STATS_JSON), stats.to_json())
    atomic_write_text(run.path(STATS_TXT), stats.to_table())
    st.counts = {"in": len(samples), "ok": len(samples), "quarantined": 0, "dropped": 0}
    st.done = True
    run.commit()
    return st


def stage_score(run: Run, gold_path, pred_path, task: str) -> StageState:
    st = run.state.stage("score")
    if st.done:
        return st
    args = run.remember_args("score", {"gold": str(gold_path), "pred": str(pred_path), "task": task})
    records, orphans = load_eval_records(args["gold"], args["pred"], args["task"])
    if orphans:
        log.warning("%d predictions have no gold record and were ignored", orphans)
    tasks = {r.task for r in records}
    if len(tasks) != 1:
        raise ValueError(f"gold file mixes tasks {sorted(tasks)}; score one task per run")
    report = SCORERS[tasks.pop()](records)
    atomic_write_text(run.path(REPORT_JSON), report.to_json())
    atomic_write_text(run.path(REPORT_TXT), report.to_table())
    st.counts = {"in": len(records), "ok": len(records) - report.n_unparseable, "quarantined": report.n_unparseable, "dropped": orphans}
    st.done = True
    run.commit()
    return st


def stage_mix(run: Run, a_path, b_path, seed: Optional[int] = None) -> StageState:
    st = run.state.stage("mix")
    if st.done:
        return st
    seed = run.cfg.mix_seed if seed is None else seed
    args = run.remember_args("mix", {"a": str(a_path), "b": str(b_path), "seed": seed})
    rows = mix_datasets(args["a"], args["b"], args["seed"])
    _write_atomic_lines(run.path(MIXED), rows)
    st.counts = {"in": len(rows), "ok": len(rows), "quarantined": 0, "dropped": 0}
    st.done = True
    run.commit()
    return st


def run_all(run: Run, inputs: list[dict], mix_with=None) -> list[tuple[str, StageState]]:
    done = [("ingest", stage_ingest(run, inputs))]
    done.append(("annotate", stage_annotate(run, run.path(SEEDS))))
    done.append(("filter", stage_filter(run, run.path(ANNOTATED))))
    done.append(("format", stage_format(run, run.path(ACCEPTED))))
    done.append(("stats", stage_stats(run, run.path(ACCEPTED))))
    if mix_with:
        done.append(("mix", stage_mix(run, run.path(TRAIN), Path(mix_with).resolve())))
    return done


def output_files(run_dir) -> dict[str, bytes]:
    """Final artifacts of a run (everything except job state and call log)."""
    run_dir = Path(run_dir)
    return {
        p.name: p.read_bytes()
        for p in sorted(run_dir.iterdir())
        if p.is_file() and p.name not in (STATE, CALLS) and not p.name.startswith(".")
    }
