"""Command-line entry point.

Exit codes: 0 success, 1 fatal error, 2 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, parse_config, validate_config
from .formatting import CONTEXT_VARIANTS, FormatError, SchemaError
from .gateway import CacheConflictError
from .ingest import FORMATS
from .prompts import PROMPT_VARIANTS, TemplateError
from .records import SOURCES
from .state import ResumeError

EXIT_OK, EXIT_FATAL, EXIT_CONFIG = 0, 1, 2


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=default(None), help="pipeline config (YAML)")
    parser.add_argument("--out", default=default("runs"), help="directory holding run directories (default: runs)")
    parser.add_argument("--resume", metavar="RUN_ID", default=default(None), help="continue an existing run")
    parser.add_argument("--run-id", default=default(None), help="name for a new run directory")
    parser.add_argument("--prompt-variant", choices=PROMPT_VARIANTS, default=default(None), help="override prompt variant")
    parser.add_argument("--context-variant", choices=CONTEXT_VARIANTS, default=default(None), help="override context variant")
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reflectkit", description="Build and score reflective instruction-tuning data.")
    _global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _global_options(p, suppress=True)
        return p

    p = add("ingest", "normalize seed corpora into seeds.jsonl")
    p.add_argument("--input", action="append", help="corpus file (repeatable)")
    p.add_argument("--format", choices=FORMATS, default="jsonl_images")
    p.add_argument("--source", choices=SOURCES)

    for name, what in (("annotate", "seeds.jsonl"), ("filter", "annotated.jsonl"), ("format", "accepted.jsonl"), ("stats", "accepted.jsonl")):
        p = add(name, f"{name} stage (input: {what})")
        p.add_argument("--input", required=False, help=f"path to {what}")

    p = add("score", "score predictions against gold labels")
    p.add_argument("--gold", required=False)
    p.add_argument("--pred", required=False)
    p.add_argument("--task", choices=("yes_no", "multiple_choice", "open_ended"))

    p = add("mix", "shuffle two conversation files together")
    p.add_argument("--a", dest="mix_a", required=False)
    p.add_argument("--b", dest="mix_b", required=False)
    p.add_argument("--seed", type=int)

    p = add("run", "run ingest -> annotate -> filter -> format -> stats")
    p.add_argument("--all", action="store_true", required=True)
    p.add_argument("--input", action="append")
    p.add_argument("--format", choices=FORMATS, default="jsonl_images")
    p.add_argument("--source", choices=SOURCES)
    p.add_argument("--mix-with", help="external conversation file to mix into the training output")

    add("validate-config", "check a config file and print the resolved settings")
    return parser


def _load_config(args):
    overrides = {}
    if args.prompt_variant is not None:
        overrides["prompt_variant"] = args.prompt_variant
    if args.context_variant is not None:
        overrides["context_variant"] = args.context_variant
    if args.config:
        cfg = validate_config(args.config)
        if overrides:
            data = cfg.model_dump()
            data.update(overrides)
            cfg = parse_config(data, ".")
        return cfg
    return parse_config(overrides, ".")


def _inputs(args, cfg) -> list[dict]:
    if getattr(args, "input", None):
        return [{"path": str(Path(p).resolve()), "format": args.format, "source": args.source} for p in args.input]
    return [i.model_dump() for i in cfg.inputs]


def _dispatch(args, cfg) -> int:
    if args.command == "validate-config":
        print(cfg.model_dump_json(indent=2))
        print(f"fingerprint: {cfg.fingerprint()}")
        return EXIT_OK

    run = pipeline.Run.open(args.out, cfg, resume=args.resume, run_id=args.run_id)
    stored = run.state.args
    try:
        if args.command == "run":
            inputs = _inputs(args, cfg) if (args.input or cfg.inputs) else stored.get("ingest", {}).get("inputs", [])
            done = pipeline.run_all(run, inputs, mix_with=args.mix_with)
        elif args.command == "ingest":
            inputs = _inputs(args, cfg) or stored.get("ingest", {}).get("inputs", [])
            done = [("ingest", pipeline.stage_ingest(run, inputs))]
        elif args.command in ("annotate", "filter", "format", "stats"):
            path = args.input or stored.get(args.command, {}).get("input")
            if not path:
                raise ConfigError([f"{args.command}: missing --input"])
            stage = getattr(pipeline, f"stage_{args.command}")
            done = [(args.command, stage(run, str(Path(path).resolve())))]
        elif args.command == "score":
            prev = stored.get("score", {})
            gold, pred = args.gold or prev.get("gold"), args.pred or prev.get("pred")
            if not gold or not pred:
                raise ConfigError(["score: missing --gold/--pred"])
            done = [("score", pipeline.stage_score(run, Path(gold).resolve(), Path(pred).resolve(), args.task))]
            print(run.path(pipeline.REPORT_TXT).read_text(), end="")
        elif args.command == "mix":
            prev = stored.get("mix", {})
            a, b = args.mix_a or prev.get("a"), args.mix_b or prev.get("b")
            if not a or not b:
                raise ConfigError(["mix: missing --a/--b"])
            done = [("mix", pipeline.stage_mix(run, Path(a).resolve(), Path(b).resolve(), args.seed))]
        else:  # pragma: no cover - argparse rejects unknown commands
            raise ConfigError([f"unknown command {args.command}"])
    finally:
        run.close()
    for name, st in done:
        print(st.summary(name))
    print(f"run: {run.state.run_id} ({run.dir})")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        return _dispatch(args, cfg)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResumeError, OSError, SchemaError, FormatError, TemplateError, CacheConflictError, ValueError, LookupError) as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
