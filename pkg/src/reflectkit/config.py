"""Pipeline configuration (YAML) and its validation.

Secrets never live in the file: HTTP backends name the environment
variable that holds the key (``api_key_env``).
"""
from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .formatting import CONTEXT_VARIANTS
from .prompts import PROMPT_VARIANTS

_ENV_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RateLimitConfig(_Strict):
    requests: int = Field(ge=1)
    window_s: float = Field(gt=0)


class RetryConfig(_Strict):
    max_attempts: int = Field(4, ge=1)
    base_delay_s: float = Field(0.5, ge=0)
    max_delay_s: float = Field(8.0, ge=0)


class DecodeConfig(_Strict):
    temperature: float = Field(0.7, ge=0)
    max_output_tokens: int = Field(1024, ge=1)


class BackendConfig(_Strict):
    id: str
    kind: Literal["mock", "http"]
    model_id: str = "mock-model"
    script: Optional[str] = None
    delay_ms: float = Field(0.0, ge=0)
    endpoint: Optional[str] = None
    api_key_env: Optional[str] = None
    response_field: str = "text"
    timeout_s: float = Field(60.0, gt=0)
    rate_limit: Optional[RateLimitConfig] = None
    retries: RetryConfig = RetryConfig()
    decode: DecodeConfig = DecodeConfig()

    @field_validator("api_key_env")
    @classmethod
    def _env_name(cls, v):
        if v is not None and not _ENV_NAME.match(v):
            raise ValueError("api_key_env must be an environment variable name, not a key")
        return v

    @model_validator(mode="after")
    def _kind_fields(self):
        if self.kind == "mock" and not self.script:
            raise ValueError(f"backend {self.id}: mock backends need a script file")
        if self.kind == "http" and not self.endpoint:
            raise ValueError(f"backend {self.id}: http backends need an endpoint")
        return self


class InputConfig(_Strict):
    path: str
    format: Literal["jsonl_images", "jsonl_mc_vqa"]
    source: Optional[Literal["vg_like", "coco_like", "mc_vqa_like", "scienceqa_like"]] = None


class PipelineConfig(_Strict):
    backends: list[BackendConfig] = []
    generator_backend: Optional[str] = None
    judge_backend: Optional[str] = None
    cache_dir: str = "cache"
    prompt_catalog: Optional[str] = None
    prompt_variant: str = "d"
    context_variant: str = "separate"
    instructions_per_image: int = 2
    concurrency: int = 4
    batch_size: int = 16
    mix_seed: int = 0
    noun_lexicon: Optional[str] = None
    inputs: list[InputConfig] = []

    @field_validator("prompt_variant")
    @classmethod
    def _prompt_variant(cls, v):
        if v not in PROMPT_VARIANTS:
            raise ValueError(f"prompt variant must be one of {', '.join(PROMPT_VARIANTS)} (got {v!r})")
        return v

    @field_validator("context_variant")
    @classmethod
    def _context_variant(cls, v):
        if v not in CONTEXT_VARIANTS:
            raise ValueError(f"context variant must be one of {', '.join(CONTEXT_VARIANTS)} (got {v!r})")
        return v

    @field_validator("concurrency")
    @classmethod
    def _concurrency(cls, v):
        if v < 1:
            raise ValueError("concurrency limit ≥ 1")
        return v

    @field_validator("batch_size", "instructions_per_image")
    @classmethod
    def _positive(cls, v, info):
        if v < 1:
            raise ValueError(f"{info.field_name} ≥ 1")
        return v

    @model_validator(mode="after")
    def _cross_refs(self):
        ids = [b.id for b in self.backends]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        problems = [f"duplicate backend id {d!r}" for d in dupes]
        for role in ("generator_backend", "judge_backend"):
            ref = getattr(self, role)
            if ref is not None and ref not in ids:
                problems.append(f"{role} {ref!r} is not a configured backend")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def backend(self, backend_id: str) -> BackendConfig:
        for b in self.backends:
            if b.id == backend_id:
                return b
        raise KeyError(backend_id)

    def fingerprint(self, extra: str = "") -> str:
        """Hash of everything that can change stage outputs. Concurrency,
        batching, rate limits, retries and timing knobs are excluded."""
        d = self.model_dump(
            exclude={
                "concurrency": True,
                "batch_size": True,
                "cache_dir": True,
                "backends": {"__all__": {"rate_limit", "retries", "delay_ms", "timeout_s"}},
            }
        )
        for b in self.backends:
            if b.kind == "mock" and b.script and Path(b.script).is_file():
                d.setdefault("script_hashes", {})[b.id] = hashlib.sha256(Path(b.script).read_bytes()).hexdigest()
        blob = json.dumps(d, sort_keys=True) + extra
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _format_errors(exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        msg = err["msg"].removeprefix("Value error, ")
        out.append(f"{loc}: {msg}" if loc else msg)
    return out


def _resolve(path: Optional[str], base: Path) -> Optional[str]:
    if path is None:
        return None
    p = Path(path).expanduser()
    return str(p if p.is_absolute() else (base / p))


def parse_config(data: dict, base_dir=".") -> PipelineConfig:
    """Validate a config mapping, reporting every error at once. Relative
    paths are resolved against ``base_dir``."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(["config must be a mapping"])
    try:
        cfg = PipelineConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    base = Path(base_dir)
    cfg.cache_dir = _resolve(cfg.cache_dir, base)
    cfg.prompt_catalog = _resolve(cfg.prompt_catalog, base)
    cfg.noun_lexicon = _resolve(cfg.noun_lexicon, base)
    for b in cfg.backends:
        b.script = _resolve(b.script, base)
    for i in cfg.inputs:
        i.path = _resolve(i.path, base)
    return cfg


def validate_config(path) -> PipelineConfig:
    """Load and validate a YAML config file; raises ConfigError listing all problems."""
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from None
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: invalid YAML ({exc})"]) from None
    return parse_config(data, path.parent)
