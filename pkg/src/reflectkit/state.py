from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional


class ResumeError(RuntimeError):
    pass


@dataclass
class StageState:
    cursor: Optional[str] = None
    offsets: dict[str, int] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=lambda: {"in": 0, "ok": 0, "quarantined": 0, "dropped": 0})
    done: bool = False

    def summary(self, name: str) -> str:
        c = self.counts
        return f"{name}: in={c['in']} ok={c['ok']} quarantined={c['quarantined']} dropped={c['dropped']}"


@dataclass
class JobState:
    run_id: str
    config_fingerprint: str
    args: dict = field(default_factory=dict)
    stages: dict[str, StageState] = field(default_factory=dict)

    def stage(self, name: str) -> StageState:
        return self.stages.setdefault(name, StageState())

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_fingerprint": self.config_fingerprint,
            "args": self.args,
            "stages": {k: v.__dict__ for k, v in self.stages.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JobState":
        return cls(
            run_id=d["run_id"],
            config_fingerprint=d["config_fingerprint"],
            args=d.get("args", {}),
            stages={k: StageState(**v) for k, v in d.get("stages", {}).items()},
        )

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "JobState":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def check_resume(self, fingerprint: str) -> None:
        if fingerprint != self.config_fingerprint:
            raise ResumeError(
                f"config fingerprint mismatch for run {self.run_id}: stored {self.config_fingerprint}, "
                f"current config gives {fingerprint}. Resume with the config the run was started with, "
                "or drop --resume to start a new run."
            )


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
