"""Timestamped event log: the single source for scores and metrics.

Events serialize to newline-delimited JSON with sorted keys and no
whitespace, so a fixed seed yields byte-identical files on any platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator


@dataclass(frozen=True)
class Event:
    t: float
    state: str
    kind: str
    item: str | None = None
    container: str | None = None
    payload: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        rec = {"time_s": round(self.t, 6), "state": self.state, "event_kind": self.kind}
        if self.item is not None:
            rec["item"] = self.item
        if self.container is not None:
            rec["container"] = self.container
        if self.payload:
            rec["payload"] = self.payload
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "Event":
        return cls(
            t=float(rec["time_s"]),
            state=str(rec["state"]),
            kind=str(rec["event_kind"]),
            item=rec.get("item"),
            container=rec.get("container"),
            payload=rec.get("payload", {}),
        )


class MalformedLogError(ValueError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


@dataclass
class RunLog:
    events: list[Event] = field(default_factory=list)

    def append(self, event: Event) -> None:
        if self.events and event.t < self.events[-1].t - 1e-9:
            raise ValueError("event timestamps must be non-decreasing")
        self.events.append(event)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def __add__(self, other: "RunLog") -> "RunLog":
        return RunLog(self.events + other.events)

    def of_kind(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]

    def to_ndjson(self, header: dict | None = None) -> str:
        lines = []
        if header is not None:
            lines.append(json.dumps({"event_kind": "header", **header}, sort_keys=True,
                                    separators=(",", ":")))
        for e in self.events:
            lines.append(json.dumps(e.to_record(), sort_keys=True, separators=(",", ":")))
        return "\n".join(lines) + "\n"

    def write_ndjson(self, path: str | Path, header: dict | None = None) -> None:
        Path(path).write_text(self.to_ndjson(header), encoding="utf-8")

    @classmethod
    def from_ndjson(cls, text: str) -> "RunLog":
        log = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLogError(lineno, f"invalid JSON: {exc.msg}") from exc
            if rec.get("event_kind") == "header":
                continue
            for key in ("time_s", "state", "event_kind"):
                if key not in rec:
                    raise MalformedLogError(lineno, f"missing field {key!r}")
            log.events.append(Event.from_record(rec))
        return log

    @classmethod
    def read_ndjson(cls, path: str | Path) -> "RunLog":
        return cls.from_ndjson(Path(path).read_text(encoding="utf-8"))
