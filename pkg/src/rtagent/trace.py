"""Trace recording, JSONL serialization, and structural trace diffing.

Traces are the observability contract: every processed event, forced
transition, ledger append, generation step, emission step, and process
lifecycle change lands here in execution order. Two runs of the same
scenario must produce byte-identical JSONL.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

TRACE_FORMAT = "rtagent-trace/1"

RECORD_KINDS = (
    "event_processed",
    "force_transition",
    "ledger_append",
    "generation",
    "emission",
    "process",
)


class TraceFormatError(ValueError):
    """Malformed trace document."""


@dataclass
class TraceRecord:
    time: int
    kind: str
    pid: int
    details: dict

    def to_json(self) -> dict:
        return {"time": self.time, "kind": self.kind, "pid": self.pid, "details": self.details}


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)

    def add(self, time: int, kind: str, pid: int, details: dict) -> None:
        if kind not in RECORD_KINDS:
            raise ValueError(f"unknown trace record kind {kind!r}")
        self.records.append(TraceRecord(time=time, kind=kind, pid=pid, details=details))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def find(self, kind: str, **details):
        """Records of a kind whose details match all given key/values."""
        out = []
        for rec in self.records:
            if rec.kind != kind:
                continue
            if all(rec.details.get(k) == v for k, v in details.items()):
                out.append(rec)
        return out

    def to_jsonl(self) -> str:
        lines = [json.dumps({"format": TRACE_FORMAT}, separators=(",", ":"))]
        for rec in self.records:
            lines.append(json.dumps(rec.to_json(), separators=(",", ":"), ensure_ascii=False))
        return "\n".join(lines) + "\n"


def parse_jsonl(text: str) -> Trace:
    lines = [line for line in text.split("\n") if line.strip()]
    if not lines:
        raise TraceFormatError("empty trace document")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != TRACE_FORMAT:
        raise TraceFormatError(f"unsupported trace format {header!r}")
    trace = Trace()
    for i, line in enumerate(lines[1:]):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"record {i} is not valid JSON: {exc}") from None
        for key in ("time", "kind", "pid", "details"):
            if key not in obj:
                raise TraceFormatError(f"record {i} is missing '{key}'")
        trace.records.append(
            TraceRecord(time=obj["time"], kind=obj["kind"], pid=obj["pid"], details=obj["details"])
        )
    return trace


@dataclass
class TraceDivergence:
    index: int
    field_diffs: list[str]
    left: Optional[dict]
    right: Optional[dict]

    def describe(self) -> str:
        lines = [f"traces diverge at record {self.index}"]
        for diff in self.field_diffs:
            lines.append(f"  {diff}")
        return "\n".join(lines)


def diff_traces(left: Trace, right: Trace) -> Optional[TraceDivergence]:
    """First structural divergence between two traces, or None if equal."""
    for i, (a, b) in enumerate(zip(left.records, right.records)):
        if a == b:
            continue
        diffs = []
        for key in ("time", "kind", "pid"):
            av, bv = getattr(a, key), getattr(b, key)
            if av != bv:
                diffs.append(f"{key}: {av!r} != {bv!r}")
        keys = sorted(set(a.details) | set(b.details))
        for key in keys:
            av, bv = a.details.get(key), b.details.get(key)
            if av != bv:
                diffs.append(f"details.{key}: {av!r} != {bv!r}")
        return TraceDivergence(index=i, field_diffs=diffs, left=a.to_json(), right=b.to_json())
    if len(left.records) != len(right.records):
        i = min(len(left.records), len(right.records))
        longer, side = (left, "left") if len(left.records) > len(right.records) else (right, "right")
        return TraceDivergence(
            index=i,
            field_diffs=[f"only {side} trace has record {i}: {longer.records[i].kind}"],
            left=left.records[i].to_json() if i < len(left.records) else None,
            right=right.records[i].to_json() if i < len(right.records) else None,
        )
    return None
