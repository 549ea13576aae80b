"""Append-only event records: the unit of mutation for every evaluation.

Each evaluation owns one gapless, monotonically numbered stream. State is
a deterministic fold over it (see lifecycle.apply_event), which is what
makes replay, snapshots and audit work. Canonical JSON bytes (sorted keys,
compact separators) are the on-disk and comparison form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping

SYSTEM_ACTOR = "system"

# Kinds cover every mutation; payload schema is kind-specific.
EVALUATION_CREATED = "evaluationCreated"
STATE_TRANSITION = "stateTransition"
TASK_CREATED = "taskCreated"
TEAM_READY = "teamReady"
SUBMISSION_RECEIVED = "submissionReceived"
VERDICT_RENDERED = "verdictRendered"
VERDICT_OVERRIDDEN = "verdictOverridden"
DURATION_ADJUSTED = "durationAdjusted"
JUDGEMENT_QUEUED = "judgementQueued"
JUDGEMENT_ASSIGNED = "judgementAssigned"


@dataclass(frozen=True)
class EventRecord:
    seq: int
    wall_clock_ms: int
    actor: str
    kind: str
    payload: dict[str, Any]

    def to_doc(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "wallClock": self.wall_clock_ms,
            "actor": self.actor,
            "kind": self.kind,
            "payload": self.payload,
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "EventRecord":
        return cls(
            seq=int(doc["seq"]),
            wall_clock_ms=int(doc["wallClock"]),
            actor=doc["actor"],
            kind=doc["kind"],
            payload=dict(doc["payload"]),
        )


def canonical_json(doc: Any) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def encode_event(record: EventRecord) -> bytes:
    return canonical_json(record.to_doc())


def decode_event(raw: bytes) -> EventRecord:
    return EventRecord.from_doc(json.loads(raw.decode("utf-8")))
