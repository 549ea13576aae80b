"""Relevance verdicts: automatic target matching and the human assessment queue.

A verdict value is a float in [0, 1] or None for "undecidable". Undecidable
outcomes never count as correct or wrong anywhere downstream. The automatic
matcher covers policies with pre-known targets; everything else goes through
``JudgementRequest`` records that human judges drain FIFO.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping

from .errors import PolicyMismatchError
from .model import (
    AnswerPayload,
    ExpectedAnswerKind,
    JudgementMode,
    JudgementPolicy,
    PayloadKind,
    payload_from_doc,
    payload_to_doc,
    range_overlap,
)

REASSIGN_DEADLINE_MS = 120_000


class VerdictSource(str, Enum):
    apriori_matcher = "aprioriMatcher"
    human_judge = "humanJudge"
    admin_override = "adminOverride"


@dataclass(frozen=True)
class Verdict:
    value: float | None  # None encodes undecidable
    source: VerdictSource
    judged_at_ms: int
    judge_id: str | None = None

    def __post_init__(self) -> None:
        if self.value is not None and not 0.0 <= self.value <= 1.0:
            raise ValueError("verdict value must lie in [0, 1]")
        if self.source is not VerdictSource.apriori_matcher and self.judge_id is None:
            raise ValueError(f"{self.source.value} verdicts carry a judgeId")

    @property
    def kind(self) -> str:
        if self.value is None:
            return "undecidable"
        if self.value == 1.0:
            return "correct"
        if self.value == 0.0:
            return "wrong"
        return "graded"

    def to_doc(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "source": self.source.value,
            "judgedAtMs": self.judged_at_ms,
            "judgeId": self.judge_id,
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "Verdict":
        return cls(
            value=doc["value"],
            source=VerdictSource(doc["source"]),
            judged_at_ms=int(doc["judgedAtMs"]),
            judge_id=doc.get("judgeId"),
        )


def normalize_text(text: str) -> str:
    return " ".join(text.casefold().split())


def payload_key(payload: AnswerPayload) -> str:
    """Canonical key used for duplicate detection and the verdict cache."""
    if payload.kind is PayloadKind.whole_item:
        return f"item:{payload.item_id}"
    if payload.kind is PayloadKind.temporal_segment:
        assert payload.range is not None
        return f"seg:{payload.item_id}:{payload.range.start_ms}:{payload.range.end_ms}"
    return f"text:{normalize_text(payload.text or '')}"


def _kind_compatible(payload: AnswerPayload, expected: ExpectedAnswerKind) -> bool:
    if expected is ExpectedAnswerKind.derived_text:
        return payload.kind is PayloadKind.text
    return payload.kind in (PayloadKind.whole_item, PayloadKind.temporal_segment)


def _matches_target(answer: AnswerPayload, target: AnswerPayload) -> bool:
    if answer.kind is PayloadKind.text:
        return (
            target.kind is PayloadKind.text
            and normalize_text(answer.text or "") == normalize_text(target.text or "")
        )
    if target.kind is PayloadKind.text:
        return False
    if answer.item_id != target.item_id:
        return False
    if answer.kind is PayloadKind.whole_item:
        return True
    # Segment answer: a whole-item target admits any segment of that item.
    if target.range is None:
        return True
    assert answer.range is not None
    return range_overlap(answer.range, target.range)


def assess_apriori(answer: AnswerPayload, policy: JudgementPolicy, now_ms: int) -> Verdict:
    """Match an answer against the policy's pre-known targets.

    Answers whose kind is incompatible with the expected answer kind are
    undecidable; everything else is a clean correct/wrong split.
    """
    if policy.mode is not JudgementMode.apriori_targets:
        raise PolicyMismatchError("policy has no pre-known targets")
    if not _kind_compatible(answer, policy.expected_answer_kind):
        return Verdict(None, VerdictSource.apriori_matcher, now_ms)
    correct = any(_matches_target(answer, target) for target in policy.targets)
    return Verdict(1.0 if correct else 0.0, VerdictSource.apriori_matcher, now_ms)


class RequestState(str, Enum):
    open = "open"
    assigned = "assigned"
    judged = "judged"


@dataclass
class JudgementRequest:
    id: str
    evaluation_id: str
    task_id: str
    submission_id: str
    answer_index: int
    payload: AnswerPayload
    payload_key: str
    state: RequestState = RequestState.open
    assigned_to: str | None = None
    deadline_ms: int | None = None

    def assignable(self, now_ms: int) -> bool:
        if self.state is RequestState.open:
            return True
        # Assignments expire so an unresponsive judge cannot park a request.
        return (
            self.state is RequestState.assigned
            and self.deadline_ms is not None
            and now_ms >= self.deadline_ms
        )

    def to_doc(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "evaluationId": self.evaluation_id,
            "taskId": self.task_id,
            "submissionId": self.submission_id,
            "answerIndex": self.answer_index,
            "payload": payload_to_doc(self.payload),
            "payloadKey": self.payload_key,
            "state": self.state.value,
            "assignedTo": self.assigned_to,
            "deadlineMs": self.deadline_ms,
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "JudgementRequest":
        return cls(
            id=doc["id"],
            evaluation_id=doc["evaluationId"],
            task_id=doc["taskId"],
            submission_id=doc["submissionId"],
            answer_index=int(doc["answerIndex"]),
            payload=payload_from_doc(doc["payload"]),
            payload_key=doc["payloadKey"],
            state=RequestState(doc["state"]),
            assigned_to=doc.get("assignedTo"),
            deadline_ms=doc.get("deadlineMs"),
        )


def next_assignable(queue: Iterable[JudgementRequest], now_ms: int) -> JudgementRequest | None:
    """Oldest request a judge may pick up right now (FIFO, expiry-aware)."""
    for request in queue:
        if request.assignable(now_ms):
            return request
    return None
