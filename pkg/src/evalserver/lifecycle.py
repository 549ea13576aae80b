"""Evaluation execution: the state machine, submissions and judgement flow.

Every evaluation is a single-writer serialization domain. A command
validates against current state, emits one or more event records, hands
them to the store (write-ahead: persisted before the command returns) and
then folds them into the in-memory aggregate with the same pure
``apply_event`` used for replay. Nothing mutates state outside that fold,
which is what makes recorded runs deterministically reproducible.

Synchronous mode runs one shared task at a time; asynchronous mode
materializes one scoped task run per (team, template) so each agent
progresses independently; non-interactive mode activates every task at
evaluation start and routes batched submissions via answer-set task hints.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Mapping, Sequence

from . import events as ev
from .clock import Clock, IdSource
from .errors import (
    AlreadyJudgedError,
    DuplicateAnswerError,
    InvalidTemplateError,
    LimitExceededError,
    MalformedAnswerError,
    NoActiveTaskError,
    NotAssignedError,
    NotAuthorizedError,
    TasksStillActiveError,
    TaskStillActiveError,
    UnknownAnswerError,
    UnknownTaskError,
    UnknownTeamError,
    WouldEndInPastError,
    WrongStateError,
)
from .judgement import (
    REASSIGN_DEADLINE_MS,
    JudgementRequest,
    RequestState,
    Verdict,
    VerdictSource,
    assess_apriori,
    next_assignable,
    payload_key,
)
from .model import (
    AnswerPayload,
    EvaluationMode,
    EvaluationTemplate,
    ItemResolver,
    JudgementMode,
    PayloadKind,
    Role,
    ScorerSpec,
    TaskTemplate,
    TemporalRange,
    desc_at,
    payload_from_doc,
    payload_to_doc,
    template_from_doc,
    template_to_doc,
    validate_template,
)
from .scoring import SubmissionOutcome, compute_scoreboard, score_task

SWEEP_INTERVAL_MS = 250
# Hints becoming active this soon are already included in state responses
# (displayed by clients only once their activeFromMs passes), so a polling
# UI can reveal them on schedule instead of one poll late.
HINT_LOOKAHEAD_MS = 2_000


class EvaluationState(str, Enum):
    preparing = "Preparing"
    active = "Active"
    ended = "Ended"


class TaskState(str, Enum):
    created = "Created"
    preparing = "Preparing"
    active = "Active"
    ended = "Ended"


@dataclass(frozen=True)
class Actor:
    user_id: str
    role: Role

    def require(self, *roles: Role) -> None:
        if self.role not in roles:
            raise NotAuthorizedError(f"{self.role.value} may not perform this operation")


@dataclass
class Answer:
    payload: AnswerPayload
    weight: float | None = None
    verdicts: list[Verdict] = field(default_factory=list)

    @property
    def verdict(self) -> Verdict | None:
        return self.verdicts[-1] if self.verdicts else None

    @property
    def key(self) -> str:
        return payload_key(self.payload)

    def to_doc(self) -> dict[str, Any]:
        return {
            "payload": payload_to_doc(self.payload),
            "weight": self.weight,
            "verdicts": [v.to_doc() for v in self.verdicts],
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "Answer":
        return cls(
            payload=payload_from_doc(doc["payload"]),
            weight=doc.get("weight"),
            verdicts=[Verdict.from_doc(v) for v in doc.get("verdicts", [])],
        )


@dataclass
class AnswerSetRecord:
    answers: list[Answer]
    task_hint: str | None = None

    def to_doc(self) -> dict[str, Any]:
        return {"taskHint": self.task_hint, "answers": [a.to_doc() for a in self.answers]}

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "AnswerSetRecord":
        return cls(
            answers=[Answer.from_doc(a) for a in doc["answers"]],
            task_hint=doc.get("taskHint"),
        )


@dataclass
class Submission:
    id: str
    team_id: str
    user_id: str
    received_at_ms: int
    answer_sets: list[AnswerSetRecord]

    def flat_answers(self) -> list[Answer]:
        return [a for s in self.answer_sets for a in s.answers]

    def status(self) -> str:
        return combined_status(a.verdict for a in self.flat_answers())

    def to_doc(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "teamId": self.team_id,
            "userId": self.user_id,
            "receivedAtMs": self.received_at_ms,
            "answerSets": [s.to_doc() for s in self.answer_sets],
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "Submission":
        return cls(
            id=doc["id"],
            team_id=doc["teamId"],
            user_id=doc["userId"],
            received_at_ms=int(doc["receivedAtMs"]),
            answer_sets=[AnswerSetRecord.from_doc(s) for s in doc["answerSets"]],
        )


def combined_status(verdicts: Iterable[Verdict | None]) -> str:
    """Collapse answer verdicts to one submission/answer-set status.

    Pending answers dominate everything except a correct hit, so a
    half-judged submission is never prematurely counted as wrong.
    """
    kinds = {"pending" if v is None else v.kind for v in verdicts}
    for status in ("correct", "pending", "graded", "wrong", "undecidable"):
        if status in kinds:
            return status
    return "pending"


@dataclass
class TaskRun:
    id: str
    template_id: str
    duration_ms: int
    state: TaskState = TaskState.created
    started_at_ms: int | None = None
    ended_at_ms: int | None = None
    scope: str | None = None
    end_reason: str | None = None
    readiness: set[str] = field(default_factory=set)
    submissions: list[Submission] = field(default_factory=list)
    # Derived indexes, rebuilt on load; never serialized.
    team_answer_keys: dict[str, set[str]] = field(default_factory=dict)
    team_answer_counts: dict[str, int] = field(default_factory=dict)
    teams_correct: set[str] = field(default_factory=set)
    verdict_cache: dict[str, dict[str, Any]] = field(default_factory=dict)

    def submission(self, submission_id: str) -> Submission | None:
        for sub in self.submissions:
            if sub.id == submission_id:
                return sub
        return None

    def elapsed_ms(self, now_ms: int) -> int | None:
        if self.started_at_ms is None:
            return None
        end = self.ended_at_ms if self.ended_at_ms is not None else now_ms
        return end - self.started_at_ms

    def remaining_ms(self, now_ms: int) -> int | None:
        if self.state is not TaskState.active or self.started_at_ms is None:
            return None
        return max(0, self.duration_ms - (now_ms - self.started_at_ms))

    def reindex(self) -> None:
        self.team_answer_keys = {}
        self.team_answer_counts = {}
        self.teams_correct = set()
        self.verdict_cache = {}
        for sub in self.submissions:
            keys = self.team_answer_keys.setdefault(sub.team_id, set())
            for answer in sub.flat_answers():
                keys.add(answer.key)
                self.team_answer_counts[sub.team_id] = self.team_answer_counts.get(sub.team_id, 0) + 1
                current = answer.verdict
                if current is not None and current.kind == "correct":
                    self.teams_correct.add(sub.team_id)
                for verdict in answer.verdicts:
                    if verdict.source is not VerdictSource.admin_override:
                        self.verdict_cache[answer.key] = _cache_entry(verdict)

    def to_doc(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "templateId": self.template_id,
            "durationMs": self.duration_ms,
            "state": self.state.value,
            "startedAtMs": self.started_at_ms,
            "endedAtMs": self.ended_at_ms,
            "scope": self.scope,
            "endReason": self.end_reason,
            "readiness": sorted(self.readiness),
            "submissions": [s.to_doc() for s in self.submissions],
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "TaskRun":
        run = cls(
            id=doc["id"],
            template_id=doc["templateId"],
            duration_ms=int(doc["durationMs"]),
            state=TaskState(doc["state"]),
            started_at_ms=doc.get("startedAtMs"),
            ended_at_ms=doc.get("endedAtMs"),
            scope=doc.get("scope"),
            end_reason=doc.get("endReason"),
            readiness=set(doc.get("readiness", [])),
            submissions=[Submission.from_doc(s) for s in doc.get("submissions", [])],
        )
        run.reindex()
        return run


def _cache_entry(verdict: Verdict) -> dict[str, Any]:
    # judgedAt deliberately left out: the cache must not depend on the
    # order judgments interleave with submissions.
    return {"value": verdict.value, "source": verdict.source.value, "judgeId": verdict.judge_id}


@dataclass
class Evaluation:
    id: str
    template_id: str
    template: EvaluationTemplate
    mode: EvaluationMode
    state: EvaluationState = EvaluationState.preparing
    started_at_ms: int | None = None
    ended_at_ms: int | None = None
    force_closed: bool = False
    tasks: list[TaskRun] = field(default_factory=list)
    judgement_queue: list[JudgementRequest] = field(default_factory=list)
    dedup: dict[str, list[str]] = field(default_factory=dict)
    applied_seq: int = 0

    def task(self, task_id: str) -> TaskRun | None:
        for run in self.tasks:
            if run.id == task_id:
                return run
        return None

    def find_submission(self, submission_id: str) -> tuple[TaskRun, Submission] | None:
        for run in self.tasks:
            sub = run.submission(submission_id)
            if sub is not None:
                return run, sub
        return None

    def request(self, request_id: str) -> JudgementRequest | None:
        for req in self.judgement_queue:
            if req.id == request_id:
                return req
        return None

    def active_tasks(self) -> list[TaskRun]:
        return [t for t in self.tasks if t.state is TaskState.active]

    def current_shared_task(self) -> TaskRun | None:
        """Latest unscoped task that has not ended (sync presentation order)."""
        for run in reversed(self.tasks):
            if run.scope is None and run.state is not TaskState.ended:
                return run
        return None

    def current_task_for_team(self, team_id: str) -> TaskRun | None:
        for run in reversed(self.tasks):
            if run.scope == team_id and run.state is not TaskState.ended:
                return run
        return None

    def runs_of_template(self, template_id: str, scope: str | None = None) -> list[TaskRun]:
        return [
            t for t in self.tasks
            if t.template_id == template_id and (scope is None or t.scope == scope)
        ]

    def per_agent_cursor(self) -> dict[str, dict[str, Any]]:
        cursor: dict[str, dict[str, Any]] = {}
        for team in self.template.teams:
            done = [t.template_id for t in self.tasks if t.scope == team.id and t.state is TaskState.ended]
            current = self.current_task_for_team(team.id)
            cursor[team.id] = {
                "completedTemplates": done,
                "currentTaskId": current.id if current else None,
            }
        return cursor

    def required_teams(self, run: TaskRun) -> list[str]:
        if run.scope is not None:
            return [run.scope]
        return [team.id for team in self.template.teams]

    def to_doc(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "templateId": self.template_id,
            "template": template_to_doc(self.template),
            "mode": self.mode.value,
            "state": self.state.value,
            "startedAtMs": self.started_at_ms,
            "endedAtMs": self.ended_at_ms,
            "forceClosed": self.force_closed,
            "tasks": [t.to_doc() for t in self.tasks],
            "judgementQueue": [r.to_doc() for r in self.judgement_queue],
            "dedup": {k: list(v) for k, v in sorted(self.dedup.items())},
            "appliedSeq": self.applied_seq,
        }

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "Evaluation":
        return cls(
            id=doc["id"],
            template_id=doc["templateId"],
            template=template_from_doc(doc["template"]),
            mode=EvaluationMode(doc["mode"]),
            state=EvaluationState(doc["state"]),
            started_at_ms=doc.get("startedAtMs"),
            ended_at_ms=doc.get("endedAtMs"),
            force_closed=bool(doc.get("forceClosed", False)),
            tasks=[TaskRun.from_doc(t) for t in doc.get("tasks", [])],
            judgement_queue=[JudgementRequest.from_doc(r) for r in doc.get("judgementQueue", [])],
            dedup={k: list(v) for k, v in doc.get("dedup", {}).items()},
            applied_seq=int(doc["appliedSeq"]),
        )


# --- the fold ----------------------------------------------------------


def apply_event(state: Evaluation | None, record: ev.EventRecord) -> Evaluation:
    """Deterministic fold step; the only code that mutates an Evaluation."""
    if record.kind == ev.EVALUATION_CREATED:
        if state is not None:
            raise ValueError("evaluationCreated must be the first event")
        payload = record.payload
        state = Evaluation(
            id=payload["evaluationId"],
            template_id=payload["templateId"],
            template=template_from_doc(payload["template"]),
            mode=EvaluationMode(payload["mode"]),
        )
        state.applied_seq = record.seq
        return state
    if state is None:
        raise ValueError("event stream does not start with evaluationCreated")

    payload = record.payload
    if record.kind == ev.STATE_TRANSITION:
        _apply_transition(state, record)
    elif record.kind == ev.TASK_CREATED:
        state.tasks.append(
            TaskRun(
                id=payload["taskId"],
                template_id=payload["templateId"],
                duration_ms=int(payload["durationMs"]),
                scope=payload.get("scope"),
            )
        )
    elif record.kind == ev.TEAM_READY:
        run = _task(state, payload["taskId"])
        run.readiness.add(payload["teamId"])
    elif record.kind == ev.SUBMISSION_RECEIVED:
        run = _task(state, payload["taskId"])
        sub = Submission(
            id=payload["submissionId"],
            team_id=payload["teamId"],
            user_id=payload["userId"],
            received_at_ms=int(payload["receivedAtMs"]),
            answer_sets=[AnswerSetRecord.from_doc(s) for s in payload["answerSets"]],
        )
        run.submissions.append(sub)
        keys = run.team_answer_keys.setdefault(sub.team_id, set())
        for answer in sub.flat_answers():
            keys.add(answer.key)
            run.team_answer_counts[sub.team_id] = run.team_answer_counts.get(sub.team_id, 0) + 1
        dedup_key = payload.get("dedupKey")
        if dedup_key:
            state.dedup.setdefault(dedup_key, []).append(sub.id)
    elif record.kind == ev.VERDICT_RENDERED:
        _apply_verdict(state, record, override=False)
    elif record.kind == ev.VERDICT_OVERRIDDEN:
        _apply_verdict(state, record, override=True)
    elif record.kind == ev.DURATION_ADJUSTED:
        run = _task(state, payload["taskId"])
        run.duration_ms = int(payload["durationMs"])
    elif record.kind == ev.JUDGEMENT_QUEUED:
        state.judgement_queue.append(
            JudgementRequest(
                id=payload["requestId"],
                evaluation_id=state.id,
                task_id=payload["taskId"],
                submission_id=payload["submissionId"],
                answer_index=int(payload["answerIndex"]),
                payload=payload_from_doc(payload["payload"]),
                payload_key=payload["payloadKey"],
            )
        )
    elif record.kind == ev.JUDGEMENT_ASSIGNED:
        req = state.request(payload["requestId"])
        if req is None:
            raise ValueError(f"unknown judgement request {payload['requestId']}")
        req.state = RequestState.assigned
        req.assigned_to = payload["judgeId"]
        req.deadline_ms = int(payload["deadlineMs"])
    else:
        raise ValueError(f"unknown event kind {record.kind}")
    state.applied_seq = record.seq
    return state


def _task(state: Evaluation, task_id: str) -> TaskRun:
    run = state.task(task_id)
    if run is None:
        raise ValueError(f"unknown task {task_id}")
    return run


def _apply_transition(state: Evaluation, record: ev.EventRecord) -> None:
    payload = record.payload
    target = payload["target"]
    to = payload["to"]
    if target == "evaluation":
        state.state = EvaluationState(to)
        if state.state is EvaluationState.active:
            state.started_at_ms = record.wall_clock_ms
        elif state.state is EvaluationState.ended:
            state.ended_at_ms = record.wall_clock_ms
            if payload.get("reason") == "forced":
                state.force_closed = True
    else:
        run = _task(state, payload["taskId"])
        run.state = TaskState(to)
        if run.state is TaskState.active:
            run.started_at_ms = record.wall_clock_ms
        elif run.state is TaskState.ended:
            run.ended_at_ms = record.wall_clock_ms
            run.end_reason = payload.get("reason")


def _apply_verdict(state: Evaluation, record: ev.EventRecord, override: bool) -> None:
    payload = record.payload
    run = _task(state, payload["taskId"])
    sub = run.submission(payload["submissionId"])
    if sub is None:
        raise ValueError(f"unknown submission {payload['submissionId']}")
    answers = sub.flat_answers()
    index = int(payload["answerIndex"])
    answer = answers[index]
    verdict = Verdict.from_doc(payload["verdict"])
    answer.verdicts.append(verdict)
    if not override:
        run.verdict_cache[answer.key] = _cache_entry(verdict)
    if verdict.kind == "correct":
        run.teams_correct.add(sub.team_id)
    elif override:
        # An override may retract correctness; recompute the team's flag.
        run.teams_correct.discard(sub.team_id)
        for other in run.submissions:
            if other.team_id != sub.team_id:
                continue
            for a in other.flat_answers():
                current = a.verdict
                if current is not None and current.kind == "correct":
                    run.teams_correct.add(sub.team_id)
                    break
    request_id = payload.get("requestId")
    if request_id:
        req = state.request(request_id)
        if req is not None:
            req.state = RequestState.judged


def fold_events(records: Iterable[ev.EventRecord], base: Evaluation | None = None) -> Evaluation:
    """Replay a record stream (optionally onto a snapshot-restored base)."""
    state = base
    for record in records:
        expected = (state.applied_seq if state else 0) + 1
        if record.seq != expected:
            from .errors import CorruptLogError

            raise CorruptLogError(f"expected seq {expected}, found {record.seq}")
        state = apply_event(state, record)
    if state is None:
        raise ValueError("empty event stream")
    return state


# --- submission wire format ---------------------------------------------


@dataclass(frozen=True)
class ParsedAnswer:
    payload: AnswerPayload
    weight: float | None


@dataclass(frozen=True)
class ParsedAnswerSet:
    task_hint: str | None
    answers: tuple[ParsedAnswer, ...]


def parse_submission_body(
    doc: Mapping[str, Any],
    resolve_item: Callable[[str], Any],
) -> list[ParsedAnswerSet]:
    """Parse the public submission document.

    ``resolve_item`` maps a media item name to an item (or None); answers
    referencing unresolvable names are malformed, as are structurally
    inconsistent ones (text and item together, a lone start/end, ...).
    """
    sets = doc.get("answerSets")
    if not isinstance(sets, list) or not sets:
        raise MalformedAnswerError("body must carry a non-empty answerSets list")
    parsed: list[ParsedAnswerSet] = []
    for set_doc in sets:
        if not isinstance(set_doc, Mapping):
            raise MalformedAnswerError("answer set must be an object")
        hint = set_doc.get("taskId") or set_doc.get("taskName")
        answers_doc = set_doc.get("answers")
        if not isinstance(answers_doc, list) or not answers_doc:
            raise MalformedAnswerError("answer set must carry a non-empty answers list")
        answers = tuple(_parse_answer(a, resolve_item) for a in answers_doc)
        parsed.append(ParsedAnswerSet(task_hint=hint, answers=answers))
    return parsed


def _parse_answer(doc: Any, resolve_item: Callable[[str], Any]) -> ParsedAnswer:
    if not isinstance(doc, Mapping):
        raise MalformedAnswerError("answer must be an object")
    text = doc.get("text")
    item_name = doc.get("mediaItemName")
    start = doc.get("start")
    end = doc.get("end")
    weight = doc.get("weight")
    if weight is not None:
        if not isinstance(weight, (int, float)) or not 0.0 <= float(weight) <= 1.0:
            raise MalformedAnswerError("weight must lie in [0, 1]")
        weight = float(weight)
    if text is not None and item_name is not None:
        raise MalformedAnswerError("answer carries either text or a media item, not both")
    if text is not None:
        if start is not None or end is not None:
            raise MalformedAnswerError("text answers carry no temporal range")
        return ParsedAnswer(AnswerPayload(kind=PayloadKind.text, text=str(text)), weight)
    if item_name is None:
        raise MalformedAnswerError("answer carries neither text nor a media item")
    item = resolve_item(str(item_name))
    if item is None:
        raise MalformedAnswerError(f"unknown media item {item_name!r}")
    if (start is None) != (end is None):
        raise MalformedAnswerError("temporal answers carry both start and end")
    # Payloads reference items by their collection-unique name: that is the
    # identifier the wire format and the exports speak, and what a-priori
    # targets are normalized to.
    if start is None:
        return ParsedAnswer(AnswerPayload(kind=PayloadKind.whole_item, item_id=item.name), weight)
    try:
        rng = TemporalRange(int(start), int(end))
    except (TypeError, ValueError) as exc:
        raise MalformedAnswerError(f"invalid temporal range: {exc}") from exc
    return ParsedAnswer(
        AnswerPayload(kind=PayloadKind.temporal_segment, item_id=item.name, range=rng), weight
    )


@dataclass(frozen=True)
class AnswerSetResult:
    task_id: str
    submission_id: str
    status: str  # CORRECT | WRONG | UNDECIDABLE | INDETERMINATE

    def to_doc(self) -> dict[str, Any]:
        return {"taskId": self.task_id, "submissionId": self.submission_id, "status": self.status}


@dataclass(frozen=True)
class SubmitResult:
    submission_ids: tuple[str, ...]
    answer_sets: tuple[AnswerSetResult, ...]
    deduplicated: bool = False

    def to_doc(self) -> dict[str, Any]:
        return {
            "submissionIds": list(self.submission_ids),
            "answerSets": [r.to_doc() for r in self.answer_sets],
            "deduplicated": self.deduplicated,
        }


_STATUS_WIRE = {
    "correct": "CORRECT",
    "graded": "CORRECT",
    "wrong": "WRONG",
    "undecidable": "UNDECIDABLE",
    "pending": "INDETERMINATE",
}


# --- the engine ----------------------------------------------------------


class EvaluationEngine:
    """Command layer over one evaluation's single-writer domain.

    All commands and reads serialize on an internal lock; the API layer
    calls straight in from many connections. Timeouts are evaluated lazily
    at the head of every command and read, so no external ticker is
    required for correctness (the server still sweeps periodically so that
    nobody has to poll for a task to end).
    """

    SNAPSHOT_EVERY = 500

    def __init__(
        self,
        store: Any,
        clock: Clock,
        ids: IdSource,
        state: Evaluation,
        resolver: ItemResolver | None = None,
        snapshot_every: int = SNAPSHOT_EVERY,
    ) -> None:
        self.store = store
        self.clock = clock
        self.ids = ids
        self.state = state
        self.resolver = resolver
        self.snapshot_every = snapshot_every
        self._lock = threading.RLock()
        # The frozen template never changes; cache the per-task lookups.
        self._tpl_cache: dict[str, tuple[TaskTemplate, Any]] = {}

    # -- construction and recovery

    @classmethod
    def create(
        cls,
        store: Any,
        clock: Clock,
        ids: IdSource,
        template: EvaluationTemplate,
        mode: EvaluationMode,
        actor: Actor,
        *,
        collections: ItemResolver | None = None,
        evaluation_id: str | None = None,
    ) -> "EvaluationEngine":
        """Instantiate a validated template into a fresh Preparing evaluation."""
        violations = validate_template(template, collections)
        if violations:
            raise InvalidTemplateError("; ".join(str(v) for v in violations))
        evaluation_id = evaluation_id or ids.new_id("eval")
        template_doc = template_to_doc(template)
        if collections is not None:
            _canonicalize_item_refs(template_doc, collections)
        record = ev.EventRecord(
            seq=1,
            wall_clock_ms=clock.now_ms(),
            actor=actor.user_id,
            kind=ev.EVALUATION_CREATED,
            payload={
                "evaluationId": evaluation_id,
                "templateId": template.id,
                "mode": mode.value,
                "template": template_doc,
            },
        )
        store.append([record])
        state = apply_event(None, record)
        return cls(store, clock, ids, state, resolver=collections)

    @classmethod
    def recover(
        cls,
        store: Any,
        clock: Clock,
        ids: IdSource,
        *,
        base: Evaluation | None = None,
        resolver: ItemResolver | None = None,
    ) -> "EvaluationEngine":
        from_seq = (base.applied_seq if base else 0) + 1
        state = fold_events(store.read(from_seq=from_seq), base=base)
        return cls(store, clock, ids, state, resolver=resolver)

    # -- event plumbing

    def _commit(self, actor: str, batch: list[tuple[str, dict[str, Any]]], now_ms: int) -> None:
        records = []
        before = self.state.applied_seq
        seq = before
        for kind, payload in batch:
            seq += 1
            records.append(ev.EventRecord(seq=seq, wall_clock_ms=now_ms, actor=actor, kind=kind, payload=payload))
        self.store.append(records)
        for record in records:
            apply_event(self.state, record)
        if self.snapshot_every and seq // self.snapshot_every > before // self.snapshot_every:
            save = getattr(self.store, "save_snapshot", None)
            if save is not None:
                save(seq, self.state.to_doc())

    # -- lazy end conditions

    def sweep(self, now_ms: int | None = None) -> list[TaskRun]:
        """End every Active task whose end condition is already met."""
        with self._lock:
            now = self.clock.now_ms() if now_ms is None else now_ms
            ended = []
            for run in self.state.active_tasks():
                reason = self._end_reason(run, now)
                if reason is not None:
                    self._commit(ev.SYSTEM_ACTOR, [_transition_task(run.id, TaskState.ended, reason)], now)
                    ended.append(run)
            return ended

    def _end_reason(self, run: TaskRun, now: int) -> str | None:
        if run.started_at_ms is not None and now - run.started_at_ms >= run.duration_ms:
            return "timeout"
        task_type = self._task_type(run)
        if task_type is None:
            return None
        if not task_type.end_on_all_correct and task_type.max_answers_per_agent is None:
            return None
        required = self.state.required_teams(run)
        if not required:
            return None
        if task_type.end_on_all_correct and all(team in run.teams_correct for team in required):
            return "allCorrect"
        limit = task_type.max_answers_per_agent
        if limit is not None and all(run.team_answer_counts.get(team, 0) >= limit for team in required):
            return "allExhausted"
        return None

    def _check_task_end(self, run: TaskRun, now: int) -> None:
        if run.state is not TaskState.active:
            return
        reason = self._end_reason(run, now)
        if reason is not None:
            self._commit(ev.SYSTEM_ACTOR, [_transition_task(run.id, TaskState.ended, reason)], now)

    def next_deadline_ms(self) -> int | None:
        """Earliest instant an Active task will time out, if any."""
        with self._lock:
            deadlines = [
                run.started_at_ms + run.duration_ms
                for run in self.state.active_tasks()
                if run.started_at_ms is not None
            ]
            return min(deadlines) if deadlines else None

    # -- template helpers

    def _tpl_entry(self, template_id: str) -> tuple[TaskTemplate, Any]:
        entry = self._tpl_cache.get(template_id)
        if entry is None:
            tpl = self.state.template.task_template(template_id)
            assert tpl is not None, "task runs always reference a frozen template entry"
            entry = (tpl, self.state.template.type_of(tpl))
            self._tpl_cache[template_id] = entry
        return entry

    def _template_of(self, run: TaskRun) -> TaskTemplate:
        return self._tpl_entry(run.template_id)[0]

    def _task_type(self, run: TaskRun):
        return self._tpl_entry(run.template_id)[1]

    def _scorer_of(self, template_id: str) -> ScorerSpec:
        task_type = self._tpl_entry(template_id)[1]
        assert task_type is not None, "validation guarantees resolvable task types"
        return task_type.scorer

    # -- lifecycle commands

    def start_evaluation(self, actor: Actor) -> None:
        """Preparing -> Active; non-interactive mode also activates every task."""
        actor.require(Role.admin)
        with self._lock:
            now = self.clock.now_ms()
            if self.state.state is not EvaluationState.preparing:
                raise WrongStateError(f"evaluation is {self.state.state.value}")
            batch = [_transition_evaluation(EvaluationState.active)]
            if self.state.mode is EvaluationMode.non_interactive:
                for tpl in self.state.template.task_templates:
                    task_id = self.ids.new_id("task")
                    batch.append(_task_created(task_id, tpl))
                    batch.append(_transition_task(task_id, TaskState.preparing))
                    batch.append(_transition_task(task_id, TaskState.active))
            self._commit(actor.user_id, batch, now)

    def next_task(self, template_id: str, actor: Actor) -> TaskRun:
        """Stage the next task: conductor-driven when synchronous, per team when asynchronous."""
        with self._lock:
            now = self.clock.now_ms()
            self.sweep(now)
            if self.state.state is not EvaluationState.active:
                raise WrongStateError(f"evaluation is {self.state.state.value}")
            tpl = self.state.template.task_template(template_id)
            if tpl is None:
                raise UnknownTaskError(f"no task template {template_id!r}")
            scope: str | None = None
            if self.state.mode is EvaluationMode.interactive_sync:
                actor.require(Role.admin)
                current = self.state.current_shared_task()
                if current is not None:
                    raise TaskStillActiveError(f"task {current.id} is {current.state.value}")
            elif self.state.mode is EvaluationMode.interactive_async:
                if actor.role is Role.admin:
                    raise NotAuthorizedError("asynchronous progression is triggered by the team itself")
                team = self.state.template.team_of_user(actor.user_id)
                if team is None:
                    raise UnknownTeamError(f"user {actor.user_id} is in no team")
                current = self.state.current_task_for_team(team.id)
                if current is not None:
                    raise TaskStillActiveError(f"task {current.id} is {current.state.value}")
                if any(t.state is TaskState.ended for t in self.state.runs_of_template(template_id, team.id)):
                    raise WrongStateError(f"template {template_id} already consumed by team {team.id}")
                scope = team.id
            else:
                raise WrongStateError("non-interactive evaluations activate all tasks at start")
            task_id = self.ids.new_id("task")
            self._commit(
                actor.user_id,
                [_task_created(task_id, tpl, scope), _transition_task(task_id, TaskState.preparing)],
                now,
            )
            run = self.state.task(task_id)
            assert run is not None
            return run

    def mark_ready(self, team_id: str, actor: Actor) -> TaskRun:
        """Record readiness; the task goes Active once every required team is in."""
        with self._lock:
            now = self.clock.now_ms()
            if self.state.template.team(team_id) is None:
                raise UnknownTeamError(f"no team {team_id!r}")
            if actor.role is Role.participant:
                own = self.state.template.team_of_user(actor.user_id)
                if own is None or own.id != team_id:
                    raise NotAuthorizedError("participants mark only their own team ready")
            if self.state.mode is EvaluationMode.interactive_async:
                run = self.state.current_task_for_team(team_id)
            else:
                run = self.state.current_shared_task()
            if run is None or run.state is not TaskState.preparing:
                raise WrongStateError("no task awaiting readiness")
            if run.scope is not None and run.scope != team_id:
                raise UnknownTeamError(f"task {run.id} is scoped to another team")
            batch: list[tuple[str, dict[str, Any]]] = []
            if team_id not in run.readiness:
                batch.append((ev.TEAM_READY, {"taskId": run.id, "teamId": team_id}))
            ready = run.readiness | {team_id}
            if set(self.state.required_teams(run)) <= ready:
                batch.append(_transition_task(run.id, TaskState.active))
            if batch:
                self._commit(actor.user_id, batch, now)
            return run

    def start_task(self, actor: Actor, task_id: str | None = None) -> TaskRun:
        """Force-start a staged task without waiting for full readiness (audited)."""
        actor.require(Role.admin)
        with self._lock:
            now = self.clock.now_ms()
            run = self.state.task(task_id) if task_id else self.state.current_shared_task()
            if run is None:
                raise UnknownTaskError("no task to start")
            if run.state is not TaskState.preparing:
                raise WrongStateError(f"task {run.id} is {run.state.value}")
            self._commit(actor.user_id, [_transition_task(run.id, TaskState.active, "forceStart")], now)
            return run

    def abort_task(self, actor: Actor, task_id: str | None = None) -> TaskRun:
        actor.require(Role.admin)
        with self._lock:
            now = self.clock.now_ms()
            run = self.state.task(task_id) if task_id else self.state.current_shared_task()
            if run is None:
                raise UnknownTaskError("no task to abort")
            if run.state is TaskState.ended:
                raise WrongStateError(f"task {run.id} already ended")
            self._commit(actor.user_id, [_transition_task(run.id, TaskState.ended, "aborted")], now)
            return run

    def adjust_duration(self, delta_ms: int, actor: Actor, task_id: str | None = None) -> TaskRun:
        """Extend or shorten a running task; never below the time already elapsed."""
        actor.require(Role.admin)
        with self._lock:
            now = self.clock.now_ms()
            self.sweep(now)
            run = None
            if task_id:
                run = self.state.task(task_id)
                if run is None:
                    raise UnknownTaskError(f"no task {task_id!r}")
            else:
                active = [t for t in self.state.active_tasks() if t.scope is None]
                run = active[-1] if active else None
                if run is None:
                    raise WrongStateError("no active task")
            if run.state is not TaskState.active:
                raise WrongStateError(f"task {run.id} is {run.state.value}")
            new_duration = run.duration_ms + delta_ms
            assert run.started_at_ms is not None
            if new_duration <= now - run.started_at_ms:
                raise WouldEndInPastError(
                    f"{new_duration} ms duration is below the {now - run.started_at_ms} ms already elapsed"
                )
            self._commit(
                actor.user_id,
                [(ev.DURATION_ADJUSTED, {"taskId": run.id, "deltaMs": delta_ms, "durationMs": new_duration})],
                now,
            )
            return run

    def end_evaluation(self, actor: Actor, force: bool = False) -> None:
        actor.require(Role.admin)
        with self._lock:
            now = self.clock.now_ms()
            self.sweep(now)
            if self.state.state is not EvaluationState.active:
                raise WrongStateError(f"evaluation is {self.state.state.value}")
            open_tasks = [t for t in self.state.tasks if t.state is not TaskState.ended]
            batch: list[tuple[str, dict[str, Any]]] = []
            if open_tasks:
                if not force:
                    raise TasksStillActiveError(
                        ", ".join(t.id for t in open_tasks) + " not ended"
                    )
                for run in open_tasks:
                    batch.append(_transition_task(run.id, TaskState.ended, "forcedClose"))
            batch.append(_transition_evaluation(EvaluationState.ended, "forced" if force else None))
            self._commit(actor.user_id, batch, now)

    # -- submissions

    def accept_submission(
        self,
        body: Mapping[str, Any],
        actor: Actor,
        *,
        team_id: str | None = None,
        dedup_key: str | None = None,
    ) -> SubmitResult:
        """Validate, store and judge one submission document.

        The target task comes from the evaluation mode: the one shared
        Active task (sync), the submitting team's scoped Active task
        (async), or per answer-set task hints (non-interactive, where one
        request may fan out into several stored submissions).
        """
        with self._lock:
            now = self.clock.now_ms()
            self.sweep(now)
            team = None
            if team_id is not None:
                team = self.state.template.team(team_id)
            if team is None:
                team = self.state.template.team_of_user(actor.user_id)
            if team is None:
                raise UnknownTeamError(f"user {actor.user_id} belongs to no participating team")
            if dedup_key and dedup_key in self.state.dedup:
                return self._dedup_result(dedup_key)
            if self.state.state is not EvaluationState.active:
                raise NoActiveTaskError(f"evaluation is {self.state.state.value}")

            parsed = parse_submission_body(body, self._item_resolver())
            routed = self._route_answer_sets(parsed, team.id)

            batch: list[tuple[str, dict[str, Any]]] = []
            results: list[AnswerSetResult] = []
            submission_ids: list[str] = []
            touched: list[TaskRun] = []
            for run, sets in routed:
                self._check_submission_rules(run, team.id, sets)
                submission_id = self.ids.new_id("sub")
                submission_ids.append(submission_id)
                assert run.started_at_ms is not None
                received = now - run.started_at_ms
                batch.append(
                    (
                        ev.SUBMISSION_RECEIVED,
                        {
                            "taskId": run.id,
                            "submissionId": submission_id,
                            "teamId": team.id,
                            "userId": actor.user_id,
                            "receivedAtMs": received,
                            "dedupKey": dedup_key,
                            "answerSets": [
                                {
                                    "taskHint": s.task_hint,
                                    "answers": [
                                        {"payload": payload_to_doc(a.payload), "weight": a.weight, "verdicts": []}
                                        for a in s.answers
                                    ],
                                }
                                for s in sets
                            ],
                        },
                    )
                )
                statuses = self._judge_batch(run, submission_id, sets, batch, now)
                offset = 0
                for s in sets:
                    set_statuses = statuses[offset : offset + len(s.answers)]
                    offset += len(s.answers)
                    results.append(
                        AnswerSetResult(run.id, submission_id, _combined_wire_status(set_statuses))
                    )
                touched.append(run)
            self._commit(actor.user_id, batch, now)
            for run in touched:
                self._check_task_end(run, now)
            return SubmitResult(tuple(submission_ids), tuple(results))

    def _item_resolver(self) -> Callable[[str], Any]:
        resolver = self.resolver

        def resolve(name: str):
            if resolver is None:
                return None
            for tpl in self.state.template.task_templates:
                item = resolver.get(tpl.collection_id, name)
                if item is not None:
                    return item
            return None

        return resolve

    def _route_answer_sets(
        self, parsed: Sequence[ParsedAnswerSet], team_id: str
    ) -> list[tuple[TaskRun, list[ParsedAnswerSet]]]:
        if self.state.mode is EvaluationMode.non_interactive:
            routed: dict[str, tuple[TaskRun, list[ParsedAnswerSet]]] = {}
            for answer_set in parsed:
                if answer_set.task_hint is None:
                    raise UnknownTaskError("non-interactive submissions need a task hint per answer set")
                run = self._resolve_hint(answer_set.task_hint)
                if run.state is not TaskState.active:
                    raise NoActiveTaskError(f"task {run.id} is {run.state.value}")
                routed.setdefault(run.id, (run, []))[1].append(answer_set)
            return list(routed.values())
        if self.state.mode is EvaluationMode.interactive_async:
            run = self.state.current_task_for_team(team_id)
        else:
            run = self.state.current_shared_task()
        if run is None or run.state is not TaskState.active:
            raise NoActiveTaskError("no task is accepting submissions")
        for answer_set in parsed:
            if answer_set.task_hint is not None and not self._hint_matches(answer_set.task_hint, run):
                raise UnknownTaskError(f"task hint {answer_set.task_hint!r} does not match the active task")
        return [(run, list(parsed))]

    def _resolve_hint(self, hint: str) -> TaskRun:
        run = self.state.task(hint)
        if run is not None:
            return run
        tpl = self.state.template.task_template(hint) or self.state.template.task_template_by_name(hint)
        if tpl is not None:
            runs = self.state.runs_of_template(tpl.id)
            if runs:
                return runs[-1]
        raise UnknownTaskError(f"task hint {hint!r} matches no task")

    def _hint_matches(self, hint: str, run: TaskRun) -> bool:
        if hint == run.id or hint == run.template_id:
            return True
        tpl = self._template_of(run)
        return hint == tpl.name

    def _check_submission_rules(self, run: TaskRun, team_id: str, sets: Sequence[ParsedAnswerSet]) -> None:
        new_keys: list[str] = [payload_key(a.payload) for s in sets for a in s.answers]
        seen = set(run.team_answer_keys.get(team_id, set()))
        for key in new_keys:
            if key in seen:
                raise DuplicateAnswerError(f"team {team_id} already submitted {key}")
            seen.add(key)
        task_type = self._task_type(run)
        limit = task_type.max_answers_per_agent if task_type else None
        if limit is not None:
            current = run.team_answer_counts.get(team_id, 0)
            if current + len(new_keys) > limit:
                raise LimitExceededError(
                    f"team {team_id} would exceed {limit} answers on task {run.id}"
                )

    def _judge_batch(
        self,
        run: TaskRun,
        submission_id: str,
        sets: Sequence[ParsedAnswerSet],
        batch: list[tuple[str, dict[str, Any]]],
        now: int,
    ) -> list[str]:
        """Append verdict/queue events for a fresh submission; returns per-answer statuses."""
        policy = self._template_of(run).judgement
        statuses: list[str] = []
        index = 0
        for answer_set in sets:
            for answer in answer_set.answers:
                key = payload_key(answer.payload)
                if policy.mode is JudgementMode.apriori_targets:
                    verdict = assess_apriori(answer.payload, policy, now)
                    batch.append(
                        (
                            ev.VERDICT_RENDERED,
                            {
                                "taskId": run.id,
                                "submissionId": submission_id,
                                "answerIndex": index,
                                "verdict": verdict.to_doc(),
                            },
                        )
                    )
                    statuses.append(verdict.kind)
                else:
                    cached = run.verdict_cache.get(key)
                    if cached is not None:
                        verdict_doc = {
                            "value": cached["value"],
                            "source": cached["source"],
                            "judgedAtMs": now,
                            "judgeId": cached["judgeId"],
                        }
                        batch.append(
                            (
                                ev.VERDICT_RENDERED,
                                {
                                    "taskId": run.id,
                                    "submissionId": submission_id,
                                    "answerIndex": index,
                                    "verdict": verdict_doc,
                                    "cached": True,
                                },
                            )
                        )
                        statuses.append(Verdict.from_doc(verdict_doc).kind)
                    else:
                        request_id = self.ids.new_id("req")
                        batch.append(
                            (
                                ev.JUDGEMENT_QUEUED,
                                {
                                    "requestId": request_id,
                                    "taskId": run.id,
                                    "submissionId": submission_id,
                                    "answerIndex": index,
                                    "payload": payload_to_doc(answer.payload),
                                    "payloadKey": key,
                                },
                            )
                        )
                        statuses.append("pending")
                index += 1
        return statuses

    def _dedup_result(self, dedup_key: str) -> SubmitResult:
        submission_ids = tuple(self.state.dedup[dedup_key])
        results = []
        for submission_id in submission_ids:
            found = self.state.find_submission(submission_id)
            assert found is not None
            run, sub = found
            for answer_set in sub.answer_sets:
                results.append(
                    AnswerSetResult(
                        run.id,
                        submission_id,
                        _combined_wire_status(
                            ["pending" if a.verdict is None else a.verdict.kind for a in answer_set.answers]
                        ),
                    )
                )
        return SubmitResult(submission_ids, tuple(results), deduplicated=True)

    # -- judgement commands

    def dequeue_next(self, actor: Actor) -> JudgementRequest | None:
        """Assign the oldest open (or expired-assignment) request to this judge."""
        actor.require(Role.judge, Role.admin)
        with self._lock:
            now = self.clock.now_ms()
            request = next_assignable(self.state.judgement_queue, now)
            if request is None:
                return None
            self._commit(
                actor.user_id,
                [
                    (
                        ev.JUDGEMENT_ASSIGNED,
                        {
                            "requestId": request.id,
                            "judgeId": actor.user_id,
                            "deadlineMs": now + REASSIGN_DEADLINE_MS,
                        },
                    )
                ],
                now,
            )
            return request

    def render_verdict(self, request_id: str, value: float | None, actor: Actor) -> Verdict:
        """Record a human verdict and propagate it to identical payloads in the task."""
        actor.require(Role.judge, Role.admin)
        with self._lock:
            now = self.clock.now_ms()
            request = self.state.request(request_id)
            if request is None:
                raise UnknownAnswerError(f"no judgement request {request_id!r}")
            if request.state is RequestState.judged:
                raise AlreadyJudgedError(f"request {request_id} already judged")
            if request.state is not RequestState.assigned or request.assigned_to != actor.user_id:
                raise NotAssignedError(f"request {request_id} is not assigned to {actor.user_id}")
            verdict = Verdict(value, VerdictSource.human_judge, now, judge_id=actor.user_id)
            run = self.state.task(request.task_id)
            assert run is not None
            batch: list[tuple[str, dict[str, Any]]] = [
                (
                    ev.VERDICT_RENDERED,
                    {
                        "taskId": run.id,
                        "submissionId": request.submission_id,
                        "answerIndex": request.answer_index,
                        "verdict": verdict.to_doc(),
                        "requestId": request.id,
                    },
                )
            ]
            # Same payload elsewhere in this task inherits the verdict.
            for sub in run.submissions:
                for index, answer in enumerate(sub.flat_answers()):
                    if answer.key != request.payload_key or answer.verdicts:
                        continue
                    if sub.id == request.submission_id and index == request.answer_index:
                        continue
                    sibling_request = self._request_for(run.id, sub.id, index)
                    batch.append(
                        (
                            ev.VERDICT_RENDERED,
                            {
                                "taskId": run.id,
                                "submissionId": sub.id,
                                "answerIndex": index,
                                "verdict": verdict.to_doc(),
                                "requestId": sibling_request.id if sibling_request else None,
                                "cached": True,
                            },
                        )
                    )
            self._commit(actor.user_id, batch, now)
            self._check_task_end(run, now)
            return verdict

    def _request_for(self, task_id: str, submission_id: str, answer_index: int) -> JudgementRequest | None:
        for req in self.state.judgement_queue:
            if (
                req.task_id == task_id
                and req.submission_id == submission_id
                and req.answer_index == answer_index
                and req.state is not RequestState.judged
            ):
                return req
        return None

    def override_verdict(
        self, submission_id: str, answer_index: int, value: float | None, actor: Actor
    ) -> Verdict:
        """Admin correction; history is retained and scores follow immediately."""
        actor.require(Role.admin)
        with self._lock:
            now = self.clock.now_ms()
            found = self.state.find_submission(submission_id)
            if found is None:
                raise UnknownAnswerError(f"no submission {submission_id!r}")
            run, sub = found
            answers = sub.flat_answers()
            if not 0 <= answer_index < len(answers):
                raise UnknownAnswerError(f"submission {submission_id} has no answer {answer_index}")
            verdict = Verdict(value, VerdictSource.admin_override, now, judge_id=actor.user_id)
            request = self._request_for(run.id, submission_id, answer_index)
            self._commit(
                actor.user_id,
                [
                    (
                        ev.VERDICT_OVERRIDDEN,
                        {
                            "taskId": run.id,
                            "submissionId": submission_id,
                            "answerIndex": answer_index,
                            "verdict": verdict.to_doc(),
                            "requestId": request.id if request else None,
                        },
                    )
                ],
                now,
            )
            self._check_task_end(run, now)
            return verdict

    # -- scoring and views

    def _counted_runs(self, team_id: str) -> list[tuple[TaskTemplate, TaskRun | None]]:
        """Which (template, latest run) pairs enter this team's aggregate."""
        counted: list[tuple[TaskTemplate, TaskRun | None]] = []
        for tpl in self.state.template.task_templates:
            if self.state.mode is EvaluationMode.interactive_async:
                runs = self.state.runs_of_template(tpl.id, scope=team_id)
                if runs:
                    counted.append((tpl, runs[-1]))
            else:
                runs = self.state.runs_of_template(tpl.id)
                counted.append((tpl, runs[-1] if runs else None))
        return counted

    def task_outcomes(self, run: TaskRun) -> list[SubmissionOutcome]:
        outcomes = []
        for sub in run.submissions:
            correct_items = frozenset(
                a.payload.item_id
                for a in sub.flat_answers()
                if a.payload.item_id and a.verdict is not None and a.verdict.kind == "correct"
            )
            outcomes.append(
                SubmissionOutcome(
                    team_id=sub.team_id,
                    received_at_ms=sub.received_at_ms,
                    status=sub.status(),
                    correct_item_ids=correct_items,
                )
            )
        return outcomes

    def task_score(self, run: TaskRun, team_id: str, outcomes: list[SubmissionOutcome] | None = None) -> float:
        spec = self._scorer_of(run.template_id)
        if outcomes is None:
            outcomes = self.task_outcomes(run)
        return score_task(outcomes, team_id, run.duration_ms, spec).value

    def scoreboard(self) -> list[dict[str, Any]]:
        """Current ranking; recomputed from state on every call."""
        with self._lock:
            self.sweep()
            outcome_cache: dict[str, list[SubmissionOutcome]] = {}
            rows = []
            for team in self.state.template.teams:
                per_group: dict[str, list[float]] = {}
                for tpl, run in self._counted_runs(team.id):
                    if run is None:
                        value = 0.0
                    else:
                        if run.id not in outcome_cache:
                            outcome_cache[run.id] = self.task_outcomes(run)
                        value = self.task_score(run, team.id, outcome_cache[run.id])
                    per_group.setdefault(tpl.group_name, []).append(value)
                rows.append((team.id, team.name, per_group))
            return [
                {
                    "teamId": row.team_id,
                    "teamName": row.team_name,
                    "perGroupScores": row.per_group_scores,
                    "total": row.total,
                    "rank": row.rank,
                }
                for row in compute_scoreboard(rows)
            ]

    def score_rows(self) -> list[dict[str, Any]]:
        """Tabular (team, group, task, value) rows for the CSV export."""
        with self._lock:
            outcome_cache: dict[str, list[SubmissionOutcome]] = {}
            rows = []
            for team in self.state.template.teams:
                for tpl, run in self._counted_runs(team.id):
                    if run is None:
                        continue
                    if run.id not in outcome_cache:
                        outcome_cache[run.id] = self.task_outcomes(run)
                    rows.append(
                        {
                            "evaluation": self.state.id,
                            "team": team.name,
                            "group": tpl.group_name,
                            "task": tpl.name,
                            "value": self.task_score(run, team.id, outcome_cache[run.id]),
                        }
                    )
            return rows

    def _task_view(self, run: TaskRun, now: int, *, include_hints: bool) -> dict[str, Any]:
        tpl = self._template_of(run)
        doc: dict[str, Any] = {
            "taskRunId": run.id,
            "templateId": run.template_id,
            "name": tpl.name,
            "group": tpl.group_name,
            "collectionId": tpl.collection_id,
            "state": run.state.value,
            "startedAtMs": run.started_at_ms,
            "endedAtMs": run.ended_at_ms,
            "durationMs": run.duration_ms,
            "remainingMs": run.remaining_ms(now),
            "endReason": run.end_reason,
        }
        if include_hints and run.state is TaskState.active and run.started_at_ms is not None:
            elapsed = now - run.started_at_ms
            entries = list(desc_at(tpl.timeline, elapsed))
            entries += [
                e
                for e in tpl.timeline.entries
                if elapsed < e.active_from_ms <= elapsed + HINT_LOOKAHEAD_MS
            ]
            doc["hints"] = [
                {
                    "channel": e.channel.value,
                    "activeFromMs": e.active_from_ms,
                    "activeUntilMs": e.active_until_ms,
                    "payload": payload_to_doc(e.payload) if e.payload else None,
                    "resource": e.resource,
                }
                for e in entries
            ]
        return doc

    def _own_submissions(self, run: TaskRun, team_id: str) -> list[dict[str, Any]]:
        docs = []
        for sub in run.submissions:
            if sub.team_id != team_id:
                continue
            docs.append(
                {
                    "id": sub.id,
                    "receivedAtMs": sub.received_at_ms,
                    "status": _STATUS_WIRE[sub.status()],
                    "answers": [
                        {
                            "payload": payload_to_doc(a.payload),
                            "verdict": a.verdict.to_doc() if a.verdict else None,
                        }
                        for a in sub.flat_answers()
                    ],
                }
            )
        return docs

    def agent_view(self, team_id: str, actor: Actor) -> dict[str, Any]:
        """Participant-scoped state: own task, hints, countdown, own submissions, scores."""
        with self._lock:
            now = self.clock.now_ms()
            self.sweep(now)
            team = self.state.template.team(team_id)
            if team is None:
                raise UnknownTeamError(f"no team {team_id!r}")
            if self.state.mode is EvaluationMode.interactive_async:
                run = self.state.current_task_for_team(team_id)
            else:
                run = self.state.current_shared_task()
            doc: dict[str, Any] = {
                "serverTimeMs": now,
                "evaluationId": self.state.id,
                "name": self.state.template.name,
                "mode": self.state.mode.value,
                "state": self.state.state.value,
                "teamId": team_id,
                "teamName": team.name,
                "task": None,
                "scoreboard": self.scoreboard(),
            }
            if run is not None:
                view = self._task_view(run, now, include_hints=True)
                view["ownReady"] = team_id in run.readiness
                view["ownSubmissions"] = self._own_submissions(run, team_id)
                doc["task"] = view
            if self.state.mode is EvaluationMode.non_interactive:
                doc["tasks"] = [
                    dict(
                        self._task_view(t, now, include_hints=True),
                        ownSubmissions=self._own_submissions(t, team_id),
                    )
                    for t in self.state.tasks
                ]
            if self.state.mode is EvaluationMode.interactive_async:
                done = {
                    t.template_id
                    for t in self.state.tasks
                    if t.scope == team_id and t.state is TaskState.ended
                }
                doc["remainingTemplates"] = [
                    tpl.id for tpl in self.state.template.task_templates if tpl.id not in done
                ]
            return doc

    def viewer_view(self) -> dict[str, Any]:
        with self._lock:
            now = self.clock.now_ms()
            self.sweep(now)
            run = self.state.current_shared_task() if self.state.mode is not EvaluationMode.non_interactive else None
            return {
                "serverTimeMs": now,
                "evaluationId": self.state.id,
                "name": self.state.template.name,
                "mode": self.state.mode.value,
                "state": self.state.state.value,
                "activeTask": self._task_view(run, now, include_hints=True) if run else None,
                "readiness": sorted(run.readiness) if run else [],
                "scoreboard": self.scoreboard(),
            }

    def admin_view(self) -> dict[str, Any]:
        with self._lock:
            now = self.clock.now_ms()
            self.sweep(now)
            open_requests = sum(
                1 for r in self.state.judgement_queue if r.state is not RequestState.judged
            )
            return {
                "serverTimeMs": now,
                "evaluation": self.state.to_doc(),
                "openJudgements": open_requests,
                "perAgentCursor": self.state.per_agent_cursor(),
                "scoreboard": self.scoreboard(),
            }


def _combined_wire_status(statuses: Sequence[str]) -> str:
    for status in ("correct", "pending", "graded", "wrong", "undecidable"):
        if status in statuses:
            return _STATUS_WIRE[status]
    return "INDETERMINATE"


def _transition_evaluation(to: EvaluationState, reason: str | None = None) -> tuple[str, dict[str, Any]]:
    payload: dict[str, Any] = {"target": "evaluation", "to": to.value}
    if reason:
        payload["reason"] = reason
    return ev.STATE_TRANSITION, payload


def _transition_task(task_id: str, to: TaskState, reason: str | None = None) -> tuple[str, dict[str, Any]]:
    payload: dict[str, Any] = {"target": "task", "taskId": task_id, "to": to.value}
    if reason:
        payload["reason"] = reason
    return ev.STATE_TRANSITION, payload


def _task_created(task_id: str, tpl: TaskTemplate, scope: str | None = None) -> tuple[str, dict[str, Any]]:
    return ev.TASK_CREATED, {
        "taskId": task_id,
        "templateId": tpl.id,
        "scope": scope,
        "durationMs": tpl.duration_ms,
    }


def _canonicalize_item_refs(template_doc: dict[str, Any], collections: ItemResolver) -> None:
    """Rewrite item references in the frozen template copy to item names.

    Authors may reference items by internal id or name; the evaluation's
    frozen copy always carries names so targets compare against parsed
    submission payloads. The stored template is left untouched (round-trip
    identity of import/export).
    """
    for task_doc in template_doc.get("taskTemplates", []):
        collection_id = task_doc.get("collectionId", "")

        def canonical(payload_doc: dict[str, Any] | None) -> None:
            if not payload_doc:
                return
            ref = payload_doc.get("itemId")
            if not ref:
                return
            item = collections.get(collection_id, ref)
            if item is not None:
                payload_doc["itemId"] = item.name

        for entry in task_doc.get("timeline", {}).get("entries", []):
            canonical(entry.get("payload"))
        for target in task_doc.get("judgement", {}).get("targets", []) or []:
            canonical(target)
