"""Domain model for evaluation definitions.

Everything in here is immutable after construction and safe to share
across threads. The module also hosts the pure functions over these
values: timed hint lookup, range arithmetic and template validation,
plus the JSON interchange codec for evaluation templates.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

ITEM_NAME_RE = re.compile(r"[A-Za-z0-9_-]+\Z")


class MediaKind(str, Enum):
    image = "image"
    video = "video"


class Channel(str, Enum):
    text = "text"
    image = "image"
    video = "video"
    audio = "audio"


class PayloadKind(str, Enum):
    whole_item = "wholeItem"
    temporal_segment = "temporalSegment"
    text = "text"


class JudgementMode(str, Enum):
    apriori_targets = "aprioriTargets"
    aposteriori_human = "aposterioriHuman"


class ExpectedAnswerKind(str, Enum):
    existing_fragment = "existingFragment"
    derived_text = "derivedText"


class ScorerKind(str, Enum):
    kis_time_penalized = "kisTimePenalized"
    avs_pooled = "avsPooled"
    raw_count = "rawCount"


class Role(str, Enum):
    admin = "admin"
    participant = "participant"
    judge = "judge"
    viewer = "viewer"


class EvaluationMode(str, Enum):
    interactive_sync = "interactiveSync"
    interactive_async = "interactiveAsync"
    non_interactive = "nonInteractive"


@dataclass(frozen=True)
class MediaItem:
    id: str
    collection_id: str
    name: str
    kind: MediaKind
    duration_ms: int = 0
    location: str = ""
    duration_unknown: bool = False

    def __post_init__(self) -> None:
        if not ITEM_NAME_RE.match(self.name):
            raise ValueError(f"illegal media item name {self.name!r}")
        if self.duration_ms < 0:
            raise ValueError("durationMs must be non-negative")
        # Images are always 0; videos may be 0 only when probing failed.
        if self.kind is MediaKind.image and self.duration_ms != 0:
            raise ValueError("image items must have durationMs 0")


@dataclass(frozen=True)
class MediaCollection:
    id: str
    name: str
    base_path: str
    items: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.base_path:
            raise ValueError("basePath must be non-empty")


@dataclass(frozen=True)
class TemporalRange:
    start_ms: int
    end_ms: int

    def __post_init__(self) -> None:
        if self.start_ms < 0:
            raise ValueError("startMs must be >= 0")
        if self.start_ms > self.end_ms:
            raise ValueError("startMs must not exceed endMs")


def range_overlap(a: TemporalRange, b: TemporalRange) -> bool:
    """True iff the two ranges share time.

    Open-interval intersection, except that a zero-length range counts as
    overlapping any range that properly contains its point.
    """
    if max(a.start_ms, b.start_ms) < min(a.end_ms, b.end_ms):
        return True
    # Degenerate ranges have no interior; treat them as points.
    for point, other in ((a, b), (b, a)):
        if point.start_ms == point.end_ms:
            if other.start_ms < point.start_ms < other.end_ms:
                return True
            if other.start_ms == point.start_ms == other.end_ms:
                return True
    return False


@dataclass(frozen=True)
class AnswerPayload:
    kind: PayloadKind
    item_id: str | None = None
    range: TemporalRange | None = None
    text: str | None = None

    def __post_init__(self) -> None:
        if self.kind is PayloadKind.whole_item:
            if not self.item_id or self.range is not None or self.text is not None:
                raise ValueError("wholeItem payload carries exactly an itemId")
        elif self.kind is PayloadKind.temporal_segment:
            if not self.item_id or self.range is None or self.text is not None:
                raise ValueError("temporalSegment payload carries itemId and range")
        else:
            if self.text is None or self.item_id is not None or self.range is not None:
                raise ValueError("text payload carries exactly a text")


@dataclass(frozen=True)
class HintChannelEntry:
    channel: Channel
    active_from_ms: int
    active_until_ms: int | None = None
    payload: AnswerPayload | None = None
    resource: str | None = None

    def __post_init__(self) -> None:
        if self.active_from_ms < 0:
            raise ValueError("activeFromMs must be >= 0")
        if self.active_until_ms is not None and self.active_until_ms <= self.active_from_ms:
            raise ValueError("activeUntilMs must be greater than activeFromMs")
        if (self.payload is None) == (self.resource is None):
            raise ValueError("entry carries either a payload or an external resource")
        if self.payload is not None:
            if self.channel is Channel.text:
                if self.payload.kind is not PayloadKind.text:
                    raise ValueError("text channel requires a text payload")
            elif self.payload.kind is PayloadKind.text:
                raise ValueError(f"{self.channel.value} channel cannot carry a text payload")

    def active_at(self, t: int) -> bool:
        if t < self.active_from_ms:
            return False
        return self.active_until_ms is None or t < self.active_until_ms


@dataclass(frozen=True)
class HintTimeline:
    entries: tuple[HintChannelEntry, ...] = ()

    def channel_overlaps(self) -> list[Channel]:
        """Channels whose entry intervals overlap (a definition defect)."""
        bad = []
        by_channel: dict[Channel, list[HintChannelEntry]] = {}
        for entry in self.entries:
            by_channel.setdefault(entry.channel, []).append(entry)
        for channel, entries in by_channel.items():
            spans = sorted(
                (e.active_from_ms, e.active_until_ms) for e in entries
            )
            for (_, until), (nxt_from, _) in zip(spans, spans[1:]):
                if until is None or nxt_from < until:
                    bad.append(channel)
                    break
        return bad


def desc_at(timeline: HintTimeline, t: int) -> list[HintChannelEntry]:
    """Entries whose half-open [activeFrom, activeUntil) interval contains t.

    Total over all integers: negative t or t past every bounded entry simply
    yields whatever is still active, possibly nothing. On a well-formed
    timeline the result holds at most one entry per channel.
    """
    return [entry for entry in timeline.entries if entry.active_at(t)]


@dataclass(frozen=True)
class JudgementPolicy:
    mode: JudgementMode
    expected_answer_kind: ExpectedAnswerKind
    targets: tuple[AnswerPayload, ...] = ()

    def __post_init__(self) -> None:
        if self.mode is JudgementMode.apriori_targets:
            if not self.targets:
                raise ValueError("aprioriTargets policy requires at least one target")
            if self.expected_answer_kind is ExpectedAnswerKind.derived_text:
                if not all(t.kind is PayloadKind.text for t in self.targets):
                    raise ValueError("derivedText targets must be textual")


@dataclass(frozen=True)
class ScorerSpec:
    kind: ScorerKind
    max_score: float = 100.0
    time_fraction: float = 0.5
    wrong_penalty: float = 10.0

    def __post_init__(self) -> None:
        if self.max_score <= 0:
            raise ValueError("maxScore must be positive")
        if not 0.0 <= self.time_fraction <= 1.0:
            raise ValueError("timeFraction must lie in [0, 1]")
        if self.wrong_penalty < 0:
            raise ValueError("wrongPenalty must be >= 0")


@dataclass(frozen=True)
class TaskType:
    name: str
    scorer: ScorerSpec
    judgement_mode: JudgementMode
    duration_default_ms: int
    max_answers_per_agent: int | None = None
    end_on_all_correct: bool = False

    def __post_init__(self) -> None:
        if self.duration_default_ms <= 0:
            raise ValueError("durationDefaultMs must be positive")
        if self.max_answers_per_agent is not None and self.max_answers_per_agent <= 0:
            raise ValueError("maxAnswersPerAgent must be positive when set")


@dataclass(frozen=True)
class TaskGroup:
    name: str
    type_name: str


@dataclass(frozen=True)
class TaskTemplate:
    id: str
    name: str
    group_name: str
    timeline: HintTimeline
    judgement: JudgementPolicy
    duration_ms: int
    collection_id: str

    def __post_init__(self) -> None:
        if self.duration_ms <= 0:
            raise ValueError("durationMs must be positive")

    def referenced_item_ids(self) -> set[str]:
        refs = set()
        for entry in self.timeline.entries:
            if entry.payload is not None and entry.payload.item_id:
                refs.add(entry.payload.item_id)
        for target in self.judgement.targets:
            if target.item_id:
                refs.add(target.item_id)
        return refs


@dataclass(frozen=True)
class TeamDef:
    id: str
    name: str
    color: str = "#888888"
    user_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class TeamGroupDef:
    name: str
    team_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class UserDef:
    id: str
    username: str
    password_hash: str
    role: Role


@dataclass(frozen=True)
class EvaluationTemplate:
    id: str
    name: str
    task_templates: tuple[TaskTemplate, ...]
    task_types: tuple[TaskType, ...] = ()
    task_groups: tuple[TaskGroup, ...] = ()
    teams: tuple[TeamDef, ...] = ()
    team_groups: tuple[TeamGroupDef, ...] = ()

    def task_template(self, template_id: str) -> TaskTemplate | None:
        for tpl in self.task_templates:
            if tpl.id == template_id:
                return tpl
        return None

    def task_template_by_name(self, name: str) -> TaskTemplate | None:
        for tpl in self.task_templates:
            if tpl.name == name:
                return tpl
        return None

    def group(self, name: str) -> TaskGroup | None:
        for grp in self.task_groups:
            if grp.name == name:
                return grp
        return None

    def task_type(self, name: str) -> TaskType | None:
        for typ in self.task_types:
            if typ.name == name:
                return typ
        return None

    def type_of(self, tpl: TaskTemplate) -> TaskType | None:
        grp = self.group(tpl.group_name)
        if grp is None:
            return None
        return self.task_type(grp.type_name)

    def team(self, team_id: str) -> TeamDef | None:
        for team in self.teams:
            if team.id == team_id:
                return team
        return None

    def team_of_user(self, user_id: str) -> TeamDef | None:
        for team in self.teams:
            if user_id in team.user_ids:
                return team
        return None


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind}({self.subject})" + (f": {self.detail}" if self.detail else "")


class ItemResolver:
    """Lookup interface validation and submission handling rely on.

    ``get(collection_id, name_or_id)`` returns a MediaItem or None; the
    collection module provides the real registry, tests and the simulator
    may substitute synthetic ones.
    """

    def has_collection(self, collection_id: str) -> bool:
        raise NotImplementedError

    def get(self, collection_id: str, name_or_id: str) -> MediaItem | None:
        raise NotImplementedError


def validate_template(tpl: EvaluationTemplate, collections: ItemResolver | None = None) -> list[Violation]:
    """Lint an evaluation template; an empty report means it is instantiable.

    Violations are data, not failures: dangling item references, per-channel
    hint overlaps, empty or duplicated teams, and unresolved group/type/team
    names all land in the report. Item references are only checked when a
    collection registry is supplied.
    """
    report: list[Violation] = []
    if not tpl.task_templates:
        report.append(Violation("noTaskTemplates", tpl.id))

    seen_ids: set[str] = set()
    for task in tpl.task_templates:
        if task.id in seen_ids:
            report.append(Violation("duplicateTaskTemplateId", task.id))
        seen_ids.add(task.id)

        grp = tpl.group(task.group_name)
        if grp is None:
            report.append(Violation("unresolvedGroup", task.group_name, f"task {task.id}"))
        elif tpl.task_type(grp.type_name) is None:
            report.append(Violation("unresolvedType", grp.type_name, f"group {grp.name}"))

        for channel in task.timeline.channel_overlaps():
            report.append(Violation("channelOverlap", channel.value, f"task {task.id}"))

        if collections is not None:
            if not collections.has_collection(task.collection_id):
                report.append(Violation("unknownCollection", task.collection_id, f"task {task.id}"))
            else:
                for item_id in sorted(task.referenced_item_ids()):
                    if collections.get(task.collection_id, item_id) is None:
                        report.append(Violation("danglingItem", item_id, f"task {task.id}"))

    team_names: set[str] = set()
    team_ids: set[str] = set()
    for team in tpl.teams:
        if team.name in team_names:
            report.append(Violation("duplicateTeamName", team.name))
        team_names.add(team.name)
        team_ids.add(team.id)
        if not team.user_ids:
            report.append(Violation("emptyTeam", team.name))

    for group in tpl.team_groups:
        for team_id in group.team_ids:
            if team_id not in team_ids:
                report.append(Violation("unresolvedTeamRef", team_id, f"teamGroup {group.name}"))

    return report


# --- interchange codec -------------------------------------------------
#
# The template interchange document mirrors the domain types field for
# field, camelCase keys. Shape errors raise ValueError with a path so
# importers can surface a line of context.


def _require(doc: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in doc:
        raise ValueError(f"{path}: missing required field {key!r}")
    return doc[key]


def range_to_doc(rng: TemporalRange) -> dict[str, Any]:
    return {"startMs": rng.start_ms, "endMs": rng.end_ms}


def range_from_doc(doc: Mapping[str, Any], path: str = "range") -> TemporalRange:
    return TemporalRange(int(_require(doc, "startMs", path)), int(_require(doc, "endMs", path)))


def payload_to_doc(payload: AnswerPayload) -> dict[str, Any]:
    doc: dict[str, Any] = {"kind": payload.kind.value}
    if payload.item_id is not None:
        doc["itemId"] = payload.item_id
    if payload.range is not None:
        doc["range"] = range_to_doc(payload.range)
    if payload.text is not None:
        doc["text"] = payload.text
    return doc


def payload_from_doc(doc: Mapping[str, Any], path: str = "payload") -> AnswerPayload:
    kind = PayloadKind(_require(doc, "kind", path))
    rng = doc.get("range")
    return AnswerPayload(
        kind=kind,
        item_id=doc.get("itemId"),
        range=range_from_doc(rng, f"{path}.range") if rng is not None else None,
        text=doc.get("text"),
    )


def _entry_to_doc(entry: HintChannelEntry) -> dict[str, Any]:
    doc: dict[str, Any] = {"channel": entry.channel.value, "activeFromMs": entry.active_from_ms}
    if entry.active_until_ms is not None:
        doc["activeUntilMs"] = entry.active_until_ms
    if entry.payload is not None:
        doc["payload"] = payload_to_doc(entry.payload)
    if entry.resource is not None:
        doc["resource"] = entry.resource
    return doc


def _entry_from_doc(doc: Mapping[str, Any], path: str) -> HintChannelEntry:
    payload = doc.get("payload")
    return HintChannelEntry(
        channel=Channel(_require(doc, "channel", path)),
        active_from_ms=int(_require(doc, "activeFromMs", path)),
        active_until_ms=int(doc["activeUntilMs"]) if doc.get("activeUntilMs") is not None else None,
        payload=payload_from_doc(payload, f"{path}.payload") if payload is not None else None,
        resource=doc.get("resource"),
    )


def _scorer_to_doc(scorer: ScorerSpec) -> dict[str, Any]:
    return {
        "kind": scorer.kind.value,
        "params": {
            "maxScore": scorer.max_score,
            "timeFraction": scorer.time_fraction,
            "wrongPenalty": scorer.wrong_penalty,
        },
    }


def _scorer_from_doc(doc: Mapping[str, Any], path: str) -> ScorerSpec:
    params = doc.get("params", {})
    return ScorerSpec(
        kind=ScorerKind(_require(doc, "kind", path)),
        max_score=float(params.get("maxScore", 100.0)),
        time_fraction=float(params.get("timeFraction", 0.5)),
        wrong_penalty=float(params.get("wrongPenalty", 10.0)),
    )


def _policy_to_doc(policy: JudgementPolicy) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "mode": policy.mode.value,
        "expectedAnswerKind": policy.expected_answer_kind.value,
    }
    if policy.targets:
        doc["targets"] = [payload_to_doc(t) for t in policy.targets]
    return doc


def _policy_from_doc(doc: Mapping[str, Any], path: str) -> JudgementPolicy:
    targets = doc.get("targets") or []
    return JudgementPolicy(
        mode=JudgementMode(_require(doc, "mode", path)),
        expected_answer_kind=ExpectedAnswerKind(_require(doc, "expectedAnswerKind", path)),
        targets=tuple(payload_from_doc(t, f"{path}.targets[{i}]") for i, t in enumerate(targets)),
    )


def _task_template_to_doc(tpl: TaskTemplate) -> dict[str, Any]:
    return {
        "id": tpl.id,
        "name": tpl.name,
        "groupName": tpl.group_name,
        "timeline": {"entries": [_entry_to_doc(e) for e in tpl.timeline.entries]},
        "judgement": _policy_to_doc(tpl.judgement),
        "durationMs": tpl.duration_ms,
        "collectionId": tpl.collection_id,
    }


def _task_template_from_doc(doc: Mapping[str, Any], path: str) -> TaskTemplate:
    timeline = doc.get("timeline") or {}
    entries = timeline.get("entries") or []
    return TaskTemplate(
        id=str(_require(doc, "id", path)),
        name=str(_require(doc, "name", path)),
        group_name=str(_require(doc, "groupName", path)),
        timeline=HintTimeline(
            tuple(_entry_from_doc(e, f"{path}.timeline.entries[{i}]") for i, e in enumerate(entries))
        ),
        judgement=_policy_from_doc(_require(doc, "judgement", path), f"{path}.judgement"),
        duration_ms=int(_require(doc, "durationMs", path)),
        collection_id=str(_require(doc, "collectionId", path)),
    )


def template_to_doc(tpl: EvaluationTemplate) -> dict[str, Any]:
    """Serialize to the single-document interchange form."""
    return {
        "id": tpl.id,
        "name": tpl.name,
        "taskTemplates": [_task_template_to_doc(t) for t in tpl.task_templates],
        "taskTypes": [
            {
                "name": t.name,
                "scorer": _scorer_to_doc(t.scorer),
                "judgementMode": t.judgement_mode.value,
                "durationDefaultMs": t.duration_default_ms,
                "maxAnswersPerAgent": t.max_answers_per_agent,
                "endOnAllCorrect": t.end_on_all_correct,
            }
            for t in tpl.task_types
        ],
        "taskGroups": [{"name": g.name, "typeName": g.type_name} for g in tpl.task_groups],
        "teams": [
            {"id": t.id, "name": t.name, "color": t.color, "userIds": list(t.user_ids)}
            for t in tpl.teams
        ],
        "teamGroups": [{"name": g.name, "teamIds": list(g.team_ids)} for g in tpl.team_groups],
    }


def template_from_doc(doc: Mapping[str, Any]) -> EvaluationTemplate:
    """Parse the interchange form; raises ValueError on shape defects."""
    path = "template"
    tasks = _require(doc, "taskTemplates", path)
    types = doc.get("taskTypes") or []
    groups = doc.get("taskGroups") or []
    teams = doc.get("teams") or []
    team_groups = doc.get("teamGroups") or []
    return EvaluationTemplate(
        id=str(_require(doc, "id", path)),
        name=str(_require(doc, "name", path)),
        task_templates=tuple(
            _task_template_from_doc(t, f"{path}.taskTemplates[{i}]") for i, t in enumerate(tasks)
        ),
        task_types=tuple(
            TaskType(
                name=str(_require(t, "name", f"{path}.taskTypes[{i}]")),
                scorer=_scorer_from_doc(_require(t, "scorer", f"{path}.taskTypes[{i}]"), f"{path}.taskTypes[{i}].scorer"),
                judgement_mode=JudgementMode(_require(t, "judgementMode", f"{path}.taskTypes[{i}]")),
                duration_default_ms=int(_require(t, "durationDefaultMs", f"{path}.taskTypes[{i}]")),
                max_answers_per_agent=(
                    int(t["maxAnswersPerAgent"]) if t.get("maxAnswersPerAgent") is not None else None
                ),
                end_on_all_correct=bool(t.get("endOnAllCorrect", False)),
            )
            for i, t in enumerate(types)
        ),
        task_groups=tuple(
            TaskGroup(name=str(_require(g, "name", f"{path}.taskGroups[{i}]")), type_name=str(_require(g, "typeName", f"{path}.taskGroups[{i}]")))
            for i, g in enumerate(groups)
        ),
        teams=tuple(
            TeamDef(
                id=str(_require(t, "id", f"{path}.teams[{i}]")),
                name=str(_require(t, "name", f"{path}.teams[{i}]")),
                color=str(t.get("color", "#888888")),
                user_ids=tuple(t.get("userIds") or ()),
            )
            for i, t in enumerate(teams)
        ),
        team_groups=tuple(
            TeamGroupDef(name=str(_require(g, "name", f"{path}.teamGroups[{i}]")), team_ids=tuple(g.get("teamIds") or ()))
            for i, g in enumerate(team_groups)
        ),
    )
