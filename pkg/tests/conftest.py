"""Shared fixtures: a synthetic collection, the reference hint timeline
and template builders used across the suite."""

from __future__ import annotations

import struct

import pytest

from evalserver.clock import SequentialIds, VirtualClock
from evalserver.lifecycle import Actor, EvaluationEngine
from evalserver.model import (
    AnswerPayload,
    Channel,
    EvaluationMode,
    EvaluationTemplate,
    ExpectedAnswerKind,
    HintChannelEntry,
    HintTimeline,
    ItemResolver,
    JudgementMode,
    JudgementPolicy,
    MediaItem,
    MediaKind,
    PayloadKind,
    Role,
    ScorerKind,
    ScorerSpec,
    TaskGroup,
    TaskTemplate,
    TaskType,
    TeamDef,
    TemporalRange,
)
from evalserver.persistence import MemoryEventStore

COLLECTION_ID = "col-main"

ADMIN = Actor("u-admin", Role.admin)
JUDGE = Actor("u-judy", Role.judge)


class DictResolver(ItemResolver):
    def __init__(self, items: list[MediaItem]):
        self._items = {}
        for item in items:
            bucket = self._items.setdefault(item.collection_id, {})
            bucket[item.id] = item
            bucket[item.name] = item

    def has_collection(self, collection_id: str) -> bool:
        return collection_id in self._items

    def get(self, collection_id: str, name_or_id: str) -> MediaItem | None:
        return self._items.get(collection_id, {}).get(name_or_id)


def video(name: str, duration_ms: int = 600_000) -> MediaItem:
    return MediaItem(
        id=name, collection_id=COLLECTION_ID, name=name, kind=MediaKind.video, duration_ms=duration_ms
    )


def image(name: str) -> MediaItem:
    return MediaItem(id=name, collection_id=COLLECTION_ID, name=name, kind=MediaKind.image)


@pytest.fixture
def resolver() -> DictResolver:
    return DictResolver(
        [
            video("v-09679"),
            video("v-00001"),
            video("v-00002"),
            video("v-00003"),
            video("v-00004"),
            image("door-img"),
        ]
    )


def segment(item: str, start: int, end: int) -> AnswerPayload:
    return AnswerPayload(
        kind=PayloadKind.temporal_segment, item_id=item, range=TemporalRange(start, end)
    )


def text_payload(text: str) -> AnswerPayload:
    return AnswerPayload(kind=PayloadKind.text, text=text)


def whole_item(item: str) -> AnswerPayload:
    return AnswerPayload(kind=PayloadKind.whole_item, item_id=item)


def reference_timeline() -> HintTimeline:
    """The multi-channel door task: text from the start, image added at
    00:30, expanded text plus looping audio from 01:30, video from 03:00."""
    return HintTimeline(
        (
            HintChannelEntry(Channel.text, 0, 90_000, payload=text_payload("A wooden door being shut")),
            HintChannelEntry(Channel.image, 30_000, 90_000, payload=whole_item("door-img")),
            HintChannelEntry(
                Channel.text, 90_000, 180_000, payload=text_payload("A wooden door being shut by a person")
            ),
            HintChannelEntry(Channel.audio, 90_000, 180_000, resource="door-bang.ogg"),
            HintChannelEntry(Channel.video, 180_000, payload=segment("v-09679", 14_500, 17_000)),
        )
    )


def kis_template(task_id: str, name: str, target: AnswerPayload, duration_ms: int = 300_000) -> TaskTemplate:
    return TaskTemplate(
        id=task_id,
        name=name,
        group_name="KIS",
        timeline=reference_timeline() if target.item_id == "v-09679" else HintTimeline(
            (HintChannelEntry(Channel.text, 0, payload=text_payload(f"find {target.item_id}")),)
        ),
        judgement=JudgementPolicy(
            mode=JudgementMode.apriori_targets,
            expected_answer_kind=ExpectedAnswerKind.existing_fragment,
            targets=(target,),
        ),
        duration_ms=duration_ms,
        collection_id=COLLECTION_ID,
    )


def avs_template(task_id: str = "avs-01", duration_ms: int = 300_000) -> TaskTemplate:
    return TaskTemplate(
        id=task_id,
        name=task_id,
        group_name="AVS",
        timeline=HintTimeline(
            (HintChannelEntry(Channel.text, 0, payload=text_payload("doors opening or closing")),)
        ),
        judgement=JudgementPolicy(
            mode=JudgementMode.aposteriori_human,
            expected_answer_kind=ExpectedAnswerKind.existing_fragment,
        ),
        duration_ms=duration_ms,
        collection_id=COLLECTION_ID,
    )


def qa_template(task_id: str = "qa-01", duration_ms: int = 300_000) -> TaskTemplate:
    return TaskTemplate(
        id=task_id,
        name=task_id,
        group_name="QA",
        timeline=HintTimeline(
            (HintChannelEntry(Channel.text, 0, payload=text_payload("what colour is the door?")),)
        ),
        judgement=JudgementPolicy(
            mode=JudgementMode.aposteriori_human,
            expected_answer_kind=ExpectedAnswerKind.derived_text,
        ),
        duration_ms=duration_ms,
        collection_id=COLLECTION_ID,
    )


def standard_types() -> tuple[TaskType, ...]:
    return (
        TaskType(
            name="kis",
            scorer=ScorerSpec(ScorerKind.kis_time_penalized),
            judgement_mode=JudgementMode.apriori_targets,
            duration_default_ms=300_000,
            end_on_all_correct=True,
        ),
        TaskType(
            name="avs",
            scorer=ScorerSpec(ScorerKind.avs_pooled),
            judgement_mode=JudgementMode.aposteriori_human,
            duration_default_ms=300_000,
        ),
        TaskType(
            name="qa",
            scorer=ScorerSpec(ScorerKind.kis_time_penalized),
            judgement_mode=JudgementMode.aposteriori_human,
            duration_default_ms=300_000,
        ),
    )


def standard_groups() -> tuple[TaskGroup, ...]:
    return (TaskGroup("KIS", "kis"), TaskGroup("AVS", "avs"), TaskGroup("QA", "qa"))


def three_teams() -> tuple[TeamDef, ...]:
    return (
        TeamDef(id="team-a", name="Alpha", color="#e33", user_ids=("u-alice",)),
        TeamDef(id="team-b", name="Bravo", color="#3e3", user_ids=("u-bob",)),
        TeamDef(id="team-c", name="Charlie", color="#33e", user_ids=("u-carol",)),
    )


def build_template(tasks: tuple[TaskTemplate, ...] | None = None) -> EvaluationTemplate:
    return EvaluationTemplate(
        id="tpl-standard",
        name="Standard run",
        task_templates=tasks
        or (
            kis_template("kis-01", "kis-01", segment("v-09679", 14_500, 17_000)),
            kis_template("kis-02", "kis-02", segment("v-00001", 5_000, 9_000)),
            avs_template(),
            qa_template(),
        ),
        task_types=standard_types(),
        task_groups=standard_groups(),
        teams=three_teams(),
    )


@pytest.fixture
def template() -> EvaluationTemplate:
    return build_template()


def participant(user_id: str) -> Actor:
    return Actor(user_id, Role.participant)


def make_engine(
    template: EvaluationTemplate,
    resolver: ItemResolver,
    mode: EvaluationMode = EvaluationMode.interactive_sync,
    store=None,
    clock=None,
):
    clock = clock or VirtualClock(1_000_000)
    store = store if store is not None else MemoryEventStore()
    engine = EvaluationEngine.create(
        store,
        clock,
        SequentialIds(),
        template,
        mode,
        ADMIN,
        collections=resolver,
        evaluation_id="eval-t",
    )
    return engine, clock, store


def run_sync_task(engine, clock, template_id: str):
    """Stage a task, ready all teams, return the Active run."""
    engine.next_task(template_id, ADMIN)
    for team in engine.state.template.teams:
        clock.advance(100)
        engine.mark_ready(team.id, ADMIN)
    run = engine.state.task(engine.state.tasks[-1].id)
    assert run.state.value == "Active"
    return run


def listing_body(item: str, start: int | None = None, end: int | None = None, hint: str | None = None):
    answer = {"mediaItemName": item}
    if start is not None:
        answer["start"] = start
        answer["end"] = end
    answer_set = {"answers": [answer]}
    if hint is not None:
        answer_set["taskName"] = hint
    return {"answerSets": [answer_set]}


def text_body(text: str, hint: str | None = None):
    answer_set = {"answers": [{"text": text}]}
    if hint is not None:
        answer_set["taskName"] = hint
    return {"answerSets": [answer_set]}


def minimal_mp4(duration_ms: int = 5_000, timescale: int = 1_000) -> bytes:
    """Just enough container structure to carry a movie header."""
    ftyp = struct.pack(">I4s", 16, b"ftyp") + b"isom\x00\x00\x02\x00"
    mvhd_body = bytes(4) + struct.pack(">II", 0, 0) + struct.pack(
        ">II", timescale, duration_ms * timescale // 1_000
    )
    mvhd = struct.pack(">I4s", 8 + len(mvhd_body), b"mvhd") + mvhd_body
    moov = struct.pack(">I4s", 8 + len(mvhd), b"moov") + mvhd
    return ftyp + moov


# --- HTTP service fixture ----------------------------------------------------


@pytest.fixture
def service(tmp_path):
    """TestClient over a full server context with a real media collection."""
    from fastapi.testclient import TestClient

    from evalserver.model import template_to_doc
    from evalserver.server import ServerContext, create_app

    media = tmp_path / "media"
    media.mkdir()
    for name in ("v-09679", "v-00001", "v-00002", "v-00003", "v-00004"):
        (media / f"{name}.mp4").write_bytes(minimal_mp4(600_000))
    (media / "door-img.png").write_bytes(b"\x89PNG fake bytes" + bytes(2_000))

    context = ServerContext(tmp_path / "data", clock=VirtualClock(1_000_000), fsync=False)
    context.ensure_admin("admin", "secret")
    for user_id, username in (("u-alice", "alice"), ("u-bob", "bob"), ("u-carol", "carol")):
        context.create_user(username, "pw", Role.participant, user_id=user_id)
    context.create_user("judy", "pw", Role.judge, user_id="u-judy")
    context.create_user("vera", "pw", Role.viewer, user_id="u-vera")
    report = context.ingest_collection(media, "main")

    doc = template_to_doc(build_template())
    for task_doc in doc["taskTemplates"]:
        task_doc["collectionId"] = report.collection.id
    client = TestClient(create_app(context))
    return client, context, doc, report.collection.id


def login(client, username, password="pw"):
    response = client.post("/api/v1/login", json={"username": username, "password": password})
    assert response.status_code == 200, response.text
    return {"Authorization": f"Bearer {response.json()['token']}"}


def start_sync_evaluation(client, admin, doc, mode="interactiveSync"):
    assert client.post("/api/v1/templates", json=doc, headers=admin).status_code == 200
    created = client.post(
        "/api/v1/evaluations", json={"templateId": doc["id"], "mode": mode}, headers=admin
    )
    assert created.status_code == 200, created.text
    evaluation_id = created.json()["evaluationId"]
    started = client.post(
        f"/api/v1/evaluations/{evaluation_id}/admin",
        json={"command": "startEvaluation"},
        headers=admin,
    )
    assert started.status_code == 200
    return evaluation_id


def stage_and_ready(client, admin, evaluation_id, template_id, teams=("alice", "bob", "carol")):
    assert (
        client.post(
            f"/api/v1/evaluations/{evaluation_id}/admin",
            json={"command": "nextTask", "templateId": template_id},
            headers=admin,
        ).status_code
        == 200
    )
    for username in teams:
        headers = login(client, username)
        assert (
            client.post(f"/api/v1/evaluations/{evaluation_id}/ready", json={}, headers=headers).status_code
            == 200
        )
