"""State machine, submission gating, judgement flow and views."""

from __future__ import annotations

import json

import pytest

from evalserver.errors import (
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
    UnknownTeamError,
    WouldEndInPastError,
    WrongStateError,
)
from evalserver.events import VERDICT_OVERRIDDEN
from evalserver.lifecycle import EvaluationEngine, EvaluationState, TaskState
from evalserver.model import EvaluationMode, Role
from evalserver.clock import SequentialIds, VirtualClock
from evalserver.persistence import MemoryEventStore

from conftest import (
    ADMIN,
    JUDGE,
    build_template,
    kis_template,
    listing_body,
    make_engine,
    participant,
    run_sync_task,
    segment,
    text_body,
)

ALICE = participant("u-alice")
BOB = participant("u-bob")
CAROL = participant("u-carol")


# --- creation and evaluation-level transitions ---------------------------------


def test_create_starts_preparing_with_no_tasks(template, resolver):
    engine, _, _ = make_engine(template, resolver)
    assert engine.state.state is EvaluationState.preparing
    assert engine.state.tasks == []
    assert engine.state.template == template


def test_create_rejects_invalid_template(resolver):
    broken = build_template(tasks=(kis_template("kis-x", "kis-x", segment("v-99999", 0, 1_000)),))
    with pytest.raises(InvalidTemplateError, match="danglingItem"):
        make_engine(broken, resolver)


def test_start_sets_active(template, resolver):
    engine, _, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    assert engine.state.state is EvaluationState.active
    assert engine.state.started_at_ms is not None


def test_start_twice_is_wrong_state(template, resolver):
    engine, _, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    with pytest.raises(WrongStateError):
        engine.start_evaluation(ADMIN)


def test_start_requires_admin(template, resolver):
    engine, _, _ = make_engine(template, resolver)
    with pytest.raises(NotAuthorizedError):
        engine.start_evaluation(ALICE)


def test_non_interactive_start_activates_every_task(template, resolver):
    engine, _, _ = make_engine(template, resolver, mode=EvaluationMode.non_interactive)
    engine.start_evaluation(ADMIN)
    assert len(engine.state.tasks) == 4
    assert all(t.state is TaskState.active for t in engine.state.tasks)


# --- task staging and readiness --------------------------------------------------


def test_next_task_stages_preparing(template, resolver):
    engine, _, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run = engine.next_task("kis-01", ADMIN)
    assert run.state is TaskState.preparing
    assert run.scope is None


def test_next_task_requires_admin_in_sync(template, resolver):
    engine, _, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    with pytest.raises(NotAuthorizedError):
        engine.next_task("kis-01", ALICE)


def test_next_task_blocked_while_task_open(template, resolver):
    engine, _, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    engine.next_task("kis-01", ADMIN)
    with pytest.raises(TaskStillActiveError):
        engine.next_task("kis-02", ADMIN)


def test_readiness_gates_activation(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run = engine.next_task("kis-01", ADMIN)
    engine.mark_ready("team-a", ALICE)
    assert engine.state.task(run.id).state is TaskState.preparing
    engine.mark_ready("team-b", BOB)
    assert engine.state.task(run.id).state is TaskState.preparing
    clock.advance(500)
    engine.mark_ready("team-c", CAROL)
    refreshed = engine.state.task(run.id)
    assert refreshed.state is TaskState.active
    assert refreshed.started_at_ms == clock.now_ms()


def test_participant_cannot_ready_other_team(template, resolver):
    engine, _, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    engine.next_task("kis-01", ADMIN)
    with pytest.raises(NotAuthorizedError):
        engine.mark_ready("team-b", ALICE)


def test_mark_ready_unknown_team(template, resolver):
    engine, _, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    engine.next_task("kis-01", ADMIN)
    with pytest.raises(UnknownTeamError):
        engine.mark_ready("team-z", ADMIN)


def test_force_start_skips_readiness(template, resolver):
    engine, _, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run = engine.next_task("kis-01", ADMIN)
    engine.start_task(ADMIN)
    assert engine.state.task(run.id).state is TaskState.active


def test_async_task_is_scoped_and_readies_alone(template, resolver):
    engine, _, _ = make_engine(template, resolver, mode=EvaluationMode.interactive_async)
    engine.start_evaluation(ADMIN)
    run = engine.next_task("kis-01", ALICE)
    assert run.scope == "team-a"
    engine.mark_ready("team-a", ALICE)
    assert engine.state.task(run.id).state is TaskState.active


def test_async_teams_progress_independently(template, resolver):
    engine, _, _ = make_engine(template, resolver, mode=EvaluationMode.interactive_async)
    engine.start_evaluation(ADMIN)
    run_a = engine.next_task("kis-01", ALICE)
    engine.mark_ready("team-a", ALICE)
    run_b = engine.next_task("kis-02", BOB)
    engine.mark_ready("team-b", BOB)
    assert engine.state.task(run_a.id).state is TaskState.active
    assert engine.state.task(run_b.id).state is TaskState.active
    assert {engine.state.task(run_a.id).scope, engine.state.task(run_b.id).scope} == {
        "team-a",
        "team-b",
    }


# --- submissions -------------------------------------------------------------------


def test_listing_style_submission_judged_correct(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run = run_sync_task(engine, clock, "kis-01")
    clock.advance(15_000)
    result = engine.accept_submission(listing_body("v-09679", 15_000, 16_000), ALICE)
    assert result.answer_sets[0].status == "CORRECT"
    stored = engine.state.task(run.id).submissions[0]
    assert stored.received_at_ms == 15_000
    answer = stored.flat_answers()[0]
    assert answer.verdict.kind == "correct"
    assert answer.payload.item_id == "v-09679"


def test_submission_without_active_task(template, resolver):
    engine, _, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    with pytest.raises(NoActiveTaskError):
        engine.accept_submission(listing_body("v-09679", 15_000, 16_000), ALICE)


def test_submission_in_preparing_evaluation(template, resolver):
    engine, _, _ = make_engine(template, resolver)
    with pytest.raises(NoActiveTaskError):
        engine.accept_submission(listing_body("v-09679", 15_000, 16_000), ALICE)


def test_duplicate_answer_rejected_by_normalized_payload(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run_sync_task(engine, clock, "qa-01")
    engine.accept_submission(text_body("A  Brown Door"), ALICE)
    # Normalization oracle: case folding + whitespace collapse makes these equal.
    with pytest.raises(DuplicateAnswerError):
        engine.accept_submission(text_body("a brown door"), ALICE)
    # Other teams are unaffected.
    engine.accept_submission(text_body("a brown door"), BOB)


def test_duplicate_segment_rejected_but_distinct_allowed(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run_sync_task(engine, clock, "kis-01")
    engine.accept_submission(listing_body("v-00001", 1_000, 2_000), ALICE)
    with pytest.raises(DuplicateAnswerError):
        engine.accept_submission(listing_body("v-00001", 1_000, 2_000), ALICE)
    engine.accept_submission(listing_body("v-00001", 1_000, 2_001), ALICE)


def test_unknown_item_is_malformed(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run_sync_task(engine, clock, "kis-01")
    with pytest.raises(MalformedAnswerError, match="v-nope"):
        engine.accept_submission(listing_body("v-nope"), ALICE)


def test_partial_range_is_malformed(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run_sync_task(engine, clock, "kis-01")
    with pytest.raises(MalformedAnswerError):
        engine.accept_submission(
            {"answerSets": [{"answers": [{"mediaItemName": "v-09679", "start": 1_000}]}]}, ALICE
        )


def test_answer_limit_enforced(resolver):
    template = build_template()
    limited_types = tuple(
        type(t)(
            name=t.name,
            scorer=t.scorer,
            judgement_mode=t.judgement_mode,
            duration_default_ms=t.duration_default_ms,
            max_answers_per_agent=2 if t.name == "kis" else None,
            end_on_all_correct=False,
        )
        for t in template.task_types
    )
    template = type(template)(
        id=template.id,
        name=template.name,
        task_templates=template.task_templates,
        task_types=limited_types,
        task_groups=template.task_groups,
        teams=template.teams,
    )
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run_sync_task(engine, clock, "kis-01")
    engine.accept_submission(listing_body("v-00001", 0, 1_000), ALICE)
    engine.accept_submission(listing_body("v-00002", 0, 1_000), ALICE)
    with pytest.raises(LimitExceededError):
        engine.accept_submission(listing_body("v-00003", 0, 1_000), ALICE)


def test_received_at_is_non_decreasing(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run = run_sync_task(engine, clock, "kis-01")
    for i, step in enumerate((1_000, 0, 2_500)):
        clock.advance(step)
        engine.accept_submission(listing_body("v-00001", i * 10, i * 10 + 5), ALICE)
    received = [s.received_at_ms for s in engine.state.task(run.id).submissions]
    assert received == sorted(received)


def test_submitter_outside_teams_rejected(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run_sync_task(engine, clock, "kis-01")
    with pytest.raises(UnknownTeamError):
        engine.accept_submission(listing_body("v-09679", 15_000, 16_000), participant("u-nobody"))


def test_dedup_key_makes_retry_idempotent(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run = run_sync_task(engine, clock, "kis-01")
    first = engine.accept_submission(
        listing_body("v-09679", 15_000, 16_000), ALICE, dedup_key="retry-1"
    )
    retry = engine.accept_submission(
        listing_body("v-09679", 15_000, 16_000), ALICE, dedup_key="retry-1"
    )
    assert retry.deduplicated
    assert retry.submission_ids == first.submission_ids
    assert len(engine.state.task(run.id).submissions) == 1


# --- end conditions ------------------------------------------------------------------


def test_timeout_boundary_ends_task(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run = run_sync_task(engine, clock, "kis-01")
    clock.advance(299_999)
    engine.sweep()
    assert engine.state.task(run.id).state is TaskState.active
    clock.advance(2)
    engine.sweep()
    refreshed = engine.state.task(run.id)
    assert refreshed.state is TaskState.ended
    assert refreshed.end_reason == "timeout"


def test_submission_after_deadline_rejected(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run_sync_task(engine, clock, "kis-01")
    clock.advance(300_000)
    with pytest.raises(NoActiveTaskError):
        engine.accept_submission(listing_body("v-09679", 15_000, 16_000), ALICE)


def test_all_correct_ends_task_early(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run = run_sync_task(engine, clock, "kis-01")
    clock.advance(120_000)
    for actor, start in ((ALICE, 15_000), (BOB, 15_100), (CAROL, 15_200)):
        assert engine.state.task(run.id).state is TaskState.active
        engine.accept_submission(listing_body("v-09679", start, start + 500), actor)
    refreshed = engine.state.task(run.id)
    assert refreshed.state is TaskState.ended
    assert refreshed.end_reason == "allCorrect"


def test_one_correct_of_three_keeps_running(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run = run_sync_task(engine, clock, "kis-01")
    clock.advance(299_000)
    engine.accept_submission(listing_body("v-09679", 15_000, 16_000), ALICE)
    assert engine.state.task(run.id).state is TaskState.active


def test_exhausted_answer_budget_ends_task(resolver):
    template = build_template()
    limited_types = tuple(
        type(t)(
            name=t.name,
            scorer=t.scorer,
            judgement_mode=t.judgement_mode,
            duration_default_ms=t.duration_default_ms,
            max_answers_per_agent=1 if t.name == "kis" else None,
            end_on_all_correct=False,
        )
        for t in template.task_types
    )
    template = type(template)(
        id=template.id,
        name=template.name,
        task_templates=template.task_templates,
        task_types=limited_types,
        task_groups=template.task_groups,
        teams=template.teams,
    )
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run = run_sync_task(engine, clock, "kis-01")
    clock.advance(1_000)
    for actor, item in ((ALICE, "v-00001"), (BOB, "v-00002")):
        engine.accept_submission(listing_body(item, 0, 500), actor)
        assert engine.state.task(run.id).state is TaskState.active
    engine.accept_submission(listing_body("v-00003", 0, 500), CAROL)
    refreshed = engine.state.task(run.id)
    assert refreshed.state is TaskState.ended
    assert refreshed.end_reason == "allExhausted"


def test_open_requests_remain_judgeable_after_task_end(template, resolver):
    engine, clock, run = prepare_avs(template, resolver)
    clock.advance(5_000)
    engine.accept_submission(listing_body("v-00001", 0, 1_000), ALICE)
    clock.advance(400_000)
    engine.sweep()
    assert engine.state.task(run.id).state is TaskState.ended
    request = engine.dequeue_next(JUDGE)
    assert request is not None
    engine.render_verdict(request.id, 1.0, JUDGE)
    board = {row["teamId"]: row["total"] for row in engine.scoreboard()}
    assert board["team-a"] > 0.0


# --- duration adjustment ----------------------------------------------------------------


def test_adjust_duration_extends_countdown(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run = run_sync_task(engine, clock, "kis-01")
    before = engine.state.task(run.id).remaining_ms(clock.now_ms())
    engine.adjust_duration(60_000, ADMIN)
    after = engine.state.task(run.id).remaining_ms(clock.now_ms())
    assert after - before == 60_000


def test_adjust_duration_cannot_end_in_past(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run_sync_task(engine, clock, "kis-01")
    clock.advance(100_000)
    with pytest.raises(WouldEndInPastError):
        engine.adjust_duration(-600_000, ADMIN)


def test_adjust_duration_requires_admin(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run_sync_task(engine, clock, "kis-01")
    with pytest.raises(NotAuthorizedError):
        engine.adjust_duration(60_000, ALICE)


# --- ending the evaluation ---------------------------------------------------------------


def finish_task(engine, clock, run_id):
    clock.advance(engine.state.task(run_id).remaining_ms(clock.now_ms()) + 1)
    engine.sweep()


def test_end_evaluation_after_all_tasks(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    for template_id in ("kis-01", "kis-02", "avs-01", "qa-01"):
        run = run_sync_task(engine, clock, template_id)
        finish_task(engine, clock, run.id)
    engine.end_evaluation(ADMIN)
    assert engine.state.state is EvaluationState.ended
    assert not engine.state.force_closed


def test_end_evaluation_blocked_by_open_task(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run_sync_task(engine, clock, "kis-01")
    with pytest.raises(TasksStillActiveError):
        engine.end_evaluation(ADMIN)


def test_forced_close_ends_open_tasks_and_is_recorded(template, resolver):
    engine, clock, store = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run = run_sync_task(engine, clock, "kis-01")
    engine.end_evaluation(ADMIN, force=True)
    assert engine.state.state is EvaluationState.ended
    assert engine.state.force_closed
    assert engine.state.task(run.id).end_reason == "forcedClose"
    reasons = [r.payload.get("reason") for r in store.read()]
    assert "forced" in reasons


def test_no_mutation_after_end(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    engine.end_evaluation(ADMIN, force=True)
    with pytest.raises(WrongStateError):
        engine.next_task("kis-01", ADMIN)
    with pytest.raises(NoActiveTaskError):
        engine.accept_submission(listing_body("v-09679", 15_000, 16_000), ALICE)


# --- human judgement through the engine -----------------------------------------------------


def prepare_avs(template, resolver, template_id="avs-01"):
    engine, clock, store = make_engine(build_template(), resolver)
    engine.start_evaluation(ADMIN)
    run = run_sync_task(engine, clock, template_id)
    return engine, clock, run


def test_human_mode_enqueues_requests(template, resolver):
    engine, clock, run = prepare_avs(template, resolver)
    clock.advance(5_000)
    result = engine.accept_submission(listing_body("v-00001", 0, 1_000), ALICE)
    assert result.answer_sets[0].status == "INDETERMINATE"
    assert len(engine.state.judgement_queue) == 1


def test_queue_fifo_and_render_updates_score(template, resolver):
    engine, clock, run = prepare_avs(template, resolver)
    clock.advance(5_000)
    engine.accept_submission(listing_body("v-00001", 0, 1_000), ALICE)
    engine.accept_submission(listing_body("v-00002", 0, 1_000), BOB)
    first = engine.dequeue_next(JUDGE)
    assert first.submission_id == engine.state.task(run.id).submissions[0].id
    engine.render_verdict(first.id, 1.0, JUDGE)
    board = {row["teamId"]: row["total"] for row in engine.scoreboard()}
    assert board["team-a"] > 0.0
    assert board["team-b"] == 0.0


def test_cached_verdict_reused_for_identical_payload(template, resolver):
    engine, clock, run = prepare_avs(template, resolver)
    clock.advance(5_000)
    engine.accept_submission(listing_body("v-00001", 0, 1_000), ALICE)
    request = engine.dequeue_next(JUDGE)
    engine.render_verdict(request.id, 1.0, JUDGE)
    # Identical payload from another team: cache oracle says no new request.
    result = engine.accept_submission(listing_body("v-00001", 0, 1_000), BOB)
    assert result.answer_sets[0].status == "CORRECT"
    assert len(engine.state.judgement_queue) == 1
    assert engine.dequeue_next(JUDGE) is None


def test_mixed_batch_enqueues_only_novel(template, resolver):
    engine, clock, run = prepare_avs(template, resolver)
    clock.advance(5_000)
    engine.accept_submission(listing_body("v-00001", 0, 1_000), ALICE)
    request = engine.dequeue_next(JUDGE)
    engine.render_verdict(request.id, 1.0, JUDGE)
    body = {
        "answerSets": [
            {
                "answers": [
                    {"mediaItemName": "v-00002", "start": 0, "end": 1_000},
                    {"mediaItemName": "v-00003", "start": 0, "end": 1_000},
                    {"mediaItemName": "v-00001", "start": 0, "end": 1_000},
                ]
            }
        ]
    }
    engine.accept_submission(body, BOB)
    open_requests = [r for r in engine.state.judgement_queue if r.state.value != "judged"]
    assert len(open_requests) == 2


def test_pending_identical_payload_resolves_with_first_verdict(template, resolver):
    engine, clock, run = prepare_avs(template, resolver)
    clock.advance(5_000)
    engine.accept_submission(listing_body("v-00001", 0, 1_000), ALICE)
    engine.accept_submission(listing_body("v-00001", 0, 1_000), BOB)
    request = engine.dequeue_next(JUDGE)
    engine.render_verdict(request.id, 1.0, JUDGE)
    task = engine.state.task(run.id)
    verdicts = [s.flat_answers()[0].verdict.kind for s in task.submissions]
    assert verdicts == ["correct", "correct"]
    assert all(r.state.value == "judged" for r in engine.state.judgement_queue)


def test_render_verdict_authorization_and_single_shot(template, resolver):
    engine, clock, run = prepare_avs(template, resolver)
    clock.advance(5_000)
    engine.accept_submission(listing_body("v-00001", 0, 1_000), ALICE)
    request = engine.dequeue_next(JUDGE)
    from evalserver.lifecycle import Actor

    other = Actor("u-j2", Role.judge)
    with pytest.raises(NotAssignedError):
        engine.render_verdict(request.id, 1.0, other)
    engine.render_verdict(request.id, 0.37, JUDGE)
    stored = engine.state.task(run.id).submissions[0].flat_answers()[0].verdict
    assert stored.kind == "graded"
    assert stored.value == pytest.approx(0.37)
    with pytest.raises(AlreadyJudgedError):
        engine.render_verdict(request.id, 1.0, JUDGE)


def test_expired_assignment_reassigns(template, resolver):
    engine, clock, run = prepare_avs(template, resolver)
    clock.advance(5_000)
    engine.accept_submission(listing_body("v-00001", 0, 1_000), ALICE)
    first = engine.dequeue_next(JUDGE)
    from evalserver.lifecycle import Actor

    other = Actor("u-j2", Role.judge)
    assert engine.dequeue_next(other) is None
    clock.advance(120_000)
    reassigned = engine.dequeue_next(other)
    assert reassigned is not None and reassigned.id == first.id
    assert reassigned.assigned_to == "u-j2"


def test_override_flips_verdict_and_keeps_history(template, resolver):
    engine, clock, store = make_engine(build_template(), resolver)
    engine.start_evaluation(ADMIN)
    run = run_sync_task(engine, clock, "kis-01")
    clock.advance(150_000)
    engine.accept_submission(listing_body("v-00001", 0, 1_000), ALICE)
    submission = engine.state.task(run.id).submissions[0]
    assert submission.flat_answers()[0].verdict.kind == "wrong"
    assert engine.task_score(engine.state.task(run.id), "team-a") == 0.0

    engine.override_verdict(submission.id, 0, 1.0, ADMIN)
    answer = engine.state.task(run.id).submissions[0].flat_answers()[0]
    assert answer.verdict.kind == "correct"
    assert len(answer.verdicts) == 2
    # Score recomputed against the original submission time: 50 + 25 - 0.
    assert engine.task_score(engine.state.task(run.id), "team-a") == pytest.approx(75.0)
    assert any(r.kind == VERDICT_OVERRIDDEN for r in store.read())


def test_override_unknown_submission(template, resolver):
    engine, _, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    import pytest as _pytest

    from evalserver.errors import UnknownAnswerError

    with _pytest.raises(UnknownAnswerError):
        engine.override_verdict("sub-nope", 0, 1.0, ADMIN)


def test_override_requires_admin(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run = run_sync_task(engine, clock, "kis-01")
    engine.accept_submission(listing_body("v-00001", 0, 1_000), ALICE)
    submission = engine.state.task(run.id).submissions[0]
    with pytest.raises(NotAuthorizedError):
        engine.override_verdict(submission.id, 0, 1.0, ALICE)


# --- views ------------------------------------------------------------------------


def test_agent_view_hides_other_teams_submissions(template, resolver):
    engine, clock, _ = make_engine(template, resolver, mode=EvaluationMode.interactive_async)
    engine.start_evaluation(ADMIN)
    engine.next_task("kis-01", ALICE)
    engine.mark_ready("team-a", ALICE)
    clock.advance(10_000)
    # A wrong attempt keeps the scoped task running.
    engine.accept_submission(listing_body("v-00001", 5_000, 6_000), ALICE)
    submission_id = engine.state.tasks[0].submissions[0].id

    view_a = engine.agent_view("team-a", ALICE)
    assert view_a["task"] is not None
    assert view_a["task"]["ownSubmissions"]

    view_b = engine.agent_view("team-b", BOB)
    assert view_b["task"] is None
    dumped = json.dumps(view_b)
    assert submission_id not in dumped
    assert "v-00001" not in dumped
    # Scores remain visible to everyone.
    assert {row["teamId"] for row in view_b["scoreboard"]} == {"team-a", "team-b", "team-c"}


def test_agent_view_between_tasks_shows_board_only(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run = run_sync_task(engine, clock, "kis-01")
    finish_task(engine, clock, run.id)
    view = engine.agent_view("team-a", ALICE)
    assert view["task"] is None
    assert view["scoreboard"]


def test_agent_view_unknown_team(template, resolver):
    engine, _, _ = make_engine(template, resolver)
    with pytest.raises(UnknownTeamError):
        engine.agent_view("team-z", ADMIN)


def test_agent_view_exposes_current_hints(template, resolver):
    engine, clock, _ = make_engine(template, resolver)
    engine.start_evaluation(ADMIN)
    run_sync_task(engine, clock, "kis-01")
    clock.advance(60_000)
    view = engine.agent_view("team-a", ALICE)
    channels = {h["channel"] for h in view["task"]["hints"]}
    assert channels == {"text", "image"}


def test_admin_view_reports_open_judgements(template, resolver):
    engine, clock, run = prepare_avs(template, resolver)
    clock.advance(1_000)
    engine.accept_submission(listing_body("v-00001", 0, 1_000), ALICE)
    assert engine.admin_view()["openJudgements"] == 1


# --- async order independence ----------------------------------------------------------


def run_async_schedule(template, resolver, order):
    """Each team plays the given template order with fixed per-task offsets."""
    engine, clock, _ = make_engine(
        template, resolver, mode=EvaluationMode.interactive_async
    )
    engine.start_evaluation(ADMIN)
    offsets = {
        "kis-01": [("u-alice", 20_000), ("u-bob", 40_000)],
        "kis-02": [("u-alice", 30_000), ("u-bob", 25_000)],
    }
    answers = {"kis-01": ("v-09679", 15_000, 16_000), "kis-02": ("v-00001", 5_500, 6_000)}
    for user, team in (("u-alice", "team-a"), ("u-bob", "team-b")):
        for template_id in order[user]:
            engine.next_task(template_id, participant(user))
            engine.mark_ready(team, participant(user))
            started = clock.now_ms()
            offset = dict(offsets[template_id])[user]
            clock.advance_to(started + offset)
            engine.accept_submission(listing_body(*answers[template_id]), participant(user))
            run = engine.state.current_task_for_team(team)
            clock.advance_to(started + 300_001)
            engine.sweep()
    scores = {}
    for team in ("team-a", "team-b"):
        for template_id in ("kis-01", "kis-02"):
            runs = [
                t for t in engine.state.tasks if t.scope == team and t.template_id == template_id
            ]
            scores[(team, template_id)] = engine.task_score(runs[-1], team)
    return scores


def test_concurrent_submission_burst_serializes(template, resolver):
    import threading

    from evalserver.clock import WallClock

    engine, _, store = make_engine(template, resolver, clock=WallClock())
    engine.start_evaluation(ADMIN)
    engine.next_task("avs-01", ADMIN)
    for team, actor in (("team-a", ALICE), ("team-b", BOB), ("team-c", CAROL)):
        engine.mark_ready(team, actor)

    actors = [ALICE, BOB, CAROL]
    errors = []

    def blast(worker: int):
        actor = actors[worker % 3]
        for i in range(30):
            start = worker * 10_000 + i * 100
            try:
                engine.accept_submission(listing_body("v-00001", start, start + 50), actor)
            except Exception as exc:  # noqa: BLE001 - collected for the assertion
                errors.append(exc)

    threads = [threading.Thread(target=blast, args=(w,)) for w in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    assert not errors
    run = engine.state.tasks[0]
    assert len(run.submissions) == 180
    received = [s.received_at_ms for s in run.submissions]
    assert received == sorted(received)
    seqs = [r.seq for r in store.read()]
    assert seqs == list(range(1, len(seqs) + 1))


def test_async_order_independence(resolver):
    template = build_template(
        tasks=(
            kis_template("kis-01", "kis-01", segment("v-09679", 14_500, 17_000)),
            kis_template("kis-02", "kis-02", segment("v-00001", 5_000, 9_000)),
        )
    )
    forward = run_async_schedule(
        template, resolver, {"u-alice": ["kis-01", "kis-02"], "u-bob": ["kis-02", "kis-01"]}
    )
    backward = run_async_schedule(
        template, resolver, {"u-alice": ["kis-02", "kis-01"], "u-bob": ["kis-01", "kis-02"]}
    )
    assert forward == backward
