"""Automatic target matching, verdict semantics and queue mechanics."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from evalserver.errors import PolicyMismatchError
from evalserver.judgement import (
    JudgementRequest,
    RequestState,
    Verdict,
    VerdictSource,
    assess_apriori,
    next_assignable,
    normalize_text,
    payload_key,
)
from evalserver.model import (
    ExpectedAnswerKind,
    JudgementMode,
    JudgementPolicy,
)

from conftest import segment, text_payload, whole_item


def apriori_policy(*targets, expected=ExpectedAnswerKind.existing_fragment):
    return JudgementPolicy(
        mode=JudgementMode.apriori_targets, expected_answer_kind=expected, targets=tuple(targets)
    )


KIS_POLICY = apriori_policy(segment("v-09679", 14_500, 17_000))


def test_overlapping_segment_is_correct():
    verdict = assess_apriori(segment("v-09679", 15_000, 16_000), KIS_POLICY, 0)
    assert verdict.kind == "correct"
    assert verdict.source is VerdictSource.apriori_matcher


def test_wrong_item_is_wrong():
    assert assess_apriori(whole_item("v-00001"), KIS_POLICY, 0).kind == "wrong"


def test_non_overlapping_segment_is_wrong():
    assert assess_apriori(segment("v-09679", 20_000, 21_000), KIS_POLICY, 0).kind == "wrong"


def test_whole_item_answer_matches_segment_target():
    assert assess_apriori(whole_item("v-09679"), KIS_POLICY, 0).kind == "correct"


def test_text_answer_against_fragment_policy_is_undecidable():
    verdict = assess_apriori(text_payload("a door"), KIS_POLICY, 0)
    assert verdict.kind == "undecidable"
    assert verdict.value is None


def test_item_answer_against_derived_text_policy_is_undecidable():
    policy = apriori_policy(text_payload("brown"), expected=ExpectedAnswerKind.derived_text)
    assert assess_apriori(whole_item("v-09679"), policy, 0).kind == "undecidable"


def test_text_matching_is_normalized():
    policy = apriori_policy(text_payload("A  Wooden Door"), expected=ExpectedAnswerKind.derived_text)
    assert assess_apriori(text_payload("  a wooden   DOOR "), policy, 0).kind == "correct"
    assert assess_apriori(text_payload("a metal door"), policy, 0).kind == "wrong"


def test_segment_answer_matches_whole_item_target():
    policy = apriori_policy(whole_item("v-09679"))
    assert assess_apriori(segment("v-09679", 0, 1), policy, 0).kind == "correct"


def test_policy_mismatch():
    human = JudgementPolicy(
        mode=JudgementMode.aposteriori_human,
        expected_answer_kind=ExpectedAnswerKind.existing_fragment,
    )
    with pytest.raises(PolicyMismatchError):
        assess_apriori(whole_item("v-09679"), human, 0)


@given(
    st.integers(0, 100),
    st.integers(0, 100),
    st.sampled_from(["v-09679", "v-00001"]),
)
def test_assess_apriori_is_deterministic(a, b, item):
    answer = segment(item, min(a, b) * 100, max(a, b) * 100)
    first = assess_apriori(answer, KIS_POLICY, 0)
    second = assess_apriori(answer, KIS_POLICY, 99)
    assert first.value == second.value


# --- verdict shape ----------------------------------------------------------


def test_verdict_kinds():
    apriori = VerdictSource.apriori_matcher
    assert Verdict(1.0, apriori, 0).kind == "correct"
    assert Verdict(0.0, apriori, 0).kind == "wrong"
    assert Verdict(0.37, apriori, 0).kind == "graded"
    assert Verdict(None, apriori, 0).kind == "undecidable"


def test_verdict_value_bounds():
    with pytest.raises(ValueError):
        Verdict(1.5, VerdictSource.apriori_matcher, 0)


def test_human_verdict_requires_judge():
    with pytest.raises(ValueError):
        Verdict(1.0, VerdictSource.human_judge, 0)


def test_verdict_doc_round_trip():
    verdict = Verdict(0.37, VerdictSource.human_judge, 12, judge_id="u-judy")
    assert Verdict.from_doc(verdict.to_doc()) == verdict


# --- payload keys ------------------------------------------------------------


def test_payload_keys_distinguish_kinds():
    keys = {
        payload_key(whole_item("v-1")),
        payload_key(segment("v-1", 0, 10)),
        payload_key(text_payload("v-1")),
    }
    assert len(keys) == 3


def test_text_key_collapses_case_and_whitespace():
    assert payload_key(text_payload("  A   Door ")) == payload_key(text_payload("a door"))
    assert normalize_text("Straße") == normalize_text("STRASSE")


# --- queue mechanics ----------------------------------------------------------


def request(request_id: str, **kwargs) -> JudgementRequest:
    defaults = dict(
        evaluation_id="eval-t",
        task_id="task-1",
        submission_id="sub-1",
        answer_index=0,
        payload=whole_item("v-09679"),
        payload_key=payload_key(whole_item("v-09679")),
    )
    defaults.update(kwargs)
    return JudgementRequest(id=request_id, **defaults)


def test_queue_is_fifo():
    queue = [request("r1"), request("r2")]
    assert next_assignable(queue, 0).id == "r1"


def test_empty_queue_yields_nothing():
    assert next_assignable([], 0) is None


def test_expired_assignment_is_reassignable():
    # Independent expectation: a request assigned at t with deadline t+120s
    # must reappear exactly at the deadline, not before.
    r1 = request("r1", state=RequestState.assigned, assigned_to="u-j1", deadline_ms=120_000)
    r2 = request("r2")
    assert next_assignable([r1, r2], 119_999).id == "r2"
    assert next_assignable([r1, r2], 120_000).id == "r1"


def test_judged_requests_never_reassign():
    r1 = request("r1", state=RequestState.judged)
    assert next_assignable([r1], 10_000_000) is None
