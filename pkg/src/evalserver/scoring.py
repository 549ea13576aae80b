"""Task metrics, evaluation aggregation and the live scoreboard.

All functions here are pure over plain inputs; the lifecycle engine
extracts ``SubmissionOutcome`` rows from its state and feeds them in, so
the same code scores live runs, replays and simulations identically.

Conventions (fixed constants of this artifact, parameterized through
ScorerSpec): a submission is *correct* when its best answer verdict is
exactly 1.0 and *wrong* when its best judged answer verdict is 0.0;
graded verdicts in (0,1) and undecidable outcomes count as neither.
Scores never go below zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import MissingRelevantTotalError, ScorerMismatchError
from .model import ScorerKind, ScorerSpec


@dataclass(frozen=True)
class SubmissionOutcome:
    """What scoring needs to know about one stored submission."""

    team_id: str
    received_at_ms: int
    status: str  # correct | wrong | graded | undecidable | pending
    correct_item_ids: frozenset[str] = frozenset()


@dataclass(frozen=True)
class TaskScore:
    team_id: str
    value: float
    components: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ScoreboardRow:
    team_id: str
    team_name: str
    per_group_scores: dict[str, float]
    total: float
    rank: int


def score_kis(
    outcomes: Sequence[SubmissionOutcome],
    team_id: str,
    duration_ms: int,
    spec: ScorerSpec,
) -> TaskScore:
    """Time-penalized single-target scoring.

    The first correct submission fixes the solve time; wrong submissions
    before it each cost ``wrongPenalty``. Without a correct submission the
    score is 0 regardless of wrong attempts.
    """
    if spec.kind is not ScorerKind.kis_time_penalized:
        raise ScorerMismatchError(f"scorer is {spec.kind.value}")
    mine = sorted(
        (o for o in outcomes if o.team_id == team_id),
        key=lambda o: o.received_at_ms,
    )
    wrong_before = 0
    for outcome in mine:
        if outcome.status == "correct":
            ratio = min(1.0, max(0.0, outcome.received_at_ms / duration_ms))
            base = spec.max_score * (1.0 - spec.time_fraction)
            time_bonus = spec.max_score * spec.time_fraction * (1.0 - ratio)
            penalty = spec.wrong_penalty * wrong_before
            value = max(0.0, base + time_bonus - penalty)
            return TaskScore(
                team_id,
                value,
                components={
                    "base": base,
                    "timeBonus": time_bonus,
                    "penalty": penalty,
                    "wrongCount": float(wrong_before),
                    "solveTimeMs": float(outcome.received_at_ms),
                },
            )
        if outcome.status == "wrong":
            wrong_before += 1
    return TaskScore(team_id, 0.0, components={"wrongCount": float(wrong_before)})


def score_avs(
    outcomes: Sequence[SubmissionOutcome],
    team_id: str,
    spec: ScorerSpec,
) -> TaskScore:
    """Pooled-recall scoring for broad many-answer tasks.

    The pool is every distinct item any team got a correct verdict for;
    a team's score scales with the share of the pool it found, damped by
    its wrong-submission ratio.
    """
    if spec.kind is not ScorerKind.avs_pooled:
        raise ScorerMismatchError(f"scorer is {spec.kind.value}")
    pool: set[str] = set()
    found: set[str] = set()
    correct = wrong = 0
    for outcome in outcomes:
        pool |= outcome.correct_item_ids
        if outcome.team_id != team_id:
            continue
        found |= outcome.correct_item_ids
        if outcome.status == "correct":
            correct += 1
        elif outcome.status == "wrong":
            wrong += 1
    components = {
        "pooledItems": float(len(pool)),
        "foundItems": float(len(found)),
        "correctSubs": float(correct),
        "wrongSubs": float(wrong),
    }
    if not pool or correct == 0:
        return TaskScore(team_id, 0.0, components=components)
    value = spec.max_score * (len(found) / len(pool)) * (correct / (correct + wrong / 2.0))
    return TaskScore(team_id, value, components=components)


def score_raw_count(
    outcomes: Sequence[SubmissionOutcome],
    team_id: str,
    spec: ScorerSpec,
) -> TaskScore:
    if spec.kind is not ScorerKind.raw_count:
        raise ScorerMismatchError(f"scorer is {spec.kind.value}")
    count = sum(1 for o in outcomes if o.team_id == team_id and o.status == "correct")
    return TaskScore(team_id, float(count), components={"correctSubs": float(count)})


_SCORERS = {
    ScorerKind.kis_time_penalized: lambda outcomes, team, duration, spec: score_kis(outcomes, team, duration, spec),
    ScorerKind.avs_pooled: lambda outcomes, team, duration, spec: score_avs(outcomes, team, spec),
    ScorerKind.raw_count: lambda outcomes, team, duration, spec: score_raw_count(outcomes, team, spec),
}


def score_task(
    outcomes: Sequence[SubmissionOutcome],
    team_id: str,
    duration_ms: int,
    spec: ScorerSpec,
) -> TaskScore:
    return _SCORERS[spec.kind](outcomes, team_id, duration_ms, spec)


def precision_recall(
    judged: Sequence[tuple[float | None, str]],
    relevant_total: int | None = None,
    *,
    require_recall: bool = False,
) -> tuple[float | None, float | None]:
    """Classical measures over (verdict value, payload key) pairs.

    Undecidable verdicts (value None) are excluded from numerator and
    denominator alike; an empty judged set leaves precision undefined.
    Recall needs total knowledge of the relevant set and is None without
    ``relevant_total`` (or an error when explicitly required).
    """
    decisive = [(v, k) for v, k in judged if v is not None]
    correct_keys = {k for v, k in decisive if v == 1.0}
    correct = sum(1 for v, _ in decisive if v == 1.0)
    precision = correct / len(decisive) if decisive else None
    if relevant_total is None:
        if require_recall:
            raise MissingRelevantTotalError("recall requires the relevant-set size")
        return precision, None
    if relevant_total <= 0:
        raise MissingRelevantTotalError("relevantTotal must be positive")
    return precision, len(correct_keys) / relevant_total


def aggregate_groups(per_group_values: Mapping[str, Sequence[float]]) -> tuple[dict[str, float], float]:
    """Group score = mean of the team's task scores in that group; total = sum.

    Groups with no counted tasks (async, nothing instantiated yet) are
    omitted rather than averaged as zero.
    """
    per_group: dict[str, float] = {}
    for group, values in per_group_values.items():
        if len(values):
            per_group[group] = math.fsum(values) / len(values)
    return per_group, math.fsum(per_group.values())


def compute_scoreboard(
    rows: Sequence[tuple[str, str, Mapping[str, Sequence[float]]]],
) -> list[ScoreboardRow]:
    """Rank (team_id, team_name, per-group task values) triples.

    Sorted by total descending with team name breaking presentation ties;
    equal totals share a rank and the next rank skips accordingly.
    """
    scored = []
    for team_id, team_name, per_group_values in rows:
        per_group, total = aggregate_groups(per_group_values)
        scored.append((team_id, team_name, per_group, total))
    scored.sort(key=lambda r: (-r[3], r[1]))
    board: list[ScoreboardRow] = []
    for index, (team_id, team_name, per_group, total) in enumerate(scored):
        if index > 0 and _close(total, board[-1].total):
            rank = board[-1].rank
        else:
            rank = index + 1
        board.append(ScoreboardRow(team_id, team_name, per_group, total, rank))
    return board


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=0.0, abs_tol=1e-9)
