"""Server bootstrap, configuration, and the scripted scenario runner.

``simulate`` drives the complete stack (lifecycle, judgement with scripted
verdicts, scoring, persistence) on a virtual clock with sequential ids, so
a scenario maps to exactly one transcript, byte for byte. The same runner
can execute in real time for wall-clock parity checks; the only moving
parts swapped out are the clock and the sleep between actions.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .clock import SequentialIds, VirtualClock, WallClock
from .errors import ConfigInvalidError, ScenarioInvalidError
from .lifecycle import Actor, EvaluationEngine
from .model import (
    EvaluationMode,
    EvaluationTemplate,
    ItemResolver,
    MediaItem,
    MediaKind,
    Role,
    template_from_doc,
)
from .persistence import MemoryEventStore

ADMIN_ACTOR_NAME = "admin"


# --- configuration -----------------------------------------------------------


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    data_dir: str = "./data"
    admin_username: str = "admin"
    admin_password: str = "admin"
    fsync: bool = True
    sweep_interval_ms: int = 250
    web_root: str | None = None


_CONFIG_PARSERS = {
    "host": str,
    "port": int,
    "data_dir": str,
    "admin_username": str,
    "admin_password": str,
    "fsync": lambda v: v.lower() in ("1", "true", "yes", "on"),
    "sweep_interval_ms": int,
    "web_root": str,
}


def parse_config(path: str | Path) -> ServerConfig:
    """Line-oriented ``key = value`` file; diagnostics carry line numbers."""
    config = ServerConfig()
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigInvalidError(str(exc)) from exc
    for number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigInvalidError(f"line {number}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip().strip('"')
        parser = _CONFIG_PARSERS.get(key)
        if parser is None:
            raise ConfigInvalidError(f"line {number}: unknown key {key!r}")
        try:
            setattr(config, key, parser(value))
        except ValueError as exc:
            raise ConfigInvalidError(f"line {number}: bad value for {key}: {exc}") from exc
    return config


def build_server(config: ServerConfig):
    """Materialize context + app from a parsed config."""
    from .server import ServerContext, create_app

    context = ServerContext(config.data_dir, fsync=config.fsync)
    context.ensure_admin(config.admin_username, config.admin_password)
    app = create_app(
        context, sweep_interval_ms=config.sweep_interval_ms, web_root=config.web_root
    )
    return context, app


def run_server(config_path: str | Path) -> None:
    import uvicorn

    config = parse_config(config_path)
    _, app = build_server(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")


# --- scenarios ----------------------------------------------------------------


_ACTION_KINDS = {"adminCommand", "markReady", "nextTask", "submit", "judge"}


@dataclass(frozen=True)
class ScenarioAction:
    at_ms: int
    actor: str
    action: str
    args: dict[str, Any] = field(default_factory=dict)


@dataclass
class Scenario:
    name: str
    mode: EvaluationMode
    template: EvaluationTemplate
    actions: list[ScenarioAction]
    collection_items: list[dict[str, Any]] = field(default_factory=list)


class _SyntheticResolver(ItemResolver):
    """Items synthesized from whatever the template and script reference."""

    def __init__(self, items: Mapping[str, MediaItem]):
        self._items = dict(items)

    def has_collection(self, collection_id: str) -> bool:
        return True

    def get(self, collection_id: str, name_or_id: str) -> MediaItem | None:
        return self._items.get(name_or_id)


def load_scenario(doc: Mapping[str, Any], base_dir: str | Path | None = None) -> Scenario:
    if "template" in doc:
        template_doc = doc["template"]
    elif "templateFile" in doc:
        path = Path(doc["templateFile"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        template_doc = json.loads(path.read_text())
    else:
        raise ScenarioInvalidError("scenario needs template or templateFile")
    try:
        template = template_from_doc(template_doc)
    except (ValueError, KeyError, TypeError) as exc:
        raise ScenarioInvalidError(f"bad template: {exc}") from exc
    try:
        mode = EvaluationMode(doc.get("mode", "interactiveSync"))
    except ValueError as exc:
        raise ScenarioInvalidError(str(exc)) from exc
    actions = []
    last_at = -1
    for index, action_doc in enumerate(doc.get("actions", [])):
        try:
            at_ms = int(action_doc["atMs"])
            actor = str(action_doc["actor"])
            action = str(action_doc["action"])
        except (KeyError, ValueError, TypeError) as exc:
            raise ScenarioInvalidError(f"actions[{index}]: {exc}") from exc
        if action not in _ACTION_KINDS:
            raise ScenarioInvalidError(f"actions[{index}]: unknown action {action!r}")
        if at_ms < last_at:
            raise ScenarioInvalidError(f"actions[{index}]: time runs backwards ({at_ms} < {last_at})")
        last_at = at_ms
        args = {k: v for k, v in action_doc.items() if k not in ("atMs", "actor", "action")}
        actions.append(ScenarioAction(at_ms, actor, action, args))
    return Scenario(
        name=str(doc.get("name", "scenario")),
        mode=mode,
        template=template,
        actions=actions,
        collection_items=list(doc.get("collection", {}).get("items", [])),
    )


def _collect_item_names(scenario: Scenario) -> set[str]:
    names: set[str] = set()
    for tpl in scenario.template.task_templates:
        names |= tpl.referenced_item_ids()
    for action in scenario.actions:
        if action.action != "submit":
            continue
        for answer_set in action.args.get("body", {}).get("answerSets", []):
            for answer in answer_set.get("answers", []):
                if "mediaItemName" in answer:
                    names.add(str(answer["mediaItemName"]))
    return names


def _build_resolver(scenario: Scenario) -> _SyntheticResolver:
    items: dict[str, MediaItem] = {}
    collection_id = scenario.template.task_templates[0].collection_id if scenario.template.task_templates else "col"
    for name in sorted(_collect_item_names(scenario)):
        items[name] = MediaItem(
            id=name,
            collection_id=collection_id,
            name=name,
            kind=MediaKind.video,
            duration_ms=0,
            duration_unknown=True,
        )
    for doc in scenario.collection_items:
        kind = MediaKind(doc.get("kind", "video"))
        item = MediaItem(
            id=doc.get("id", doc["name"]),
            collection_id=doc.get("collectionId", collection_id),
            name=doc["name"],
            kind=kind,
            duration_ms=int(doc.get("durationMs", 0)),
            duration_unknown=bool(doc.get("durationMs") is None and kind is MediaKind.video),
        )
        items[item.name] = item
        items[item.id] = item
    return _SyntheticResolver(items)


def _resolve_actors(scenario: Scenario) -> dict[str, Actor]:
    actors: dict[str, Actor] = {ADMIN_ACTOR_NAME: Actor(ADMIN_ACTOR_NAME, Role.admin)}
    team_users = {
        user_id for team in scenario.template.teams for user_id in team.user_ids
    }
    for action in scenario.actions:
        name = action.actor
        if name in actors:
            continue
        if name in team_users:
            actors[name] = Actor(name, Role.participant)
        elif action.action == "judge":
            actors[name] = Actor(name, Role.judge)
        else:
            raise ScenarioInvalidError(
                f"actor {name!r} is neither admin, a team member, nor a judge"
            )
    for action in scenario.actions:
        role = actors[action.actor].role
        if action.action == "judge" and role is not Role.judge and role is not Role.admin:
            raise ScenarioInvalidError(f"{action.actor} cannot judge (role {role.value})")
        if action.action in ("markReady", "submit") and role is not Role.participant:
            raise ScenarioInvalidError(f"{action.actor} cannot {action.action} (role {role.value})")
        if action.action == "adminCommand" and role is not Role.admin:
            raise ScenarioInvalidError(f"{action.actor} cannot issue admin commands")
    return actors


def _advance(engine: EvaluationEngine, clock, target_ms: int) -> None:
    """Step through task deadlines so timeouts land at their exact instant."""
    while True:
        deadline = engine.next_deadline_ms()
        if deadline is None or deadline > target_ms:
            break
        if deadline > clock.now_ms():
            clock.advance_to(deadline)
        engine.sweep()
    if target_ms > clock.now_ms():
        clock.advance_to(target_ms)


def _team_of(scenario: Scenario, user_id: str) -> str:
    team = scenario.template.team_of_user(user_id)
    if team is None:
        raise ScenarioInvalidError(f"{user_id} belongs to no team")
    return team.id


def _apply_admin_command(engine: EvaluationEngine, actor: Actor, args: Mapping[str, Any]) -> None:
    command = args.get("command")
    if command == "startEvaluation":
        engine.start_evaluation(actor)
    elif command == "nextTask":
        engine.next_task(str(args["templateId"]), actor)
    elif command == "startTask":
        engine.start_task(actor, task_id=args.get("taskId"))
    elif command == "abortTask":
        engine.abort_task(actor, task_id=args.get("taskId"))
    elif command == "adjustDuration":
        engine.adjust_duration(int(args["deltaMs"]), actor, task_id=args.get("taskId"))
    elif command == "endEvaluation":
        engine.end_evaluation(actor, force=bool(args.get("force", False)))
    elif command == "overrideVerdict":
        value = None if args.get("undecidable") else args.get("value")
        engine.override_verdict(
            str(args["submissionId"]), int(args.get("answerIndex", 0)), value, actor
        )
    else:
        raise ScenarioInvalidError(f"unknown admin command {command!r}")


def simulate(
    doc: Mapping[str, Any],
    *,
    base_dir: str | Path | None = None,
    realtime: bool = False,
    time_scale: float = 1.0,
) -> dict[str, Any]:
    """Run a scripted scenario over the full stack; returns the transcript.

    Virtual mode (the default) is a pure function of the scenario document:
    identical input yields a byte-identical transcript.
    """
    scenario = load_scenario(doc, base_dir=base_dir)
    actors = _resolve_actors(scenario)
    resolver = _build_resolver(scenario)
    clock = WallClock() if realtime else VirtualClock(0)
    epoch = clock.now_ms()
    store = MemoryEventStore()
    engine = EvaluationEngine.create(
        store,
        clock,
        SequentialIds(),
        scenario.template,
        scenario.mode,
        actors[ADMIN_ACTOR_NAME],
        collections=resolver,
        evaluation_id=f"sim-{scenario.name}",
    )
    for action in scenario.actions:
        target = epoch + action.at_ms
        if realtime:
            delay = (target - clock.now_ms()) / 1000.0 * time_scale
            if delay > 0:
                time.sleep(delay)
            engine.sweep()
        else:
            _advance(engine, clock, target)
        actor = actors[action.actor]
        if action.action == "adminCommand":
            _apply_admin_command(engine, actor, action.args)
        elif action.action == "markReady":
            engine.mark_ready(_team_of(scenario, action.actor), actor)
        elif action.action == "nextTask":
            engine.next_task(str(action.args["templateId"]), actor)
        elif action.action == "submit":
            engine.accept_submission(action.args.get("body", {}), actor)
        elif action.action == "judge":
            request = engine.dequeue_next(actor)
            if request is None:
                raise ScenarioInvalidError(
                    f"judge action at {action.at_ms} ms found an empty queue"
                )
            value = None if action.args.get("undecidable") else action.args.get("value")
            engine.render_verdict(request.id, value, actor)
    # Let every running task reach its deadline so scores are final.
    while True:
        deadline = engine.next_deadline_ms()
        if deadline is None:
            break
        if realtime:
            delay = (deadline - clock.now_ms()) / 1000.0 * time_scale
            if delay > 0:
                time.sleep(delay)
        elif deadline > clock.now_ms():
            clock.advance_to(deadline)
        engine.sweep()
    return {
        "scenario": scenario.name,
        "evaluationId": engine.state.id,
        "mode": scenario.mode.value,
        "events": [record.to_doc() for record in store.read()],
        "scoreboard": engine.scoreboard(),
    }
