"""Server-side registries: users, collections, templates, live evaluations.

One ServerContext backs both the HTTP app and the embedded CLI verbs. All
durable side state lives as plain JSON documents under the data directory;
evaluations themselves are event logs (see persistence).
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Any, Mapping

from ..clock import Clock, IdSource, RandomIds, WallClock
from ..collection import CollectionRegistry, IngestReport
from ..errors import (
    ParseError,
    UnknownEvaluationError,
    ValidationFailedError,
)
from ..lifecycle import Actor, EvaluationEngine
from ..model import (
    EvaluationMode,
    EvaluationTemplate,
    Role,
    UserDef,
    template_from_doc,
    template_to_doc,
    validate_template,
)
from ..persistence import FileEventStore, evaluation_dir, list_evaluation_ids, recover_state
from .auth import SessionStore, hash_password


class ServerContext:
    def __init__(
        self,
        data_dir: str | Path,
        *,
        clock: Clock | None = None,
        ids: IdSource | None = None,
        fsync: bool = True,
    ) -> None:
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.clock = clock or WallClock()
        self.ids = ids or RandomIds()
        self.fsync = fsync
        self.sessions = SessionStore(self.clock)
        self._lock = threading.Lock()
        self._users: dict[str, UserDef] = {}
        self._templates: dict[str, EvaluationTemplate] = {}
        self.collections = CollectionRegistry()
        self.engines: dict[str, EvaluationEngine] = {}
        self._load()

    # -- loading and saving side state

    def _users_path(self) -> Path:
        return self.data_dir / "users.json"

    def _collections_path(self) -> Path:
        return self.data_dir / "collections.json"

    def _templates_dir(self) -> Path:
        return self.data_dir / "templates"

    def _load(self) -> None:
        if self._users_path().exists():
            doc = json.loads(self._users_path().read_text())
            for u in doc.get("users", []):
                user = UserDef(u["id"], u["username"], u["passwordHash"], Role(u["role"]))
                self._users[user.id] = user
        if self._collections_path().exists():
            self.collections = CollectionRegistry.from_doc(
                json.loads(self._collections_path().read_text())
            )
        if self._templates_dir().is_dir():
            for path in sorted(self._templates_dir().glob("*.json")):
                tpl = template_from_doc(json.loads(path.read_text()))
                self._templates[tpl.id] = tpl
        for evaluation_id in list_evaluation_ids(self.data_dir):
            store = FileEventStore(evaluation_dir(self.data_dir, evaluation_id), fsync=self.fsync)
            state = recover_state(store)
            self.engines[evaluation_id] = EvaluationEngine(
                store, self.clock, self.ids, state, resolver=self.collections
            )

    def _save_users(self) -> None:
        doc = {
            "users": [
                {"id": u.id, "username": u.username, "passwordHash": u.password_hash, "role": u.role.value}
                for u in self._users.values()
            ]
        }
        self._users_path().write_text(json.dumps(doc, indent=2))

    def _save_collections(self) -> None:
        self._collections_path().write_text(json.dumps(self.collections.to_doc(), indent=2))

    # -- users

    def create_user(self, username: str, password: str, role: Role, user_id: str | None = None) -> UserDef:
        with self._lock:
            if any(u.username == username for u in self._users.values()):
                raise ValidationFailedError(f"username {username!r} already taken")
            user = UserDef(
                id=user_id or self.ids.new_id("user"),
                username=username,
                password_hash=hash_password(password),
                role=role,
            )
            self._users[user.id] = user
            self._save_users()
            return user

    def ensure_admin(self, username: str, password: str) -> UserDef:
        existing = self.user_by_name(username)
        if existing is not None:
            return existing
        return self.create_user(username, password, Role.admin)

    def user_by_name(self, username: str) -> UserDef | None:
        for user in self._users.values():
            if user.username == username:
                return user
        return None

    def user(self, user_id: str) -> UserDef | None:
        return self._users.get(user_id)

    def users(self) -> list[UserDef]:
        return list(self._users.values())

    # -- collections

    def ingest_collection(self, path: str | Path, name: str) -> IngestReport:
        report = self.collections.ingest(path, name)
        self._save_collections()
        return report

    # -- external hint resources (content-addressed files next to templates)

    def _resources_dir(self) -> Path:
        return self.data_dir / "resources"

    def store_resource(self, data: bytes, suffix: str = "") -> str:
        import hashlib

        if suffix and not suffix.startswith("."):
            suffix = "." + suffix
        name = hashlib.sha256(data).hexdigest()[:24] + suffix
        self._resources_dir().mkdir(parents=True, exist_ok=True)
        path = self._resources_dir() / name
        if not path.exists():
            path.write_bytes(data)
        return name

    def resource_path(self, name: str) -> Path:
        if "/" in name or "\\" in name or name.startswith("."):
            raise ParseError(f"illegal resource name {name!r}")
        return self._resources_dir() / name

    # -- templates

    def import_template(self, doc: Mapping[str, Any]) -> EvaluationTemplate:
        try:
            template = template_from_doc(doc)
        except (ValueError, TypeError, KeyError) as exc:
            raise ParseError(str(exc)) from exc
        violations = validate_template(template, self.collections)
        if violations:
            raise ValidationFailedError("; ".join(str(v) for v in violations))
        with self._lock:
            self._templates[template.id] = template
            self._templates_dir().mkdir(parents=True, exist_ok=True)
            path = self._templates_dir() / f"{template.id}.json"
            path.write_text(json.dumps(template_to_doc(template), indent=2))
        return template

    def export_template(self, template_id: str) -> dict[str, Any]:
        template = self._templates.get(template_id)
        if template is None:
            raise UnknownEvaluationError(f"no template {template_id!r}")
        return template_to_doc(template)

    def template(self, template_id: str) -> EvaluationTemplate | None:
        return self._templates.get(template_id)

    def templates(self) -> list[EvaluationTemplate]:
        return list(self._templates.values())

    # -- evaluations

    def create_evaluation(self, template_id: str, mode: EvaluationMode, actor: Actor) -> EvaluationEngine:
        template = self._templates.get(template_id)
        if template is None:
            raise UnknownEvaluationError(f"no template {template_id!r}")
        with self._lock:
            evaluation_id = self.ids.new_id("eval")
            store = FileEventStore(evaluation_dir(self.data_dir, evaluation_id), fsync=self.fsync)
            engine = EvaluationEngine.create(
                store,
                self.clock,
                self.ids,
                template,
                mode,
                actor,
                collections=self.collections,
                evaluation_id=evaluation_id,
            )
            self.engines[evaluation_id] = engine
            return engine

    def engine(self, evaluation_id: str) -> EvaluationEngine:
        engine = self.engines.get(evaluation_id)
        if engine is None:
            raise UnknownEvaluationError(f"no evaluation {evaluation_id!r}")
        return engine

    def actor_for(self, user_id: str, role: Role) -> Actor:
        return Actor(user_id, role)
