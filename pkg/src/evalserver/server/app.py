"""HTTP surface: authentication, submissions, state views, administration,
judgement, template and collection management, media ranges, exports.

Handlers are thin and synchronous; they run in the threadpool and delegate
to the per-evaluation engines, which serialize internally. Every state
response carries the server clock so clients can align countdowns.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import mimetypes
import re
from pathlib import Path
from typing import Any, Optional

from fastapi import Depends, FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from ..collection import read_range, resolve_byte_range
from ..errors import EvalServerError, InvalidRangeError, NotFoundError
from ..judgement import RequestState
from ..model import Channel, EvaluationMode, PayloadKind, Role
from ..persistence import export_full_json, export_scores_csv
from .auth import Session
from .context import ServerContext
from . import schemas

API_PREFIX = "/api/v1"

_STATUS_BY_CODE = {
    "badCredentials": 401,
    "authRequired": 401,
    "notAuthorized": 403,
    "unknownTeam": 403,
    "unknownEvaluation": 404,
    "unknownTask": 404,
    "unknownAnswer": 404,
    "notFound": 404,
    "noActiveTask": 412,
    "limitExceeded": 429,
    "malformedAnswer": 400,
    "parseError": 400,
    "validationFailed": 400,
    "invalidTemplate": 400,
    "missingRelevantTotal": 400,
    "configInvalid": 400,
    "scenarioInvalid": 400,
    "duplicateAnswer": 409,
    "wrongState": 409,
    "taskStillActive": 409,
    "tasksStillActive": 409,
    "notAssigned": 409,
    "alreadyJudged": 409,
    "policyMismatch": 409,
    "scorerMismatch": 409,
    "wouldEndInPast": 409,
    "duplicateItemName": 409,
    "invalidRange": 416,
    "pathUnreadable": 400,
    "storageFailure": 500,
    "corruptLog": 500,
}

_RANGE_RE = re.compile(r"bytes=(\d*)-(\d*)$")


def create_app(
    context: ServerContext,
    *,
    sweep_interval_ms: int = 250,
    web_root: str | Path | None = None,
) -> FastAPI:
    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        stop = asyncio.Event()

        async def sweeper() -> None:
            while not stop.is_set():
                with contextlib.suppress(asyncio.TimeoutError):
                    await asyncio.wait_for(stop.wait(), sweep_interval_ms / 1000.0)
                for engine in list(context.engines.values()):
                    try:
                        engine.sweep()
                    except EvalServerError:
                        pass

        task = asyncio.create_task(sweeper())
        yield
        stop.set()
        task.cancel()
        with contextlib.suppress(asyncio.CancelledError):
            await task

    app = FastAPI(
        title="evalserver",
        version="0.1.0",
        openapi_url=f"{API_PREFIX}/openapi.json",
        lifespan=lifespan,
    )
    app.state.context = context

    @app.exception_handler(EvalServerError)
    async def eval_error_handler(_request: Request, exc: EvalServerError):
        status = _STATUS_BY_CODE.get(exc.code, 500)
        return JSONResponse({"error": exc.code, "message": exc.message}, status_code=status)

    @app.exception_handler(RequestValidationError)
    async def validation_error_handler(_request: Request, exc: RequestValidationError):
        return JSONResponse({"error": "malformedBody", "message": str(exc)}, status_code=400)

    def session_of(request: Request) -> Session:
        # An explicit bearer header outranks the ambient cookie.
        token = None
        header = request.headers.get("authorization", "")
        if header.lower().startswith("bearer "):
            token = header[7:].strip()
        if not token:
            token = request.cookies.get("session")
        return context.sessions.get(token)

    def require(session: Session, *roles: Role) -> None:
        if session.role not in roles:
            from ..errors import NotAuthorizedError

            raise NotAuthorizedError(f"{session.role.value} may not call this endpoint")

    def actor(session: Session):
        return context.actor_for(session.user_id, session.role)

    # -- auth

    @app.post(f"{API_PREFIX}/login", response_model=schemas.LoginResponse)
    def login(body: schemas.LoginRequest, response: Response):
        from .auth import check_credentials

        user = check_credentials(context.user_by_name(body.username), body.password)
        session = context.sessions.open(user)
        response.set_cookie("session", session.token, httponly=True)
        return schemas.LoginResponse(
            token=session.token,
            userId=session.user_id,
            username=session.username,
            role=session.role.value,
            expiresAtMs=session.expires_at_ms,
        )

    @app.post(f"{API_PREFIX}/logout", response_model=schemas.AcknowledgeResponse)
    def logout(request: Request, response: Response):
        token = request.cookies.get("session")
        context.sessions.drop(token)
        response.delete_cookie("session")
        return schemas.AcknowledgeResponse()

    @app.get(f"{API_PREFIX}/user", response_model=schemas.UserResponse)
    def whoami(session: Session = Depends(session_of)):
        return schemas.UserResponse(id=session.user_id, username=session.username, role=session.role.value)

    @app.post(f"{API_PREFIX}/users", response_model=schemas.UserResponse)
    def create_user(body: schemas.CreateUserRequest, session: Session = Depends(session_of)):
        require(session, Role.admin)
        user = context.create_user(body.username, body.password, Role(body.role), user_id=body.id)
        return schemas.UserResponse(id=user.id, username=user.username, role=user.role.value)

    @app.get(f"{API_PREFIX}/users")
    def list_users(session: Session = Depends(session_of)):
        require(session, Role.admin)
        return [
            {"id": u.id, "username": u.username, "role": u.role.value} for u in context.users()
        ]

    # -- collections and media

    @app.post(f"{API_PREFIX}/collections/ingest")
    def ingest_collection(body: schemas.IngestRequest, session: Session = Depends(session_of)):
        require(session, Role.admin)
        report = context.ingest_collection(body.path, body.name)
        return {
            "collectionId": report.collection.id,
            "items": len(report.items),
            "warnings": report.warnings,
        }

    @app.get(f"{API_PREFIX}/collections")
    def list_collections(session: Session = Depends(session_of)):
        return [
            {
                "id": c.id,
                "name": c.name,
                "basePath": c.base_path,
                "items": [
                    {
                        "id": i.id,
                        "name": i.name,
                        "kind": i.kind.value,
                        "durationMs": i.duration_ms,
                    }
                    for i in context.collections.items_of(c.id)
                ],
            }
            for c in context.collections.collections()
        ]

    @app.get(f"{API_PREFIX}/media/{{collection_id}}/{{item_ref}}")
    def serve_media(collection_id: str, item_ref: str, request: Request, session: Session = Depends(session_of)):
        item = context.collections.require_item(collection_id, item_ref)
        path = context.collections.item_path(item)
        if not path.is_file():
            raise NotFoundError(f"media file for {item.name} missing on disk")
        total = path.stat().st_size
        content_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
        range_header = request.headers.get("range")
        if range_header:
            match = _RANGE_RE.match(range_header.strip())
            if not match:
                raise InvalidRangeError(f"unsupported range {range_header!r}")
            start = int(match.group(1)) if match.group(1) else None
            end = int(match.group(2)) if match.group(2) else None
            if start is None and end is not None:
                # suffix form bytes=-N
                start, end = max(0, total - end), total - 1
            rng = resolve_byte_range(total, start, end)
            return StreamingResponse(
                read_range(path, rng),
                status_code=206,
                media_type=content_type,
                headers={
                    "Content-Range": f"bytes {rng.start}-{rng.end}/{rng.total}",
                    "Accept-Ranges": "bytes",
                    "Content-Length": str(rng.length),
                },
            )
        rng = resolve_byte_range(total, None, None)
        return StreamingResponse(
            read_range(path, rng),
            media_type=content_type,
            headers={"Accept-Ranges": "bytes", "Content-Length": str(total)},
        )

    # -- external hint resources

    @app.post(f"{API_PREFIX}/resources")
    async def upload_resource(request: Request, suffix: str = ""):
        session = session_of(request)
        require(session, Role.admin)
        data = await request.body()
        if not data:
            from ..errors import ParseError

            raise ParseError("empty resource upload")
        name = context.store_resource(data, suffix)
        return {"resource": name}

    @app.get(f"{API_PREFIX}/resources/{{name}}")
    def serve_resource(name: str, request: Request, session: Session = Depends(session_of)):
        path = context.resource_path(name)
        if not path.is_file():
            raise NotFoundError(f"no resource {name!r}")
        total = path.stat().st_size
        content_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
        rng = resolve_byte_range(total, None, None)
        return StreamingResponse(
            read_range(path, rng),
            media_type=content_type,
            headers={"Content-Length": str(total)},
        )

    # -- templates

    @app.post(f"{API_PREFIX}/templates")
    def import_template(doc: dict[str, Any], session: Session = Depends(session_of)):
        require(session, Role.admin)
        template = context.import_template(doc)
        return {"templateId": template.id, "name": template.name}

    @app.get(f"{API_PREFIX}/templates")
    def list_templates(session: Session = Depends(session_of)):
        return [{"id": t.id, "name": t.name} for t in context.templates()]

    @app.get(f"{API_PREFIX}/templates/{{template_id}}")
    def export_template(template_id: str, session: Session = Depends(session_of)):
        return context.export_template(template_id)

    # -- evaluations

    @app.post(f"{API_PREFIX}/evaluations")
    def create_evaluation(body: schemas.CreateEvaluationRequest, session: Session = Depends(session_of)):
        require(session, Role.admin)
        engine = context.create_evaluation(body.templateId, EvaluationMode(body.mode), actor(session))
        return {"evaluationId": engine.state.id}

    @app.get(f"{API_PREFIX}/evaluations")
    def list_evaluations(session: Session = Depends(session_of)):
        return {
            "serverTimeMs": context.clock.now_ms(),
            "evaluations": [
                {
                    "id": e.state.id,
                    "name": e.state.template.name,
                    "mode": e.state.mode.value,
                    "state": e.state.state.value,
                }
                for e in context.engines.values()
            ],
        }

    @app.get(f"{API_PREFIX}/evaluations/{{evaluation_id}}/state")
    def evaluation_state(evaluation_id: str, session: Session = Depends(session_of)):
        engine = context.engine(evaluation_id)
        if session.role is Role.admin:
            return engine.admin_view()
        if session.role is Role.participant:
            team = engine.state.template.team_of_user(session.user_id)
            if team is None:
                return engine.viewer_view()
            return engine.agent_view(team.id, actor(session))
        return engine.viewer_view()

    @app.post(f"{API_PREFIX}/evaluations/{{evaluation_id}}/submit", response_model=schemas.SubmitResponse)
    def submit(
        evaluation_id: str,
        body: schemas.SubmissionBody,
        request: Request,
        session: Session = Depends(session_of),
    ):
        require(session, Role.participant)
        engine = context.engine(evaluation_id)
        result = engine.accept_submission(
            body.model_dump(exclude_none=True),
            actor(session),
            dedup_key=request.headers.get("x-submission-dedup"),
        )
        return schemas.SubmitResponse(
            submissionIds=list(result.submission_ids),
            answerSets=[
                schemas.AnswerSetStatus(taskId=r.task_id, submissionId=r.submission_id, status=r.status)
                for r in result.answer_sets
            ],
            deduplicated=result.deduplicated,
        )

    @app.post(f"{API_PREFIX}/evaluations/{{evaluation_id}}/ready", response_model=schemas.AcknowledgeResponse)
    def mark_ready(
        evaluation_id: str, body: schemas.ReadyRequest, session: Session = Depends(session_of)
    ):
        require(session, Role.participant, Role.admin)
        engine = context.engine(evaluation_id)
        team_id = body.teamId
        if team_id is None:
            team = engine.state.template.team_of_user(session.user_id)
            if team is None:
                from ..errors import UnknownTeamError

                raise UnknownTeamError("user belongs to no participating team")
            team_id = team.id
        run = engine.mark_ready(team_id, actor(session))
        return schemas.AcknowledgeResponse(detail=f"task {run.id} {run.state.value}")

    @app.post(f"{API_PREFIX}/evaluations/{{evaluation_id}}/next-task", response_model=schemas.AcknowledgeResponse)
    def next_task(
        evaluation_id: str, body: schemas.NextTaskRequest, session: Session = Depends(session_of)
    ):
        require(session, Role.participant)
        engine = context.engine(evaluation_id)
        run = engine.next_task(body.templateId, actor(session))
        return schemas.AcknowledgeResponse(detail=f"task {run.id} staged")

    @app.post(f"{API_PREFIX}/evaluations/{{evaluation_id}}/admin", response_model=schemas.AcknowledgeResponse)
    def admin_command(
        evaluation_id: str, body: schemas.AdminCommandRequest, session: Session = Depends(session_of)
    ):
        require(session, Role.admin)
        engine = context.engine(evaluation_id)
        who = actor(session)
        command = body.command
        if command == "startEvaluation":
            engine.start_evaluation(who)
        elif command == "nextTask":
            if not body.templateId:
                raise RequestValidationError([{"msg": "templateId required"}])
            engine.next_task(body.templateId, who)
        elif command == "startTask":
            engine.start_task(who, task_id=body.taskId)
        elif command == "abortTask":
            engine.abort_task(who, task_id=body.taskId)
        elif command == "adjustDuration":
            if body.deltaMs is None:
                raise RequestValidationError([{"msg": "deltaMs required"}])
            engine.adjust_duration(body.deltaMs, who, task_id=body.taskId)
        elif command == "endEvaluation":
            engine.end_evaluation(who, force=body.force)
        elif command == "overrideVerdict":
            if body.submissionId is None or body.answerIndex is None:
                raise RequestValidationError([{"msg": "submissionId and answerIndex required"}])
            value = None if body.undecidable else body.value
            engine.override_verdict(body.submissionId, body.answerIndex, value, who)
        else:
            return JSONResponse(
                {"error": "unknownCommand", "message": f"no admin command {command!r}"}, status_code=400
            )
        return schemas.AcknowledgeResponse(detail=command)

    # -- judgement

    @app.get(f"{API_PREFIX}/evaluations/{{evaluation_id}}/judge/next")
    def judge_next(evaluation_id: str, session: Session = Depends(session_of)):
        require(session, Role.judge, Role.admin)
        engine = context.engine(evaluation_id)
        request = engine.dequeue_next(actor(session))
        if request is None:
            return Response(status_code=204)
        template = engine.state.template.task_template(
            engine.state.task(request.task_id).template_id
        )
        texts = [
            entry.payload.text
            for entry in template.timeline.entries
            if entry.channel is Channel.text and entry.payload is not None
        ]
        media_ref = None
        if request.payload.kind is not PayloadKind.text and request.payload.item_id:
            item = context.collections.get(template.collection_id, request.payload.item_id)
            media_ref = {
                "collectionId": template.collection_id,
                "itemId": request.payload.item_id,
                "itemName": item.name if item else request.payload.item_id,
            }
        from ..model import payload_to_doc

        return schemas.JudgeNextResponse(
            requestId=request.id,
            payload=payload_to_doc(request.payload),
            taskName=template.name,
            taskDescription=texts,
            mediaRef=media_ref,
        ).model_dump()

    @app.post(f"{API_PREFIX}/evaluations/{{evaluation_id}}/judge/verdict", response_model=schemas.AcknowledgeResponse)
    def judge_verdict(
        evaluation_id: str, body: schemas.VerdictRequest, session: Session = Depends(session_of)
    ):
        require(session, Role.judge, Role.admin)
        engine = context.engine(evaluation_id)
        value = None if body.undecidable else body.value
        verdict = engine.render_verdict(body.requestId, value, actor(session))
        return schemas.AcknowledgeResponse(detail=verdict.kind)

    # -- exports

    @app.get(f"{API_PREFIX}/evaluations/{{evaluation_id}}/export")
    def export_results(
        evaluation_id: str, format: str = "scoresCsv", session: Session = Depends(session_of)
    ):
        engine = context.engine(evaluation_id)
        if format == "scoresCsv":
            return PlainTextResponse(export_scores_csv(engine), media_type="text/csv")
        if format == "fullJson":
            require(session, Role.admin)
            return JSONResponse(json.loads(json.dumps(export_full_json(engine))))
        return JSONResponse(
            {"error": "unknownFormat", "message": f"no export format {format!r}"}, status_code=400
        )

    if web_root is not None and Path(web_root).is_dir():
        app.mount("/", StaticFiles(directory=str(web_root), html=True), name="webui")

    return app
