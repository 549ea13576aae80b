"""Pydantic request/response models for the public API."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field


class LoginRequest(BaseModel):
    username: str
    password: str


class LoginResponse(BaseModel):
    token: str
    userId: str
    username: str
    role: str
    expiresAtMs: int


class CreateUserRequest(BaseModel):
    username: str
    password: str
    role: str
    id: Optional[str] = None


class UserResponse(BaseModel):
    id: str
    username: str
    role: str


class IngestRequest(BaseModel):
    path: str
    name: str


class CreateEvaluationRequest(BaseModel):
    templateId: str
    mode: str = "interactiveSync"


class ReadyRequest(BaseModel):
    teamId: Optional[str] = None


class NextTaskRequest(BaseModel):
    templateId: str


class AdminCommandRequest(BaseModel):
    model_config = ConfigDict(extra="allow")

    command: str
    templateId: Optional[str] = None
    taskId: Optional[str] = None
    deltaMs: Optional[int] = None
    force: bool = False
    submissionId: Optional[str] = None
    answerIndex: Optional[int] = None
    value: Optional[float] = None
    undecidable: bool = False


class AnswerBody(BaseModel):
    model_config = ConfigDict(extra="ignore")

    text: Optional[str] = None
    mediaItemName: Optional[str] = None
    start: Optional[int] = None
    end: Optional[int] = None
    weight: Optional[float] = None


class AnswerSetBody(BaseModel):
    model_config = ConfigDict(extra="ignore")

    taskId: Optional[str] = None
    taskName: Optional[str] = None
    answers: list[AnswerBody] = Field(default_factory=list)


class SubmissionBody(BaseModel):
    model_config = ConfigDict(extra="ignore")

    answerSets: list[AnswerSetBody] = Field(default_factory=list)


class AnswerSetStatus(BaseModel):
    taskId: str
    submissionId: str
    status: str


class SubmitResponse(BaseModel):
    submissionIds: list[str]
    answerSets: list[AnswerSetStatus]
    deduplicated: bool = False


class VerdictRequest(BaseModel):
    requestId: str
    value: Optional[float] = None
    undecidable: bool = False


class JudgeNextResponse(BaseModel):
    requestId: str
    payload: dict[str, Any]
    taskName: str
    taskDescription: list[str]
    mediaRef: Optional[dict[str, Any]] = None


class AcknowledgeResponse(BaseModel):
    ok: bool = True
    detail: Optional[str] = None
