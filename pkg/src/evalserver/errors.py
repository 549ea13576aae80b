"""Error vocabulary shared by the engine, persistence and API layers.

Every failure carries a stable ``code`` string; the HTTP layer maps codes
to status responses, the CLI maps them to exit codes.
"""

from __future__ import annotations


class EvalServerError(Exception):
    code = "internal"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


def _error(code_: str) -> type[EvalServerError]:
    return type(code_[0].upper() + code_[1:] + "Error", (EvalServerError,), {"code": code_})


WrongStateError = _error("wrongState")
NotAuthorizedError = _error("notAuthorized")
TaskStillActiveError = _error("taskStillActive")
TasksStillActiveError = _error("tasksStillActive")
NoActiveTaskError = _error("noActiveTask")
UnknownTaskError = _error("unknownTask")
UnknownTeamError = _error("unknownTeam")
UnknownAnswerError = _error("unknownAnswer")
UnknownEvaluationError = _error("unknownEvaluation")
LimitExceededError = _error("limitExceeded")
MalformedAnswerError = _error("malformedAnswer")
DuplicateAnswerError = _error("duplicateAnswer")
WouldEndInPastError = _error("wouldEndInPast")
InvalidTemplateError = _error("invalidTemplate")
PolicyMismatchError = _error("policyMismatch")
NotAssignedError = _error("notAssigned")
AlreadyJudgedError = _error("alreadyJudged")
ScorerMismatchError = _error("scorerMismatch")
MissingRelevantTotalError = _error("missingRelevantTotal")
StorageFailureError = _error("storageFailure")
CorruptLogError = _error("corruptLog")
NotFoundError = _error("notFound")
InvalidRangeError = _error("invalidRange")
PathUnreadableError = _error("pathUnreadable")
DuplicateItemNameError = _error("duplicateItemName")
ParseError = _error("parseError")
ValidationFailedError = _error("validationFailed")
ScenarioInvalidError = _error("scenarioInvalid")
ConfigInvalidError = _error("configInvalid")
BadCredentialsError = _error("badCredentials")
AuthRequiredError = _error("authRequired")
