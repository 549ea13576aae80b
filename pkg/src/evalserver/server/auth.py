"""Sessions and credentials for the HTTP surface."""

from __future__ import annotations

import hashlib
import secrets
import threading
from dataclasses import dataclass

from ..clock import Clock
from ..errors import AuthRequiredError, BadCredentialsError
from ..model import Role, UserDef

SESSION_TTL_MS = 12 * 3600 * 1000
_PBKDF2_ITERATIONS = 50_000


def hash_password(password: str) -> str:
    salt = secrets.token_hex(8)
    digest = hashlib.pbkdf2_hmac(
        "sha256", password.encode("utf-8"), salt.encode("ascii"), _PBKDF2_ITERATIONS
    )
    return f"pbkdf2${_PBKDF2_ITERATIONS}${salt}${digest.hex()}"


def verify_password(password: str, stored: str) -> bool:
    try:
        scheme, iterations, salt, expected = stored.split("$")
        if scheme != "pbkdf2":
            return False
        digest = hashlib.pbkdf2_hmac(
            "sha256", password.encode("utf-8"), salt.encode("ascii"), int(iterations)
        )
        return secrets.compare_digest(digest.hex(), expected)
    except ValueError:
        return False


@dataclass(frozen=True)
class Session:
    token: str
    user_id: str
    username: str
    role: Role
    expires_at_ms: int


class SessionStore:
    """Read-mostly token map; expiry checked on every lookup."""

    def __init__(self, clock: Clock) -> None:
        self._clock = clock
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}

    def open(self, user: UserDef) -> Session:
        token = secrets.token_urlsafe(16)  # 128 bits
        session = Session(
            token=token,
            user_id=user.id,
            username=user.username,
            role=user.role,
            expires_at_ms=self._clock.now_ms() + SESSION_TTL_MS,
        )
        with self._lock:
            self._sessions[token] = session
        return session

    def get(self, token: str | None) -> Session:
        if not token:
            raise AuthRequiredError("no session token")
        with self._lock:
            session = self._sessions.get(token)
            if session is None:
                raise AuthRequiredError("unknown session token")
            if self._clock.now_ms() >= session.expires_at_ms:
                del self._sessions[token]
                raise AuthRequiredError("session expired")
        return session

    def drop(self, token: str | None) -> None:
        if not token:
            return
        with self._lock:
            self._sessions.pop(token, None)


def check_credentials(user: UserDef | None, password: str) -> UserDef:
    if user is None or not verify_password(password, user.password_hash):
        raise BadCredentialsError("unknown user or wrong password")
    return user
