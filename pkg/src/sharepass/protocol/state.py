"""Client-held credential material and the login request it produces."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import MalformedMessage
from .messages import b64, hx, unb64, unhx

FORMAT_VERSION = 1


@dataclass(frozen=True)
class CredentialState:
    """Everything the client keeps between sessions, except the password.

    Replaced as a whole after every successful login.
    """

    username: str
    r: int
    r_prime: int
    k: bytes
    mc: bytes
    ms: bytes
    abscissae: tuple[int, ...]
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "username": self.username,
            "r": hx(self.r),
            "r_prime": hx(self.r_prime),
            "k": b64(self.k),
            "mc": b64(self.mc),
            "ms": b64(self.ms),
            "abscissae": [hx(x) for x in self.abscissae],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> CredentialState:
        if not isinstance(doc, dict):
            raise MalformedMessage("credential state must be an object")
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise MalformedMessage(f"unsupported state format_version {version!r}")
        try:
            xs = doc["abscissae"]
            if not isinstance(xs, list) or not xs:
                raise MalformedMessage("abscissae must be a non-empty list")
            state = cls(
                username=str(doc["username"]),
                r=unhx(doc["r"]),
                r_prime=unhx(doc["r_prime"]),
                k=unb64(doc["k"]),
                mc=unb64(doc["mc"]),
                ms=unb64(doc["ms"]),
                abscissae=tuple(unhx(x) for x in xs),
            )
        except KeyError as exc:
            raise MalformedMessage(f"credential state missing field {exc}") from None
        if not state.username or len(state.k) != 32:
            raise MalformedMessage("credential state has an invalid username or key")
        if len(set(state.abscissae)) != len(state.abscissae) or 0 in state.abscissae:
            raise MalformedMessage("abscissae must be distinct and nonzero")
        return state


@dataclass(frozen=True)
class LoginRequest:
    s_prime: int
    abscissae: tuple[int, ...]
    s_double_prime: int
    mc_prime: bytes
    ems: bytes

    def to_payload(self) -> dict:
        return {
            "s_prime": hx(self.s_prime),
            "abscissae": [hx(x) for x in self.abscissae],
            "s_double_prime": hx(self.s_double_prime),
            "mc_prime": b64(self.mc_prime),
            "ems": b64(self.ems),
        }

    @classmethod
    def from_payload(cls, doc: dict) -> LoginRequest:
        try:
            return cls(
                s_prime=unhx(doc["s_prime"]),
                abscissae=tuple(unhx(x) for x in doc["abscissae"]),
                s_double_prime=unhx(doc["s_double_prime"]),
                mc_prime=unb64(doc["mc_prime"]),
                ems=unb64(doc["ems"]),
            )
        except (KeyError, TypeError) as exc:
            raise MalformedMessage(f"malformed login request: {exc}") from None


@dataclass
class NextSecrets:
    """Client-side values for the session after this one; never sent in clear."""

    r: int
    r_prime: int
    k: bytes
    mc: bytes
    extra: dict = field(default_factory=dict)
