"""COD-coded protocol errors and their fatality classes."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Severity(enum.Enum):
    NON_FATAL = "non-fatal"
    # aborts the request that triggered it, the system carries on
    REQUEST_FATAL = "request-fatal"
    FATAL = "fatal"

    @property
    def is_fatal(self) -> bool:
        return self is not Severity.NON_FATAL


class Code(str, enum.Enum):
    ALREADY_REGISTERED = "COD100"
    SERVICE_HAS_USER = "COD150"
    EARLY_CALL = "COD170"
    MC_MISMATCH = "COD400"
    NOT_REGISTERED = "COD600"
    WRONG_ABSCISSA = "COD700"
    INCONSISTENT_DEALING = "COD750"
    NOT_ENOUGH_SHARES = "COD800"
    SOME_SHARES_BAD = "COD830"
    TOO_MANY_SHARES_BAD = "COD850"
    SECRET_MISMATCH = "COD860"
    SERVICE_REJECTS_LOGIN = "COD1000"
    CLIENT_REJECTS_SERVICE = "COD1500"
    REPORT_KPRIME = "COD2000"
    REPORT_CLIENT_PROOF = "COD2400"
    REPORT_MC_PRIME = "COD2600"


SEVERITY: dict[Code, Severity] = {
    Code.ALREADY_REGISTERED: Severity.REQUEST_FATAL,
    Code.SERVICE_HAS_USER: Severity.REQUEST_FATAL,
    Code.EARLY_CALL: Severity.REQUEST_FATAL,
    Code.MC_MISMATCH: Severity.FATAL,
    Code.NOT_REGISTERED: Severity.FATAL,
    Code.WRONG_ABSCISSA: Severity.NON_FATAL,
    Code.INCONSISTENT_DEALING: Severity.NON_FATAL,
    Code.NOT_ENOUGH_SHARES: Severity.FATAL,
    Code.SOME_SHARES_BAD: Severity.NON_FATAL,
    Code.TOO_MANY_SHARES_BAD: Severity.FATAL,
    Code.SECRET_MISMATCH: Severity.FATAL,
    Code.SERVICE_REJECTS_LOGIN: Severity.FATAL,
    Code.CLIENT_REJECTS_SERVICE: Severity.FATAL,
    Code.REPORT_KPRIME: Severity.FATAL,
    Code.REPORT_CLIENT_PROOF: Severity.FATAL,
    Code.REPORT_MC_PRIME: Severity.FATAL,
}

PHASE: dict[Code, str] = {
    code: ("sharing" if code in (
        Code.ALREADY_REGISTERED, Code.SERVICE_HAS_USER, Code.EARLY_CALL, Code.MC_MISMATCH,
    ) else "reconstruction")
    for code in Code
}


def classify_error(code: str | Code) -> Severity:
    try:
        return SEVERITY[Code(code)]
    except ValueError:
        raise ValueError(f"unknown error code {code!r}") from None


@dataclass(frozen=True)
class CheckSpec:
    number: int
    actor: str
    operation: str
    codes: tuple[Code, ...]
    description: str


# The seven reconstruction-phase checks, each owned by one operation.
RECONSTRUCTION_CHECKS: tuple[CheckSpec, ...] = (
    CheckSpec(1, "shareholder", "shareholder_release", (Code.WRONG_ABSCISSA,),
              "digest of the presented abscissa matches the stored digest"),
    CheckSpec(2, "shareholder", "shareholder_release", (Code.INCONSISTENT_DEALING,),
              "stored share verifies against the commitments at that abscissa"),
    CheckSpec(3, "dealer", "dealer_reconstruct", (Code.SOME_SHARES_BAD, Code.TOO_MANY_SHARES_BAD),
              "each returned share verifies against the commitments"),
    CheckSpec(4, "dealer", "dealer_reconstruct", (Code.SECRET_MISMATCH,),
              "interpolated secret equals the blinded secret sent by the client"),
    CheckSpec(5, "service", "service_verify_login", (Code.SERVICE_REJECTS_LOGIN,),
              "forwarded EMS equals the client's and opens to a value matching D_k[MC]"),
    CheckSpec(6, "client", "client_verify_service", (Code.CLIENT_REJECTS_SERVICE,),
              "D_k'[MS] equals MC"),
    CheckSpec(7, "dealer", "dealer_final_checks",
              (Code.REPORT_KPRIME, Code.REPORT_CLIENT_PROOF, Code.REPORT_MC_PRIME),
              "service report is consistent with MS, MC and the client's MC'"),
)


class ProtocolError(Exception):
    def __init__(self, code: str | Code, role: str = "", username: str = "", detail: str = ""):
        self.code = Code(code)
        self.role = role
        self.username = username
        self.detail = detail
        super().__init__(f"{self.code.value} [{role}] {username}: {detail}")

    @property
    def severity(self) -> Severity:
        return SEVERITY[self.code]

    @property
    def fatal(self) -> bool:
        return self.severity.is_fatal

    def to_dict(self) -> dict:
        return {"code": self.code.value, "role": self.role, "username": self.username,
                "detail": self.detail}

    @classmethod
    def from_dict(cls, doc: dict) -> ProtocolError:
        return cls(doc["code"], doc.get("role", ""), doc.get("username", ""), doc.get("detail", ""))


class TransportError(Exception):
    """A peer could not be reached or did not answer in time."""


class Unreachable(TransportError):
    pass


class DeliveryTimeout(TransportError):
    pass


class SessionBusy(Exception):
    """Another phase for the same username is in flight."""


class MalformedMessage(ValueError):
    pass


class RemoteFailure(Exception):
    """Peer reported a non-protocol failure (bad request, internal error)."""
