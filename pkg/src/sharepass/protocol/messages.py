"""Canonical message documents.

Every message is a JSON object with sorted keys and no whitespace, so two
parties that build the same message get identical bytes.  Integers travel
as lowercase hex strings, byte strings as standard base64.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Any

from .errors import MalformedMessage, ProtocolError

SHARING = "sharing"
RECONSTRUCTION = "reconstruction"
KEY_MANAGEMENT = "key-management"


def hx(value: int) -> str:
    return format(value, "x")


def unhx(text: str) -> int:
    if not isinstance(text, str) or not text or text != text.lower():
        raise MalformedMessage(f"bad hex field {text!r}")
    try:
        return int(text, 16)
    except ValueError:
        raise MalformedMessage(f"bad hex field {text!r}") from None


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def unb64(text: str) -> bytes:
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except (ValueError, AttributeError):
        raise MalformedMessage("bad base64 field") from None


def canonical(doc: Any) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode()


# message type -> phase, used by the logger to group traces
MESSAGE_PHASE = {
    "signup_mc": SHARING,
    "store_mc": SHARING,
    "register_mc": SHARING,
    "ms": SHARING,
    "signup_secret": SHARING,
    "signup_abort": SHARING,
    "stage_share": SHARING,
    "commitments": SHARING,
    "install": SHARING,
    "abort": SHARING,
    "abscissae": SHARING,
    "login": RECONSTRUCTION,
    "release": RECONSTRUCTION,
    "share": RECONSTRUCTION,
    "ems": RECONSTRUCTION,
    "new_abscissae": RECONSTRUCTION,
    "verify_login": RECONSTRUCTION,
    "kprime_envelope": RECONSTRUCTION,
    "finalize": RECONSTRUCTION,
    "login_abort": RECONSTRUCTION,
    "report": RECONSTRUCTION,
    "session": RECONSTRUCTION,
    "backup_key": KEY_MANAGEMENT,
    "backup_store": KEY_MANAGEMENT,
    "backup_commitments": KEY_MANAGEMENT,
    "restore_key": KEY_MANAGEMENT,
    "backup_release": KEY_MANAGEMENT,
    "backup_share": KEY_MANAGEMENT,
    "backup_shares": KEY_MANAGEMENT,
}


@dataclass(frozen=True)
class Message:
    type: str
    session_id: str = ""
    username: str = ""
    payload: dict = field(default_factory=dict)
    sender: str = ""

    def to_doc(self) -> dict:
        return {
            "type": self.type,
            "session_id": self.session_id,
            "username": self.username,
            "payload": self.payload,
            "sender": self.sender,
        }

    def encode(self) -> bytes:
        return canonical(self.to_doc())

    @classmethod
    def decode(cls, data: bytes) -> Message:
        try:
            doc = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedMessage(f"undecodable message: {exc}") from None
        if not isinstance(doc, dict) or not isinstance(doc.get("type"), str):
            raise MalformedMessage("message must be an object with a type")
        payload = doc.get("payload", {})
        if not isinstance(payload, dict):
            raise MalformedMessage("payload must be an object")
        return cls(
            type=doc["type"],
            session_id=str(doc.get("session_id", "")),
            username=str(doc.get("username", "")),
            payload=payload,
            sender=str(doc.get("sender", "")),
        )

    def reply(self, type_: str, payload: dict | None = None) -> Message:
        return Message(type_, self.session_id, self.username, payload or {})

    def field(self, name: str) -> Any:
        try:
            return self.payload[name]
        except KeyError:
            raise MalformedMessage(f"{self.type}: missing field {name!r}") from None

    @property
    def phase(self) -> str:
        return MESSAGE_PHASE.get(self.type, "")


def ack(msg: Message) -> Message:
    return msg.reply("ack")


def error_reply(msg: Message, err: ProtocolError) -> Message:
    return msg.reply("error", err.to_dict())
