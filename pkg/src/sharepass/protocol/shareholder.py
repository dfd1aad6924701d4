"""Shareholder role: stores one dual share per user and releases it on request."""

from __future__ import annotations

import hmac

from ..pedersen import DualShare, hash_abscissa, verify_share
from .base import Role
from .errors import Code, MalformedMessage
from .messages import Message, ack, hx, unhx

SUSPICION_LIMIT = 3
COOLDOWN_SECONDS = 60.0


class LockedOut(MalformedMessage):
    """Raised while a username is in its cooling-off period."""


def _user_key(username: str) -> str:
    return "user:" + username


def _backup_key(owner: str) -> str:
    return "backup:" + owner


def _commitments(raw) -> list[int]:
    if not isinstance(raw, list) or not raw:
        raise MalformedMessage("commitments must be a non-empty list")
    return [unhx(c) for c in raw]


class Shareholder(Role):
    role = "shareholder"

    def __init__(self, name, params, network=None, **kw):
        super().__init__(name, params, network, **kw)
        # volatile: staging areas and suspicion counters never hit the store
        self._staged: dict[str, dict] = {}
        self._staged_backup: dict[str, dict] = {}
        self._strikes: dict[str, int] = {}
        self._locked_until: dict[str, float] = {}

    # -- sharing ------------------------------------------------------------
    def on_stage_share(self, msg: Message) -> Message:
        s, t_val = unhx(msg.field("s")), unhx(msg.field("t"))
        digest = msg.field("digest")
        if not isinstance(digest, str) or len(digest) != 64:
            raise MalformedMessage("digest must be 32 bytes of hex")
        with self._lock:
            self._staged[msg.username] = {
                "session": msg.session_id, "s": hx(s), "t": hx(t_val), "digest": digest,
            }
        return ack(msg)

    def on_commitments(self, msg: Message) -> Message:
        cs = _commitments(msg.field("commitments"))
        with self._lock:
            staged = self._staged.get(msg.username)
            if staged is None or staged["session"] != msg.session_id:
                raise MalformedMessage("commitments without a staged share")
            staged["commitments"] = [hx(c) for c in cs]
        return ack(msg)

    def on_install(self, msg: Message) -> Message:
        with self._lock:
            staged = self._staged.get(msg.username)
            if staged is None or staged["session"] != msg.session_id or "commitments" not in staged:
                raise MalformedMessage("install without a complete staged share")
            del self._staged[msg.username]
            record = {k: v for k, v in staged.items() if k != "session"}
            record["username"] = msg.username
            self.store.put(_user_key(msg.username), record)
        return ack(msg)

    def on_abort(self, msg: Message) -> Message:
        with self._lock:
            staged = self._staged.get(msg.username)
            if staged is not None and staged["session"] == msg.session_id:
                del self._staged[msg.username]
        return ack(msg)

    # -- reconstruction -----------------------------------------------------
    def _check_lockout(self, username: str, session_id: str) -> None:
        until = self._locked_until.get(username)
        if until is None:
            return
        if self.clock() < until:
            self.warn(username, "release refused: cooling off after repeated wrong abscissae", session_id)
            raise LockedOut(f"{self.name}: {username} is locked out")
        del self._locked_until[username]
        self._strikes.pop(username, None)

    def _strike(self, username: str, session_id: str) -> None:
        count = self._strikes.get(username, 0) + 1
        self._strikes[username] = count
        if count >= SUSPICION_LIMIT:
            self._locked_until[username] = self.clock() + COOLDOWN_SECONDS
            self.warn(username, f"suspicious: {count} wrong abscissae in a row", session_id)

    def on_release(self, msg: Message) -> Message:
        user, sid = msg.username, msg.session_id
        x = unhx(msg.field("x"))
        with self._lock:
            self._check_lockout(user, sid)
            record = self.store.get(_user_key(user))
            if record is None:
                raise MalformedMessage(f"{self.name} holds no share for {user}")
            if not hmac.compare_digest(hash_abscissa(x).hex(), record["digest"]):
                self._strike(user, sid)
                raise self.fail(Code.WRONG_ABSCISSA, user, "abscissa digest mismatch", sid)
            self._strikes.pop(user, None)
        share = DualShare(x, unhx(record["s"]), unhx(record["t"]))
        if not verify_share(share, [unhx(c) for c in record["commitments"]], self.params):
            raise self.fail(Code.INCONSISTENT_DEALING, user, "stored share fails its commitments", sid)
        return msg.reply("share", {"s": record["s"], "t": record["t"]})

    # -- service key backup -------------------------------------------------
    def on_backup_store(self, msg: Message) -> Message:
        s, t_val = unhx(msg.field("s")), unhx(msg.field("t"))
        with self._lock:
            self._staged_backup[msg.username] = {
                "session": msg.session_id, "s": hx(s), "t": hx(t_val),
            }
        return ack(msg)

    def on_backup_commitments(self, msg: Message) -> Message:
        cs = _commitments(msg.field("commitments"))
        with self._lock:
            staged = self._staged_backup.pop(msg.username, None)
            if staged is None or staged["session"] != msg.session_id:
                raise MalformedMessage("backup commitments without a staged share")
            self.store.put(_backup_key(msg.username), {
                "owner": msg.username, "s": staged["s"], "t": staged["t"],
                "commitments": [hx(c) for c in cs],
            })
        return ack(msg)

    def on_backup_release(self, msg: Message) -> Message:
        presented = [hx(c) for c in _commitments(msg.field("commitments"))]
        record = self.store.get(_backup_key(msg.username))
        if record is None or record["commitments"] != presented:
            # mismatch: stay silent about which part differed
            return msg.reply("withheld")
        return msg.reply("backup_share", {"s": record["s"], "t": record["t"]})
