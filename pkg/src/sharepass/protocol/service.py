"""Service role: issues MS at sign-up, checks logins, grants session tokens.

The service key k' is a scalar mod q.  With ``backup_keys`` enabled it is
shared out to the shareholders (through the dealer) and only the abscissae
and commitments of that sharing are persisted.
"""

from __future__ import annotations

import hmac
import json
from dataclasses import dataclass

from ..group import random_bytes, random_nonzero
from ..pedersen import DualShare, draw_dealing, evaluate_dealing, verify_share
from ..shamir import SharePoint, reconstruct_at_zero
from .base import DEALER, Role
from .crypto import (
    AuthenticationFailure,
    key_from_ciphertext,
    key_from_scalar,
    sym_decrypt,
    sym_encrypt,
)
from .errors import Code, MalformedMessage, ProtocolError, RemoteFailure, TransportError
from .messages import Message, ack, b64, hx, unb64, unhx


class KeyUnavailable(RemoteFailure):
    pass


@dataclass
class PendingLogin:
    session_id: str
    ems: bytes
    verified: bool = False
    k: bytes = b""
    gv: str = ""


def _user_key(username: str) -> str:
    return "user:" + username


class Service(Role):
    role = "service"

    def __init__(self, name, params, network=None, *, dealer: str = DEALER,
                 t: int | None = None, n: int | None = None, backup_keys: bool = False, **kw):
        super().__init__(name, params, network, **kw)
        self.dealer = dealer
        self.t, self.n = t, n
        self.backup_keys = backup_keys
        if backup_keys and not (t and n):
            raise ValueError("key backup needs t and n")
        self._logins: dict[str, PendingLogin] = {}
        self._volatile_keys: dict[str, int] = {}

    def record(self, username: str) -> dict | None:
        return self.store.get(_user_key(username))

    def _from_dealer(self, msg: Message) -> None:
        if msg.sender != self.dealer:
            raise MalformedMessage(f"{msg.type} is accepted from the dealer only")

    # -- k' custody ---------------------------------------------------------
    def _keep_key(self, username: str, kprime: int, record: dict, session_id: str) -> dict:
        """Return the record to persist for a freshly drawn k'."""
        record = {k: v for k, v in record.items() if k not in ("kprime", "backup")}
        if not self.backup_keys:
            record["kprime"] = hx(kprime)
            return record
        with self._lock:
            self._volatile_keys[username] = kprime
        try:
            record["backup"] = self.backup_key(username, kprime, session_id)
        except (TransportError, RemoteFailure, ProtocolError) as exc:
            self.warn(username, f"k' backup failed, key kept in memory only: {exc}", session_id)
        return record

    def backup_key(self, username: str, kprime: int, session_id: str = "") -> dict:
        """Share k' over fresh abscissae; shares travel via the dealer."""
        with self._rng_lock:
            draw = draw_dealing(kprime, self.t, self.n, self.params, self.rng)
        dealing = evaluate_dealing(draw, self.params)
        owner = f"{self.name}/{username}"
        self.call(self.dealer, Message("backup_key", session_id or self.new_session_id(), owner, {
            "shares": [{"s": hx(sh.s), "t": hx(sh.t_val)} for sh in dealing.shares],
            "commitments": [hx(c) for c in dealing.commitments],
        }))
        return {
            "abscissae": [hx(sh.x) for sh in dealing.shares],
            "commitments": [hx(c) for c in dealing.commitments],
        }

    def restore_key(self, username: str, backup: dict | None = None) -> int:
        backup = backup or (self.record(username) or {}).get("backup")
        if backup is None:
            raise KeyUnavailable(f"no key backup for {username}")
        xs = [unhx(x) for x in backup["abscissae"]]
        cs = [unhx(c) for c in backup["commitments"]]
        sid = self.new_session_id()
        reply = self.call(self.dealer, Message("restore_key", sid, f"{self.name}/{username}", {
            "commitments": backup["commitments"],
        }))
        valid = []
        for x, entry in zip(xs, reply.field("shares")):
            if not entry:
                continue
            try:
                share = DualShare(x, unhx(entry["s"]), unhx(entry["t"]))
            except (KeyError, TypeError, MalformedMessage):
                continue
            if verify_share(share, cs, self.params):
                valid.append(SharePoint(x, share.s))
        if len(valid) < len(cs):
            raise KeyUnavailable(f"only {len(valid)} valid key shares for {username}")
        if len(valid) < len(xs):
            self.warn(username, f"key restore used {len(valid)} of {len(xs)} shares", sid)
        return reconstruct_at_zero(valid, len(cs), self.params.q)

    def kprime_of(self, username: str, record: dict) -> int:
        if "kprime" in record:
            return unhx(record["kprime"])
        with self._lock:
            if username in self._volatile_keys:
                return self._volatile_keys[username]
        kprime = self.restore_key(username, record.get("backup"))
        with self._lock:
            self._volatile_keys[username] = kprime
        return kprime

    # -- sharing phase ------------------------------------------------------
    def on_store_mc(self, msg: Message) -> Message:
        self._from_dealer(msg)
        user = msg.username
        mc = unb64(msg.field("mc"))
        with self._lock:
            if self.record(user) is not None:
                raise self.fail(Code.SERVICE_HAS_USER, user, "service already holds this user",
                                msg.session_id)
            self.store.put(_user_key(user), {"username": user, "state": "pending", "mc": b64(mc)})
        return ack(msg)

    def on_register_mc(self, msg: Message) -> Message:
        user, sid = msg.username, msg.session_id
        mc = unb64(msg.field("mc"))
        with self._lock:
            rec = self.record(user)
            if rec is None:
                raise self.fail(Code.EARLY_CALL, user, "MC arrived before the dealer forwarded it", sid)
            if rec["state"] != "pending":
                raise self.fail(Code.SERVICE_HAS_USER, user, "user already active", sid)
            if not hmac.compare_digest(unb64(rec["mc"]), mc):
                raise self.fail(Code.MC_MISMATCH, user, "client MC differs from the forwarded one", sid)
            kprime = self.draw(random_nonzero, self.params.q)
            ms = self.draw(sym_encrypt, key_from_scalar(kprime), mc)
            rec["state"] = "active"
            rec["ms"] = b64(ms)
            self.store.put(_user_key(user), self._keep_key(user, kprime, rec, sid))
        return msg.reply("ms", {"ms": b64(ms)})

    def on_signup_abort(self, msg: Message) -> Message:
        self._from_dealer(msg)
        with self._lock:
            self.store.delete(_user_key(msg.username))
            self._volatile_keys.pop(msg.username, None)
        return ack(msg)

    # -- reconstruction phase -----------------------------------------------
    def on_ems(self, msg: Message) -> Message:
        self._from_dealer(msg)
        rec = self.record(msg.username)
        if rec is None or rec.get("state") != "active":
            raise MalformedMessage(f"no active user {msg.username}")
        with self._lock:
            self._logins[msg.username] = PendingLogin(msg.session_id, unb64(msg.field("ems")))
        return ack(msg)

    def _abort_login(self, user: str, sid: str) -> None:
        with self._lock:
            self._logins.pop(user, None)
        try:
            self.call(self.dealer, Message("login_abort", sid, user))
        except (TransportError, RemoteFailure, ProtocolError):
            pass

    def on_verify_login(self, msg: Message) -> Message:
        user, sid = msg.username, msg.session_id
        ems = unb64(msg.field("ems"))
        with self._lock:
            pending = self._logins.get(user)
        rec = self.record(user)
        try:
            if pending is None or pending.session_id != sid or rec is None:
                raise AuthenticationFailure("no forwarded EMS for this session")
            if not hmac.compare_digest(pending.ems, ems):
                raise AuthenticationFailure("client EMS differs from the forwarded one")
            ms = unb64(rec["ms"])
            doc = json.loads(sym_decrypt(key_from_ciphertext(ms), ems))
            k, gv = unb64(doc["k"]), doc["gv"]
            if sym_decrypt(k, unb64(rec["mc"])).decode("ascii") != gv:
                raise AuthenticationFailure("D_k[MC] does not match the client's value")
        except (AuthenticationFailure, ValueError, KeyError, TypeError) as exc:
            self._abort_login(user, sid)
            raise self.fail(Code.SERVICE_REJECTS_LOGIN, user, str(exc), sid) from None
        kprime = self.kprime_of(user, rec)
        with self._lock:
            pending.verified, pending.k, pending.gv = True, k, gv
        envelope = self.draw(sym_encrypt, key_from_ciphertext(ms), hx(kprime).encode("ascii"))
        return msg.reply("kprime_envelope", {"envelope": b64(envelope)})

    def on_finalize(self, msg: Message) -> Message:
        user, sid = msg.username, msg.session_id
        mc_prime = unb64(msg.field("mc_prime"))
        with self._lock:
            pending = self._logins.pop(user, None)
        if pending is None or pending.session_id != sid or not pending.verified:
            raise MalformedMessage("finalize without a verified login")
        rec = self.record(user)
        kprime = self.kprime_of(user, rec)
        report = self.build_report(user, rec, pending, kprime, mc_prime)
        self.call(self.dealer, Message("report", sid, user, report))
        # the dealer accepted the report and rotated; now commit our side
        k3 = self.draw(random_nonzero, self.params.q)
        ms_prime = self.draw(sym_encrypt, key_from_scalar(k3), mc_prime)
        token = self.draw(random_bytes, 16).hex()
        rec.update({"mc": b64(mc_prime), "ms": b64(ms_prime), "token": token})
        with self._lock:
            self.store.put(_user_key(user), self._keep_key(user, k3, rec, sid))
        return msg.reply("session", {"ms_prime": b64(ms_prime), "token": token})

    def build_report(self, user: str, rec: dict, pending: PendingLogin, kprime: int,
                     mc_prime: bytes) -> dict:
        return {
            "k": b64(pending.k), "kprime": hx(kprime), "ms": rec["ms"],
            "gv": pending.gv, "mc_prime": b64(mc_prime),
        }

    def issued_token(self, username: str) -> str | None:
        rec = self.record(username)
        return rec.get("token") if rec else None
