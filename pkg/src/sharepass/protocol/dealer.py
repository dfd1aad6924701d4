"""Dealer role: splits blinded secrets, runs login reconstruction, rotates shares."""

from __future__ import annotations

import json
from dataclasses import dataclass

from ..pedersen import Dealing, DualShare, draw_dealing, evaluate_dealing, hash_abscissa, verify_share
from ..shamir import SharePoint, draw_abscissae, reconstruct_at_zero
from .base import SERVICE, Role, SessionRegistry, shareholder_name
from .crypto import AuthenticationFailure, key_from_ciphertext, key_from_scalar, sym_decrypt
from .errors import Code, MalformedMessage, ProtocolError, RemoteFailure, TransportError
from .messages import Message, ack, b64, hx, unb64, unhx
from .state import LoginRequest


class RegistrationAborted(RemoteFailure):
    pass


@dataclass
class StagedRotation:
    session_id: str
    request: LoginRequest
    new_abscissae: list[int]


def _user_key(username: str) -> str:
    return "user:" + username


class Dealer(Role):
    role = "dealer"

    def __init__(self, name, params, network=None, *, t: int, n: int,
                 shareholders: list[str] | None = None, service: str = SERVICE,
                 session_ttl: float = 30.0, **kw):
        super().__init__(name, params, network, **kw)
        if not 1 <= t <= n:
            raise ValueError("need 1 <= t <= n")
        self.t, self.n = t, n
        self.shareholders = shareholders or [shareholder_name(i) for i in range(1, n + 1)]
        if len(self.shareholders) != n:
            raise ValueError("shareholder list must have n entries")
        self.service = service
        self.sessions = SessionRegistry(self.clock, session_ttl)
        self._pending: dict[str, str] = {}
        self._rotations: dict[str, StagedRotation] = {}

    # -- helpers --------------------------------------------------------------
    def record(self, username: str) -> dict | None:
        return self.store.get(_user_key(username))

    def commitments_of(self, username: str) -> list[int]:
        rec = self.record(username)
        if rec is None:
            raise KeyError(username)
        return [unhx(c) for c in rec["commitments"]]

    def _deal(self, secret: int, abscissae: list[int] | None = None) -> Dealing:
        with self._rng_lock:
            draw = draw_dealing(secret, self.t, self.n, self.params, self.rng, abscissae=abscissae)
        return evaluate_dealing(draw, self.params)

    def distribute(self, username: str, session_id: str, dealing: Dealing, need: int) -> list[str]:
        """Stage, broadcast commitments, install.  Returns the installed names.

        Any step that leaves fewer than ``need`` live shareholders aborts the
        whole dealing before anything is installed.
        """
        names = list(self.shareholders)
        stage = [
            (name, Message("stage_share", session_id, username, {
                "s": hx(sh.s), "t": hx(sh.t_val), "digest": hash_abscissa(sh.x).hex(),
            }))
            for name, sh in zip(names, dealing.shares)
        ]
        live = self._survivors(names, self.fan_out(stage))
        if len(live) >= need:
            payload = {"commitments": [hx(c) for c in dealing.commitments]}
            live = self._survivors(live, self.fan_out(
                [(name, Message("commitments", session_id, username, payload)) for name in live]))
        if len(live) < need:
            self.fan_out([(name, Message("abort", session_id, username)) for name in names])
            raise RegistrationAborted(f"only {len(live)} of {need} shareholders accepted the dealing")
        return self._survivors(live, self.fan_out(
            [(name, Message("install", session_id, username)) for name in live]))

    @staticmethod
    def _survivors(names: list[str], results: list) -> list[str]:
        return [name for name, res in zip(names, results)
                if isinstance(res, Message) and res.type == "ack"]

    # -- sharing phase ------------------------------------------------------
    def on_signup_mc(self, msg: Message) -> Message:
        user, sid = msg.username, msg.session_id
        mc = unb64(msg.field("mc"))
        if not user:
            raise MalformedMessage("username required")
        with self._lock:
            if self.record(user) is not None or (user in self._pending and self._pending[user] != sid):
                raise self.fail(Code.ALREADY_REGISTERED, user, "username already registered", sid)
            self.sessions.acquire(user, sid)
            self._pending[user] = sid
        try:
            self.call(self.service, Message("store_mc", sid, user, {"mc": b64(mc)}))
        except BaseException:
            self._drop_pending(user, sid)
            raise
        return ack(msg)

    def _drop_pending(self, user: str, sid: str) -> None:
        with self._lock:
            if self._pending.get(user) == sid:
                del self._pending[user]
        self.sessions.release(user, sid)

    def on_signup_secret(self, msg: Message) -> Message:
        user, sid = msg.username, msg.session_id
        with self._lock:
            expected = self._pending.get(user) == sid
        if not expected:
            raise self.fail(Code.EARLY_CALL, user, "secret arrived before the MC exchange", sid)
        try:
            s_prime = unhx(msg.field("s_prime"))
            if not 1 <= s_prime < self.params.p:
                raise MalformedMessage("blinded secret out of range")
            dealing = self._deal(s_prime % self.params.q)
            self.distribute(user, sid, dealing, need=self.n)
        except (TransportError, RemoteFailure, MalformedMessage, ValueError) as exc:
            self.warn(user, f"registration aborted: {exc}", sid)
            try:
                self.call(self.service, Message("signup_abort", sid, user))
            except (TransportError, RemoteFailure, ProtocolError):
                self.warn(user, "service did not confirm the abort", sid)
            self._drop_pending(user, sid)
            raise
        # only the commitments stay behind; the abscissae leave with the reply
        self.store.put(_user_key(user), {
            "username": user, "state": "registered",
            "commitments": [hx(c) for c in dealing.commitments],
        })
        self._drop_pending(user, sid)
        return msg.reply("abscissae", {"abscissae": [hx(sh.x) for sh in dealing.shares]})

    # -- reconstruction phase -----------------------------------------------
    def on_login(self, msg: Message) -> Message:
        user, sid = msg.username, msg.session_id
        rec = self.record(user)
        if rec is None or rec.get("state") != "registered":
            raise self.fail(Code.NOT_REGISTERED, user, "login for an unknown username", sid)
        req = LoginRequest.from_payload(msg.payload)
        if len(req.abscissae) != self.n:
            raise MalformedMessage(f"expected {self.n} abscissae")
        if req.s_prime == req.s_double_prime:
            raise MalformedMessage("next-session secret must differ from the current one")
        self.sessions.acquire(user, sid)
        try:
            self._reconstruct(user, sid, req, [unhx(c) for c in rec["commitments"]])
            self.call(self.service, Message("ems", sid, user, {"ems": b64(req.ems)}))
            with self._rng_lock:
                fresh = draw_abscissae(self.n, self.params.q, self.rng)
        except BaseException:
            self.sessions.release(user, sid)
            raise
        with self._lock:
            self._rotations[user] = StagedRotation(sid, req, fresh)
        return msg.reply("new_abscissae", {"abscissae": [hx(x) for x in fresh]})

    def _reconstruct(self, user: str, sid: str, req: LoginRequest, commitments: list[int]) -> None:
        calls = [
            (name, Message("release", sid, user, {"x": hx(x)}))
            for name, x in zip(self.shareholders, req.abscissae)
        ]
        valid: list[SharePoint] = []
        bad = []
        for (name, _), x, res in zip(calls, req.abscissae, self.fan_out(calls)):
            if not isinstance(res, Message) or res.type != "share":
                continue
            try:
                share = DualShare(x, unhx(res.field("s")), unhx(res.field("t")))
            except MalformedMessage:
                bad.append(name)
                continue
            if verify_share(share, commitments, self.params):
                valid.append(SharePoint(x, share.s))
            else:
                bad.append(name)
        if bad:
            detail = f"{len(bad)} share(s) failed verification: {', '.join(bad)}"
            if len(valid) < self.t:
                raise self.fail(Code.TOO_MANY_SHARES_BAD, user, detail, sid)
            self.note(Code.SOME_SHARES_BAD, user, detail, sid)
        if len(valid) < self.t:
            raise self.fail(Code.NOT_ENOUGH_SHARES, user,
                            f"{len(valid)} of {self.t} required shares", sid)
        rebuilt = reconstruct_at_zero(valid, self.t, self.params.q)
        if rebuilt != req.s_prime % self.params.q:
            raise self.fail(Code.SECRET_MISMATCH, user, "rebuilt secret differs", sid)

    def on_report(self, msg: Message) -> Message:
        user, sid = msg.username, msg.session_id
        if msg.sender != self.service:
            raise MalformedMessage("reports are accepted from the service only")
        with self._lock:
            staged = self._rotations.get(user)
            if staged is None or staged.session_id != sid:
                raise MalformedMessage("report without a staged rotation")
            del self._rotations[user]
        try:
            self._final_checks(user, sid, staged, msg)
            dealing = self._deal(staged.request.s_double_prime % self.params.q,
                                 staged.new_abscissae)
            installed = self.distribute(user, sid, dealing, need=self.t)
            if len(installed) < self.n:
                missing = sorted(set(self.shareholders) - set(installed))
                self.warn(user, f"rotation skipped {', '.join(missing)}", sid)
            self.store.put(_user_key(user), {
                "username": user, "state": "registered",
                "commitments": [hx(c) for c in dealing.commitments],
            })
        finally:
            self.sessions.release(user, sid)
        return ack(msg)

    def on_login_abort(self, msg: Message) -> Message:
        """Drop a staged rotation after a later check failed elsewhere."""
        user, sid = msg.username, msg.session_id
        with self._lock:
            staged = self._rotations.get(user)
            if staged is not None and staged.session_id == sid:
                del self._rotations[user]
        self.sessions.release(user, sid)
        return ack(msg)

    def _final_checks(self, user: str, sid: str, staged: StagedRotation, msg: Message) -> None:
        try:
            kprime = unhx(msg.field("kprime"))
            ms = unb64(msg.field("ms"))
            mc = sym_decrypt(key_from_scalar(kprime), ms)
        except (AuthenticationFailure, MalformedMessage) as exc:
            raise self.fail(Code.REPORT_KPRIME, user, f"k' does not open MS: {exc}", sid) from None
        try:
            k = unb64(msg.field("k"))
            gv = msg.field("gv")
            if sym_decrypt(k, mc).decode("ascii") != gv:
                raise AuthenticationFailure("D_k[MC] differs from the reported value")
            claim = json.loads(sym_decrypt(key_from_ciphertext(ms), staged.request.ems))
            if claim != {"k": b64(k), "gv": gv}:
                raise AuthenticationFailure("client EMS does not match the report")
        except (AuthenticationFailure, MalformedMessage, ValueError) as exc:
            raise self.fail(Code.REPORT_CLIENT_PROOF, user, str(exc), sid) from None
        if unb64(msg.field("mc_prime")) != staged.request.mc_prime:
            raise self.fail(Code.REPORT_MC_PRIME, user, "MC' differs from the client's", sid)

    # -- service key backup relay -------------------------------------------
    def on_backup_key(self, msg: Message) -> Message:
        owner, sid = msg.username, msg.session_id
        if msg.sender != self.service:
            raise MalformedMessage("backups are accepted from the service only")
        shares = msg.field("shares")
        commitments = msg.field("commitments")
        if not isinstance(shares, list) or len(shares) != self.n:
            raise MalformedMessage(f"expected {self.n} backup shares")
        staged = self._survivors(self.shareholders, self.fan_out([
            (name, Message("backup_store", sid, owner, {"s": sh["s"], "t": sh["t"]}))
            for name, sh in zip(self.shareholders, shares)
        ]))
        stored = self._survivors(staged, self.fan_out([
            (name, Message("backup_commitments", sid, owner, {"commitments": commitments}))
            for name in staged
        ]))
        if len(stored) < self.n:
            raise RegistrationAborted(f"backup reached {len(stored)} of {self.n} shareholders")
        return ack(msg)

    def on_restore_key(self, msg: Message) -> Message:
        owner, sid = msg.username, msg.session_id
        if msg.sender != self.service:
            raise MalformedMessage("restores are accepted from the service only")
        commitments = msg.field("commitments")
        results = self.fan_out([
            (name, Message("backup_release", sid, owner, {"commitments": commitments}))
            for name in self.shareholders
        ])
        out = []
        for res in results:
            if isinstance(res, Message) and res.type == "backup_share":
                out.append({"s": res.payload.get("s"), "t": res.payload.get("t")})
            else:
                out.append(None)
        return msg.reply("backup_shares", {"shares": out})
