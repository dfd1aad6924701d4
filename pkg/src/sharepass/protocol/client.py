"""Client role.  The password enters only through :func:`password_to_scalar`
and is immediately blinded; nothing derived from it without a nonce leaves
the process.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..group import GroupParams, RandomSource, random_nonzero
from ..pedersen import blind_secret
from .base import DEALER, SERVICE, Role
from .crypto import (
    AuthenticationFailure,
    key_from_ciphertext,
    key_from_scalar,
    new_key,
    password_to_scalar,
    sym_decrypt,
    sym_encrypt,
)
from .errors import Code, MalformedMessage
from .messages import Message, b64, canonical, hx, unb64, unhx
from .state import CredentialState, LoginRequest, NextSecrets


@dataclass(frozen=True)
class SignupDraft:
    r: int
    r_prime: int
    k: bytes
    mc: bytes
    s_prime: int


def _mc_plaintext(s_prime: int, r_prime: int, params: GroupParams) -> bytes:
    # S' is a group element used as an exponent; mod_exp reduces it mod q
    return hx(blind_secret(s_prime, r_prime, params)).encode("ascii")


def client_signup_init(password: str, params: GroupParams, rng: RandomSource) -> SignupDraft:
    secret = password_to_scalar(password, params.q)
    r = random_nonzero(params.q, rng)
    r_prime = random_nonzero(params.q, rng)
    k = new_key(rng)
    s_prime = blind_secret(secret, r, params)
    mc = sym_encrypt(k, _mc_plaintext(s_prime, r_prime, params), rng)
    return SignupDraft(r, r_prime, k, mc, s_prime)


def build_login(password: str, state: CredentialState, params: GroupParams,
                rng: RandomSource) -> tuple[LoginRequest, NextSecrets]:
    secret = password_to_scalar(password, params.q)
    s_prime = blind_secret(secret, state.r, params)
    r2 = random_nonzero(params.q, rng)
    while r2 == state.r:
        r2 = random_nonzero(params.q, rng)
    s2 = blind_secret(secret, r2, params)
    r3 = random_nonzero(params.q, rng)
    k2 = new_key(rng)
    mc_prime = sym_encrypt(k2, _mc_plaintext(s2, r3, params), rng)
    gv = hx(blind_secret(s_prime, state.r_prime, params))
    ems = sym_encrypt(key_from_ciphertext(state.ms), canonical({"k": b64(state.k), "gv": gv}), rng)
    req = LoginRequest(s_prime, tuple(state.abscissae), s2, mc_prime, ems)
    return req, NextSecrets(r=r2, r_prime=r3, k=k2, mc=mc_prime)


def open_kprime_envelope(envelope: bytes, state: CredentialState) -> int:
    return unhx(sym_decrypt(key_from_ciphertext(state.ms), envelope).decode("ascii"))


def service_is_honest(envelope: bytes, state: CredentialState) -> bool:
    """D_{k'}[MS] == MC, with k' recovered from the envelope."""
    try:
        kprime = open_kprime_envelope(envelope, state)
        return sym_decrypt(key_from_scalar(kprime), state.ms) == state.mc
    except (AuthenticationFailure, MalformedMessage, UnicodeDecodeError):
        return False


def _abscissae(reply: Message, n: int | None = None) -> tuple[int, ...]:
    raw = reply.field("abscissae")
    if not isinstance(raw, list) or not raw:
        raise MalformedMessage("abscissae must be a non-empty list")
    xs = tuple(unhx(x) for x in raw)
    if len(set(xs)) != len(xs) or 0 in xs or (n is not None and len(xs) != n):
        raise MalformedMessage("abscissae must be distinct, nonzero and complete")
    return xs


class Client(Role):
    role = "client"

    def __init__(self, name, params, network=None, *, dealer: str = DEALER,
                 service: str = SERVICE, **kw):
        super().__init__(name, params, network, **kw)
        self.dealer = dealer
        self.service = service

    def signup(self, username: str, password: str) -> CredentialState:
        sid = self.new_session_id()
        draft = self.draw(client_signup_init, password, self.params)
        self.call(self.dealer, Message("signup_mc", sid, username, {"mc": b64(draft.mc)}))
        reply = self.call(self.service, Message("register_mc", sid, username, {"mc": b64(draft.mc)}))
        ms = unb64(reply.field("ms"))
        reply = self.call(self.dealer, Message("signup_secret", sid, username,
                                               {"s_prime": hx(draft.s_prime)}))
        return CredentialState(
            username=username, r=draft.r, r_prime=draft.r_prime, k=draft.k,
            mc=draft.mc, ms=ms, abscissae=_abscissae(reply),
        )

    def prepare_login(self, password: str, state: CredentialState) -> tuple[LoginRequest, NextSecrets]:
        return self.draw(build_login, password, state, self.params)

    def login(self, password: str, state: CredentialState,
              prepared: tuple[LoginRequest, NextSecrets] | None = None) -> tuple[str, CredentialState]:
        """Run one reconstruction.  Returns the session token and the rotated state."""
        user = state.username
        sid = self.new_session_id()
        req, nxt = prepared or self.prepare_login(password, state)
        reply = self.call(self.dealer, Message("login", sid, user, req.to_payload()))
        fresh = _abscissae(reply, len(state.abscissae))
        try:
            reply = self.call(self.service, Message("verify_login", sid, user, {"ems": b64(req.ems)}))
            envelope = unb64(reply.field("envelope"))
            if not service_is_honest(envelope, state):
                raise self.fail(Code.CLIENT_REJECTS_SERVICE, user, "D_k'[MS] differs from MC", sid)
        except Exception:
            self._abort(user, sid)
            raise
        reply = self.call(self.service, Message("finalize", sid, user, {"mc_prime": b64(nxt.mc)}))
        token = reply.field("token")
        rotated = CredentialState(
            username=user, r=nxt.r, r_prime=nxt.r_prime, k=nxt.k, mc=nxt.mc,
            ms=unb64(reply.field("ms_prime")), abscissae=fresh,
        )
        return token, rotated

    def _abort(self, user: str, sid: str) -> None:
        try:
            self.call(self.dealer, Message("login_abort", sid, user))
        except Exception:  # noqa: BLE001 - best effort, the dealer lock also expires
            pass
