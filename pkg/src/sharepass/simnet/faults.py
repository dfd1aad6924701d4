"""Fault plans and the misbehaving role variants they select."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..group import random_bytes, random_nonzero
from ..pedersen import Dealing, DualShare
from ..protocol.base import Role
from ..protocol.client import Client, build_login
from ..protocol.crypto import key_from_ciphertext, sym_encrypt
from ..protocol.dealer import Dealer
from ..protocol.messages import Message, b64, hx, unb64, unhx
from ..protocol.service import Service
from ..protocol.shareholder import Shareholder
from ..protocol.state import CredentialState

KINDS = ("honest", "down", "passive", "byzantine")
PHASES = ("any", "sharing", "reconstruction")

STRATEGY_ROLE = {
    "tamper-share": "shareholder",
    "tamper-tval": "shareholder",
    "wrong-abscissa-probe": "dealer",
    "inconsistent-dealing": "dealer",
    "looping-requests": "dealer",
    "forge-ems": "dealer",
    "wrong-kprime": "service",
    "lie-in-report": "service",
    "wrong-password-client": "client",
    "wrong-coordinates-client": "client",
}


class PlanError(ValueError):
    pass


def role_kind(name: str) -> str:
    if name.startswith("shareholder"):
        return "shareholder"
    if name.startswith("client"):
        return "client"
    return name


@dataclass(frozen=True)
class NodeBehavior:
    kind: str = "honest"
    strategy: str | None = None
    phase: str = "any"
    options: dict = field(default_factory=dict)

    def active_in(self, phase: str) -> bool:
        return self.phase == "any" or self.phase == phase

    def to_dict(self) -> dict:
        doc = {"kind": self.kind, "phase": self.phase}
        if self.strategy:
            doc["strategy"] = self.strategy
        if self.options:
            doc["options"] = dict(self.options)
        return doc

    @classmethod
    def from_dict(cls, doc: dict | str) -> NodeBehavior:
        if isinstance(doc, str):
            return cls(kind=doc)
        return cls(doc.get("kind", "honest"), doc.get("strategy"), doc.get("phase", "any"),
                   dict(doc.get("options", {})))


@dataclass
class FaultPlan:
    behaviors: dict[str, NodeBehavior] = field(default_factory=dict)
    seed: int | str = 0

    def behavior(self, name: str) -> NodeBehavior:
        return self.behaviors.get(name, NodeBehavior())

    def validate(self) -> FaultPlan:
        for name, b in self.behaviors.items():
            if b.kind not in KINDS:
                raise PlanError(f"{name}: unknown kind {b.kind!r}")
            if b.phase not in PHASES:
                raise PlanError(f"{name}: unknown phase {b.phase!r}")
            if b.kind == "byzantine":
                expected = STRATEGY_ROLE.get(b.strategy or "")
                if expected is None:
                    raise PlanError(f"{name}: unknown strategy {b.strategy!r}")
                if expected != role_kind(name):
                    raise PlanError(f"{name}: strategy {b.strategy} needs a {expected}")
            elif b.strategy:
                raise PlanError(f"{name}: only byzantine nodes take a strategy")
        return self

    def passive_nodes(self) -> list[str]:
        return sorted(n for n, b in self.behaviors.items() if b.kind == "passive")

    def knows_password(self, client: str) -> bool:
        b = self.behavior(client)
        return not (b.kind == "byzantine" and b.strategy == "wrong-password-client")

    @classmethod
    def from_dict(cls, doc: dict) -> FaultPlan:
        return cls({k: NodeBehavior.from_dict(v) for k, v in doc.get("nodes", {}).items()},
                   doc.get("seed", 0)).validate()

    def to_dict(self) -> dict:
        return {"seed": self.seed, "nodes": {k: b.to_dict() for k, b in self.behaviors.items()}}


class Phased:
    """Mixin: ``self.misbehaving`` is true while the plan's phase is live."""

    behavior: NodeBehavior
    current_phase: str = "any"

    @property
    def misbehaving(self) -> bool:
        return self.behavior.active_in(self.current_phase)

    def opt(self, key: str, default):
        return self.behavior.options.get(key, default)


# -- dealer -----------------------------------------------------------------
class ByzantineDealer(Phased, Dealer):
    def _deal(self, secret, abscissae=None) -> Dealing:
        dealing = super()._deal(secret, abscissae)
        if self.behavior.strategy != "inconsistent-dealing" or not self.misbehaving:
            return dealing
        victims = int(self.opt("victims", 1))
        shares = [DualShare(sh.x, (sh.s + 1) % self.params.q, sh.t_val) if i < victims else sh
                  for i, sh in enumerate(dealing.shares)]
        return Dealing(shares, dealing.commitments)

    def _reconstruct(self, user, sid, req, commitments) -> None:
        strategy = self.behavior.strategy
        if strategy == "looping-requests" and self.misbehaving:
            for _ in range(int(self.opt("probes", 4))):
                with self._rng_lock:
                    guesses = [random_nonzero(self.params.q, self.rng) for _ in self.shareholders]
                self.fan_out([(name, Message("release", sid, user, {"x": hx(x)}))
                              for name, x in zip(self.shareholders, guesses)])
        if strategy == "wrong-abscissa-probe" and self.misbehaving:
            targets = int(self.opt("targets", 1))
            xs = list(req.abscissae)
            for i in range(targets):
                xs[i] = xs[i] + 1
            req = type(req)(req.s_prime, tuple(xs), req.s_double_prime, req.mc_prime, req.ems)
        super()._reconstruct(user, sid, req, commitments)

    def call(self, dest, msg):
        if (self.behavior.strategy == "forge-ems" and self.misbehaving and msg.type == "ems"):
            forged = self.draw(random_bytes, len(msg.payload["ems"]) * 3 // 4)
            msg = Message(msg.type, msg.session_id, msg.username, {"ems": b64(forged)}, msg.sender)
        return super().call(dest, msg)


# -- shareholder -------------------------------------------------------------
class ByzantineShareholder(Phased, Shareholder):
    def on_release(self, msg):
        reply = super().on_release(msg)
        if reply.type != "share" or not self.misbehaving:
            return reply
        field_name = "s" if self.behavior.strategy == "tamper-share" else "t"
        payload = dict(reply.payload)
        payload[field_name] = hx((unhx(payload[field_name]) + 1) % self.params.q)
        return msg.reply("share", payload)


# -- service -----------------------------------------------------------------
class ByzantineService(Phased, Service):
    def on_verify_login(self, msg):
        reply = super().on_verify_login(msg)
        if self.behavior.strategy != "wrong-kprime" or not self.misbehaving:
            return reply
        rec = self.record(msg.username)
        wrong = self.draw(random_nonzero, self.params.q)
        envelope = self.draw(sym_encrypt, key_from_ciphertext(unb64(rec["ms"])), hx(wrong).encode())
        return msg.reply("kprime_envelope", {"envelope": b64(envelope)})

    def build_report(self, user, rec, pending, kprime, mc_prime):
        report = super().build_report(user, rec, pending, kprime, mc_prime)
        if self.behavior.strategy != "lie-in-report" or not self.misbehaving:
            return report
        target = self.opt("target", "kprime")
        if target == "kprime":
            report["kprime"] = hx((kprime + 1) % self.params.q)
        elif target == "k":
            report["k"] = b64(self.draw(random_bytes, 32))
        elif target == "mc_prime":
            report["mc_prime"] = b64(self.draw(random_bytes, len(mc_prime)))
        else:
            raise ValueError(f"unknown lie target {target!r}")
        return report


# -- client ------------------------------------------------------------------
class ByzantineClient(Phased, Client):
    def prepare_login(self, password: str, state: CredentialState):
        if self.misbehaving and self.behavior.strategy == "wrong-password-client":
            password = self.opt("password", password + "-guess")
        req, nxt = self.draw(build_login, password, state, self.params)
        if self.misbehaving and self.behavior.strategy == "wrong-coordinates-client":
            xs = tuple(x + 1 for x in req.abscissae)
            req = type(req)(req.s_prime, xs, req.s_double_prime, req.mc_prime, req.ems)
        return req, nxt


BYZANTINE_CLASS: dict[str, type[Role]] = {
    "dealer": ByzantineDealer,
    "shareholder": ByzantineShareholder,
    "service": ByzantineService,
    "client": ByzantineClient,
}
