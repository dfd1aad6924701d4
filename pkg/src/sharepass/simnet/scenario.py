"""Scenario execution, the leakage audit and the fault-tolerance sweep."""

from __future__ import annotations

import base64
import hashlib
import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..group import GroupParams, mod_exp, seeded_rng
from ..protocol.base import DEALER, LOGGER, SERVICE, Role, shareholder_name
from ..protocol.client import Client, client_signup_init
from ..protocol.crypto import password_to_scalar
from ..protocol.dealer import Dealer
from ..protocol.errors import ProtocolError, RemoteFailure, SessionBusy, TransportError
from ..protocol.logger import Logger
from ..protocol.messages import Message, b64, canonical, hx
from ..protocol.service import Service
from ..protocol.shareholder import Shareholder
from ..protocol.state import CredentialState, LoginRequest
from ..shamir import eval_polynomial, sample_polynomial
from .faults import BYZANTINE_CLASS, FaultPlan, NodeBehavior, Phased, role_kind
from .network import ScenarioHang, SimNetwork

DEFAULT_CLIENT = "client"
HONEST_CLASS: dict[str, type[Role]] = {
    "dealer": Dealer, "shareholder": Shareholder, "service": Service, "client": Client,
}


@dataclass
class ActionResult:
    action: str
    user: str
    client: str
    ok: bool
    code: str = ""
    detail: str = ""
    token: str | None = None


@dataclass
class ScenarioResult:
    outcome: str
    actions: list[ActionResult]
    errors: list[dict]
    codes: Counter
    observations: dict[str, list[bytes]]
    store_digests: dict[str, str]
    trace_digest: str
    virtual_time: float
    plan: FaultPlan
    passwords: dict[str, str] = field(default_factory=dict)
    params: GroupParams | None = None
    stores: dict[str, dict] = field(default_factory=dict)
    report: str = ""

    @property
    def succeeded(self) -> bool:
        return self.outcome == "success"

    def tokens(self) -> list[ActionResult]:
        return [a for a in self.actions if a.token]

    def unauthorized_tokens(self) -> list[ActionResult]:
        """Tokens that reached a client whose plan lacked the password."""
        return [a for a in self.tokens() if not self.plan.knows_password(a.client)]

    def severity_of(self, code: str) -> set[str]:
        return {e["severity"] for e in self.errors if e["code"] == code}


class Deployment:
    """All roles wired onto one SimNetwork."""

    def __init__(self, t: int, n: int, params: GroupParams, plan: FaultPlan | None = None, *,
                 backup_keys: bool = False, latency: float | None = None,
                 budget: float | None = None) -> None:
        self.t, self.n, self.params = t, n, params
        self.plan = (plan or FaultPlan()).validate()
        kw = {}
        if latency is not None:
            kw["latency"] = latency
        if budget is not None:
            kw["budget"] = budget
        self.net = SimNetwork(**kw)
        self.phase = "any"
        self.net.is_down = self._is_down
        self.logger = self._make(Logger, LOGGER)
        self.dealer = self._add("dealer", DEALER, t=t, n=n)
        self.shareholders = [self._add("shareholder", shareholder_name(i)) for i in range(1, n + 1)]
        self.service = self._add("service", SERVICE, t=t, n=n, backup_keys=backup_keys)
        self.clients: dict[str, Client] = {}
        self.states: dict[str, CredentialState] = {}
        self.last_login: dict[str, LoginRequest] = {}

    def _rng(self, name: str):
        return seeded_rng(f"{self.plan.seed}:{name}")

    def _make(self, cls, name: str, **kw) -> Role:
        role = cls(name, self.params, rng=self._rng(name), clock=self.net.now, **kw)
        return self.net.register(role)

    def _add(self, kind: str, name: str, **kw) -> Role:
        behavior = self.plan.behavior(name)
        cls = BYZANTINE_CLASS[kind] if behavior.kind == "byzantine" else HONEST_CLASS[kind]
        role = self._make(cls, name, **kw)
        if isinstance(role, Phased):
            role.behavior = behavior
        return role

    def client(self, name: str = DEFAULT_CLIENT) -> Client:
        if name not in self.clients:
            self.clients[name] = self._add("client", name)
        return self.clients[name]

    def _is_down(self, name: str) -> bool:
        b = self.plan.behavior(name)
        return b.kind == "down" and b.active_in(self.phase)

    def set_phase(self, phase: str) -> None:
        self.phase = phase
        for role in self.net.nodes.values():
            if isinstance(role, Phased):
                role.current_phase = phase

    def roles(self) -> list[Role]:
        return [r for r in self.net.nodes.values() if r.name != LOGGER]


# -- script actions -----------------------------------------------------------
def _signup(dep: Deployment, step: dict) -> str | None:
    dep.set_phase("sharing")
    client = dep.client(step.get("client", DEFAULT_CLIENT))
    dep.states[step["user"]] = client.signup(step["user"], step["password"])
    return None


def _login(dep: Deployment, step: dict) -> str | None:
    dep.set_phase("reconstruction")
    client = dep.client(step.get("client", DEFAULT_CLIENT))
    state = dep.states[step["user"]]
    prepared = client.prepare_login(step["password"], state)
    dep.last_login[step["user"]] = prepared[0]
    token, rotated = client.login(step["password"], state, prepared)
    dep.states[step["user"]] = rotated
    return token


def _replay_login(dep: Deployment, step: dict) -> str | None:
    """Resend the previous LoginRequest verbatim under a new session."""
    dep.set_phase("reconstruction")
    client = dep.client(step.get("client", DEFAULT_CLIENT))
    req = dep.last_login[step["user"]]
    sid = client.new_session_id()
    client.call(DEALER, Message("login", sid, step["user"], req.to_payload()))
    reply = client.call(SERVICE, Message("verify_login", sid, step["user"], {"ems": b64(req.ems)}))
    return reply.type


def _signup_early_service(dep: Deployment, step: dict) -> str | None:
    dep.set_phase("sharing")
    client = dep.client(step.get("client", DEFAULT_CLIENT))
    draft = client.draw(client_signup_init, step["password"], dep.params)
    client.call(SERVICE, Message("register_mc", client.new_session_id(), step["user"],
                                 {"mc": b64(draft.mc)}))
    return None


def _signup_mismatched_mc(dep: Deployment, step: dict) -> str | None:
    dep.set_phase("sharing")
    client = dep.client(step.get("client", DEFAULT_CLIENT))
    sid = client.new_session_id()
    first = client.draw(client_signup_init, step["password"], dep.params)
    other = client.draw(client_signup_init, step["password"], dep.params)
    client.call(DEALER, Message("signup_mc", sid, step["user"], {"mc": b64(first.mc)}))
    client.call(SERVICE, Message("register_mc", sid, step["user"], {"mc": b64(other.mc)}))
    return None


def _signup_secret_early(dep: Deployment, step: dict) -> str | None:
    dep.set_phase("sharing")
    client = dep.client(step.get("client", DEFAULT_CLIENT))
    draft = client.draw(client_signup_init, step["password"], dep.params)
    client.call(DEALER, Message("signup_secret", client.new_session_id(), step["user"],
                                {"s_prime": hx(draft.s_prime)}))
    return None


def _dealer_forget(dep: Deployment, step: dict) -> str | None:
    """The dealer loses its record; a new sign-up then collides at the service."""
    dep.dealer.store.delete("user:" + step["user"])
    return None


def _login_unregistered(dep: Deployment, step: dict) -> str | None:
    dep.set_phase("reconstruction")
    client = dep.client(step.get("client", DEFAULT_CLIENT))
    fake = CredentialState(
        username=step["user"], r=1, r_prime=1, k=bytes(32), mc=b"\x00" * 40, ms=b"\x00" * 40,
        abscissae=tuple(range(1, dep.n + 1)),
    )
    token, _ = client.login(step["password"], fake)
    return token


def _advance(dep: Deployment, step: dict) -> str | None:
    dep.net.now_value += float(step.get("seconds", 0))
    return None


ACTIONS = {
    "signup": _signup,
    "login": _login,
    "replay_login": _replay_login,
    "signup_early_service": _signup_early_service,
    "signup_mismatched_mc": _signup_mismatched_mc,
    "signup_secret_early": _signup_secret_early,
    "dealer_forget": _dealer_forget,
    "login_unregistered": _login_unregistered,
    "advance": _advance,
}


def _digest(doc: dict) -> str:
    return hashlib.sha256(canonical(doc)).hexdigest()


def run_scenario(plan: FaultPlan | None, t: int, n: int, params: GroupParams,
                 script: Sequence[dict], *, backup_keys: bool = False,
                 budget: float | None = None) -> ScenarioResult:
    """Run ``script`` against a fresh deployment; never raises for protocol outcomes."""
    dep = Deployment(t, n, params, plan, backup_keys=backup_keys, budget=budget)
    results: list[ActionResult] = []
    outcome = "success"
    passwords: dict[str, str] = {}
    for step in script:
        action = step["action"]
        if action not in ACTIONS:
            raise ValueError(f"unknown action {action!r}")
        user = step.get("user", "")
        if "password" in step and action == "signup":
            passwords[user] = step["password"]
        res = ActionResult(action, user, step.get("client", DEFAULT_CLIENT), ok=False)
        try:
            out = ACTIONS[action](dep, step)
            res.ok = True
            if action in ("login", "login_unregistered"):
                res.token = out
        except ProtocolError as err:
            res.code, res.detail = err.code.value, err.detail
        except (TransportError, RemoteFailure, SessionBusy) as exc:
            res.code, res.detail = "failure", f"{type(exc).__name__}: {exc}"
        except ScenarioHang as exc:
            res.code, res.detail = "hang", str(exc)
            results.append(res)
            outcome = "hang"
            break
        results.append(res)
        expected = step.get("expect")
        if not res.ok and expected is None:
            outcome = res.code if res.code.startswith("COD") else "failure"
        elif expected is not None and expected != (res.code or "success"):
            outcome = f"unexpected:{res.code or 'success'}"
    stores = {r.name: r.store.snapshot() for r in dep.roles()}
    observations = {name: dep.net.seen_by(name) for name in dep.net.nodes}
    return ScenarioResult(
        outcome=outcome,
        actions=results,
        errors=[e.to_dict() for e in dep.logger.errors()],
        codes=dep.logger.codes(),
        observations=observations,
        store_digests={name: _digest(s) for name, s in stores.items()},
        trace_digest=dep.net.trace_digest(),
        virtual_time=dep.net.now(),
        plan=dep.plan,
        passwords=passwords,
        params=params,
        stores=stores,
        report=dep.logger.report(),
    )


# -- leakage ----------------------------------------------------------------------
def secret_forms(password: str, params: GroupParams) -> list[bytes]:
    """Byte strings that would betray the password if seen anywhere."""
    scalar = password_to_scalar(password, params.q)
    unblinded = mod_exp(params.g, scalar, params)
    raw = scalar.to_bytes((scalar.bit_length() + 7) // 8 or 1, "big")
    forms = [password.encode("utf-8"), hx(scalar).encode(), str(scalar).encode(),
             hx(unblinded).encode(), base64.b64encode(raw)]
    return [f for f in forms if len(f) >= 4]


def observed_bytes(result: ScenarioResult, observer: str) -> bytes:
    parts = list(result.observations.get(observer, []))
    if observer in result.stores:
        parts.append(canonical(result.stores[observer]))
    return b"\n".join(parts)


def replica_candidate_counts(t: int, known: int, m: int, seed: int | str = 0) -> Counter:
    """For an observer holding ``known`` < t shares with their abscissae, count the
    polynomials of degree < t consistent with each candidate secret in Z_m."""
    rng = seeded_rng(f"replica:{seed}")
    poly = sample_polynomial(rng.randrange(m), t, m, rng)
    xs = list(range(1, known + 1))
    ys = [eval_polynomial(poly, x) for x in xs]
    counts: Counter = Counter()
    for coeffs in itertools.product(range(m), repeat=t):
        if all(sum(c * pow(x, j, m) for j, c in enumerate(coeffs)) % m == y for x, y in zip(xs, ys)):
            counts[coeffs[0]] += 1
    return counts


def replica_secrets_without_abscissae(t: int, n: int, m: int, seed: int | str = 0) -> Counter:
    """Observer holds all n share values but no abscissae.  For each candidate
    secret count abscissa assignments (distinct, nonzero) admitting a degree < t
    polynomial through (0, secret) and every observed value."""
    rng = seeded_rng(f"replica-nx:{seed}")
    poly = sample_polynomial(rng.randrange(m), t, m, rng)
    true_xs = rng.sample(range(1, m), n)
    ys = [eval_polynomial(poly, x) for x in true_xs]
    counts: Counter = Counter()
    for head in itertools.permutations(range(1, m), t - 1):
        nodes = [0, *head]
        # basis[j][x]: Lagrange basis polynomial j evaluated at x
        basis = [[_basis_at(nodes, j, x, m) for x in range(m)] for j in range(t)]
        for secret in range(m):
            vals = [secret, *ys[: t - 1]]
            table = {x: sum(basis[j][x] * vals[j] for j in range(t)) % m for x in range(1, m)}
            if _assign(ys[t - 1:], table, set(head)):
                counts[secret] += 1
    return counts


def _basis_at(nodes: list[int], j: int, x: int, m: int) -> int:
    num, den = 1, 1
    for k, xk in enumerate(nodes):
        if k != j:
            num = num * (x - xk) % m
            den = den * (nodes[j] - xk) % m
    return num * pow(den, -1, m) % m


def _assign(ys: list[int], table: dict[int, int], used: set[int]) -> bool:
    if not ys:
        return True
    for x, v in table.items():
        if v == ys[0] and x not in used:
            if _assign(ys[1:], table, used | {x}):
                return True
    return False


@dataclass
class LeakageReport:
    passed: bool
    hits: list[tuple[str, str]]
    replica_uniform: bool
    replica_counts: dict
    # coalitions of t or more shareholders: candidate secrets left open in the
    # small field when abscissae are withheld; informational, not gated
    coalition_counts: dict = field(default_factory=dict)


def assert_information_leakage(result: ScenarioResult, observers: Iterable[str] | None = None,
                               *, replica_m: int = 17, replica_t: int = 3) -> LeakageReport:
    """Byte-scan every observer's view for password forms, then check the
    small-field replica for every sub-threshold view among the observers."""
    params = result.params
    names = list(observers) if observers is not None else (
        result.plan.passive_nodes() or sorted(result.observations))
    hits = []
    for password in result.passwords.values():
        forms = secret_forms(password, params)
        for name in names:
            blob = observed_bytes(result, name)
            for form in forms:
                if form in blob:
                    hits.append((name, form.decode("ascii", "replace")))
    holders = [n for n in names if role_kind(n) == "shareholder"]
    counts: dict = {}
    coalition: dict = {}
    uniform = True
    if holders:
        # the largest sub-threshold view: the whole group if small, else one member
        known = len(holders) if len(holders) < replica_t else 1
        c = replica_candidate_counts(replica_t, known, replica_m, result.plan.seed)
        counts = dict(c)
        uniform = len(c) == replica_m and len(set(c.values())) == 1
    if len(holders) >= replica_t:
        coalition = dict(replica_secrets_without_abscissae(
            replica_t, min(len(holders), replica_m - 1), replica_m, result.plan.seed))
    return LeakageReport(not hits and uniform, hits, uniform, counts, coalition)


# -- sweep ------------------------------------------------------------------------
@dataclass
class SweepRow:
    t: int
    n: int
    down: int
    outcome: str


def fault_tolerance_sweep(t: int, n: int, params: GroupParams, *, seed: int | str = 0) -> list[SweepRow]:
    """Sign up with everyone alive, then log in with k shareholders down, k = 0..n."""
    if not 1 <= t <= n:
        raise ValueError("need 1 <= t <= n")
    rows = []
    for k in range(n + 1):
        plan = FaultPlan({shareholder_name(i): _down_at_login() for i in range(1, k + 1)},
                         seed=f"{seed}:{t}:{n}:{k}")
        res = run_scenario(plan, t, n, params, [
            {"action": "signup", "user": "alice", "password": "correct horse"},
            {"action": "login", "user": "alice", "password": "correct horse"},
        ])
        rows.append(SweepRow(t, n, k, res.outcome))
    return rows


def _down_at_login() -> NodeBehavior:
    return NodeBehavior(kind="down", phase="reconstruction")


def load_scenario(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    for key in ("t", "n", "script"):
        if key not in doc:
            raise ValueError(f"scenario file needs {key!r}")
    return doc
