"""Shared machinery for protocol roles: dispatch, outbound calls, logging."""

from __future__ import annotations

import copy
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterator, Protocol, Sequence

from ..group import GroupParams, RandomSource, random_bytes, system_rng
from .errors import (
    PHASE,
    Code,
    MalformedMessage,
    ProtocolError,
    RemoteFailure,
    SessionBusy,
    TransportError,
    Unreachable,
)
from .messages import Message, error_reply

LOGGER = "logger"
DEALER = "dealer"
SERVICE = "service"


def shareholder_name(index: int) -> str:
    return f"shareholder-{index}"


class Network(Protocol):
    def call(self, src: str, dest: str, msg: Message) -> Message: ...

    def fan_out(self, src: str, calls: Sequence[tuple[str, Message]]) -> list[Message | Exception]: ...


class MemoryStore:
    """Key -> JSON-able record map.  Subclasses add persistence."""

    def __init__(self) -> None:
        self._data: dict[str, dict] = {}
        self._lock = threading.RLock()

    def get(self, key: str) -> dict | None:
        with self._lock:
            rec = self._data.get(key)
            return copy.deepcopy(rec) if rec is not None else None

    def put(self, key: str, record: dict) -> None:
        with self._lock:
            self._data[key] = copy.deepcopy(record)

    def delete(self, key: str) -> None:
        with self._lock:
            self._data.pop(key, None)

    def __contains__(self, key: str) -> bool:
        with self._lock:
            return key in self._data

    def keys(self, prefix: str = "") -> list[str]:
        with self._lock:
            return sorted(k for k in self._data if k.startswith(prefix))

    def snapshot(self) -> dict[str, dict]:
        with self._lock:
            return copy.deepcopy(self._data)

    def flush(self) -> None:
        pass

    def close(self) -> None:
        pass


@dataclass
class LogRecord:
    timestamp: float
    role: str
    username: str
    phase: str
    event: str
    detail: str = ""
    session_id: str = ""
    src: str = ""
    dst: str = ""
    code: str = ""
    severity: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> LogRecord:
        return cls(**{k: doc[k] for k in cls.__dataclass_fields__ if k in doc})


class Role:
    """A protocol participant.

    Inbound messages are dispatched to ``on_<type>`` methods; outbound calls go
    through the injected network.  Errors raised with :meth:`fail` are sent to
    the logger exactly once, at the place they are detected.
    """

    role = "node"

    def __init__(
        self,
        name: str,
        params: GroupParams,
        network: Network | None = None,
        *,
        rng: RandomSource | None = None,
        store: MemoryStore | None = None,
        clock: Callable[[], float] = time.time,
        trace: bool = True,
        logger_name: str | None = LOGGER,
    ) -> None:
        self.name = name
        self.params = params
        self.network = network
        self.rng = rng if rng is not None else system_rng()
        self.store = store if store is not None else MemoryStore()
        self.clock = clock
        self.trace_enabled = trace
        self.logger_name = logger_name
        self.local_log: list[LogRecord] = []
        self._lock = threading.RLock()
        self._rng_lock = threading.Lock()

    # -- randomness -------------------------------------------------------
    def draw(self, fn: Callable[..., object], *args):
        """Run an rng-consuming function; the rng is single-context."""
        with self._rng_lock:
            return fn(*args, self.rng)

    def new_session_id(self) -> str:
        with self._rng_lock:
            return random_bytes(12, self.rng).hex()

    # -- inbound ----------------------------------------------------------
    def handle(self, msg: Message) -> Message:
        handler = getattr(self, "on_" + msg.type, None)
        if handler is None:
            reply = msg.reply("failure", {"detail": f"{self.name}: unsupported message {msg.type}"})
        else:
            try:
                reply = handler(msg)
            except ProtocolError as err:
                reply = error_reply(msg, err)
            except SessionBusy as exc:
                reply = msg.reply("busy", {"detail": str(exc)})
            except (MalformedMessage, RemoteFailure, TransportError, ValueError, KeyError) as exc:
                reply = msg.reply("failure", {"detail": f"{type(exc).__name__}: {exc}"})
        if msg.type != "log":
            self.trace(reply, msg.sender)
        return reply

    def on_params(self, msg: Message) -> Message:
        """Public group parameters, so clients need not ship a params file."""
        return msg.reply("params", {"params": self.params.to_dict()})

    # -- outbound ---------------------------------------------------------
    def _stamp(self, msg: Message) -> Message:
        return Message(msg.type, msg.session_id, msg.username, msg.payload, self.name)

    def call(self, dest: str, msg: Message) -> Message:
        """Send and unwrap: error replies become exceptions."""
        if self.network is None:
            raise Unreachable(f"{self.name} has no network")
        msg = self._stamp(msg)
        self.trace(msg, dest)
        return unwrap(self.network.call(self.name, dest, msg))

    def fan_out(self, calls: Sequence[tuple[str, Message]]) -> list[Message | Exception]:
        """Parallel calls; each slot holds the unwrapped reply or the exception."""
        if self.network is None:
            return [Unreachable(f"{self.name} has no network") for _ in calls]
        stamped = []
        for dest, msg in calls:
            msg = self._stamp(msg)
            self.trace(msg, dest)
            stamped.append((dest, msg))
        out: list[Message | Exception] = []
        for res in self.network.fan_out(self.name, stamped):
            if isinstance(res, Exception):
                out.append(res)
                continue
            try:
                out.append(unwrap(res))
            except Exception as exc:  # noqa: BLE001 - reported per slot
                out.append(exc)
        return out

    # -- logging ----------------------------------------------------------
    def emit(self, record: LogRecord) -> None:
        if self.logger_name is None or self.network is None or self.logger_name == self.name:
            self.local_log.append(record)
            return
        msg = Message("log", record.session_id, record.username, record.to_dict(), self.name)
        try:
            self.network.call(self.name, self.logger_name, msg)
        except TransportError:
            self.local_log.append(record)

    def trace(self, msg: Message, dst: str) -> None:
        if not self.trace_enabled or msg.type == "log":
            return
        # error replies are traced under their own name; "error" records are
        # reserved for the single report made where the error was detected
        event = "error_reply" if msg.type == "error" else msg.type
        self.emit(LogRecord(
            timestamp=self.clock(), role=self.name, username=msg.username,
            phase=msg.phase, event=event, session_id=msg.session_id,
            src=self.name, dst=dst, code=str(msg.payload.get("code", "")) if event == "error_reply" else "",
        ))

    def report_error(self, err: ProtocolError, session_id: str = "") -> None:
        self.emit(LogRecord(
            timestamp=self.clock(), role=self.name, username=err.username,
            phase=PHASE[err.code], event="error", detail=err.detail,
            session_id=session_id, code=err.code.value, severity=err.severity.value,
        ))

    def warn(self, username: str, detail: str, session_id: str = "") -> None:
        self.emit(LogRecord(
            timestamp=self.clock(), role=self.name, username=username, phase="",
            event="warning", detail=detail, session_id=session_id,
        ))

    def fail(self, code: Code | str, username: str, detail: str = "", session_id: str = "") -> ProtocolError:
        """Build, log and return a protocol error; callers ``raise`` it."""
        err = ProtocolError(code, self.name, username, detail)
        self.report_error(err, session_id)
        return err

    def note(self, code: Code | str, username: str, detail: str = "", session_id: str = "") -> None:
        """Log a non-fatal error without interrupting the flow."""
        self.report_error(ProtocolError(code, self.name, username, detail), session_id)


def unwrap(reply: Message) -> Message:
    if reply.type == "error":
        raise ProtocolError.from_dict(reply.payload)
    if reply.type == "busy":
        raise SessionBusy(reply.payload.get("detail", "busy"))
    if reply.type == "failure":
        raise RemoteFailure(reply.payload.get("detail", "remote failure"))
    return reply


@dataclass
class SessionRegistry:
    """At most one in-flight phase per username."""

    clock: Callable[[], float]
    ttl: float = 30.0
    _owners: dict[str, tuple[str, float]] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def acquire(self, username: str, session_id: str) -> None:
        with self._lock:
            now = self.clock()
            owner = self._owners.get(username)
            if owner and owner[0] != session_id and owner[1] > now:
                raise SessionBusy(f"{username} already has session in flight")
            self._owners[username] = (session_id, now + self.ttl)

    def owner(self, username: str) -> str | None:
        with self._lock:
            owner = self._owners.get(username)
            if owner and owner[1] > self.clock():
                return owner[0]
            return None

    def release(self, username: str, session_id: str) -> None:
        with self._lock:
            owner = self._owners.get(username)
            if owner and owner[0] == session_id:
                del self._owners[username]


class LocalNetwork:
    """Thread-safe in-process transport with real clocks.

    Messages still pass through the canonical byte encoding so behaviour
    matches the TCP transport.
    """

    def __init__(self) -> None:
        self.nodes: dict[str, Role] = {}
        self.down: set[str] = set()

    def register(self, role: Role) -> Role:
        self.nodes[role.name] = role
        role.network = self
        return role

    def call(self, src: str, dest: str, msg: Message) -> Message:
        node = self.nodes.get(dest)
        if node is None or dest in self.down:
            raise Unreachable(f"{dest} is unreachable")
        reply = node.handle(Message.decode(msg.encode()))
        return Message.decode(reply.encode())

    def fan_out(self, src: str, calls: Sequence[tuple[str, Message]]) -> list[Message | Exception]:
        out: list[Message | Exception] = []
        for dest, msg in calls:
            try:
                out.append(self.call(src, dest, msg))
            except TransportError as exc:
                out.append(exc)
        return out

    def __iter__(self) -> Iterator[Role]:
        return iter(self.nodes.values())
