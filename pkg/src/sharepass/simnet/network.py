"""Single-threaded network with a virtual clock and full capture."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Sequence

from ..protocol.base import LOGGER, Role
from ..protocol.errors import DeliveryTimeout, TransportError
from ..protocol.messages import Message

DEFAULT_LATENCY = 0.002
DEFAULT_DEADLINE = 5.0
DEFAULT_BUDGET = 3600.0


class ScenarioHang(BaseException):
    """Virtual time ran past the scenario budget.

    Derives from BaseException so no role-level handler can swallow it.
    """


@dataclass(frozen=True)
class Frame:
    time: float
    src: str
    dst: str
    data: bytes
    kind: str  # "request" or "reply"

    @property
    def is_log(self) -> bool:
        return self.dst == LOGGER or self.src == LOGGER


class SimNetwork:
    """Deterministic in-process transport.

    Every hop costs ``latency`` virtual seconds; a call to a down node costs
    the full ``deadline`` and raises DeliveryTimeout.  Fan-out is modelled as
    parallel: the clock advances by the slowest branch.  Log traffic is
    captured but costs no time.
    """

    def __init__(self, *, latency: float = DEFAULT_LATENCY, deadline: float = DEFAULT_DEADLINE,
                 budget: float = DEFAULT_BUDGET) -> None:
        self.latency = latency
        self.deadline = deadline
        self.budget = budget
        self.now_value = 0.0
        self.nodes: dict[str, Role] = {}
        self.frames: list[Frame] = []
        self.is_down: Callable[[str], bool] = lambda name: False
        self.deliveries = 0

    def now(self) -> float:
        return self.now_value

    def register(self, role: Role) -> Role:
        self.nodes[role.name] = role
        role.network = self
        return role

    def _advance(self, dt: float) -> None:
        self.now_value += dt
        if self.now_value > self.budget:
            raise ScenarioHang(f"virtual time passed the {self.budget}s budget")

    def call(self, src: str, dest: str, msg: Message) -> Message:
        data = msg.encode()
        self.frames.append(Frame(self.now_value, src, dest, data, "request"))
        free = dest == LOGGER
        node = self.nodes.get(dest)
        if node is None or self.is_down(dest):
            if not free:
                self._advance(self.deadline)
            raise DeliveryTimeout(f"{dest} did not answer within {self.deadline}s")
        if not free:
            self._advance(self.latency)
        self.deliveries += 1
        reply = node.handle(Message.decode(data))
        out = reply.encode()
        self.frames.append(Frame(self.now_value, dest, src, out, "reply"))
        if not free:
            self._advance(self.latency)
        return Message.decode(out)

    def fan_out(self, src: str, calls: Sequence[tuple[str, Message]]) -> list[Message | Exception]:
        start = self.now_value
        finish = start
        out: list[Message | Exception] = []
        for dest, msg in calls:
            self.now_value = start
            try:
                out.append(self.call(src, dest, msg))
            except TransportError as exc:
                out.append(exc)
            finish = max(finish, self.now_value)
        self.now_value = finish
        return out

    # -- capture queries ----------------------------------------------------
    def wire_bytes(self, *, include_logs: bool = True) -> list[bytes]:
        return [f.data for f in self.frames if include_logs or not f.is_log]

    def seen_by(self, name: str) -> list[bytes]:
        return [f.data for f in self.frames if name in (f.src, f.dst)]

    def trace_digest(self) -> str:
        h = hashlib.sha256()
        for f in self.frames:
            h.update(f"{f.time:.6f}|{f.src}|{f.dst}|{f.kind}|".encode())
            h.update(f.data)
        return h.hexdigest()
