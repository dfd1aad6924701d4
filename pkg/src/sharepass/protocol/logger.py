"""Logger role: collects traces and errors from every node."""

from __future__ import annotations

import json
import threading
from collections import Counter, OrderedDict
from pathlib import Path

from .base import LogRecord, Role
from .errors import MalformedMessage
from .messages import Message, ack

# per-session trace cap; errors are always kept
TRACE_CAP = 2000


class Logger(Role):
    role = "logger"

    def __init__(self, name, params, network=None, *, sink: str | Path | None = None, **kw):
        kw.setdefault("trace", False)
        super().__init__(name, params, network, **kw)
        self.records: list[LogRecord] = []
        self.sink = Path(sink) if sink else None
        self._per_session: Counter[str] = Counter()
        self._sink_lock = threading.Lock()

    def on_log(self, msg: Message) -> Message:
        try:
            record = LogRecord.from_dict(msg.payload)
        except TypeError as exc:
            raise MalformedMessage(f"bad log record: {exc}") from None
        self.append(record)
        return ack(msg)

    def append(self, record: LogRecord) -> None:
        with self._sink_lock:
            if record.event not in ("error", "warning"):
                if self._per_session[record.session_id] >= TRACE_CAP:
                    return
                self._per_session[record.session_id] += 1
            self.records.append(record)
            if self.sink is not None:
                with self.sink.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")

    def errors(self) -> list[LogRecord]:
        with self._sink_lock:
            return [r for r in self.records if r.event == "error"]

    def codes(self) -> Counter[str]:
        return Counter(r.code for r in self.errors())

    def report(self) -> str:
        with self._sink_lock:
            return logger_report(list(self.records))


def load_records(path: str | Path) -> list[LogRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(LogRecord.from_dict(json.loads(line)))
    return out


def _session_phase(records: list[LogRecord]) -> str:
    for r in records:
        if r.phase:
            return r.phase
    return "unknown"


def logger_report(records: list[LogRecord]) -> str:
    """Per-session message traces followed by an error summary.

    Returns an empty string for an empty log.
    """
    if not records:
        return ""
    sessions: OrderedDict[str, list[LogRecord]] = OrderedDict()
    for r in records:
        sessions.setdefault(r.session_id, []).append(r)
    lines = []
    for sid, recs in sessions.items():
        users = sorted({r.username for r in recs if r.username})
        lines.append(f"== {_session_phase(recs)} session {sid or '-'} user {','.join(users) or '-'}")
        for r in recs:
            if r.event == "error":
                lines.append(f"   !! {r.code} ({r.severity}) at {r.role}: {r.detail}")
            elif r.event == "warning":
                lines.append(f"   ?? {r.role}: {r.detail}")
            elif r.event == "error_reply":
                lines.append(f"   {r.src} -> {r.dst}: error {r.code}")
            else:
                lines.append(f"   {r.src} -> {r.dst}: {r.event}")
    errors = [r for r in records if r.event == "error"]
    lines.append("== error summary")
    if not errors:
        lines.append("   none")
    by_code = Counter((r.phase, r.code, r.severity) for r in errors)
    for (phase, code, severity), count in sorted(by_code.items()):
        lines.append(f"   {phase:<15} {code:<8} {severity:<14} x{count}")
    return "\n".join(lines) + "\n"


def sharing_exchanges(records: list[LogRecord]) -> list[str]:
    """Distinct exchange kinds of a sign-up session, in first-seen order."""
    seen: list[str] = []
    for r in records:
        if r.event in ("error", "warning"):
            continue
        label = f"{_kind(r.src)}->{_kind(r.dst)}:{r.event}"
        if label not in seen:
            seen.append(label)
    return seen


def _kind(name: str) -> str:
    return name.split("-")[0] if name.startswith("shareholder") else name
