"""Append-only, hash-chained record store.

Each write appends one record line and one seal line.  A record line carries
the running chain hash; a seal line repeats the chain hash and the record
count.  On load the chain is recomputed and the file must end in a seal that
matches, otherwise the store refuses to open.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from ..protocol.base import MemoryStore

GENESIS = "0" * 64


class StoreCorrupted(Exception):
    pass


def _chain(prev: str, key: str, value: dict | None) -> str:
    body = json.dumps([key, value], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256((prev + body).encode()).hexdigest()


class FileStore(MemoryStore):
    def __init__(self, path: str | Path, *, fsync: bool = False) -> None:
        super().__init__()
        self.path = Path(path)
        self.fsync = fsync
        self._head = GENESIS
        self._count = 0
        self._load()
        self._fh = self.path.open("a", encoding="utf-8")

    def _load(self) -> None:
        if not self.path.exists():
            self.path.parent.mkdir(parents=True, exist_ok=True)
            return
        head, count, sealed = GENESIS, 0, True
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.endswith("\n"):
                    raise StoreCorrupted(f"{self.path}:{lineno}: truncated line")
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    raise StoreCorrupted(f"{self.path}:{lineno}: unreadable line") from None
                if "seal" in entry:
                    if entry["seal"] != head or entry.get("count") != count:
                        raise StoreCorrupted(f"{self.path}:{lineno}: seal mismatch")
                    sealed = True
                    continue
                key, value = entry.get("k"), entry.get("v")
                head = _chain(head, key, value)
                if entry.get("c") != head:
                    raise StoreCorrupted(f"{self.path}:{lineno}: checksum mismatch")
                count += 1
                sealed = False
                if value is None:
                    self._data.pop(key, None)
                else:
                    self._data[key] = value
        if not sealed:
            raise StoreCorrupted(f"{self.path}: missing final seal, file was truncated")
        self._head, self._count = head, count

    def _append(self, key: str, value: dict | None) -> None:
        self._head = _chain(self._head, key, value)
        self._count += 1
        record = json.dumps({"k": key, "v": value, "c": self._head}, sort_keys=True)
        seal = json.dumps({"seal": self._head, "count": self._count}, sort_keys=True)
        self._fh.write(record + "\n" + seal + "\n")
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())

    def put(self, key: str, record: dict) -> None:
        with self._lock:
            super().put(key, record)
            self._append(key, record)

    def delete(self, key: str) -> None:
        with self._lock:
            if key in self._data:
                super().delete(key)
                self._append(key, None)

    def flush(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.flush()
                os.fsync(self._fh.fileno())

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self.flush()
                self._fh.close()
