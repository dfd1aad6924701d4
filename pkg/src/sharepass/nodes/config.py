"""Flat key-value node configuration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..protocol.base import DEALER, LOGGER, SERVICE, shareholder_name
from .transport import DEFAULT_TIMEOUT, parse_addr

ROLES = ("dealer", "shareholder", "service", "logger")


class ConfigError(ValueError):
    pass


@dataclass
class NodeConfig:
    role: str
    listen: str = "127.0.0.1:0"
    name: str = ""
    params: str = ""
    t: int = 0
    n: int = 0
    store: str = ""
    log_sink: str = ""
    dealer: str = ""
    service: str = ""
    shareholders: list[str] = field(default_factory=list)
    seed: str | None = None
    backup_keys: bool = False
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self) -> None:
        if isinstance(self.shareholders, str):
            self.shareholders = [a.strip() for a in self.shareholders.split(",") if a.strip()]
        self.t, self.n = int(self.t), int(self.n)
        if not self.name:
            self.name = {"dealer": DEALER, "service": SERVICE, "logger": LOGGER}.get(self.role, "")

    @classmethod
    def from_dict(cls, doc: dict) -> NodeConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "role" not in doc:
            raise ConfigError("config needs a role")
        return cls(**{k.replace("-", "_"): v for k, v in doc.items()})

    @classmethod
    def load(cls, path: str | Path) -> NodeConfig:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict) or any(isinstance(v, dict) for v in doc.values()):
            raise ConfigError("config must be a flat key-value object")
        return cls.from_dict(doc)

    def validate(self) -> NodeConfig:
        if self.role not in ROLES:
            raise ConfigError(f"role must be one of {', '.join(ROLES)}")
        if not self.name:
            raise ConfigError("shareholders need a name such as shareholder-3")
        parse_addr(self.listen)
        if self.role != "logger" and not self.params:
            raise ConfigError("params file required")
        if self.role == "dealer":
            if not 1 <= self.t <= self.n:
                raise ConfigError("need 1 <= t <= n")
            if len(self.shareholders) != self.n:
                raise ConfigError(f"n={self.n} but {len(self.shareholders)} shareholder addresses")
            if not self.service:
                raise ConfigError("dealer needs the service address")
        if self.role == "service":
            if not self.dealer:
                raise ConfigError("service needs the dealer address")
            if self.backup_keys and not 1 <= self.t <= self.n:
                raise ConfigError("key backup needs 1 <= t <= n")
        for addr in [self.dealer, self.service, self.log_sink, *self.shareholders]:
            if addr:
                parse_addr(addr)
        return self

    def address_book(self) -> dict[str, str]:
        book = {}
        if self.dealer:
            book[DEALER] = self.dealer
        if self.service:
            book[SERVICE] = self.service
        if self.log_sink:
            book[LOGGER] = self.log_sink
        for i, addr in enumerate(self.shareholders, 1):
            book[shareholder_name(i)] = addr
        return book
