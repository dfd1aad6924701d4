"""Long-running node process: ``sharepass-node``."""

from __future__ import annotations

import argparse
import signal
import sys
import threading
from dataclasses import dataclass

from ..group import TOY_PARAMS, GroupParams, seeded_rng, system_rng
from ..protocol.base import Role
from ..protocol.dealer import Dealer
from ..protocol.logger import Logger
from ..protocol.service import Service
from ..protocol.shareholder import Shareholder
from .config import ConfigError, NodeConfig
from .store import FileStore, StoreCorrupted
from .transport import NodeServer, TcpNetwork

# the logger never does group arithmetic
_NO_PARAMS = TOY_PARAMS


@dataclass
class RunningNode:
    role: Role
    server: NodeServer
    network: TcpNetwork
    store: FileStore | None

    @property
    def address(self) -> str:
        return self.server.address

    def stop(self) -> None:
        self.server.stop()
        self.network.close()
        if self.store is not None:
            self.store.close()


def build_role(cfg: NodeConfig, params: GroupParams, network: TcpNetwork, store) -> Role:
    rng = seeded_rng(f"{cfg.seed}:{cfg.name}") if cfg.seed is not None else system_rng()
    kw = {"rng": rng, "store": store}
    if cfg.role == "dealer":
        return Dealer(cfg.name, params, network, t=cfg.t, n=cfg.n, **kw)
    if cfg.role == "shareholder":
        return Shareholder(cfg.name, params, network, **kw)
    if cfg.role == "service":
        return Service(cfg.name, params, network, t=cfg.t or None, n=cfg.n or None,
                       backup_keys=cfg.backup_keys, **kw)
    return Logger(cfg.name, params, network, sink=cfg.store or None, rng=rng)


def start_node(cfg: NodeConfig) -> RunningNode:
    """Open the store, bind the socket and serve in a background thread.

    Raises ConfigError, StoreCorrupted or OSError (bind failure).
    """
    cfg.validate()
    params = GroupParams.load(cfg.params) if cfg.params else _NO_PARAMS
    store = FileStore(cfg.store) if cfg.store and cfg.role != "logger" else None
    network = TcpNetwork(cfg.address_book(), timeout=cfg.timeout)
    role = build_role(cfg, params, network, store)
    try:
        server = NodeServer(role, cfg.listen, timeout=cfg.timeout)
    except OSError:
        network.close()
        if store is not None:
            store.close()
        raise
    return RunningNode(role, server.start(), network, store)


def run_node(cfg: NodeConfig, stop: threading.Event | None = None) -> None:
    node = start_node(cfg)
    stop = stop or threading.Event()
    print(f"{cfg.name} listening on {node.address}", flush=True)
    try:
        stop.wait()
    finally:
        node.stop()


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    ap = argparse.ArgumentParser(prog="sharepass-node", description="Run one protocol node.")
    ap.add_argument("--role", choices=["dealer", "shareholder", "service", "logger"])
    ap.add_argument("--config", help="flat JSON config file")
    ap.add_argument("--listen", help="host:port to bind")
    ap.add_argument("--name", help="node name, e.g. shareholder-2")
    ap.add_argument("--params", help="group parameter file")
    ap.add_argument("--store", help="store path (the logger writes its sink here)")
    ap.add_argument("--log-sink", help="logger host:port")
    ap.add_argument("--seed", help="deterministic rng seed, for tests only")
    return ap.parse_args(argv)


def config_from_args(args: argparse.Namespace) -> NodeConfig:
    doc: dict = {}
    if args.config:
        doc = NodeConfig.load(args.config).__dict__.copy()
    for key in ("role", "listen", "name", "params", "store", "log_sink", "seed"):
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    if "role" not in doc:
        raise ConfigError("--role or a config with a role is required")
    return NodeConfig(**doc)


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    try:
        cfg = config_from_args(args)
        stop = threading.Event()
        signal.signal(signal.SIGTERM, lambda *_: stop.set())
        signal.signal(signal.SIGINT, lambda *_: stop.set())
        run_node(cfg, stop)
    except (ValueError, StoreCorrupted) as exc:
        print(f"sharepass-node: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"sharepass-node: cannot start: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
