"""Daemons wrapping the protocol roles with TCP transport and file stores."""

from .config import ConfigError, NodeConfig
from .daemon import RunningNode, run_node, start_node
from .store import FileStore, StoreCorrupted
from .transport import NodeServer, TcpNetwork

__all__ = [
    "ConfigError", "FileStore", "NodeConfig", "NodeServer", "RunningNode", "StoreCorrupted",
    "TcpNetwork", "run_node", "start_node",
]
