import socket
from pathlib import Path

import pytest

from sharepass.group import TOY_PARAMS, generate_params, generate_params_with_trapdoor
from sharepass.nodes.config import NodeConfig
from sharepass.nodes.daemon import start_node
from sharepass.nodes.transport import TcpNetwork
from sharepass.protocol import DEALER, LOGGER, SERVICE, Client, shareholder_name


@pytest.fixture(scope="session")
def toy():
    return TOY_PARAMS


@pytest.fixture(scope="session")
def small_params():
    # fast group for protocol tests: 96-bit p, 48-bit q
    return generate_params(96, 48, seed=5)


@pytest.fixture(scope="session")
def params166():
    return generate_params(166, seed=1)


@pytest.fixture(scope="session")
def wide_q():
    # q of at least 128 bits, with the trapdoor kept for binding tests
    return generate_params_with_trapdoor(192, 136, seed=11)


def free_ports(k):
    socks = []
    for _ in range(k):
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        socks.append(s)
    ports = [s.getsockname()[1] for s in socks]
    for s in socks:
        s.close()
    return ports


class Cluster:
    """Logger, dealer, n shareholders and the service, each on loopback TCP with a file store."""

    def __init__(self, root, params, t=3, n=5, *, timeout=2.0, backup_keys=False):
        self.root = Path(root)
        self.t, self.n = t, n
        self.root.mkdir(parents=True, exist_ok=True)
        self.params_path = self.root / "params.json"
        params.save(self.params_path)
        ports = free_ports(n + 3)
        self.addr = {
            LOGGER: f"127.0.0.1:{ports[0]}",
            DEALER: f"127.0.0.1:{ports[1]}",
            SERVICE: f"127.0.0.1:{ports[2]}",
        }
        for i in range(1, n + 1):
            self.addr[shareholder_name(i)] = f"127.0.0.1:{ports[2 + i]}"
        self.timeout = timeout
        self.backup_keys = backup_keys
        self.nodes = {}
        self._client_nets = []
        for name in self.addr:
            self.start(name)

    def config(self, name):
        role = name.split("-")[0] if name.startswith("shareholder") else name
        return NodeConfig(
            role=role, name=name, listen=self.addr[name], params=str(self.params_path),
            t=self.t, n=self.n, store=str(self.root / f"{name}.jsonl"),
            log_sink=self.addr[LOGGER] if name != LOGGER else "",
            dealer=self.addr[DEALER], service=self.addr[SERVICE],
            shareholders=[self.addr[shareholder_name(i)] for i in range(1, self.n + 1)],
            timeout=self.timeout, backup_keys=self.backup_keys,
        )

    def start(self, name):
        self.nodes[name] = start_node(self.config(name))
        return self.nodes[name]

    def kill(self, name):
        self.nodes.pop(name).stop()

    def role(self, name):
        return self.nodes[name].role

    def client(self, name="client"):
        net = TcpNetwork({DEALER: self.addr[DEALER], SERVICE: self.addr[SERVICE],
                          LOGGER: self.addr[LOGGER]}, timeout=self.timeout, max_workers=64)
        self._client_nets.append(net)
        return Client(name, self.params, net)

    @property
    def params(self):
        return self.role(DEALER).params

    def close(self):
        for name in list(self.nodes):
            self.kill(name)
        for net in self._client_nets:
            net.close()


@pytest.fixture
def cluster(tmp_path, small_params):
    made = []

    def make(**kw):
        c = Cluster(tmp_path / f"cluster{len(made)}", small_params, **kw)
        made.append(c)
        return c

    yield make
    for c in made:
        c.close()
