import json
import socket
import subprocess
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import pytest

from sharepass.nodes.config import ConfigError, NodeConfig
from sharepass.nodes.store import FileStore, StoreCorrupted
from sharepass.nodes.transport import TcpNetwork, parse_addr, recv_frame, send_frame
from sharepass.protocol import DEALER, LOGGER, Code, Message, ProtocolError, shareholder_name
from sharepass.protocol.errors import DeliveryTimeout, SessionBusy, Unreachable
from sharepass.protocol.logger import load_records, logger_report, sharing_exchanges
from sharepass.protocol.messages import hx

from conftest import free_ports

PASSWORD = "tcp password"


# -- file store ----------------------------------------------------------------
def test_file_store_survives_reopen(tmp_path):
    path = tmp_path / "s.jsonl"
    store = FileStore(path)
    store.put("a", {"v": 1})
    store.put("b", {"v": 2})
    store.put("a", {"v": 3})
    store.delete("b")
    store.close()
    again = FileStore(path)
    assert again.snapshot() == {"a": {"v": 3}}
    again.put("c", {"v": 4})
    again.close()
    assert FileStore(path).get("c") == {"v": 4}


def test_file_store_refuses_truncation(tmp_path):
    path = tmp_path / "s.jsonl"
    store = FileStore(path)
    store.put("a", {"v": 1})
    store.put("b", {"v": 2})
    store.close()
    data = path.read_bytes()
    for cut in (len(data) - 1, len(data) - data[:-1].rindex(b"\n") + 2):
        path.write_bytes(data[:-cut] if cut < len(data) else data[:cut])
        with pytest.raises(StoreCorrupted):
            FileStore(path)
    # dropping the final seal line is also caught
    lines = data.splitlines(keepends=True)
    path.write_bytes(b"".join(lines[:-1]))
    with pytest.raises(StoreCorrupted):
        FileStore(path)


def test_file_store_refuses_edited_records(tmp_path):
    path = tmp_path / "s.jsonl"
    store = FileStore(path)
    store.put("a", {"v": 1})
    store.close()
    path.write_text(path.read_text().replace('"v": 1', '"v": 2'))
    with pytest.raises(StoreCorrupted):
        FileStore(path)
    path.write_text("not json\n")
    with pytest.raises(StoreCorrupted):
        FileStore(path)


# -- config ----------------------------------------------------------------------
def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        NodeConfig(role="mystery", params="p").validate()
    with pytest.raises(ConfigError):
        NodeConfig(role="shareholder", params="p").validate()
    with pytest.raises(ConfigError):
        NodeConfig(role="dealer", params="p", t=3, n=2, service="127.0.0.1:1").validate()
    with pytest.raises(ConfigError):
        NodeConfig(role="dealer", params="p", t=2, n=3, shareholders="127.0.0.1:1",
                   service="127.0.0.1:2").validate()
    with pytest.raises(ValueError):
        NodeConfig(role="logger", listen="nonsense").validate()
    with pytest.raises(ConfigError):
        NodeConfig.from_dict({"role": "logger", "colour": "blue"})
    nested = tmp_path / "c.json"
    nested.write_text(json.dumps({"role": "logger", "extra": {"a": 1}}))
    with pytest.raises(ConfigError):
        NodeConfig.load(nested)
    cfg = NodeConfig(role="dealer", params="p", t=1, n=2, service="127.0.0.1:2",
                     shareholders="127.0.0.1:3, 127.0.0.1:4").validate()
    assert cfg.address_book() == {"service": "127.0.0.1:2", "shareholder-1": "127.0.0.1:3",
                                  "shareholder-2": "127.0.0.1:4"}


def test_parse_addr():
    assert parse_addr("127.0.0.1:80") == ("127.0.0.1", 80)
    for bad in ("127.0.0.1", "host:port", "h:70000"):
        with pytest.raises(ValueError):
            parse_addr(bad)


# -- transport ---------------------------------------------------------------------
def test_unreachable_and_silent_peers():
    (port,) = free_ports(1)
    net = TcpNetwork({"dead": f"127.0.0.1:{port}"}, timeout=0.5)
    with pytest.raises(Unreachable):
        net.call("x", "dead", Message("params"))
    with pytest.raises(Unreachable):
        net.call("x", "nobody", Message("params"))
    silent = socket.socket()
    silent.bind(("127.0.0.1", 0))
    silent.listen(1)
    net = TcpNetwork({"silent": "127.0.0.1:%d" % silent.getsockname()[1]}, timeout=0.5)
    start = time.monotonic()
    out = net.fan_out("x", [("silent", Message("params"))])
    assert isinstance(out[0], DeliveryTimeout)
    assert time.monotonic() - start < 2
    silent.close()
    net.close()


def test_frames_round_trip():
    a, b = socket.socketpair()
    send_frame(a, b"hello")
    assert recv_frame(b) == b"hello"
    a.close()
    b.close()


# -- TCP integration ---------------------------------------------------------------
def test_tcp_signup_and_login_with_file_stores(cluster):
    c = cluster()
    client = c.client()
    state = client.signup("alice", PASSWORD)
    token, state = client.login(PASSWORD, state)
    assert token
    for i in range(1, c.n + 1):
        blob = (c.root / f"{shareholder_name(i)}.jsonl").read_text()
        assert "alice" in blob
        for x in state.abscissae:
            assert f'"{hx(x)}"' not in blob
    assert not c.role(LOGGER).errors()


def test_tcp_login_tolerates_n_minus_t_crashes(cluster):
    c = cluster()
    client = c.client()
    state = client.signup("alice", PASSWORD)
    c.kill(shareholder_name(1))
    c.kill(shareholder_name(4))
    token, state = client.login(PASSWORD, state)
    assert token
    c.kill(shareholder_name(2))
    with pytest.raises(ProtocolError) as exc:
        client.login(PASSWORD, state)
    assert exc.value.code is Code.NOT_ENOUGH_SHARES


def test_tcp_shareholder_restart_keeps_its_share(cluster):
    c = cluster()
    client = c.client()
    state = client.signup("alice", PASSWORD)
    for i in (1, 2, 3):
        c.kill(shareholder_name(i))
        c.start(shareholder_name(i))
    token, state = client.login(PASSWORD, state)
    token, state = client.login(PASSWORD, state)
    assert token


def test_tcp_restart_with_corrupted_store_refuses(cluster):
    c = cluster()
    c.client().signup("alice", PASSWORD)
    name = shareholder_name(2)
    c.kill(name)
    path = c.root / f"{name}.jsonl"
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(StoreCorrupted):
        c.start(name)


def test_tcp_twenty_concurrent_users(cluster):
    c = cluster()
    users = [f"user{i}" for i in range(20)]
    clients = {u: c.client(f"client-{u}") for u in users}
    with ThreadPoolExecutor(20) as pool:
        states = dict(zip(users, pool.map(lambda u: clients[u].signup(u, f"pw-{u}"), users)))
        results = dict(zip(users, pool.map(lambda u: clients[u].login(f"pw-{u}", states[u]), users)))
    service = c.role("service")
    for u, (token, rotated) in results.items():
        assert token == service.issued_token(u)
        assert rotated.username == u
    assert len({t for t, _ in results.values()}) == 20
    assert not c.role(LOGGER).errors()


def test_tcp_same_user_concurrent_logins(cluster):
    c = cluster()
    client = c.client()
    state = client.signup("alice", PASSWORD)
    barrier = threading.Barrier(4)

    def attempt(_):
        barrier.wait()
        try:
            return client.login(PASSWORD, state)[0]
        except (SessionBusy, ProtocolError) as exc:
            return exc

    with ThreadPoolExecutor(4) as pool:
        outcomes = list(pool.map(attempt, range(4)))
    tokens = [o for o in outcomes if isinstance(o, str)]
    assert len(tokens) == 1
    assert all(isinstance(o, (SessionBusy, ProtocolError)) for o in outcomes if o not in tokens)


def test_tcp_logger_sink(cluster):
    c = cluster()
    client = c.client()
    state = client.signup("alice", PASSWORD)
    with pytest.raises(ProtocolError):
        client.login("wrong", state)
    records = load_records(c.root / "logger.jsonl")
    errors = [r for r in records if r.event == "error"]
    assert [(r.code, r.role) for r in errors] == [("COD860", DEALER)]
    report = logger_report(records)
    assert "COD860" in report and "fatal" in report
    assert sharing_exchanges(records)[0] == "client->dealer:signup_mc"


def test_tcp_backup_keys_survive_service_restart(cluster):
    c = cluster(backup_keys=True)
    client = c.client()
    state = client.signup("alice", PASSWORD)
    c.kill("service")
    c.start("service")
    assert "kprime" not in c.role("service").record("alice")
    token, _ = client.login(PASSWORD, state)
    assert token


# -- the node command ----------------------------------------------------------------
def _run_node(args, **kw):
    return subprocess.Popen([sys.executable, "-m", "sharepass.nodes.daemon", *args],
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, **kw)


def test_node_command_starts_and_stops(tmp_path, small_params):
    small_params.save(tmp_path / "params.json")
    (port,) = free_ports(1)
    cfg = tmp_path / "node.json"
    cfg.write_text(json.dumps({"role": "shareholder", "name": "shareholder-1",
                               "listen": f"127.0.0.1:{port}", "params": str(tmp_path / "params.json"),
                               "store": str(tmp_path / "sh1.jsonl")}))
    proc = _run_node(["--config", str(cfg)])
    try:
        line = proc.stdout.readline()
        assert f"listening on 127.0.0.1:{port}" in line
        reply = TcpNetwork({"sh": f"127.0.0.1:{port}"}).call("x", "sh", Message("params"))
        assert reply.type == "params"
    finally:
        proc.terminate()
    assert proc.wait(timeout=10) == 0


def test_node_command_exit_codes(tmp_path, small_params):
    small_params.save(tmp_path / "params.json")
    store = tmp_path / "bad.jsonl"
    store.write_text('{"k": "a"')
    proc = _run_node(["--role", "shareholder", "--name", "shareholder-1", "--listen", "127.0.0.1:0",
                      "--params", str(tmp_path / "params.json"), "--store", str(store)])
    assert proc.wait(timeout=10) == 2
    assert "truncated" in proc.stderr.read()
    proc = _run_node(["--role", "shareholder", "--listen", "127.0.0.1:0"])
    assert proc.wait(timeout=10) == 2
    proc = _run_node(["--role", "logger", "--listen", "256.0.0.1:1"])
    assert proc.wait(timeout=10) in (1, 2)
