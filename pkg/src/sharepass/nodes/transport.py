"""Length-prefixed canonical messages over TCP."""

from __future__ import annotations

import socket
import socketserver
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

from ..protocol.base import Role
from ..protocol.errors import DeliveryTimeout, MalformedMessage, TransportError, Unreachable
from ..protocol.messages import Message

HEADER = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024
DEFAULT_TIMEOUT = 5.0


def parse_addr(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit() or not 0 <= int(port) <= 65535:
        raise ValueError(f"address must be host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed the connection mid-frame")
        buf += chunk
    return bytes(buf)


def send_frame(sock: socket.socket, payload: bytes) -> None:
    if len(payload) > MAX_FRAME:
        raise ValueError("frame too large")
    sock.sendall(HEADER.pack(len(payload)) + payload)


def recv_frame(sock: socket.socket) -> bytes:
    (length,) = HEADER.unpack(_recv_exact(sock, HEADER.size))
    if length > MAX_FRAME:
        raise MalformedMessage(f"frame of {length} bytes exceeds the limit")
    return _recv_exact(sock, length)


class TcpNetwork:
    """Client side: one connection per request, parallel fan-out."""

    def __init__(self, addresses: dict[str, str], timeout: float = DEFAULT_TIMEOUT,
                 max_workers: int = 32) -> None:
        self.addresses = {name: parse_addr(a) for name, a in addresses.items()}
        self.timeout = timeout
        self._pool = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="fanout")

    def call(self, src: str, dest: str, msg: Message) -> Message:
        addr = self.addresses.get(dest)
        if addr is None:
            raise Unreachable(f"no address for {dest}")
        try:
            with socket.create_connection(addr, timeout=self.timeout) as sock:
                send_frame(sock, msg.encode())
                return Message.decode(recv_frame(sock))
        except socket.timeout:
            raise DeliveryTimeout(f"{dest} did not answer within {self.timeout}s") from None
        except OSError as exc:
            raise Unreachable(f"{dest}: {exc}") from None

    def fan_out(self, src: str, calls: Sequence[tuple[str, Message]]) -> list[Message | Exception]:
        def one(dest: str, msg: Message) -> Message | Exception:
            try:
                return self.call(src, dest, msg)
            except TransportError as exc:
                return exc

        futures = [self._pool.submit(one, dest, msg) for dest, msg in calls]
        return [f.result() for f in futures]

    def close(self) -> None:
        self._pool.shutdown(wait=False)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        role: Role = self.server.role  # type: ignore[attr-defined]
        self.request.settimeout(self.server.timeout_s)  # type: ignore[attr-defined]
        try:
            data = recv_frame(self.request)
        except (OSError, ConnectionError, MalformedMessage):
            return
        try:
            msg = Message.decode(data)
        except MalformedMessage as exc:
            reply = Message("failure", payload={"detail": str(exc)})
        else:
            reply = role.handle(msg)
        try:
            send_frame(self.request, reply.encode())
        except OSError:
            pass


class NodeServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 256

    def __init__(self, role: Role, listen: str, timeout: float = DEFAULT_TIMEOUT) -> None:
        self.role = role
        self.timeout_s = timeout
        super().__init__(parse_addr(listen), _Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> NodeServer:
        self._thread = threading.Thread(target=self.serve_forever, args=(0.05,), name=f"node-{self.role.name}",
                                        daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
