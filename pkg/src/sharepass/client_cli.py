"""``sharepass-client``: sign up, log in, and move the credential state file."""

from __future__ import annotations

import argparse
import contextlib
import fcntl
import getpass
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Iterator

from .group import GroupParams, system_rng
from .nodes.transport import TcpNetwork
from .protocol.base import DEALER, LOGGER, SERVICE
from .protocol.client import Client
from .protocol.errors import MalformedMessage, ProtocolError, RemoteFailure, SessionBusy, TransportError
from .protocol.messages import Message, canonical
from .protocol.state import CredentialState

EXIT_OK = 0
EXIT_LOCAL = 1
EXIT_USAGE = 2


class LocalError(Exception):
    pass


def exit_code_for(err: ProtocolError) -> int:
    """10 plus the hundreds bucket of the code: COD860 -> 18, COD2400 -> 34."""
    return 10 + int(err.code.value[3:]) // 100


# -- state file -------------------------------------------------------------
@contextlib.contextmanager
def locked(path: Path) -> Iterator[None]:
    lock_path = path.with_name(path.name + ".lock")
    lock_path.parent.mkdir(parents=True, exist_ok=True)
    fd = os.open(lock_path, os.O_CREAT | os.O_RDWR, 0o600)
    try:
        try:
            fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            raise LocalError(f"{path} is in use by another command") from None
        yield
    finally:
        os.close(fd)


def write_state(path: Path, state: CredentialState) -> None:
    """Write-to-temp then rename: readers see the old or the new file, never half."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        os.fchmod(fd, 0o600)
        with os.fdopen(fd, "wb") as fh:
            fh.write(canonical(state.to_dict()) + b"\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def read_state(path: Path) -> CredentialState:
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise LocalError(f"no state file at {path}") from None
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise LocalError(f"unreadable state file {path}: {exc}") from None
    try:
        return CredentialState.from_dict(doc)
    except MalformedMessage as exc:
        raise LocalError(f"invalid state file {path}: {exc}") from None


def read_password(env_var: str | None) -> str:
    if env_var:
        try:
            return os.environ[env_var]
        except KeyError:
            raise LocalError(f"environment variable {env_var} is not set") from None
    return getpass.getpass("password: ")


# -- commands ---------------------------------------------------------------
def _client(args: argparse.Namespace) -> Client:
    book = {DEALER: args.dealer, SERVICE: args.service}
    if args.log_sink:
        book[LOGGER] = args.log_sink
    network = TcpNetwork(book, timeout=args.timeout)
    if args.params:
        params = GroupParams.load(args.params)
    else:
        reply = network.call("client", DEALER, Message("params", sender="client"))
        params = GroupParams.from_dict(reply.field("params"))
    return Client(f"client:{args.username}", params, network, rng=system_rng(),
                  logger_name=LOGGER if args.log_sink else None, trace=bool(args.log_sink))


def cmd_signup(args: argparse.Namespace) -> int:
    path = Path(args.state)
    with locked(path):
        if path.exists():
            raise LocalError(f"{path} already holds a credential state")
        password = read_password(args.password_env)
        state = _client(args).signup(args.username, password)
        write_state(path, state)
    print(f"signed up {args.username}; {len(state.abscissae)} abscissae saved to {path}")
    return EXIT_OK


def cmd_login(args: argparse.Namespace) -> int:
    path = Path(args.state)
    with locked(path):
        state = read_state(path)
        if args.username and args.username != state.username:
            raise LocalError(f"{path} belongs to {state.username}, not {args.username}")
        args.username = state.username
        password = read_password(args.password_env)
        token, rotated = _client(args).login(password, state)
        write_state(path, rotated)
    print(token)
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    src, dest = Path(args.state), Path(args.path)
    with locked(src):
        state = read_state(src)
        write_state(dest, state)
        if args.move:
            src.unlink()
    print(f"exported {state.username} to {dest}")
    return EXIT_OK


def cmd_import(args: argparse.Namespace) -> int:
    src, dest = Path(args.path), Path(args.state)
    state = read_state(src)
    with locked(dest):
        if dest.exists() and not args.force:
            raise LocalError(f"{dest} already exists; pass --force to replace it")
        write_state(dest, state)
        if args.move:
            src.unlink()
    print(f"imported {state.username} into {dest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sharepass-client")
    sub = ap.add_subparsers(dest="command", required=True)

    def network_flags(p: argparse.ArgumentParser, need_user: bool) -> None:
        p.add_argument("--dealer", required=True, help="dealer host:port")
        p.add_argument("--service", required=True, help="service host:port")
        p.add_argument("--state", required=True, help="credential state file")
        p.add_argument("--username", required=need_user)
        p.add_argument("--password-env", help="read the password from this variable (tests)")
        p.add_argument("--params", help="group parameter file; fetched from the dealer if absent")
        p.add_argument("--log-sink", help="logger host:port")
        p.add_argument("--timeout", type=float, default=5.0)

    signup = sub.add_parser("signup", help="register a new username")
    network_flags(signup, need_user=True)
    signup.set_defaults(func=cmd_signup)

    login = sub.add_parser("login", help="log in and rotate the state file")
    network_flags(login, need_user=False)
    login.set_defaults(func=cmd_login)

    export = sub.add_parser("export-state", help="copy the state file elsewhere")
    export.add_argument("path")
    export.add_argument("--state", required=True)
    export.add_argument("--move", action="store_true", help="delete the original afterwards")
    export.set_defaults(func=cmd_export)

    imp = sub.add_parser("import-state", help="install a previously exported state")
    imp.add_argument("path")
    imp.add_argument("--state", required=True)
    imp.add_argument("--move", action="store_true", help="delete the imported blob afterwards")
    imp.add_argument("--force", action="store_true")
    imp.set_defaults(func=cmd_import)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProtocolError as err:
        print(f"sharepass-client: {err.code.value} from {err.role}: {err.detail}", file=sys.stderr)
        return exit_code_for(err)
    except (LocalError, TransportError, RemoteFailure, SessionBusy, MalformedMessage, OSError) as exc:
        print(f"sharepass-client: {exc}", file=sys.stderr)
        return EXIT_LOCAL


if __name__ == "__main__":
    sys.exit(main())
