"""Sign-up and login state machines for every role."""

from .base import DEALER, LOGGER, SERVICE, LocalNetwork, LogRecord, MemoryStore, Role, shareholder_name
from .client import Client, build_login, client_signup_init, service_is_honest
from .crypto import password_to_scalar, sym_decrypt, sym_encrypt
from .dealer import Dealer
from .errors import (
    RECONSTRUCTION_CHECKS,
    Code,
    ProtocolError,
    Severity,
    TransportError,
    classify_error,
)
from .logger import Logger, logger_report
from .messages import Message
from .service import Service
from .shareholder import Shareholder
from .state import CredentialState, LoginRequest

__all__ = [
    "DEALER", "LOGGER", "SERVICE", "Client", "Code", "CredentialState", "Dealer",
    "LocalNetwork", "LogRecord", "Logger", "LoginRequest", "MemoryStore", "Message",
    "ProtocolError", "RECONSTRUCTION_CHECKS", "Role", "Service", "Severity", "Shareholder",
    "TransportError", "build_login", "classify_error", "client_signup_init", "logger_report",
    "password_to_scalar", "service_is_honest", "shareholder_name", "sym_decrypt", "sym_encrypt",
]
