"""Wall-clock latency of sign-up and login under concurrent clients."""

from __future__ import annotations

import gc
import math
import statistics
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

from ..group import GroupParams, generate_params, seeded_rng, system_rng
from ..nodes.transport import NodeServer, TcpNetwork
from ..protocol.base import DEALER, LOGGER, SERVICE, LocalNetwork, Role, shareholder_name
from ..protocol.client import Client
from ..protocol.dealer import Dealer
from ..protocol.logger import Logger
from ..protocol.service import Service
from ..protocol.shareholder import Shareholder

PHASES = ("sharing", "reconstruction")


@dataclass(frozen=True)
class TimingRow:
    phase: str
    t: int
    n: int
    p_bits: int
    concurrency: int
    mean_latency: float
    samples: int


class LiveDeployment:
    """Every role on a real-clock transport: in-process calls or loopback TCP."""

    def __init__(self, t: int, n: int, params: GroupParams, *, transport: str = "local",
                 seed: int | str | None = None) -> None:
        self.params = params
        rng = (lambda name: seeded_rng(f"{seed}:{name}")) if seed is not None else (lambda name: system_rng())
        roles: list[Role] = [
            Logger(LOGGER, params, rng=rng(LOGGER)),
            Dealer(DEALER, params, t=t, n=n, rng=rng(DEALER)),
            *[Shareholder(shareholder_name(i), params, rng=rng(shareholder_name(i)))
              for i in range(1, n + 1)],
            Service(SERVICE, params, rng=rng(SERVICE)),
        ]
        self._servers = []
        if transport == "local":
            net = LocalNetwork()
            for role in roles:
                net.register(role)
            self.network = net
        elif transport == "tcp":
            servers = [NodeServer(role, "127.0.0.1:0").start() for role in roles]
            self._servers = servers
            self.network = TcpNetwork({s.role.name: s.address for s in servers}, max_workers=64)
            for role in roles:
                role.network = self.network
        else:
            raise ValueError("transport must be 'local' or 'tcp'")
        self._rng = rng

    def client(self, name: str) -> Client:
        return Client(name, self.params, self.network, rng=self._rng(name))

    def close(self) -> None:
        for server in self._servers:
            server.stop()
        if self._servers:
            self.network.close()


# interpreter switch interval while measuring: short enough that concurrent
# clients share the CPU fairly instead of running in convoys
SWITCH_INTERVAL = 0.0005


def measure_level(dep: LiveDeployment, concurrency: int, tag: str, *,
                  login: bool = True) -> dict[str, list[float]]:
    """``concurrency`` clients sign up together, then (unless ``login`` is
    false) log in together.

    Every latency is measured from the common release instant of the batch,
    not from when the thread first got scheduled.
    """
    clients = [dep.client(f"client-{tag}-{i}") for i in range(concurrency)]
    users = [f"user-{tag}-{i}" for i in range(concurrency)]
    password = "timing password"
    states = [None] * concurrency
    released = [0.0]

    def release() -> None:
        released[0] = time.perf_counter()

    gate = threading.Barrier(concurrency, action=release)

    def signup(i: int) -> float:
        gate.wait()
        states[i] = clients[i].signup(users[i], password)
        return time.perf_counter() - released[0]

    def log_in(i: int) -> float:
        gate.wait()
        clients[i].login(password, states[i])
        return time.perf_counter() - released[0]

    previous = sys.getswitchinterval()
    sys.setswitchinterval(SWITCH_INTERVAL)
    # as timeit does: no collector pauses inside the timed region
    collecting = gc.isenabled()
    gc.disable()
    try:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            sharing = list(pool.map(signup, range(concurrency)))
            gate.reset()
            reconstruction = list(pool.map(log_in, range(concurrency))) if login else []
    finally:
        sys.setswitchinterval(previous)
        if collecting:
            gc.enable()
    return {"sharing": sharing, "reconstruction": reconstruction}


def timing_matrix(setups: Sequence[tuple[int, int, GroupParams]], concurrency_levels: Sequence[int], *,
                  repeats: int = 1, min_samples: int | Mapping[str, int] = 1, transport: str = "local",
                  seed: int | str | None = None) -> list[TimingRow]:
    """Like ``timing_profile`` for several ``(t, n, params)`` setups at once.

    Rounds are interleaved across setups, with the starting setup rotated each
    round, so a burst of outside load lands on all of them alike instead of on
    whichever one happened to be measuring.

    ``min_samples`` may map each phase to its own minimum. Rounds beyond what
    reconstruction needs skip the logins.
    """
    wanted = dict.fromkeys(PHASES, min_samples) if isinstance(min_samples, int) else dict(min_samples)
    if set(wanted) != set(PHASES):
        raise ValueError(f"min_samples needs exactly the phases {PHASES}")
    if any(level < 1 for level in concurrency_levels):
        raise ValueError("concurrency levels must be positive")
    deps = []
    try:
        for t, n, params in setups:
            deps.append(LiveDeployment(t, n, params, transport=transport, seed=seed))
            # untimed round so first-use costs (imports, caches, sockets) stay out of the samples
            measure_level(deps[-1], 1, "warmup")
        samples = [{level: {p: [] for p in PHASES} for level in concurrency_levels} for _ in deps]
        for level in concurrency_levels:
            gc.collect()
            rounds = {p: max(repeats, math.ceil(wanted[p] / level)) for p in PHASES}
            for r in range(max(rounds.values())):
                for k in range(len(deps)):
                    j = (k + r) % len(deps)
                    measured = measure_level(deps[j], level, f"{level}-{r}",
                                             login=r < rounds["reconstruction"])
                    for phase in PHASES:
                        if r < rounds[phase]:
                            samples[j][level][phase].extend(measured[phase])
    finally:
        for dep in deps:
            dep.close()
    rows = []
    for (t, n, params), per_level in zip(setups, samples):
        for level in concurrency_levels:
            for phase in PHASES:
                values = per_level[level][phase]
                rows.append(TimingRow(phase, t, n, params.p_bits, level, statistics.fmean(values), len(values)))
    return rows


def timing_profile(t: int, n: int, p_bits: int, concurrency_levels: Sequence[int], *,
                   repeats: int = 1, min_samples: int = 1, transport: str = "local",
                   params: GroupParams | None = None,
                   seed: int | str | None = None) -> list[TimingRow]:
    """Mean per-client latency of each phase at each concurrency level.

    Each level runs ``repeats`` rounds, or more if needed to collect
    ``min_samples`` latencies per phase.
    """
    if params is None:
        params = generate_params(p_bits, seed=seed if seed is not None else p_bits)
    return timing_matrix([(t, n, params)], concurrency_levels, repeats=repeats,
                         min_samples=min_samples, transport=transport, seed=seed)
