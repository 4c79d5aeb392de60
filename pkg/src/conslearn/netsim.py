"""In-memory message fabric with per-node FIFO buffers and lossy links.

All randomness for drop decisions comes from one generator seeded by the
network config, kept apart from the nodes' own generators so that traffic
volume never shifts data shuffling or initialization.
"""
from __future__ import annotations

import enum
from collections import Counter, deque
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, UsageError

HEADER_BYTES = 8  # flag + source id


class Flag(enum.Enum):
    WEIGHTS = "WEIGHTS"
    DELTAS = "DELTAS"


class SendResult(enum.Enum):
    DELIVERED = "DELIVERED"
    DROPPED = "DROPPED"
    UNREACHABLE = "UNREACHABLE"


class Delivery(enum.Enum):
    IMMEDIATE = "IMMEDIATE"
    NEXT_ROUND = "NEXT_ROUND"


@dataclass(frozen=True)
class Message:
    flag: Flag
    payload: np.ndarray
    source: int

    @property
    def nbytes(self) -> int:
        return HEADER_BYTES + self.payload.nbytes


# adjacency: node -> iterable of nodes it can send to
Adjacency = Mapping[int, Sequence[int]]


@dataclass
class NetworkConfig:
    num_nodes: int
    topology: str | Sequence[Adjacency] = "full"
    drop_weights: float = 0.0
    drop_deltas: float = 0.0
    delivery: Delivery = Delivery.NEXT_ROUND
    seed: int = 0

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ConfigError("num_nodes must be positive")
        for name in ("drop_weights", "drop_deltas"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be a probability, got {p}")
        self.delivery = Delivery(self.delivery)
        if isinstance(self.topology, str):
            if self.topology != "full":
                raise ConfigError(f"unknown topology {self.topology!r}")
        elif len(self.topology) == 0:
            raise ConfigError("a time-varying topology needs at least one window")


class Network:
    """Message fabric for ``num_nodes`` nodes.

    Time is an integer window index advanced by :meth:`advance_time`. A
    time-varying topology is a list of adjacency maps, one per window; the
    last map stays in force once the schedule runs out. Channels are directed.
    """

    def __init__(self, config: NetworkConfig):
        self.config = config
        self.time = 0
        self._rng = np.random.default_rng(config.seed)
        self._buffers: list[deque[Message]] = [deque() for _ in range(config.num_nodes)]
        self._staged: list[tuple[int, Message]] = []
        self._counts: Counter = Counter()
        self.bytes_sent = np.zeros(config.num_nodes, dtype=np.int64)

    @property
    def num_nodes(self) -> int:
        return self.config.num_nodes

    def _check_node(self, node: int) -> None:
        if not (isinstance(node, (int, np.integer)) and 0 <= node < self.num_nodes):
            raise UsageError(f"unknown node id {node!r}")

    def reachable(self, node: int) -> list[int]:
        """Peers ``node`` can currently send to, excluding itself, ascending."""
        self._check_node(node)
        topo = self.config.topology
        if isinstance(topo, str):
            return [j for j in range(self.num_nodes) if j != node]
        window = topo[min(self.time, len(topo) - 1)]
        return sorted({int(j) for j in window.get(node, ()) if j != node})

    def send_to(self, msg: Message, dest: int) -> SendResult:
        self._check_node(dest)
        self._check_node(msg.source)
        if dest not in self.reachable(msg.source):
            result = SendResult.UNREACHABLE
        else:
            p = self.config.drop_weights if msg.flag is Flag.WEIGHTS else self.config.drop_deltas
            # always draw so the stream position depends only on the send sequence
            dropped = self._rng.random() < p
            self.bytes_sent[msg.source] += msg.nbytes
            if dropped:
                result = SendResult.DROPPED
            else:
                result = SendResult.DELIVERED
                if self.config.delivery is Delivery.IMMEDIATE:
                    self._buffers[dest].append(msg)
                else:
                    self._staged.append((dest, msg))
        self._counts[(msg.flag, result)] += 1
        return result

    def recv_next(self, node: int) -> Message | None:
        """Pop the oldest buffered message for ``node``, or None when empty."""
        self._check_node(node)
        buf = self._buffers[node]
        return buf.popleft() if buf else None

    def pending(self, node: int) -> int:
        self._check_node(node)
        return len(self._buffers[node])

    def in_flight(self) -> int:
        return len(self._staged) + sum(len(b) for b in self._buffers)

    def advance_time(self) -> None:
        for dest, msg in self._staged:
            self._buffers[dest].append(msg)
        self._staged.clear()
        self.time += 1

    def stats(self) -> dict[str, dict[str, int]]:
        """Counts per flag and outcome, e.g. ``stats()["DELTAS"]["DROPPED"]``."""
        return {f.value: {r.value: self._counts[(f, r)] for r in SendResult} for f in Flag}
