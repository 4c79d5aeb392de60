"""Per-node Consensus Learning state machine.

A node alternates two phases:

* local learning: ``n_local`` Adam steps on batches from its own shard;
* asynchronous update: send a snapshot of its weights to ``m_sends`` random
  reachable peers, then drain its inbound buffer.

While draining, a WEIGHTS message from ``c`` moves the node a fraction
``gamma`` toward ``c``'s weights and replies to ``c`` with that same delta;
a DELTAS message is subtracted. A fully applied exchange therefore leaves
the pair's sum unchanged. Replies are applied as they arrive, even if the
node's weights changed since the matching WEIGHTS was sent.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .data import BatchStream
from .errors import ConfigError
from .model import AdamState, Architecture, train_on_batch
from .netsim import Flag, Message, Network, SendResult
from .params import add_in_place, as_param_vector, check_gamma, weighted_delta

log = logging.getLogger(__name__)

# Replies to all M_i sends are computed against the same snapshot and are
# applied together, so the pull on a node scales like M_i * gamma; 0.1 keeps
# that below 1 for M_i up to 5. 0.5 (exact pairwise averaging) overshoots.
DEFAULT_GAMMA = 0.1


class Phase(enum.Enum):
    LOCAL = "LOCAL"
    UPDATE = "UPDATE"


@dataclass(frozen=True)
class NodeConfig:
    node_id: int
    n_local: int = 5
    m_sends: int = 1
    gamma: float = DEFAULT_GAMMA
    init_seed: int = 0

    def __post_init__(self):
        if self.n_local < 1:
            raise ConfigError(f"n_local must be >= 1, got {self.n_local}")
        if self.m_sends < 0:
            raise ConfigError(f"m_sends must be >= 0, got {self.m_sends}")
        check_gamma(self.gamma)


class Node:
    """One simulated participant.

    ``arch``, ``adam`` and ``batches`` are optional as a group: leave them out
    to get a pure-gossip node whose local phase does no training.
    """

    def __init__(self, config: NodeConfig, params, *, arch: Architecture | None = None,
                 adam: AdamState | None = None, batches: BatchStream | None = None,
                 rng: np.random.Generator | None = None):
        self.config = config
        self.params = as_param_vector(params).copy()
        self.arch = arch
        self.adam = adam
        self.batches = batches
        if batches is not None and (arch is None or adam is None):
            raise ConfigError("a training node needs an architecture and an Adam state")
        self.rng = rng if rng is not None else np.random.default_rng(config.init_seed)
        self.phase = Phase.LOCAL
        self.train_steps = 0
        self.protocol_errors = 0
        self.send_results: dict[SendResult, int] = {r: 0 for r in SendResult}

    @property
    def node_id(self) -> int:
        return self.config.node_id

    @property
    def trains(self) -> bool:
        return self.batches is not None

    def local_phase(self, n_batches: int | None = None) -> None:
        """Run ``n_batches`` training steps (default ``n_local``)."""
        n = self.config.n_local if n_batches is None else n_batches
        self.phase = Phase.LOCAL
        if not self.trains:
            return
        for _ in range(n):
            batch = self.batches.next_batch()
            self.params, self.adam = train_on_batch(self.arch, self.params, self.adam, batch)
            self.train_steps += 1

    def begin_update_phase(self, net: Network) -> None:
        self.phase = Phase.UPDATE
        for _ in range(self.config.m_sends):
            peers = net.reachable(self.node_id)
            if not peers:
                return
            dest = peers[int(self.rng.integers(len(peers)))]
            self._send(net, Message(Flag.WEIGHTS, self.params.copy(), self.node_id), dest)

    def drain_buffer(self, net: Network) -> None:
        """Process buffered messages in FIFO order until the buffer is empty."""
        while (msg := net.recv_next(self.node_id)) is not None:
            if msg.payload.shape != self.params.shape:
                self.protocol_errors += 1
                log.warning("node %d: discarding %s from %d with %d values (expected %d)",
                            self.node_id, msg.flag.value, msg.source, msg.payload.size,
                            self.params.size)
                continue
            if msg.flag is Flag.WEIGHTS:
                delta = weighted_delta(self.params, msg.payload, self.config.gamma)
                self._send(net, Message(Flag.DELTAS, delta, self.node_id), msg.source)
                add_in_place(self.params, delta, +1)
            else:
                add_in_place(self.params, msg.payload, -1)

    def run_round(self, net: Network, n_batches: int | None = None) -> None:
        """One full cycle: local phase, weight sends, buffer drain."""
        self.local_phase(n_batches)
        self.begin_update_phase(net)
        self.drain_buffer(net)

    def _send(self, net: Network, msg: Message, dest: int) -> None:
        self.send_results[net.send_to(msg, dest)] += 1
