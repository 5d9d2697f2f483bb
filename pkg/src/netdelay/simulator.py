"""Discrete-time parallel packet network on the torus.

One call to :func:`step` performs, in order:

1. creation: every node independently creates a packet with probability
   ``lambda`` whose destination is uniform over the other nodes;
2. forwarding: every node with a nonempty queue sends its head packet to
   the neighbour chosen by :func:`~netdelay.routing.select_next`, judged
   against queue lengths frozen before any packet moves. Packets reaching
   their destination are destroyed and their delay recorded; the others
   are appended to the receiving queue in random order;
3. the clock advances by one.

RNG consumption order within a step (all scans row-major):
creation uniforms (one per node, skipped when ``lambda == 0``), one
destination draw per created packet, one routing draw per forwarded
packet, one permutation per node receiving two or more surviving packets.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from itertools import count

import numpy as np

from .lattice import LatticeSpec, NodeCoord
from .routing import QueueSnapshot, RoutingConfig, candidate_set, select_next

MAX_EPISODE_STEPS = 10**9


@dataclass(slots=True)
class Packet:
    created_at: int
    destination: NodeCoord
    id: int


@dataclass
class StepParams:
    lam: float
    routing: RoutingConfig

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")


@dataclass
class NetworkState:
    lat: LatticeSpec
    rng: np.random.Generator
    clock: int = 0
    queues: list = None
    delivered: list = field(default_factory=list)  # (packet id, delay)
    created: int = 0
    _ids: count = field(default_factory=count, repr=False)

    def __post_init__(self):
        if self.queues is None:
            self.queues = [deque() for _ in range(self.lat.n_nodes)]

    @classmethod
    def empty(cls, lat: LatticeSpec, seed) -> "NetworkState":
        return cls(lat=lat, rng=np.random.default_rng(seed))

    def inject(self, at, destination) -> Packet:
        """Place a packet at the tail of the queue at ``at``, stamped with the current clock."""
        at = self.lat.check(at)
        destination = self.lat.check(destination)
        if at == destination:
            raise ValueError("packet source and destination coincide")
        pkt = Packet(self.clock, destination, next(self._ids))
        self.queues[self.lat.index(at)].append(pkt)
        self.created += 1
        return pkt

    def queue_lengths(self) -> np.ndarray:
        L = self.lat.L
        return np.fromiter((len(q) for q in self.queues), dtype=np.int64,
                           count=L * L).reshape(L, L)

    def in_flight(self) -> int:
        return sum(len(q) for q in self.queues)

    def locate(self, packet_id: int):
        """Node currently holding the packet, or None once delivered."""
        for idx, q in enumerate(self.queues):
            for pkt in q:
                if pkt.id == packet_id:
                    return self.lat.coord(idx)
        return None


def step(state: NetworkState, p: StepParams) -> NetworkState:
    """Advance ``state`` by one time step in place and return it."""
    lat = state.lat
    n = lat.n_nodes
    rng = state.rng
    queues = state.queues

    if p.lam > 0.0:
        creators = np.flatnonzero(rng.random(n) < p.lam)
        for idx in creators:
            dest = int(rng.integers(n - 1))
            if dest >= idx:
                dest += 1
            queues[idx].append(Packet(state.clock, lat.coord(dest), next(state._ids)))
        state.created += len(creators)

    snapshot = QueueSnapshot(state.queue_lengths())
    arrivals: dict[int, list[Packet]] = {}
    for idx in range(n):
        q = queues[idx]
        if not q:
            continue
        pkt = q.popleft()
        nxt = select_next(lat.coord(idx), pkt.destination, p.routing, snapshot, rng, lat)
        arrivals.setdefault(lat.index(nxt), []).append(pkt)

    done_clock = state.clock + 1
    for idx in sorted(arrivals):
        here = lat.coord(idx)
        staying = []
        for pkt in arrivals[idx]:
            if pkt.destination == here:
                state.delivered.append((pkt.id, done_clock - pkt.created_at))
            else:
                staying.append(pkt)
        if len(staying) > 1:
            staying = [staying[k] for k in rng.permutation(len(staying))]
        queues[idx].extend(staying)

    state.clock = done_clock
    return state


@dataclass(frozen=True)
class DelaySample:
    mean: float
    stderr: float
    samples: np.ndarray


def _summarize(samples: np.ndarray) -> DelaySample:
    mean = float(samples.mean())
    if len(samples) > 1:
        stderr = float(samples.std(ddof=1) / math.sqrt(len(samples)))
    else:
        stderr = math.nan
    return DelaySample(mean, stderr, samples)


def _candidate_table(lat: LatticeSpec, routing: RoutingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-node candidate next hops for a packet bound for the origin."""
    n = lat.n_nodes
    table = np.zeros((n, 4), dtype=np.int64)
    sizes = np.zeros(n, dtype=np.int64)
    origin = NodeCoord(0, 0)
    for idx in range(1, n):
        cands = candidate_set(lat.coord(idx), origin, routing, lat)
        sizes[idx] = len(cands)
        table[idx, :len(cands)] = [lat.index(c) for c in cands]
    return table, sizes


def _batch_episodes(r0, r_d, routing: RoutingConfig, lat: LatticeSpec, trials: int,
                    rng: np.random.Generator) -> np.ndarray:
    # Lone packet: every neighbour queue is empty, so routing reduces to a
    # uniform pick from the candidate set. Walk in coordinates relative to r_d.
    L = lat.L
    table, sizes = _candidate_table(lat, routing)
    start = ((r0[0] - r_d[0]) % L) * L + (r0[1] - r_d[1]) % L
    pos = np.full(trials, start, dtype=np.int64)
    alive = np.arange(trials)
    delays = np.zeros(trials, dtype=np.int64)
    t = 0
    while len(alive):
        if t >= MAX_EPISODE_STEPS:
            raise RuntimeError(f"episode exceeded {MAX_EPISODE_STEPS} steps")
        pick = rng.integers(sizes[pos])
        pos = table[pos, pick]
        t += 1
        hit = pos == 0
        if hit.any():
            delays[alive[hit]] = t
            keep = ~hit
            pos = pos[keep]
            alive = alive[keep]
    return delays


def _network_episode(r0, r_d, routing: RoutingConfig, lat: LatticeSpec,
                     rng: np.random.Generator) -> int:
    state = NetworkState(lat=lat, rng=rng)
    state.inject(r0, r_d)
    params = StepParams(0.0, routing)
    while not state.delivered:
        if state.clock >= MAX_EPISODE_STEPS:
            raise RuntimeError(f"episode exceeded {MAX_EPISODE_STEPS} steps")
        step(state, params)
    return state.delivered[0][1]


def single_packet_delay(r0, r_d, routing: RoutingConfig, lat: LatticeSpec, trials: int,
                        seed, engine: str = "batch") -> DelaySample:
    """Monte Carlo delay of a lone packet travelling from ``r0`` to ``r_d``.

    ``engine="batch"`` advances all trials in lockstep with numpy;
    ``engine="network"`` runs each episode through the full :func:`step`
    machinery and is much slower.
    """
    r0 = lat.check(r0)
    r_d = lat.check(r_d)
    routing.validate(lat)
    if r0 == r_d:
        raise ValueError("r0 and r_d coincide; there is no delay to measure")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    if engine == "batch":
        samples = _batch_episodes(r0, r_d, routing, lat, trials, rng)
    elif engine == "network":
        samples = np.array([_network_episode(r0, r_d, routing, lat, rng)
                            for _ in range(trials)], dtype=np.int64)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return _summarize(samples)


@dataclass(frozen=True)
class LoadedSummary:
    steps: int
    created: int
    delivered: int
    mean_delay: float
    queued: int


def run_loaded(lat: LatticeSpec, p: StepParams, steps: int, seed) -> LoadedSummary:
    """Run ``steps`` updates from an empty network and summarise the outcome."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    p.routing.validate(lat)
    state = NetworkState.empty(lat, seed)
    for _ in range(steps):
        step(state, p)
    delays = [d for _, d in state.delivered]
    mean = float(np.mean(delays)) if delays else math.nan
    return LoadedSummary(steps, state.created, len(delays), mean, state.in_flight())
