"""The partial-table routing rule R_m.

A node holding a packet looks at its four neighbours, keeps those that
minimise the capped distance ``theta(d_pm(x, dest), m)``, then keeps the
ones with the shortest queue, then picks one of the survivors uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import LatticeSpec, NodeCoord, d_pm, neighbors, theta


class DeliveredError(ValueError):
    """Raised when asked to route a packet that is already at its destination."""


@dataclass(frozen=True)
class RoutingConfig:
    m: int
    full_table: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"cutoff m must be >= 1, got {self.m}")

    @classmethod
    def full(cls, lat: LatticeSpec) -> "RoutingConfig":
        return cls(m=lat.D_max, full_table=True)

    @classmethod
    def for_lattice(cls, m: int, lat: LatticeSpec) -> "RoutingConfig":
        cfg = cls(m=m, full_table=(m == lat.D_max))
        cfg.validate(lat)
        return cfg

    def validate(self, lat: LatticeSpec) -> None:
        if not 1 <= self.m <= lat.L:
            raise ValueError(f"cutoff m={self.m} outside [1, {lat.L}]")
        if self.full_table != (self.m == lat.D_max):
            raise ValueError(
                f"full_table={self.full_table} inconsistent with m={self.m}, D_max={lat.D_max}")


class QueueSnapshot:
    """Queue lengths of every node, frozen at the start of a forwarding sub-step."""

    __slots__ = ("lengths",)

    def __init__(self, lengths):
        arr = np.array(lengths, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("queue snapshot must be a square L x L array")
        if (arr < 0).any():
            raise ValueError("queue lengths must be nonnegative")
        arr.setflags(write=False)
        self.lengths = arr

    @classmethod
    def empty(cls, lat: LatticeSpec) -> "QueueSnapshot":
        return cls(np.zeros((lat.L, lat.L), dtype=np.int64))

    def __getitem__(self, r) -> int:
        return int(self.lengths[r[0], r[1]])


def candidate_set(r, r_d, cfg: RoutingConfig, lat: LatticeSpec) -> list[NodeCoord]:
    """Neighbours of ``r`` minimising the capped distance to ``r_d``.

    Returned in the fixed neighbour order (+x, -x, +y, -y).
    """
    if tuple(r) == tuple(r_d):
        raise DeliveredError(f"packet at {tuple(r)} is already at its destination")
    nbrs = neighbors(r, lat)
    capped = [theta(d_pm(x, r_d, lat), cfg.m) for x in nbrs]
    best = min(capped)
    return [x for x, c in zip(nbrs, capped) if c == best]


def select_next(r, r_d, cfg: RoutingConfig, q: QueueSnapshot, rng: np.random.Generator,
                lat: LatticeSpec) -> NodeCoord:
    """Next hop for a packet at ``r`` bound for ``r_d``.

    Consumes exactly one draw from ``rng``, even when there is no tie.
    """
    cands = candidate_set(r, r_d, cfg, lat)
    lengths = [q[x] for x in cands]
    shortest = min(lengths)
    ties = [x for x, n in zip(cands, lengths) if n == shortest]
    return ties[int(rng.integers(len(ties)))]
