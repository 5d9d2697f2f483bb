"""Torus geometry: the L x L periodic square lattice, its two metrics and
the exact node-counting functions used by the delay and memory analysis.

Nodes are indexed ``(i, j)`` with ``0 <= i, j < L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class NodeCoord(NamedTuple):
    i: int
    j: int


@dataclass(frozen=True)
class LatticeSpec:
    """An even-sided L x L torus."""

    L: int

    def __post_init__(self):
        if not isinstance(self.L, (int, np.integer)) or isinstance(self.L, bool):
            raise TypeError(f"L must be an integer, got {self.L!r}")
        if self.L < 4:
            raise ValueError(f"L must be at least 4, got {self.L}")
        if self.L % 2:
            raise ValueError(f"L must be even, got {self.L}")

    @property
    def D_max(self) -> int:
        """Largest periodic Manhattan distance between two nodes."""
        return self.L

    @property
    def n_nodes(self) -> int:
        return self.L * self.L

    def contains(self, r) -> bool:
        i, j = r
        return 0 <= i < self.L and 0 <= j < self.L

    def check(self, r) -> NodeCoord:
        if not self.contains(r):
            raise ValueError(f"node {tuple(r)} outside the {self.L}x{self.L} lattice")
        return NodeCoord(int(r[0]), int(r[1]))

    def nodes(self):
        """All nodes in row-major order."""
        for i in range(self.L):
            for j in range(self.L):
                yield NodeCoord(i, j)

    def index(self, r) -> int:
        return r[0] * self.L + r[1]

    def coord(self, idx: int) -> NodeCoord:
        return NodeCoord(*divmod(int(idx), self.L))


def _wrap(d: int, L: int) -> int:
    d = abs(d)
    return min(d, L - d)


def d_pm(r1, r2, lat: LatticeSpec) -> int:
    """Periodic Manhattan distance (hop count on the torus)."""
    L = lat.L
    h = L // 2
    return L - abs(abs(r2[0] - r1[0]) - h) - abs(abs(r2[1] - r1[1]) - h)


def d_pe(r1, r2, lat: LatticeSpec) -> float:
    """Euclidean distance with per-axis wraparound."""
    return math.sqrt(d_pe_sq(r1, r2, lat))


def d_pe_sq(r1, r2, lat: LatticeSpec) -> int:
    """Squared periodic Euclidean distance, exact in integers."""
    dx = _wrap(r1[0] - r2[0], lat.L)
    dy = _wrap(r1[1] - r2[1], lat.L)
    return dx * dx + dy * dy


def neighbors(r, lat: LatticeSpec) -> tuple[NodeCoord, NodeCoord, NodeCoord, NodeCoord]:
    """The four nearest neighbours in the fixed order (+x, -x, +y, -y)."""
    L = lat.L
    i, j = r
    return (
        NodeCoord((i + 1) % L, j),
        NodeCoord((i - 1) % L, j),
        NodeCoord(i, (j + 1) % L),
        NodeCoord(i, (j - 1) % L),
    )


def theta(y: int, m: int) -> int:
    """Distance as seen by a routing table of horizon m: ``min(y, m)``."""
    return y if y < m else m


def ring_count(k: int, lat: LatticeSpec) -> int:
    """Number of nodes at periodic Manhattan distance exactly k from a node."""
    L = lat.L
    if not 0 <= k <= L:
        raise ValueError(f"k={k} outside [0, {L}]")
    h = L // 2
    if k == 0 or k == L:
        return 1
    if k < h:
        return 4 * k
    if k == h:
        return 2 * L - 2
    return 4 * (L - k)


def table_size(m: int, lat: LatticeSpec) -> int:
    """Number of nodes within distance 1..m of a node (routing-table size)."""
    L = lat.L
    if not 1 <= m <= L:
        raise ValueError(f"m={m} outside [1, {L}]")
    if m == L:
        return L * L - 1
    if m < L // 2:
        return 2 * m * (m + 1)
    return L * L - 2 * (L - m) * (L - m - 1) - 2


def axis_offsets(lat: LatticeSpec) -> np.ndarray:
    """Wrapped per-axis offsets ``min(i, L - i)`` of each index from 0."""
    i = np.arange(lat.L)
    return np.minimum(i, lat.L - i)


def distance_grids(lat: LatticeSpec) -> tuple[np.ndarray, np.ndarray]:
    """(d_pm, d_pe^2) from the origin for every node, as integer L x L arrays."""
    w = axis_offsets(lat)
    dx = w[:, None]
    dy = w[None, :]
    return dx + dy, dx * dx + dy * dy
