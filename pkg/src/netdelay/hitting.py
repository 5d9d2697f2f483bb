"""Expected hitting times of a simple random walk on the torus.

The destination sits at the origin. A field ``v`` vanishes on an absorbing
disc around it (Euclidean or Manhattan) and satisfies

    v(r) = 1 + (v(r+x) + v(r-x) + v(r+y) + v(r-y)) / 4

everywhere else. Two independent solvers are provided: red-black SOR for
production sizes and a dense direct solve used as an oracle for L <= 32.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .lattice import LatticeSpec, d_pe_sq, d_pm, distance_grids, neighbors, theta

DEFAULT_TOL = 1e-10
DEFAULT_OMEGA = 1.9
MAX_SWEEPS = 10**6
DENSE_MAX_L = 32


class Metric(enum.Enum):
    PERIODIC_EUCLIDEAN = "euclidean"
    PERIODIC_MANHATTAN = "manhattan"


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class AbsorbingSpec:
    """Closed disc ``{r : d(r, 0) <= radius}``.

    For the Euclidean metric membership is decided on squared distances in
    exact rational arithmetic; pass ``radius_sq`` when the radius is
    irrational (e.g. ``m / sqrt(2)``) so the boundary is not rounded.
    """

    metric: Metric
    radius: float
    radius_sq: Fraction | None = None

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"radius must be nonnegative, got {self.radius}")
        if self.radius_sq is None:
            object.__setattr__(self, "radius_sq", Fraction(self.radius) ** 2)

    @classmethod
    def euclidean(cls, R) -> "AbsorbingSpec":
        return cls(Metric.PERIODIC_EUCLIDEAN, float(R), Fraction(R) ** 2)

    @classmethod
    def euclidean_from_sq(cls, radius_sq) -> "AbsorbingSpec":
        radius_sq = Fraction(radius_sq)
        return cls(Metric.PERIODIC_EUCLIDEAN, math.sqrt(radius_sq), radius_sq)

    @classmethod
    def manhattan(cls, m: int) -> "AbsorbingSpec":
        return cls(Metric.PERIODIC_MANHATTAN, float(m))

    def mask(self, lat: LatticeSpec) -> np.ndarray:
        """Boolean L x L array, True on absorbed nodes."""
        dpm, dsq = distance_grids(lat)
        if self.metric is Metric.PERIODIC_MANHATTAN:
            return dpm <= math.floor(Fraction(self.radius))
        # d^2 is an integer, so d^2 <= radius^2 exactly iff d^2 <= floor(radius^2)
        return dsq <= math.floor(self.radius_sq)

    def contains(self, r, lat: LatticeSpec) -> bool:
        if self.metric is Metric.PERIODIC_MANHATTAN:
            return d_pm(r, (0, 0), lat) <= Fraction(self.radius)
        return d_pe_sq(r, (0, 0), lat) <= self.radius_sq


@dataclass(frozen=True, eq=False)
class HittingField:
    lat: LatticeSpec
    spec: AbsorbingSpec
    values: np.ndarray
    residual: float
    method: str = "iterative"
    sweeps: int = 0

    def __getitem__(self, r) -> float:
        return float(self.values[r[0], r[1]])

    @property
    def absorbed(self) -> np.ndarray:
        return self.spec.mask(self.lat)

    def mean(self) -> float:
        return float(self.values.mean())

    def defect(self) -> np.ndarray:
        """``v - 1 - neighbour mean`` on free nodes, 0 on absorbed ones."""
        return np.where(self.absorbed, 0.0, -_defect(self.values))

    def to_csv(self, path) -> None:
        write_field_csv(self, path)


def _neighbour_mean(v: np.ndarray) -> np.ndarray:
    return 0.25 * (np.roll(v, 1, 0) + np.roll(v, -1, 0) + np.roll(v, 1, 1) + np.roll(v, -1, 1))


def _defect(v: np.ndarray) -> np.ndarray:
    return 1.0 + _neighbour_mean(v) - v


def relative_residual(v: np.ndarray, absorbed: np.ndarray) -> float:
    """max over free nodes of |defect| / (1 + value)."""
    free = ~absorbed
    if not free.any():
        return 0.0
    d = _defect(v)[free]
    return float(np.max(np.abs(d) / (1.0 + np.abs(v[free]))))


def _check_absorbing(absorbed: np.ndarray) -> None:
    if not absorbed.any():
        raise ValueError("absorbing set is empty")
    if absorbed.all():
        raise ValueError("absorbing set covers the whole lattice")


def _sor(lat: LatticeSpec, absorbed: np.ndarray, tol: float, omega: float, max_sweeps: int,
         initial: np.ndarray | None) -> tuple[np.ndarray, float, int]:
    L = lat.L
    N = L * L
    flat_abs = absorbed.ravel()
    ii, jj = np.divmod(np.arange(N), L)
    nbr = np.stack([((ii + 1) % L) * L + jj, ((ii - 1) % L) * L + jj,
                    ii * L + (jj + 1) % L, ii * L + (jj - 1) % L], axis=1)
    parity = (ii + jj) % 2
    colours = [np.flatnonzero((parity == c) & ~flat_abs) for c in (0, 1)]
    colour_nbrs = [nbr[c] for c in colours]

    v = np.zeros(N) if initial is None else np.array(initial, dtype=float).ravel()
    v[flat_abs] = 0.0
    check_every = 8
    sweeps = 0
    while True:
        for _ in range(check_every):
            for idx, nb in zip(colours, colour_nbrs):
                gs = 1.0 + 0.25 * v[nb].sum(axis=1)
                v[idx] += omega * (gs - v[idx])
        sweeps += check_every
        res = relative_residual(v.reshape(L, L), absorbed)
        if res <= tol:
            return v.reshape(L, L), res, sweeps
        if not math.isfinite(res):
            raise ConvergenceError(f"SOR diverged after {sweeps} sweeps (omega={omega})")
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"no convergence in {sweeps} sweeps: residual {res:.3e} > tol {tol:.3e}")


def _dense(lat: LatticeSpec, absorbed: np.ndarray) -> np.ndarray:
    # Assembled node by node from lattice.neighbors, independently of the SOR path.
    free = [r for r in lat.nodes() if not absorbed[r]]
    pos = {r: k for k, r in enumerate(free)}
    n = len(free)
    A = np.eye(n)
    for k, r in enumerate(free):
        for x in neighbors(r, lat):
            col = pos.get(x)
            if col is not None:
                A[k, col] -= 0.25
    sol = np.linalg.solve(A, np.ones(n))
    v = np.zeros((lat.L, lat.L))
    for k, r in enumerate(free):
        v[r] = sol[k]
    return v


def solve_hitting(lat: LatticeSpec, spec: AbsorbingSpec, tol: float = DEFAULT_TOL,
                  method: str = "iterative", omega: float = DEFAULT_OMEGA,
                  max_sweeps: int = MAX_SWEEPS, initial: np.ndarray | None = None) -> HittingField:
    """Expected hitting time of the absorbing disc from every node."""
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    absorbed = spec.mask(lat)
    _check_absorbing(absorbed)
    if method == "iterative":
        if not 0 < omega < 2:
            raise ValueError(f"relaxation factor must lie in (0, 2), got {omega}")
        v, res, sweeps = _sor(lat, absorbed, tol, omega, max_sweeps, initial)
    elif method == "dense":
        if lat.L > DENSE_MAX_L:
            raise ValueError(f"dense method limited to L <= {DENSE_MAX_L}, got L={lat.L}")
        v = _dense(lat, absorbed)
        res, sweeps = relative_residual(v, absorbed), 0
    else:
        raise ValueError(f"unknown method {method!r}")
    v.setflags(write=False)
    return HittingField(lat, spec, v, res, method, sweeps)


def tau_random(lat: LatticeSpec, m: int, tol: float = DEFAULT_TOL, **kwargs) -> HittingField:
    """Random part of the delay: hitting time of the Manhattan disc of radius m."""
    if not 1 <= m < lat.L:
        raise ValueError(f"m={m} outside [1, {lat.L - 1}]")
    return solve_hitting(lat, AbsorbingSpec.manhattan(m), tol, **kwargs)


def tau_total(field: HittingField, r) -> float:
    """Expected delay of a lone packet at ``r``: random part plus the capped distance."""
    if field.spec.metric is not Metric.PERIODIC_MANHATTAN or field.spec.radius != int(field.spec.radius):
        raise ValueError("tau_total needs a field built with an integer Manhattan radius")
    m = int(field.spec.radius)
    r = field.lat.check(r)
    return field[r] + theta(d_pm(r, (0, 0), field.lat), m)


def tau_total_grid(field: HittingField) -> np.ndarray:
    """:func:`tau_total` evaluated at every node."""
    m = int(field.spec.radius)
    dpm, _ = distance_grids(field.lat)
    return field.values + np.minimum(dpm, m)


@dataclass(frozen=True)
class SandwichReport:
    L: int
    m: int
    lower_margin: float  # min over r of tau_random - T_m
    upper_margin: float  # min over r of T_{m/sqrt 2} - tau_random
    lower: HittingField
    middle: HittingField
    upper: HittingField

    def holds(self, slack: float = 1e-6) -> bool:
        return self.lower_margin >= -slack and self.upper_margin >= -slack


def sandwich_check(lat: LatticeSpec, m: int, tol: float = DEFAULT_TOL,
                   method: str = "iterative") -> SandwichReport:
    """Compare the Manhattan-disc field with the Euclidean discs of radius m and m/sqrt(2)."""
    if not 1 <= m < lat.L // 2:
        raise ValueError(f"m={m} outside [1, {lat.L // 2 - 1}]")
    lower = solve_hitting(lat, AbsorbingSpec.euclidean(m), tol, method)
    middle = solve_hitting(lat, AbsorbingSpec.manhattan(m), tol, method)
    upper = solve_hitting(lat, AbsorbingSpec.euclidean_from_sq(Fraction(m * m, 2)), tol, method)
    return SandwichReport(
        lat.L, m,
        float(np.min(middle.values - lower.values)),
        float(np.min(upper.values - middle.values)),
        lower, middle, upper,
    )


def fmt(x: float) -> str:
    return format(x, ".17g")


def write_field_csv(field: HittingField, path) -> None:
    lat = field.lat
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "d_pm", "d_pe", "value"])
        for r in lat.nodes():
            w.writerow([r.i, r.j, d_pm(r, (0, 0), lat),
                        fmt(math.sqrt(d_pe_sq(r, (0, 0), lat))), fmt(field[r])])
