"""Average delay, its log-law fit, hitting-time bounds and the memory/delay cost."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import stats

from .hitting import DEFAULT_TOL, AbsorbingSpec, fmt, solve_hitting
from .lattice import LatticeSpec, d_pe, distance_grids, ring_count, table_size, theta

UPPER_BOUND_SLACK = 0.15


def tau_bar_semidet_exact(m: int, lat: LatticeSpec) -> Fraction:
    L = lat.L
    if not 0 <= m <= L:
        raise ValueError(f"m={m} outside [0, {L}]")
    if m < L // 2:
        return m - Fraction(2 * m**3 + m, 3 * L * L)
    k = L - m
    return Fraction(L, 2) - Fraction(2 * k**3 + k, 3 * L * L)


def tau_bar_semidet(m: int, lat: LatticeSpec) -> float:
    """Average over all start nodes of the shortest-path phase length ``theta(d_pm, m)``."""
    return float(tau_bar_semidet_exact(m, lat))


def tau_bar_semidet_bruteforce(m: int, lat: LatticeSpec) -> Fraction:
    """Same quantity summed ring by ring, as an exact rational."""
    return Fraction(sum(ring_count(k, lat) * theta(k, m) for k in range(lat.L + 1)), lat.L**2)


class DelayEntry(NamedTuple):
    m: int
    tau_bar: float
    tau_random: float
    tau_semidet: float


@dataclass
class DelayCurve:
    lat: LatticeSpec
    entries: list[DelayEntry]

    def __getitem__(self, m: int) -> DelayEntry:
        for e in self.entries:
            if e.m == m:
                return e
        raise KeyError(f"m={m} not in delay curve")

    @property
    def ms(self) -> list[int]:
        return [e.m for e in self.entries]

    def is_nonincreasing(self, slack: float = 1e-9) -> bool:
        tb = [e.tau_bar for e in self.entries]
        return all(b <= a + slack * max(1.0, abs(a)) for a, b in zip(tb, tb[1:]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["m", "tau_bar", "tau_random", "tau_semidet"])
            for e in self.entries:
                w.writerow([e.m, fmt(e.tau_bar), fmt(e.tau_random), fmt(e.tau_semidet)])


def average_delay_curve(lat: LatticeSpec, ms: Sequence[int], tol: float = DEFAULT_TOL,
                        **solver_kwargs) -> DelayCurve:
    """Lattice-averaged free-packet delay for each cutoff in ``ms``.

    Solves from the largest m down, seeding each solve with the previous
    field.
    """
    ms = sorted(set(int(m) for m in ms))
    if not ms:
        raise ValueError("no cutoff values given")
    for m in ms:
        if not 1 <= m <= lat.L:
            raise ValueError(f"m={m} outside [1, {lat.L}]")
    dpm, _ = distance_grids(lat)
    n = lat.n_nodes
    entries = {}
    prev = None
    for m in reversed(ms):
        semidet = Fraction(int(np.minimum(dpm, m).sum()), n)
        if semidet != tau_bar_semidet_exact(m, lat):
            raise AssertionError(f"semi-deterministic average mismatch at m={m}")
        if m == lat.L:
            rand = 0.0
        else:
            fld = solve_hitting(lat, AbsorbingSpec.manhattan(m), tol, initial=prev, **solver_kwargs)
            prev = fld.values
            rand = fld.mean()
        entries[m] = DelayEntry(m, rand + float(semidet), rand, float(semidet))
    return DelayCurve(lat, [entries[m] for m in ms])


@dataclass(frozen=True)
class FitResult:
    """Least-squares line ``y = slope * log(x) + intercept``.

    With the lattice size supplied, ``A`` and ``B`` re-express it as
    ``y = A L^2 log(B L / x)``.
    """

    slope: float
    intercept: float
    r_squared: float
    n: int
    A: float | None = None
    B: float | None = None

    def predict(self, x):
        return self.slope * np.log(x) + self.intercept


def fit_loglinear(points, use: int | Callable | None = None, L: int | None = None) -> FitResult:
    """Fit ``y`` against ``log x``.

    ``use`` selects points: an int keeps the first ``use`` points, a
    callable ``use(x, y) -> bool`` filters, None keeps everything.
    """
    pts = list(points)
    if isinstance(use, int):
        pts = pts[:use]
    elif callable(use):
        pts = [(x, y) for x, y in pts if use(x, y)]
    if len(pts) < 2:
        raise ValueError(f"need at least 2 points, got {len(pts)}")
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts], dtype=float)
    if (x <= 0).any():
        raise ValueError("log-linear fit needs x > 0")
    if np.all(x == x[0]):
        raise ValueError("degenerate fit: all x values are equal")
    lr = stats.linregress(np.log(x), y)
    r2 = 1.0 if len(pts) == 2 else float(lr.rvalue**2)
    A = B = None
    if L is not None:
        A = float(-lr.slope / L**2)
        B = math.exp(lr.intercept / (A * L**2)) / L if A != 0 else None
    return FitResult(float(lr.slope), float(lr.intercept), r2, len(pts), A, B)


def brownian_u(rho: float, a: float, b: float) -> float:
    """Expected time for planar Brownian motion at radius ``rho`` to reach the
    circle of radius ``a``, not counting time spent beyond radius ``b``."""
    if not 0 < a <= rho <= b:
        raise ValueError(f"need 0 < a <= rho <= b, got a={a}, rho={rho}, b={b}")
    return b * b * math.log(rho / a) - (rho * rho - a * a) / 2


def asymptotic_upper_bound(r, R: float, lat: LatticeSpec) -> float:
    """Leading-order upper bound on the hitting time of the Euclidean disc of radius R."""
    norm = d_pe(r, (0, 0), lat)
    if norm <= R:
        raise ValueError(f"|r|={norm} must exceed R={R}")
    L = lat.L
    return L * L * math.log(norm / R) - (norm * norm - R * R)


class ShapeEntry(NamedTuple):
    L: int
    r: tuple[int, int]
    norm: float
    hitting_time: float
    ratio: float
    upper_ratio: float


@dataclass
class ShapeReport:
    R: float
    entries: list[ShapeEntry]
    slack: float = UPPER_BOUND_SLACK

    @property
    def spread(self) -> float:
        ratios = [e.ratio for e in self.entries]
        return max(ratios) / min(ratios)

    @property
    def all_positive(self) -> bool:
        return all(e.ratio > 0 for e in self.entries)

    @property
    def below_upper(self) -> bool:
        return all(e.ratio <= e.upper_ratio * (1 + self.slack) for e in self.entries)

    def passes(self, max_spread: float = 2.0) -> bool:
        return self.all_positive and self.spread <= max_spread and self.below_upper


def lower_bound_shape_report(sizes: Sequence[int], R: float = 1.0, f: float = 0.125,
                             tol: float = DEFAULT_TOL, slack: float = UPPER_BOUND_SLACK,
                             **solver_kwargs) -> ShapeReport:
    """Ratios ``T_R(r_L) / (L^2 log(|r_L| / R))`` with ``r_L = (round(f L), 0)``.

    A positive lower bound of this form should keep the ratios away from
    zero and of comparable size across lattice sizes.
    """
    entries = []
    for L in sizes:
        lat = LatticeSpec(L)
        if not R / L < f < 0.25:
            raise ValueError(f"radius fraction {f} outside ({R / L}, 1/4) for L={L}")
        if not R < L / 4:
            raise ValueError(f"R={R} must be below L/4={L / 4}")
        r = (round(f * L), 0)
        norm = float(r[0])
        if not R < norm < L / 4:
            raise ValueError(f"|r_L|={norm} not strictly between R={R} and L/4={L / 4}")
        T = solve_hitting(lat, AbsorbingSpec.euclidean(R), tol, **solver_kwargs)[r]
        scale = L * L * math.log(norm / R)
        entries.append(ShapeEntry(L, r, norm, T, T / scale,
                                  asymptotic_upper_bound(r, R, lat) / scale))
    return ShapeReport(R, entries, slack)


@dataclass
class CostModel:
    a: float
    lat: LatticeSpec
    curve: DelayCurve = field(repr=False)

    def __post_init__(self):
        if self.a < 0:
            raise ValueError(f"memory weight a must be nonnegative, got {self.a}")


def cost(m: int, model: CostModel) -> float:
    """Delay plus weighted routing-table size for cutoff m."""
    try:
        tb = model.curve[m].tau_bar
    except KeyError:
        raise KeyError(f"delay curve has no entry for m={m}") from None
    return tb + model.a * table_size(m, model.lat)


def argmin_cost(model: CostModel, rel_tie: float = 1e-12) -> tuple[int, float]:
    """Cheapest cutoff by exhaustive scan.

    Costs within ``rel_tie`` of each other count as tied and the larger m
    wins: with ``a = 0`` the curve is exactly flat between m = L-1 and L.
    """
    missing = set(range(1, model.lat.L + 1)) - set(model.curve.ms)
    if missing:
        raise ValueError(f"delay curve lacks m values {sorted(missing)[:5]}")
    best_m, best_c = None, math.inf
    for m in range(1, model.lat.L + 1):
        c = cost(m, model)
        if c <= best_c + rel_tie * max(1.0, abs(best_c)):
            best_m, best_c = m, min(c, best_c)
    return best_m, cost(best_m, model)


def surrogate_cost(m: float, a: float, A: float, B: float, lat: LatticeSpec) -> float:
    """Small-m approximation ``A L^2 log(B L / m) + 2 a m (m + 1)``."""
    L = lat.L
    return A * L * L * math.log(B * L / m) + 2 * a * m * (m + 1)


def optimal_m_analytic(a: float, A: float, lat: LatticeSpec) -> float:
    """Stationary point of :func:`surrogate_cost` in continuous m.

    Root of ``4 a m^2 + 2 a m - A L^2 = 0``; does not depend on B.
    """
    if a <= 0:
        raise ValueError(f"a must be positive, got {a}")
    if A <= 0:
        raise ValueError(f"A must be positive, got {A}")
    L = lat.L
    return math.sqrt(a * a + 4 * a * A * L * L) / (4 * a) - 0.25


def optimal_m_integer(a: float, A: float, B: float, lat: LatticeSpec) -> int:
    """Floor or ceiling of :func:`optimal_m_analytic`, whichever has lower surrogate cost."""
    m = optimal_m_analytic(a, A, lat)
    lo = max(1, math.floor(m))
    hi = max(1, math.ceil(m))
    return min((lo, hi), key=lambda k: (surrogate_cost(k, a, A, B, lat), k))


def write_cost_csv(curve: DelayCurve, a_values: Sequence[float], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "a", "cost"])
        for a in a_values:
            model = CostModel(a, curve.lat, curve)
            for m in curve.ms:
                w.writerow([m, fmt(a), fmt(cost(m, model))])
