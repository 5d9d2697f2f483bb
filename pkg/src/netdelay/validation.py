"""Desk-scale self-checks run by ``netdelay validate``.

Every check compares a production path with an independent oracle
(graph BFS, brute-force counting, dense linear algebra, Monte Carlo) and
reports deterministic text, so two runs with the same seed give
byte-identical reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import networkx as nx
import numpy as np

from . import analysis, hitting
from .hitting import AbsorbingSpec
from .lattice import LatticeSpec, d_pe, d_pm, ring_count, table_size
from .routing import RoutingConfig
from .simulator import StepParams, run_loaded, single_packet_delay

HARMONIC_TOL = 1e-8
ORACLE_TOL = 1e-8
SANDWICH_SLACK = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def torus_graph(lat: LatticeSpec) -> nx.Graph:
    return nx.grid_2d_graph(lat.L, lat.L, periodic=True)


def check_metrics(sizes=(4, 6, 8)) -> CheckResult:
    bad = 0
    pairs = 0
    for L in sizes:
        lat = LatticeSpec(L)
        bfs = dict(nx.all_pairs_shortest_path_length(torus_graph(lat)))
        for r1 in lat.nodes():
            for r2 in lat.nodes():
                pairs += 1
                dm = d_pm(r1, r2, lat)
                de = d_pe(r1, r2, lat)
                if dm != bfs[tuple(r1)][tuple(r2)]:
                    bad += 1
                elif not dm / math.sqrt(2) - 1e-12 <= de <= dm + 1e-12:
                    bad += 1
    return CheckResult("metrics_vs_bfs", bad == 0, f"pairs={pairs} mismatches={bad}")


def check_counting(sizes=range(4, 13, 2)) -> CheckResult:
    bad = 0
    for L in sizes:
        lat = LatticeSpec(L)
        dist = [d_pm(r, (0, 0), lat) for r in lat.nodes()]
        bad += sum(ring_count(k, lat) != dist.count(k) for k in range(L + 1))
        bad += sum(table_size(m, lat) != sum(1 <= d <= m for d in dist) for m in range(1, L))
    return CheckResult("counting_vs_bruteforce", bad == 0, f"sizes={list(sizes)} mismatches={bad}")


def check_semidet(max_L: int = 64) -> CheckResult:
    bad = 0
    for L in range(4, max_L + 1, 2):
        lat = LatticeSpec(L)
        bad += sum(analysis.tau_bar_semidet_exact(m, lat)
                   != analysis.tau_bar_semidet_bruteforce(m, lat) for m in range(L + 1))
    return CheckResult("semidet_closed_form", bad == 0, f"L<={max_L} mismatches={bad}")


def _specs():
    return [AbsorbingSpec.euclidean(1), AbsorbingSpec.euclidean(2),
            AbsorbingSpec.manhattan(1), AbsorbingSpec.manhattan(2), AbsorbingSpec.manhattan(3)]


def check_solver(tol: float, sizes=(4, 6, 8)) -> list[CheckResult]:
    worst_diff = 0.0
    worst_defect = 0.0
    for L in sizes:
        lat = LatticeSpec(L)
        for spec in _specs():
            if spec.mask(lat).all():
                continue
            it = hitting.solve_hitting(lat, spec, tol)
            dn = hitting.solve_hitting(lat, spec, method="dense")
            worst_diff = max(worst_diff, float(np.max(np.abs(it.values - dn.values))))
            scaled = np.abs(it.defect()) / (1.0 + it.values)
            worst_defect = max(worst_defect, float(scaled.max()))
    return [
        CheckResult("solver_harmonic", worst_defect <= HARMONIC_TOL,
                    f"max_scaled_defect={worst_defect:.3e} limit={HARMONIC_TOL:.0e}"),
        CheckResult("solver_vs_dense", worst_diff <= ORACLE_TOL,
                    f"max_abs_diff={worst_diff:.3e} limit={ORACLE_TOL:.0e}"),
    ]


def check_full_table(seed: int, L: int = 10, pairs: int = 100) -> CheckResult:
    lat = LatticeSpec(L)
    rng = np.random.default_rng([seed, 1])
    routing = RoutingConfig.full(lat)
    bad = 0
    for k in range(pairs):
        a, b = rng.choice(lat.n_nodes, size=2, replace=False)
        r0, rd = lat.coord(a), lat.coord(b)
        res = single_packet_delay(r0, rd, routing, lat, 1, [seed, 2, k], engine="network")
        bad += int(res.samples[0] != d_pm(r0, rd, lat))
    return CheckResult("full_table_shortest_path", bad == 0, f"L={L} pairs={pairs} mismatches={bad}")


MC_CASES = ((8, 1, (4, 4)), (8, 2, (3, 1)), (10, 3, (5, 5)))


def check_monte_carlo(seed: int, trials: int, tol: float) -> CheckResult:
    worst = 0.0
    parts = []
    for k, (L, m, r0) in enumerate(MC_CASES):
        lat = LatticeSpec(L)
        exact = hitting.tau_total(hitting.tau_random(lat, m, tol), r0)
        res = single_packet_delay(r0, (0, 0), RoutingConfig.for_lattice(m, lat), lat, trials,
                                  [seed, 3, k])
        z = abs(res.mean - exact) / res.stderr
        worst = max(worst, z)
        parts.append(f"L{L}m{m}:z={z:.3f}")
    return CheckResult("monte_carlo_vs_exact", worst <= 3.0,
                       f"trials={trials} {' '.join(parts)} limit=3")


def check_sandwich(tol: float, L: int = 20, ms=(1, 3)) -> CheckResult:
    lat = LatticeSpec(L)
    parts = []
    ok = True
    for m in ms:
        rep = hitting.sandwich_check(lat, m, tol)
        ok &= rep.holds(SANDWICH_SLACK)
        parts.append(f"m{m}:lower={rep.lower_margin:.3e},upper={rep.upper_margin:.3e}")
    return CheckResult("sandwich_bounds", ok, f"L={L} {' '.join(parts)}")


def check_lower_bound_shape(tol: float, sizes=(16, 32)) -> CheckResult:
    rep = analysis.lower_bound_shape_report(sizes, R=1.0, f=0.125, tol=tol)
    ratios = " ".join(f"L{e.L}:{e.ratio:.6f}" for e in rep.entries)
    return CheckResult("lower_bound_shape", rep.passes(),
                       f"{ratios} spread={rep.spread:.4f} below_upper={rep.below_upper}")


def check_conservation(seed: int) -> CheckResult:
    lat = LatticeSpec(6)
    s = run_loaded(lat, StepParams(0.1, RoutingConfig.for_lattice(3, lat)), 200, [seed, 4])
    ok = s.created == s.delivered + s.queued
    return CheckResult("loaded_conservation", ok,
                       f"created={s.created} delivered={s.delivered} queued={s.queued}")


def check_delay_curve(tol: float, L: int = 12) -> CheckResult:
    lat = LatticeSpec(L)
    curve = analysis.average_delay_curve(lat, range(1, L + 1), tol)
    top = curve[L].tau_bar
    ok = curve.is_nonincreasing() and Fraction(top) == Fraction(L, 2)
    return CheckResult("average_delay_curve", ok,
                       f"L={L} tau_bar_1={curve[1].tau_bar:.6f} tau_bar_L={top!r} "
                       f"nonincreasing={curve.is_nonincreasing()}")


def run_checks(tol: float, seed: int, trials: int) -> list[CheckResult]:
    results = [check_metrics(), check_counting(), check_semidet()]
    results += check_solver(tol)
    results += [
        check_full_table(seed),
        check_monte_carlo(seed, trials, tol),
        check_sandwich(tol),
        check_lower_bound_shape(tol),
        check_conservation(seed),
        check_delay_curve(tol),
    ]
    return results
