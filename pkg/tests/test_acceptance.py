"""End-to-end acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with its measured margin and
wall time; run with ``pytest tests/test_acceptance.py -s`` to see them.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from netdelay import cli
from netdelay.analysis import (
    CostModel, argmin_cost, average_delay_curve, fit_loglinear, lower_bound_shape_report,
    optimal_m_analytic, tau_bar_semidet_exact,
)
from netdelay.hitting import AbsorbingSpec, sandwich_check, solve_hitting, tau_random, tau_total
from netdelay.lattice import LatticeSpec, d_pe, d_pm, distance_grids, ring_count, table_size
from netdelay.routing import RoutingConfig
from netdelay.simulator import single_packet_delay

ORACLE_TOL = 1e-13


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed < limit
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail} "
                  f"[{elapsed:.2f}s < {limit:g}s]")
        assert ok, detail
    return emit


def test_c01_full_table_delay_exact(report):
    t0 = time.perf_counter()
    lat = LatticeSpec(20)
    rc = RoutingConfig.full(lat)
    rng = np.random.default_rng(20_1000)
    hits = 0
    for k in range(1000):
        a, b = rng.choice(lat.n_nodes, 2, replace=False)
        r0, rd = lat.coord(int(a)), lat.coord(int(b))
        res = single_packet_delay(r0, rd, rc, lat, 1, seed=[1, k], engine="network")
        hits += int(res.samples[0]) == d_pm(r0, rd, lat)
    report(1, hits == 1000, f"{hits}/1000 episodes with delay == d_pm",
           time.perf_counter() - t0, 10)


def test_c02_sandwich_l50(report):
    t0 = time.perf_counter()
    lat = LatticeSpec(50)
    margins = {}
    for m in (1, 5):
        rep = sandwich_check(lat, m)
        margins[m] = (rep.lower_margin, rep.upper_margin)
    ok = all(lo >= -1e-6 and hi >= -1e-6 for lo, hi in margins.values())
    detail = ", ".join(f"m={m} lower={lo:.3g} upper={hi:.3g}" for m, (lo, hi) in margins.items())
    report(2, ok, f"min margins {detail}", time.perf_counter() - t0, 60)


def test_c03_semidet_closed_form(report):
    t0 = time.perf_counter()
    bad = []
    for L in range(4, 65, 2):
        lat = LatticeSpec(L)
        dpm, _ = distance_grids(lat)
        counts = np.bincount(dpm.ravel())
        for m in range(1, L + 1):
            brute = Fraction(sum(int(n) * min(k, m) for k, n in enumerate(counts)), L * L)
            if tau_bar_semidet_exact(m, lat) != brute:
                bad.append((L, m))
    tops = {L: tau_bar_semidet_exact(L, LatticeSpec(L)) for L in (10, 50)}
    full = {L: average_delay_curve(LatticeSpec(L), [L])[L].tau_bar for L in (10, 50)}
    ok = not bad and all(tops[L] == Fraction(L, 2) and full[L] == L / 2 for L in tops)
    report(3, ok, f"{len(bad)} mismatches over even L<=64, tau_bar_L={full}",
           time.perf_counter() - t0, 5)


def test_c04_counting(report):
    t0 = time.perf_counter()
    bad = 0
    for L in range(4, 21, 2):
        lat = LatticeSpec(L)
        # exhaustive distances from the origin, no closed forms involved
        dist = [d_pm(r, (0, 0), lat) for r in lat.nodes()]
        for k in range(1, lat.D_max + 1):
            bad += ring_count(k, lat) != dist.count(k)
        for m in range(1, L + 1):
            bad += table_size(m, lat) != sum(1 for d in dist if 0 < d <= m)
    report(4, bad == 0, f"{bad} mismatches over even L in [4, 20]",
           time.perf_counter() - t0, 5)


def test_c05_solver_oracle(report):
    t0 = time.perf_counter()
    worst = 0.0
    cases = 0
    for L in range(4, 13, 2):
        lat = LatticeSpec(L)
        specs = [AbsorbingSpec.euclidean(R) for R in (1, 2)]
        specs += [AbsorbingSpec.manhattan(m) for m in (1, 2, 3) if m < L]
        for spec in specs:
            if spec.mask(lat).all():
                continue
            it = solve_hitting(lat, spec, ORACLE_TOL)
            dn = solve_hitting(lat, spec, method="dense")
            worst = max(worst, float(np.max(np.abs(it.values - dn.values))))
            cases += 1
    report(5, worst <= 1e-8, f"max |iterative - dense| = {worst:.3g} over {cases} cases",
           time.perf_counter() - t0, 30)


def test_c06_monte_carlo(report):
    t0 = time.perf_counter()
    lat = LatticeSpec(12)
    r0 = (6, 6)
    exact = tau_total(tau_random(lat, 3, ORACLE_TOL), r0)
    res = single_packet_delay(r0, (0, 0), RoutingConfig.for_lattice(3, lat), lat,
                              100_000, seed=12_3)
    z = abs(res.mean - exact) / res.stderr
    report(6, z <= 3, f"mean={res.mean:.4f} exact={exact:.4f} z={z:.2f}",
           time.perf_counter() - t0, 60)


def test_c07_log_law(report):
    t0 = time.perf_counter()
    lat = LatticeSpec(50)
    r2 = {}
    for R in (1, 5):
        f = solve_hitting(lat, AbsorbingSpec.euclidean(R))
        pts = [(d_pe(r, (0, 0), lat), f[r]) for r in lat.nodes() if f[r] > 0]
        r2[R] = fit_loglinear(pts, use=lambda x, y: x <= 10).r_squared
    report(7, min(r2.values()) >= 0.98,
           "R^2 " + ", ".join(f"R={R}: {v:.4f}" for R, v in r2.items()),
           time.perf_counter() - t0, 60)


def test_c08_lower_bound_shape(report):
    t0 = time.perf_counter()
    rep = lower_bound_shape_report([24, 48, 96], R=1, f=0.125)
    ratios = ", ".join(f"L={e.L}: {e.ratio:.4f}" for e in rep.entries)
    report(8, rep.all_positive and rep.spread <= 2,
           f"ratios {ratios}, max/min={rep.spread:.4f}", time.perf_counter() - t0, 300)


def test_c09_upper_bound(report):
    t0 = time.perf_counter()
    lat = LatticeSpec(100)
    f = solve_hitting(lat, AbsorbingSpec.euclidean(1))
    pool = [r for r in lat.nodes() if 2 <= d_pe(r, (0, 0), lat) <= lat.L / 4]
    rng = np.random.default_rng(100_1)
    sample = [pool[k] for k in rng.choice(len(pool), 20, replace=False)]
    worst = 0.0
    for r in sample:
        n = d_pe(r, (0, 0), lat)
        bound = (lat.L**2 * math.log(n) - (n * n - 1)) * 1.15
        worst = max(worst, f[r] / bound)
    report(9, worst <= 1, f"max T / (1.15 bound) = {worst:.4f} over 20 nodes",
           time.perf_counter() - t0, 300)


def test_c10_cost_minimisation(report):
    t0 = time.perf_counter()
    lat = LatticeSpec(50)
    curve = average_delay_curve(lat, range(1, 51))
    fit = fit_loglinear([(e.m, e.tau_bar) for e in curve.entries], use=10, L=lat.L)
    m0, _ = argmin_cost(CostModel(0.0, lat, curve))
    gaps = {}
    for a in (10, 100):
        m_num, _ = argmin_cost(CostModel(a, lat, curve))
        gaps[a] = (m_num, optimal_m_analytic(a, fit.A, lat))
    ok = m0 == lat.L and all(abs(n - an) <= 2 for n, an in gaps.values())
    detail = ", ".join(f"a={a}: numeric {n} analytic {an:.3f}" for a, (n, an) in gaps.items())
    report(10, ok, f"a=0 -> m*={m0}; {detail}; A={fit.A:.4f}", time.perf_counter() - t0, 120)


def test_c11_validate_determinism(report, tmp_path):
    t0 = time.perf_counter()
    codes, texts = [], []
    for run in ("first", "second"):
        out = tmp_path / run
        codes.append(cli.main(["validate", "--seed", "11", "--out", str(out)]))
        texts.append((out / "validate" / "report.txt").read_bytes())
    same = texts[0] == texts[1]
    report(11, same and codes == [0, 0],
           f"reports identical={same}, exit codes={codes}", time.perf_counter() - t0, 120)
