import csv
import math
from fractions import Fraction

import numpy as np
import pytest

from netdelay.analysis import fit_loglinear
from netdelay.hitting import (
    AbsorbingSpec, ConvergenceError, Metric, sandwich_check, solve_hitting, tau_random,
    tau_total, tau_total_grid,
)
from netdelay.lattice import LatticeSpec, d_pe, d_pm, distance_grids
from netdelay.routing import RoutingConfig
from netdelay.simulator import single_packet_delay

ORACLE_TOL = 1e-13


def exact_field(lat, spec):
    """Gauss-Jordan elimination in rationals; a third, exact solver."""
    absorbed = spec.mask(lat)
    free = [r for r in lat.nodes() if not absorbed[r]]
    pos = {r: k for k, r in enumerate(free)}
    n = len(free)
    rows = []
    for r in free:
        row = [Fraction(0)] * (n + 1)
        row[pos[r]] += 1
        L = lat.L
        for x in [((r[0] + 1) % L, r[1]), ((r[0] - 1) % L, r[1]),
                  (r[0], (r[1] + 1) % L), (r[0], (r[1] - 1) % L)]:
            if x in pos:
                row[pos[x]] -= Fraction(1, 4)
        row[n] = Fraction(1)
        rows.append(row)
    for c in range(n):
        p = next(k for k in range(c, n) if rows[k][c] != 0)
        rows[c], rows[p] = rows[p], rows[c]
        piv = rows[c][c]
        rows[c] = [v / piv for v in rows[c]]
        for k in range(n):
            if k != c and rows[k][c] != 0:
                f = rows[k][c]
                rows[k] = [a - f * b for a, b in zip(rows[k], rows[c])]
    return {r: rows[pos[r]][n] for r in free}


def test_l4_radius1_exact_values():
    lat = LatticeSpec(4)
    spec = AbsorbingSpec.euclidean(1)
    assert int(spec.mask(lat).sum()) == 5
    exact = exact_field(lat, spec)
    assert exact[(1, 1)] == Fraction(11, 3)
    assert exact[(2, 0)] == Fraction(11, 3)
    assert exact[(2, 1)] == Fraction(16, 3)
    assert exact[(2, 2)] == Fraction(19, 3)
    it = solve_hitting(lat, spec, ORACLE_TOL)
    dn = solve_hitting(lat, spec, method="dense")
    for r, v in exact.items():
        assert it[r] == pytest.approx(float(v), abs=1e-10)
        assert dn[r] == pytest.approx(float(v), abs=1e-12)
    assert np.max(np.abs(it.values - dn.values)) <= 1e-8
    # the diagonal node obeys its own mean-value equation
    assert it[(1, 1)] == pytest.approx(1 + 0.25 * (it[(2, 1)] + it[(1, 2)]), abs=1e-10)


@pytest.mark.parametrize("L,spec", [
    (6, AbsorbingSpec.manhattan(2)),
    (8, AbsorbingSpec.euclidean(2)),
    (6, AbsorbingSpec.euclidean_from_sq(Fraction(9, 2))),
])
def test_dense_matches_exact_rationals(L, spec):
    lat = LatticeSpec(L)
    exact = exact_field(lat, spec)
    dn = solve_hitting(lat, spec, method="dense")
    for r, v in exact.items():
        assert dn[r] == pytest.approx(float(v), rel=1e-12)


def test_absorbed_nodes_are_zero_and_free_nodes_at_least_one():
    lat = LatticeSpec(16)
    for spec in (AbsorbingSpec.euclidean(2.5), AbsorbingSpec.manhattan(3)):
        f = solve_hitting(lat, spec)
        absorbed = spec.mask(lat)
        assert np.all(f.values[absorbed] == 0.0)
        assert np.all(f.values[~absorbed] >= 1.0)


def test_harmonicity_within_tolerance():
    lat = LatticeSpec(20)
    tol = 1e-10
    f = solve_hitting(lat, AbsorbingSpec.euclidean(1), tol)
    assert f.residual <= tol
    assert np.all(np.abs(f.defect()) <= tol * (1 + f.values))


@pytest.mark.parametrize("spec", [AbsorbingSpec.euclidean(2), AbsorbingSpec.manhattan(2)])
def test_dihedral_symmetry(spec):
    lat = LatticeSpec(14)
    v = solve_hitting(lat, spec, 1e-12).values
    idx = (-np.arange(14)) % 14
    assert np.allclose(v, v.T, atol=1e-8)
    assert np.allclose(v, v[idx, :], atol=1e-8)
    assert np.allclose(v, v[:, idx], atol=1e-8)
    rot = v.T[idx, :]  # (i, j) -> (-j, i)
    assert np.allclose(v, rot, atol=1e-8)


def test_tau_random_absorbing_zone():
    lat = LatticeSpec(12)
    f = tau_random(lat, 3)
    dpm, _ = distance_grids(lat)
    assert np.all(f.values[dpm <= 3] == 0)
    assert np.all(f.values[dpm > 3] >= 1)


def test_tau_random_l8_m2_against_dense():
    lat = LatticeSpec(8)
    it = tau_random(lat, 2, ORACLE_TOL)
    dn = tau_random(lat, 2, method="dense")
    assert np.max(np.abs(it.values - dn.values)) <= 1e-8


def test_tau_total_basics():
    lat = LatticeSpec(12)
    f = tau_random(lat, 4)
    assert tau_total(f, (0, 0)) == 0
    for r in [(1, 2), (0, 4), (2, 2), (3, 1)]:
        assert tau_total(f, r) == d_pm(r, (0, 0), lat)
    grid = tau_total_grid(f)
    assert grid[5, 5] == pytest.approx(tau_total(f, (5, 5)))
    with pytest.raises(ValueError):
        tau_total(solve_hitting(lat, AbsorbingSpec.euclidean(2)), (5, 5))


def test_tau_total_l4_m1():
    lat = LatticeSpec(4)
    f = tau_random(lat, 1, ORACLE_TOL)
    assert tau_total(f, (2, 2)) == pytest.approx(22 / 3, abs=1e-10)


def test_monte_carlo_consistency_random_configs():
    rng = np.random.default_rng(31)
    for k in range(5):
        L = int(rng.choice([4, 6, 8, 10, 12]))
        lat = LatticeSpec(L)
        m = int(rng.integers(1, L // 2))
        dpm, _ = distance_grids(lat)
        far = np.argwhere(dpm > m)
        r = tuple(int(x) for x in far[rng.integers(len(far))])
        exact = tau_total(tau_random(lat, m, 1e-12), r)
        res = single_packet_delay(r, (0, 0), RoutingConfig.for_lattice(m, lat), lat,
                                  40_000, seed=[31, k])
        assert abs(res.mean - exact) <= 3 * res.stderr, (L, m, r)


def test_average_random_part_nonincreasing_in_m():
    lat = LatticeSpec(16)
    means = [tau_random(lat, m).mean() for m in range(1, 16)]
    assert all(b <= a for a, b in zip(means, means[1:]))


@pytest.mark.parametrize("m", [1, 2, 3])
def test_sandwich_small_lattice_with_dense(m):
    lat = LatticeSpec(8)
    rep = sandwich_check(lat, m, method="dense")
    assert rep.holds(1e-6)
    rep_it = sandwich_check(lat, m, ORACLE_TOL)
    assert np.max(np.abs(rep.middle.values - rep_it.middle.values)) <= 1e-8


def test_sandwich_l50():
    lat = LatticeSpec(50)
    for m in (1, 5):
        rep = sandwich_check(lat, m)
        assert rep.lower_margin >= -1e-6
        assert rep.upper_margin >= -1e-6


def test_fig2a_log_law_l50_r1():
    lat = LatticeSpec(50)
    f = solve_hitting(lat, AbsorbingSpec.euclidean(1))
    pts = [(d_pe(r, (0, 0), lat), f[r]) for r in lat.nodes() if f[r] > 0]
    fit = fit_loglinear(pts, use=lambda x, y: x <= 10)
    assert fit.r_squared >= 0.98
    assert fit.slope > 0


def test_exact_euclidean_boundary():
    lat = LatticeSpec(10)
    # radius sqrt(2) as an exact square: (1,1) has d^2 = 2 and is inside
    spec = AbsorbingSpec.euclidean_from_sq(2)
    assert spec.contains((1, 1), lat)
    assert spec.mask(lat)[1, 1]
    # m / sqrt(2) for m = 5: radius^2 = 12.5 keeps d^2 = 10 and drops d^2 = 13
    spec = AbsorbingSpec.euclidean_from_sq(Fraction(25, 2))
    mask = spec.mask(lat)
    assert mask[3, 1] and not mask[3, 2]
    assert spec.metric is Metric.PERIODIC_EUCLIDEAN
    assert spec.radius == pytest.approx(5 / math.sqrt(2))


def test_solver_errors():
    lat = LatticeSpec(8)
    with pytest.raises(ValueError):
        solve_hitting(lat, AbsorbingSpec.manhattan(8))
    with pytest.raises(ValueError):
        solve_hitting(lat, AbsorbingSpec.euclidean(1), tol=0)
    with pytest.raises(ValueError):
        solve_hitting(LatticeSpec(34), AbsorbingSpec.euclidean(1), method="dense")
    with pytest.raises(ValueError):
        solve_hitting(lat, AbsorbingSpec.euclidean(1), method="magic")
    with pytest.raises(ConvergenceError):
        solve_hitting(LatticeSpec(30), AbsorbingSpec.euclidean(1), tol=1e-12, max_sweeps=16)
    with pytest.raises(ValueError):
        AbsorbingSpec.euclidean(-1)
    with pytest.raises(ValueError):
        tau_random(lat, 8)
    with pytest.raises(ValueError):
        sandwich_check(lat, 4)


def test_field_csv_export(tmp_path):
    lat = LatticeSpec(6)
    f = solve_hitting(lat, AbsorbingSpec.euclidean(1))
    path = tmp_path / "field.csv"
    f.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["i", "j", "d_pm", "d_pe", "value"]
    assert len(rows) == 37
    body = rows[1:]
    assert [(int(r[0]), int(r[1])) for r in body] == list(lat.nodes())
    for r in body:
        node = (int(r[0]), int(r[1]))
        assert float(r[4]) == f[node]
        assert int(r[2]) == d_pm(node, (0, 0), lat)
        assert float(r[3]) == d_pe(node, (0, 0), lat)
