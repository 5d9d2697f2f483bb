"""Command-line experiment runner.

Each subcommand writes into ``<out>/<command>/``: data CSVs plus a
``summary.txt``. Settings come from ``--config FILE`` (``key = value``
lines, ``#`` comments) overridden by explicit flags.

Exit codes: 0 success, 1 a check failed, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, hitting, lattice
from .hitting import AbsorbingSpec, fmt
from .lattice import LatticeSpec
from .routing import RoutingConfig
from .simulator import StepParams, run_loaded, single_packet_delay

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

DEFAULTS = {
    "fig2a": {"L": 50, "R": [1.0, 5.0], "tol": 1e-10},
    "fig2b": {"L": 50, "m": [1, 5], "tol": 1e-10},
    "fig3": {"L": 50, "tol": 1e-10},
    "cost": {"L": 50, "tol": 1e-10,
             "a": [0.0, 0.01, 0.1, 0.5, 1.0, 1.58, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]},
    "simulate": {"L": 10, "lambda": 0.05, "steps": 1000},
    "mc-delay": {"L": 12, "m": [3], "trials": 100000, "r0": (6, 6), "rd": (0, 0)},
    "validate": {"tol": 1e-13, "trials": 20000},
}
STOCHASTIC = {"simulate", "mc-delay", "validate"}
FIT_RADIUS = 10.0


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    L: int | None = None
    m: list[int] = field(default_factory=list)
    R: list[float] = field(default_factory=list)
    a: list[float] = field(default_factory=list)
    lam: float | None = None
    steps: int | None = None
    trials: int | None = None
    seed: int | None = None
    tol: float = hitting.DEFAULT_TOL
    r0: tuple[int, int] | None = None
    rd: tuple[int, int] | None = None
    out: Path = Path("results")

    @property
    def lat(self) -> LatticeSpec:
        return LatticeSpec(self.L)

    @property
    def outdir(self) -> Path:
        d = self.out / self.name
        d.mkdir(parents=True, exist_ok=True)
        return d


def _int_list(text: str) -> list[int]:
    vals = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            vals.extend(range(int(lo), int(hi) + 1))
        else:
            vals.append(int(part))
    return vals


def _float_list(text: str) -> list[float]:
    return [float(p) for p in str(text).split(",") if p.strip()]


def _node(text) -> tuple[int, int]:
    if isinstance(text, tuple):
        return text
    i, j = str(text).split(",")
    return int(i), int(j)


PARSERS = {
    "L": int, "m": _int_list, "R": _float_list, "a": _float_list, "lambda": float,
    "steps": int, "trials": int, "seed": int, "tol": float, "r0": _node, "rd": _node,
    "out": Path,
}


def read_config_file(path) -> dict[str, str]:
    settings = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-")
        if key not in PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        settings[key] = value
    return settings


def build_config(name: str, args: argparse.Namespace) -> ExperimentConfig:
    merged: dict = dict(DEFAULTS.get(name, {}))
    if args.config:
        try:
            merged.update(read_config_file(args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    for key in PARSERS:
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            merged[key] = val
    try:
        parsed = {k: PARSERS[k](v) if isinstance(v, str) else v for k, v in merged.items()}
    except ValueError as exc:
        raise ConfigError(f"bad value: {exc}") from exc
    cfg = ExperimentConfig(
        name=name,
        L=parsed.get("L"),
        m=list(parsed.get("m", [])),
        R=list(parsed.get("R", [])),
        a=list(parsed.get("a", [])),
        lam=parsed.get("lambda"),
        steps=parsed.get("steps"),
        trials=parsed.get("trials"),
        seed=parsed.get("seed"),
        tol=parsed.get("tol", hitting.DEFAULT_TOL),
        r0=parsed.get("r0"),
        rd=parsed.get("rd"),
        out=Path(parsed.get("out", "results")),
    )
    _check(cfg)
    return cfg


def _check(cfg: ExperimentConfig) -> None:
    if cfg.L is not None:
        try:
            LatticeSpec(cfg.L)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    if cfg.name in STOCHASTIC and cfg.seed is None:
        raise ConfigError(f"{cfg.name} is stochastic: --seed is required")
    if cfg.tol <= 0:
        raise ConfigError(f"tol must be positive, got {cfg.tol}")
    if cfg.name == "fig2a" and not cfg.R:
        raise ConfigError("fig2a needs at least one radius (--R)")
    if cfg.name == "fig2b" and not cfg.m:
        raise ConfigError("fig2b needs at least one cutoff (--m)")
    if cfg.L is not None:
        for m in cfg.m:
            if not 1 <= m <= cfg.L:
                raise ConfigError(f"m={m} outside [1, {cfg.L}]")
    if cfg.lam is not None and not 0 <= cfg.lam <= 1:
        raise ConfigError(f"lambda must lie in [0, 1], got {cfg.lam}")
    if cfg.trials is not None and cfg.trials < 1:
        raise ConfigError("trials must be >= 1")
    if any(a < 0 for a in cfg.a):
        raise ConfigError("memory weights a must be nonnegative")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_summary(cfg: ExperimentConfig, lines: list[str]) -> None:
    (cfg.outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)


def _tag(x: float) -> str:
    return format(x, "g")


def cmd_fig2a(cfg: ExperimentConfig) -> int:
    """Hitting time of Euclidean discs against distance, with log fits near the origin."""
    lat = cfg.lat
    ok = True
    lines = [f"experiment fig2a L={lat.L} tol={cfg.tol:g}"]
    for R in cfg.R:
        fld = hitting.solve_hitting(lat, AbsorbingSpec.euclidean(R), cfg.tol)
        rows, pts = [], []
        for r in lat.nodes():
            if fld.spec.contains(r, lat):
                continue
            norm = lattice.d_pe(r, (0, 0), lat)
            rows.append([r.i, r.j, fmt(norm), fmt(fld[r])])
            pts.append((norm, fld[r]))
        _write_rows(cfg.outdir / f"hitting_R{_tag(R)}.csv", ["i", "j", "norm_r", "value"], rows)
        fit = analysis.fit_loglinear(pts, use=lambda x, y: x <= FIT_RADIUS)
        good = fit.r_squared >= 0.98
        ok &= good
        lines.append(f"R={_tag(R)} points={len(rows)} fit_n={fit.n} slope={fmt(fit.slope)} "
                     f"intercept={fmt(fit.intercept)} r2={fmt(fit.r_squared)} "
                     f"{'PASS' if good else 'FAIL'}")
    _write_summary(cfg, lines)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_fig2b(cfg: ExperimentConfig) -> int:
    """Random part of the delay against Manhattan distance, bracketed by two Euclidean fields."""
    lat = cfg.lat
    ok = True
    lines = [f"experiment fig2b L={lat.L} tol={cfg.tol:g}"]
    for m in cfg.m:
        if not m < lat.L // 2:
            raise ConfigError(f"fig2b needs m < L/2, got m={m}")
        rep = hitting.sandwich_check(lat, m, cfg.tol)
        rows = []
        bounds = []
        for r in lat.nodes():
            d = lattice.d_pm(r, (0, 0), lat)
            if d <= m:
                continue
            rows.append([r.i, r.j, d, fmt(rep.middle[r])])
            bounds.append([r.i, r.j, d, fmt(rep.lower[r]), fmt(rep.middle[r]), fmt(rep.upper[r])])
        _write_rows(cfg.outdir / f"tau_random_m{m}.csv", ["i", "j", "d_pm", "value"], rows)
        _write_rows(cfg.outdir / f"bounds_m{m}.csv",
                    ["i", "j", "d_pm", "lower", "value", "upper"], bounds)
        good = rep.holds(1e-6)
        ok &= good
        lines.append(f"m={m} points={len(rows)} lower_margin={fmt(rep.lower_margin)} "
                     f"upper_margin={fmt(rep.upper_margin)} {'PASS' if good else 'FAIL'}")
    _write_summary(cfg, lines)
    return EXIT_OK if ok else EXIT_FAIL


def _curve(cfg: ExperimentConfig) -> analysis.DelayCurve:
    return analysis.average_delay_curve(cfg.lat, range(1, cfg.L + 1), cfg.tol)


def _fit_curve(curve: analysis.DelayCurve) -> analysis.FitResult:
    return analysis.fit_loglinear([(e.m, e.tau_bar) for e in curve.entries], use=10,
                                  L=curve.lat.L)


def cmd_fig3(cfg: ExperimentConfig) -> int:
    """Average free-packet delay for every cutoff m = 1..L."""
    lat = cfg.lat
    curve = _curve(cfg)
    curve.to_csv(cfg.outdir / "delay_curve.csv")
    fit = _fit_curve(curve)
    top = curve[lat.L].tau_bar
    checks = {
        "tau_bar_L_equals_L_over_2": top == lat.L / 2,
        "semidet_closed_form": all(
            e.tau_semidet == analysis.tau_bar_semidet(e.m, lat) for e in curve.entries),
        "nonincreasing": curve.is_nonincreasing(),
    }
    lines = [f"experiment fig3 L={lat.L} tol={cfg.tol:g}",
             f"fit_first_10 slope={fmt(fit.slope)} intercept={fmt(fit.intercept)} "
             f"r2={fmt(fit.r_squared)} A={fmt(fit.A)} B={fmt(fit.B)}",
             f"tau_bar_L={fmt(top)}"]
    lines += [f"{k} {'PASS' if v else 'FAIL'}" for k, v in checks.items()]
    _write_summary(cfg, lines)
    return EXIT_OK if all(checks.values()) else EXIT_FAIL


def cmd_cost(cfg: ExperimentConfig) -> int:
    """Cost surface over (m, a), per-a minimisers and the analytic optimum."""
    lat = cfg.lat
    curve = _curve(cfg)
    fit = _fit_curve(curve)
    analysis.write_cost_csv(curve, cfg.a, cfg.outdir / "cost_surface.csv")
    rows = []
    lines = [f"experiment cost L={lat.L} tol={cfg.tol:g} A={fmt(fit.A)} B={fmt(fit.B)}"]
    ok = True
    for a in cfg.a:
        m_num, c_num = analysis.argmin_cost(analysis.CostModel(a, lat, curve))
        if a > 0:
            m_an = analysis.optimal_m_analytic(a, fit.A, lat)
            gap = abs(m_num - m_an)
        else:
            m_an, gap = math.inf, math.nan
        rows.append([fmt(a), m_num, fmt(c_num), fmt(m_an), fmt(gap)])
        note = ""
        if a == 0:
            good = m_num == lat.L
            ok &= good
            note = f" full_table_optimal={'PASS' if good else 'FAIL'}"
        lines.append(f"a={_tag(a)} m_numeric={m_num} cost={fmt(c_num)} "
                     f"m_analytic={fmt(m_an)}{note}")
    _write_rows(cfg.outdir / "argmin.csv", ["a", "m_numeric", "cost", "m_analytic", "gap"], rows)
    _write_summary(cfg, lines)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_simulate(cfg: ExperimentConfig) -> int:
    """Loaded network run from empty queues."""
    lat = cfg.lat
    m = cfg.m[0] if cfg.m else lat.D_max
    params = StepParams(cfg.lam, RoutingConfig.for_lattice(m, lat))
    s = run_loaded(lat, params, cfg.steps, cfg.seed)
    conserved = s.created == s.delivered + s.queued
    _write_rows(cfg.outdir / "loaded.csv",
                ["L", "m", "lambda", "steps", "created", "delivered", "mean_delay", "queued"],
                [[lat.L, m, fmt(cfg.lam), s.steps, s.created, s.delivered,
                  fmt(s.mean_delay), s.queued]])
    _write_summary(cfg, [
        f"experiment simulate L={lat.L} m={m} lambda={cfg.lam:g} steps={s.steps} seed={cfg.seed}",
        f"created={s.created} delivered={s.delivered} mean_delay={fmt(s.mean_delay)} "
        f"queued={s.queued}",
        f"conservation {'PASS' if conserved else 'FAIL'}",
    ])
    return EXIT_OK if conserved else EXIT_FAIL


def cmd_mc_delay(cfg: ExperimentConfig) -> int:
    """Monte Carlo lone-packet delay compared with the exact linear-system value."""
    lat = cfg.lat
    m = cfg.m[0] if cfg.m else lat.D_max
    routing = RoutingConfig.for_lattice(m, lat)
    r0, rd = lat.check(cfg.r0), lat.check(cfg.rd)
    if r0 == rd:
        raise ConfigError("r0 and rd coincide")
    res = single_packet_delay(r0, rd, routing, lat, cfg.trials, cfg.seed)
    rel = ((r0[0] - rd[0]) % lat.L, (r0[1] - rd[1]) % lat.L)
    if m < lat.L:
        exact = hitting.tau_total(hitting.tau_random(lat, m, cfg.tol), rel)
    else:
        exact = float(lattice.d_pm(rel, (0, 0), lat))
    if res.stderr > 0:
        z = abs(res.mean - exact) / res.stderr
        good = z <= 3
    else:
        z = math.nan
        good = res.mean == exact
    counts = np.bincount(res.samples)
    _write_rows(cfg.outdir / "delay_histogram.csv", ["delay", "count"],
                [[d, int(c)] for d, c in enumerate(counts) if c])
    _write_summary(cfg, [
        f"experiment mc-delay L={lat.L} m={m} r0={r0.i},{r0.j} rd={rd.i},{rd.j} "
        f"trials={cfg.trials} seed={cfg.seed}",
        f"mean={fmt(res.mean)} stderr={fmt(res.stderr)} exact={fmt(exact)} z={fmt(z)}",
        f"within_3_stderr {'PASS' if good else 'FAIL'}",
    ])
    return EXIT_OK if good else EXIT_FAIL


def cmd_validate(cfg: ExperimentConfig) -> int:
    from .validation import run_checks

    results = run_checks(tol=cfg.tol, seed=cfg.seed, trials=cfg.trials)
    lines = [f"{'PASS' if r.ok else 'FAIL'} {r.name}: {r.detail}" for r in results]
    n_fail = sum(not r.ok for r in results)
    lines.append(f"{'PASS' if not n_fail else 'FAIL'} overall: "
                 f"{len(results) - n_fail}/{len(results)} checks passed")
    (cfg.outdir / "report.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return EXIT_OK if not n_fail else EXIT_FAIL


COMMANDS = {
    "fig2a": cmd_fig2a,
    "fig2b": cmd_fig2b,
    "fig3": cmd_fig3,
    "cost": cmd_cost,
    "simulate": cmd_simulate,
    "mc-delay": cmd_mc_delay,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netdelay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        p = sub.add_parser(name, help=(func.__doc__ or "").strip().splitlines()[0]
                           if func.__doc__ else None)
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--L", type=str, help="lattice side (even, >= 4)")
        p.add_argument("--m", type=str, help="cutoff(s): 3 | 1,5 | 1-10")
        p.add_argument("--R", type=str, help="Euclidean radius list, e.g. 1,5")
        p.add_argument("--a", type=str, help="memory weight list for cost")
        p.add_argument("--lambda", dest="lambda", type=str, help="creation probability")
        p.add_argument("--steps", type=str, help="time steps for simulate")
        p.add_argument("--trials", type=str, help="Monte Carlo trials")
        p.add_argument("--seed", type=str, help="RNG seed")
        p.add_argument("--tol", type=str, help="solver relative residual tolerance")
        p.add_argument("--r0", type=str, help="start node i,j")
        p.add_argument("--rd", type=str, help="destination node i,j")
        p.add_argument("--out", type=str, help="output root directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args.command, args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (hitting.ConvergenceError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
