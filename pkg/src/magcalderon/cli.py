"""Command line runner.

Every subcommand writes ``report.json`` (sorted keys, no timing) and
``timing.json`` into ``--out``.  Exit codes: 0 when all checks pass, 1 on a
failed check or numerical failure, 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import checks as acc
from .bicharacteristics import lens_relation
from .config import ConfigError, ExperimentConfig, load_config
from .geometry import GeometryError, PreconditionError, admissibility_check
from .io import write_field, write_json, write_points_csv, write_trajectory_csv
from .oracle import ElectromagneticScenario, SymbolOracle
from .reconstruction import conformal_check, membership_test, scan_trajectory, shrink_test
from .riemann.decision import gauge_tilde_check, metric_equality_decision
from .riemann.grid import GridDomain, MagneticOperator, SolverError
from .riemann.linearize import RiemannOracle, recover_coupled_gradient
from .riemann.runge import RungeBasis, RungeTarget, runge_fit
from .scenarios import UnknownScenarioError, catalog, get_scenario, scenario_ids

__all__ = ["main", "build_parser", "run"]

RIEMANN_ACTIONS = ("identity", "recover", "decide", "runge", "gauge")

# CLI flag -> config key
_FLAG_KEYS = {
    "scenario": "scenario", "seed": "seed", "out": "out", "grid_n": "grid_n", "radius": "radius",
    "samples": "samples", "mode": "mode", "x": "x", "xi": "xi", "point": "point", "k": "k",
    "other": "other", "spacing": "spacing", "workers": "workers", "direction": "direction", "data": "data",
}


def _floats(s: str) -> list:
    try:
        return [float(v) for v in s.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {s!r}") from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", default=None, help="scenario id (see list-scenarios)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="flat JSON config file")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--grid-n", dest="grid_n", type=int, default=None, help="lattice nodes per axis")
    p.add_argument("--radius", type=float, default=None, help="probe radius")
    p.add_argument("--samples", type=int, default=None, help="samples per membership test")
    p.add_argument("--mode", default=None, choices=("em", "metric", "exact"))
    p.add_argument("--x", type=_floats, default=None, help="boundary point t,x1,x2")
    p.add_argument("--xi", type=_floats, default=None, help="boundary covector")
    p.add_argument("--point", type=_floats, default=None, help="interior point")
    p.add_argument("--k", type=int, default=None, help="number of reflections")
    p.add_argument("--other", default=None, help="second scenario")
    p.add_argument("--spacing", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--direction", default=None, choices=("future", "past"))
    p.add_argument("--data", default=None, help="boundary datum: x1, x2, x3, quadratic or manufactured")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="magcalderon", description="Boundary determination experiments for magnetic wave and Laplace operators.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, hlp in (
        ("lens", "lens relation; compares with closed-form chords on minkowski-disk"),
        ("trace", "trace one null geodesic and write it as CSV"),
        ("membership", "membership test of an interior point"),
        ("scan", "grid scan of a trajectory"),
        ("shrink", "membership verdicts over shrinking radii"),
        ("conformal-check", "compare scan estimates of two scenarios"),
        ("verify-admissible", "timelike, null-convex boundary check"),
    ):
        _common(sub.add_parser(name, help=hlp))
    r = sub.add_parser("riemann", help="Riemannian pipeline")
    r.add_argument("action", choices=RIEMANN_ACTIONS)
    r.add_argument("--no-boundary-check", dest="check_boundary", action="store_false", default=None)
    _common(r)
    ls = sub.add_parser("list-scenarios", help="list catalog")
    ls.add_argument("--json", action="store_true", help="machine readable catalog with parameter schemas")
    c = sub.add_parser("check", help="run named acceptance checks")
    c.add_argument("names", nargs="*", default=["all"], help="acc01 .. acc12 or all")
    _common(c)
    return ap


def _config(args) -> ExperimentConfig:
    d = {}
    if getattr(args, "config", None):
        d.update(load_config(args.config))
    for flag, key in _FLAG_KEYS.items():
        v = getattr(args, flag, None)
        if v is not None:
            d[key] = v
    if getattr(args, "check_boundary", None) is not None:
        d["check_boundary"] = args.check_boundary
    command = args.command if args.command != "riemann" else f"riemann {args.action}"
    d["command"] = command
    if command.startswith("riemann") and "scenario" not in d:
        d["scenario"] = "euclid-box"
    cfg = ExperimentConfig.from_dict(d)
    get_scenario(cfg.scenario)
    if cfg.other is not None:
        get_scenario(cfg.other)
    return cfg


def _oracle(cfg: ExperimentConfig, name=None) -> SymbolOracle:
    sc = get_scenario(name or cfg.scenario)
    if sc.domain.kind != "lorentz_cylinder":
        raise PreconditionError(f"{sc.id} is not a Lorentzian scenario")
    return SymbolOracle(ElectromagneticScenario.from_scenario(sc), tol=cfg.quad_tol, eps_detect=cfg.eps_detect)


def _riemann_metric(name):
    sc = get_scenario(name)
    if sc.domain.kind != "riemann_box":
        raise PreconditionError(f"{sc.id} is not a Riemannian scenario")
    return sc.metric


# ---------------------------------------------------------------------------
# handlers return (metrics, checks)


def _lens(cfg, out):
    sc = get_scenario(cfg.scenario)
    res = lens_relation(sc.metric, cfg.x, cfg.xi, cfg.k, sc.domain, cfg.direction)
    metrics = {"probe": {"in": res.trajectory.entry.as_dict(), "out": res.out.as_dict(), "travel_time": res.travel_time, "null_residual": res.trajectory.null_residual}}
    checks = {"null_drift": res.trajectory.null_residual <= 1e-9}
    if cfg.scenario == "minkowski-disk":
        r = acc.acc01(cfg.seed, cfg.lens_samples)
        metrics["closed_form"] = r.metrics
        checks["closed_form_lens"] = r.metrics["lens_error"] <= 1e-6 and r.metrics["null_drift"] <= 1e-9
    return metrics, checks


def _trace(cfg, out):
    sc = get_scenario(cfg.scenario)
    res = lens_relation(sc.metric, cfg.x, cfg.xi, cfg.k, sc.domain, cfg.direction)
    write_trajectory_csv(out / "trajectory.csv", res.trajectory)
    m = {"in": res.trajectory.entry.as_dict(), "out": res.out.as_dict(), "reflections": res.trajectory.reflection_count, "steps": int(res.trajectory.s.size), "null_residual": res.trajectory.null_residual}
    return m, {"null_drift": res.trajectory.null_residual <= 1e-9}


def _default_point(orc, cfg):
    if cfg.point is not None:
        return np.asarray(cfg.point, float)
    lens = orc.trace(cfg.x, cfg.xi)
    lo, hi = lens.trajectory.sigma_range
    return lens.trajectory.state(0.5 * (lo + hi))[:3]


def _membership(cfg, out):
    orc = _oracle(cfg)
    p = _default_point(orc, cfg)
    v = membership_test(orc, cfg.x, cfg.xi, p, cfg.radius, cfg.samples, cfg.mode, cfg.seed, cfg.delta, cfg.norm_order)
    sound = v.verdict == "nonmember" if v.distance > cfg.radius else True
    return v.as_dict(), {"sound": sound}


def _scan(cfg, out):
    orc = _oracle(cfg)
    est = scan_trajectory(orc, cfg.x, cfg.xi, cfg.spacing, cfg.radius, cfg.samples, cfg.mode, cfg.seed, cfg.delta, cfg.norm_order, cfg.workers)
    write_points_csv(out / "flagged.csv", est.flagged)
    m = est.as_dict()
    m.pop("flagged")
    checks = {"hausdorff": est.hausdorff <= cfg.spacing + cfg.radius} if cfg.mode != "exact" else {"no_detections": est.flagged.shape[0] == 0}
    return m, checks


def _shrink(cfg, out):
    orc = _oracle(cfg)
    p = _default_point(orc, cfg)
    r = shrink_test(orc, cfg.x, cfg.xi, p, cfg.radii, cfg.samples, cfg.mode, cfg.seed, cfg.delta, cfg.norm_order)
    return r, {"shrink": r["passed"]}


def _conformal(cfg, out):
    other = cfg.other or ("conformal-minkowski" if cfg.scenario != "conformal-minkowski" else "minkowski-disk")
    a, b = _oracle(cfg), _oracle(cfg, other)
    rep = conformal_check(a, b, [(cfg.x, cfg.xi)], cfg.spacing, cfg.radius, cfg.samples, cfg.mode, cfg.seed, cfg.workers)
    return dict(rep.as_dict(), pair=[cfg.scenario, other]), {"conformal": rep.passed}


def _admissible(cfg, out):
    sc = get_scenario(cfg.scenario)
    rep = admissibility_check(sc.domain, sc.metric, seed=cfg.seed)
    return rep.as_dict(), {"admissible": rep.admissible}


_DATA = {
    "x1": lambda X: np.asarray(X)[..., 0],
    "x2": lambda X: np.asarray(X)[..., 1],
    "x3": lambda X: np.asarray(X)[..., 2],
    "quadratic": lambda X: np.asarray(X)[..., 0] ** 2 - np.asarray(X)[..., 1] ** 2,
    "manufactured": acc.manufactured,
}


def _datum(cfg):
    if cfg.data not in _DATA:
        raise ConfigError(f"unknown boundary datum {cfg.data!r}; choose from {', '.join(_DATA)}")
    return _DATA[cfg.data]


def _r_identity(cfg, out):
    Ns = (17, 33, 65)
    ires, exact = acc.identity_residuals(Ns)
    serr = acc.solver_errors(Ns)
    hs = [1.0 / (N - 1) for N in Ns]
    io, so = acc.convergence_orders(hs, ires), acc.convergence_orders(hs, serr)
    op = MagneticOperator(GridDomain(cfg.grid_n), _riemann_metric("euclid-box"))
    u = op.solve(acc.manufactured)
    write_field(out / "manufactured_solution.bin", u.as_array(), [op.grid.H] * 3)
    m = {"grids": list(Ns), "identity_residuals": ires, "identity_orders": io, "volume_integral": exact, "solver_errors": serr, "solver_orders": so}
    return m, {"identity_order": min(io) >= 1.8, "solver_order": min(so) >= 1.9}


def _r_recover(cfg, out):
    g = _riemann_metric(cfg.scenario)
    orc = RiemannOracle(g, cfg.grid_n, name=cfg.scenario)
    p = np.asarray(cfg.point if cfg.point is not None else acc.RECOVERY_POINT, float)
    f = _datum(cfg)
    cg = recover_coupled_gradient(orc, f, p, cfg.deltas)
    truth = acc._solver_reference(g, f, p)
    err = float(np.linalg.norm(cg.value - truth) / np.linalg.norm(truth))
    m = dict(cg.as_dict(), reference=truth.tolist(), relative_error=err, point=p.tolist())
    return m, {"relative_error": err <= 0.10}


def _r_decide(cfg, out):
    other = cfg.other or "euclid-box"
    o1 = RiemannOracle(_riemann_metric(other), cfg.grid_n, name=other)
    o2 = RiemannOracle(_riemann_metric(cfg.scenario), cfg.grid_n, name=cfg.scenario)
    r = metric_equality_decision(o1, o2, cfg.probe_points, check_boundary=cfg.check_boundary, eps_C=cfg.eps_c, eps_probe=cfg.eps_probe, deltas=cfg.deltas, m=cfg.runge_m, seed=cfg.seed)
    return dict(r.as_dict(), pair=[other, cfg.scenario]), {"decided": r.verdict != "inconclusive"}


def _r_runge(cfg, out):
    basis = RungeBasis(_riemann_metric(cfg.scenario), cfg.grid_n, cfg.runge_m, seed=cfg.seed)
    p = cfg.point if cfg.point is not None else [0.5, 0.5, 0.5]
    fit = runge_fit(basis, RungeTarget(p, 0.0, np.zeros(3), np.asarray(cfg.hessian_target, float)), cfg.runge_lambda)
    write_field(out / "runge_solution.bin", fit.solution.as_array(), [basis.grid.H] * 3)
    return fit.as_dict(), {"fit": fit.success}


def _r_gauge(cfg, out):
    g = _riemann_metric(cfg.scenario)
    r = gauge_tilde_check(g, cfg.scale_c, f=_datum(cfg), N=cfg.grid_n)
    ref = gauge_tilde_check(g, 1.0, f=_datum(cfg), N=cfg.grid_n)
    return dict(r.as_dict(), identity_residual=ref.residual), {"gauge": r.residual <= 1e-6}


_HANDLERS = {
    "lens": _lens, "trace": _trace, "membership": _membership, "scan": _scan, "shrink": _shrink,
    "conformal-check": _conformal, "verify-admissible": _admissible,
    "riemann identity": _r_identity, "riemann recover": _r_recover, "riemann decide": _r_decide,
    "riemann runge": _r_runge, "riemann gauge": _r_gauge,
}


def _run_checks(cfg, names, out):
    names = list(acc.CHECKS) if names in ([], ["all"]) else names
    metrics, results, timing = {}, {}, {}
    for n in names:
        if n not in acc.CHECKS:
            raise ConfigError(f"unknown check {n!r}")
        r = acc.run_check(n)
        print(r.line(), flush=True)
        metrics[n] = r.as_dict()
        results[n] = bool(r.passed)
        timing[n] = r.timing
    return metrics, results, timing


def run(cfg: ExperimentConfig, names=None) -> tuple[dict, dict]:
    """Execute one configured command; returns ``(report, timing)``."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    extra_timing = {}
    if cfg.command == "check":
        metrics, checks_, extra_timing = _run_checks(cfg, names or ["all"], out)
    else:
        metrics, checks_ = _HANDLERS[cfg.command](cfg, out)
    checks_ = {k: bool(v) for k, v in checks_.items()}
    report = {
        "command": cfg.command,
        "config": cfg.hashed_dict(),
        "config_hash": cfg.hash,
        "metrics": metrics,
        "checks": checks_,
        "passed": all(checks_.values()),
    }
    timing = {"wall_seconds": time.perf_counter() - t0, "checks": extra_timing}
    write_json(out / "report.json", report)
    write_json(out / "timing.json", timing)
    return report, timing


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = build_parser().parse_args(argv)
        if args.command == "list-scenarios":
            if args.json:
                print(json.dumps(catalog(), sort_keys=True, indent=2))
            else:
                for entry in catalog():
                    print(f"{entry['id']:22s} {entry['description']}")
            return 0
        cfg = _config(args)
        if cfg.workers == 1 and getattr(args, "workers", None) is None:
            cfg.workers = max(1, min(4, os.cpu_count() or 1))
        report, _ = run(cfg, getattr(args, "names", None))
    except (ConfigError, UnknownScenarioError, PreconditionError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2
    except (GeometryError, SolverError, np.linalg.LinAlgError, FloatingPointError, RuntimeError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for name, ok in report["checks"].items():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    return 0 if report["passed"] else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
