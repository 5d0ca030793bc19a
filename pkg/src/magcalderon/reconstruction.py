"""Point membership on null geodesics, grid scans and conformal comparisons.

A point ``x`` is declared a member of the geodesic entering at ``(x', xi')``
when some perturbation supported in the ball ``B(x, r)`` changes the boundary
observable.  The existential is replaced by ``N`` seeded generic samples.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Ball, PreconditionError
from .oracle import SymbolOracle
from .perturbations import GenericSampler

__all__ = [
    "MembershipVerdict",
    "TrajectoryEstimate",
    "ConformalReport",
    "membership_test",
    "scan_trajectory",
    "shrink_test",
    "conformal_check",
    "hausdorff",
    "scan_grid",
    "MODES",
]

MODES = ("em", "metric", "exact")


@dataclass
class MembershipVerdict:
    point: np.ndarray
    lens_in: dict
    lens_out: dict
    verdict: str
    witness: Optional[str]
    detection_fraction: float
    mode: str
    radius: float
    distance: float
    values: list = field(default_factory=list)

    @property
    def member(self) -> bool:
        return self.verdict == "member"

    def as_dict(self) -> dict:
        return {
            "point": self.point.tolist(),
            "lens_in": self.lens_in,
            "lens_out": self.lens_out,
            "verdict": self.verdict,
            "witness": self.witness,
            "detection_fraction": self.detection_fraction,
            "mode": self.mode,
            "radius": self.radius,
            "distance": self.distance,
            "values": self.values,
        }


@dataclass
class TrajectoryEstimate:
    grid: dict
    flagged: np.ndarray
    probed: int
    lens_in: dict
    lens_out: dict
    hausdorff: Optional[float] = None
    fractions: Optional[np.ndarray] = None

    def as_dict(self) -> dict:
        return {
            "grid": self.grid,
            "flagged": self.flagged.tolist(),
            "flagged_count": int(self.flagged.shape[0]),
            "probed": self.probed,
            "lens_in": self.lens_in,
            "lens_out": self.lens_out,
            "hausdorff": self.hausdorff,
        }


@dataclass
class ConformalReport:
    probes: list
    max_discrepancy: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_discrepancy <= self.tolerance

    def as_dict(self) -> dict:
        return {"probes": self.probes, "max_discrepancy": self.max_discrepancy, "tolerance": self.tolerance, "passed": self.passed}


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two finite point sets."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        return float("inf") if (a.shape[0] or b.shape[0]) else 0.0
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(), db.max()))


def _sampler(oracle: SymbolOracle, mode, center, r, seed, stream, delta, k):
    if mode == "em":
        return GenericSampler("one_form", center, r, delta, k, seed, stream)
    if mode == "metric":
        return GenericSampler("sym_tensor", center, r, delta, k, seed, stream, trace_free_metric=oracle.metric.eval(center))
    if mode == "exact":
        return GenericSampler("exact", center, r, delta, k, seed, stream)
    raise ValueError(f"unknown probe mode {mode!r}")


def _probe_values(oracle: SymbolOracle, lens, fields, mode) -> list[float]:
    if mode == "metric":
        return [oracle.metric_variation(lens, f) for f in fields]
    return [oracle.em_phase(lens, f) for f in fields]


def _detected(values, mode, eps) -> np.ndarray:
    v = np.asarray(values, float)
    if mode == "metric":
        return np.abs(v) > eps
    return np.abs(np.angle(np.exp(1j * v))) > eps


def membership_test(oracle: SymbolOracle, x_b, xi_b, x, r: float, N: int = 20, mode: str = "em", seed: int = 0, delta: float = 1.0, k: int = 2, stream: tuple = (), prefilter: bool = True) -> MembershipVerdict:
    """Decide whether ``x`` lies on the null geodesic of ``(x_b, xi_b)``.

    Parameters
    ----------
    oracle : SymbolOracle
    x_b, xi_b : boundary covector of the incoming ray.
    x : interior point; r : probe radius; N : number of samples.
    mode : {"em", "metric", "exact"}
        Potential perturbations, trace free metric perturbations, or exact
        forms (the last never detects anything).
    prefilter : bool
        Skip sampling when the ball misses the ray (the observable is then
        exactly zero); set ``False`` to evaluate the samples anyway.
    """
    if mode not in MODES:
        raise ValueError(f"unknown probe mode {mode!r}")
    x = np.asarray(x, float)
    if not oracle.domain.is_interior_ball(Ball(x, r)):
        raise PreconditionError("probe ball touches the boundary")
    lens = oracle.trace(x_b, xi_b)
    lin, lout = lens.trajectory.entry.as_dict(), lens.out.as_dict()
    dist = float(lens.trajectory.distance_to(x[None, :])[0])
    if prefilter and dist > r:
        return MembershipVerdict(x, lin, lout, "nonmember", None, 0.0, mode, r, dist)
    fields = _sampler(oracle, mode, x, r, seed, stream, delta, k).fields(N)
    vals = _probe_values(oracle, lens, fields, mode)
    det = _detected(vals, mode, oracle.eps_detect)
    witness = fields[int(np.argmax(det))].name if det.any() else None
    return MembershipVerdict(x, lin, lout, "member" if det.any() else "nonmember", witness, float(det.mean()), mode, r, dist, [float(v) for v in vals])


def scan_grid(domain, spacing: float, r: float) -> np.ndarray:
    """Lattice points whose probe balls of radius ``r`` are interior."""
    t0, t1 = domain.time_window
    ts = np.arange(t0, t1 + 0.5 * spacing, spacing)
    xs = np.arange(-1.0, 1.0 + 0.5 * spacing, spacing)
    T, X1, X2 = np.meshgrid(ts, xs, xs, indexing="ij")
    P = np.stack([T.ravel(), X1.ravel(), X2.ravel()], axis=1)
    keep = (P[:, 0] - r > t0 + 1e-12) & (P[:, 0] + r < t1 - 1e-12) & (np.hypot(P[:, 1], P[:, 2]) + r < 1.0 - 1e-12)
    return P[keep]


def _truth_in_region(lens, domain, r, gap=0.005):
    pts = lens.trajectory.point_cloud(gap)
    t0, t1 = domain.time_window
    keep = (pts[:, 0] >= t0 + r) & (pts[:, 0] <= t1 - r) & (np.hypot(pts[:, 1], pts[:, 2]) <= 1.0 - r)
    return pts[keep]


def scan_trajectory(oracle: SymbolOracle, x_b, xi_b, spacing: float = 0.05, r: float = 0.1, N: int = 20, mode: str = "em", seed: int = 0, delta: float = 1.0, k: int = 2, workers: int = 1, truth: Optional[np.ndarray] = None) -> TrajectoryEstimate:
    """Run :func:`membership_test` over an interior lattice.

    Lattice points farther than ``r`` from the traced ray are nonmembers
    without sampling (their probe supports miss the ray).  Each remaining
    point uses its own RNG substream keyed by its lattice index, so results do
    not depend on ``workers``.

    ``truth`` defaults to the traced ray restricted to the scanned region;
    the Hausdorff distance is measured against it.
    """
    if r < spacing:
        raise PreconditionError("probe radius must be at least the grid spacing")
    lens = oracle.trace(x_b, xi_b)
    P = scan_grid(oracle.domain, spacing, r)
    d = lens.trajectory.distance_to(P)
    cand = np.flatnonzero(d <= r)

    def probe(i):
        v = membership_test(oracle, x_b, xi_b, P[i], r, N, mode, seed, delta, k, stream=(int(i),))
        return v.detection_fraction, v.member

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            res = list(ex.map(probe, cand))
    else:
        res = [probe(i) for i in cand]
    frac = np.array([f for f, _ in res])
    flags = np.array([m for _, m in res], dtype=bool)
    flagged = P[cand[flags]] if res else np.zeros((0, 3))
    if truth is None:
        truth = _truth_in_region(lens, oracle.domain, r)
    hd = hausdorff(flagged, truth)
    grid = {"spacing": spacing, "radius": r, "samples": N, "mode": mode, "seed": seed, "points": int(P.shape[0]), "candidates": int(cand.size)}
    return TrajectoryEstimate(grid, flagged, int(cand.size), lens.trajectory.entry.as_dict(), lens.out.as_dict(), hd, frac)


def shrink_test(oracle: SymbolOracle, x_b, xi_b, x, radii: Sequence[float], N: int = 20, mode: str = "em", seed: int = 0, delta: float = 1.0, k: int = 2) -> dict:
    """Membership verdicts along a sequence of probe radii.

    Passes when every radius below the distance from ``x`` to the ray gives a
    nonmember verdict.
    """
    lens = oracle.trace(x_b, xi_b)
    dist = float(lens.trajectory.distance_to(np.asarray(x, float)[None, :])[0])
    verdicts = []
    for rr in radii:
        v = membership_test(oracle, x_b, xi_b, x, rr, N, mode, seed, delta, k)
        verdicts.append({"radius": float(rr), "verdict": v.verdict, "detection_fraction": v.detection_fraction})
    ok = all(v["verdict"] == "nonmember" for v in verdicts if v["radius"] < dist)
    return {"distance": dist, "verdicts": verdicts, "passed": ok}


def conformal_check(oracle_a: SymbolOracle, oracle_b: SymbolOracle, probes, spacing: float = 0.05, r: float = 0.1, N: int = 20, mode: str = "em", seed: int = 0, workers: int = 1) -> ConformalReport:
    """Compare grid-scan estimates of two scenarios on common boundary probes."""
    rows = []
    worst = 0.0
    for x_b, xi_b in probes:
        ea = scan_trajectory(oracle_a, x_b, xi_b, spacing, r, N, mode, seed, workers=workers)
        eb = scan_trajectory(oracle_b, x_b, xi_b, spacing, r, N, mode, seed, workers=workers)
        hd = hausdorff(ea.flagged, eb.flagged)
        identical = ea.flagged.shape == eb.flagged.shape and bool(np.array_equal(ea.flagged, eb.flagged))
        worst = max(worst, hd)
        rows.append({"x": list(map(float, x_b)), "xi": list(map(float, xi_b)), "discrepancy": hd, "identical": identical, "flagged": [int(ea.flagged.shape[0]), int(eb.flagged.shape[0])]})
    return ConformalReport(rows, worst, spacing + r)
