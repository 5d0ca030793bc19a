"""Boundary observables of the electromagnetic wave operator.

Instead of solving the wave equation, the oracle evaluates the principal
symbol content of the DN map along traced null bicharacteristics:

* phase ratios ``exp(i Q)`` with ``Q`` the line integral of ``A - A_bg``,
* the full principal symbol of the ``k``-fold reflected lens correspondence,
* first variations ``I = int h^{jk} xi_j xi_k ds`` under metric perturbations.

Line integrals use composite Simpson quadrature on the dense trajectory
output, restricted to the parameter windows where the trajectory meets the
support of the integrand and refined until successive estimates agree.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bicharacteristics import (
    DEFAULT_OPTIONS,
    BoundaryCovector,
    Leg,
    LensResult,
    TraceOptions,
    boundary_covector,
    classify_and_lift,
    lens_relation,
)
from .bump import radial_bump
from .geometry import Ball, Domain, Field, MetricField, PreconditionError, admissibility_check, boundary_normal

__all__ = [
    "ElectromagneticScenario",
    "SymbolRatio",
    "FirstVariation",
    "FullSymbol",
    "SymbolOracle",
    "simpson",
    "EPS_DETECT",
]

EPS_DETECT = 1e-6


@dataclass
class ElectromagneticScenario:
    """Metric, background potential and (unused) scalar potential."""

    metric: MetricField
    domain: Domain
    background: Optional[Field] = None
    potential: Optional[Field] = None
    name: str = "scenario"

    @classmethod
    def from_scenario(cls, sc, background=None, potential=None) -> "ElectromagneticScenario":
        return cls(sc.metric, sc.domain, background if background is not None else sc.background, potential if potential is not None else sc.potential, sc.id)

    def admissibility(self, samples: int = 32, seed: int = 0):
        return admissibility_check(self.domain, self.metric, samples, seed)


@dataclass
class SymbolRatio:
    value: complex
    phase: float
    lens_in: BoundaryCovector
    lens_out: BoundaryCovector
    trajectory: object = field(repr=False, default=None)

    @property
    def detected(self) -> bool:
        return abs(np.angle(self.value)) > EPS_DETECT


@dataclass
class FirstVariation:
    value: float
    eps_detect: float = EPS_DETECT

    @property
    def detected(self) -> bool:
        return abs(self.value) > self.eps_detect


@dataclass
class FullSymbol:
    amplitude: complex
    sign: int
    time_orientation: str
    k: int
    xi_n_entry: float
    xi_n_exit: float
    background_phase: float
    lens_in: BoundaryCovector
    lens_out: BoundaryCovector

    @property
    def normalized(self) -> complex:
        return self.amplitude / (2.0 * np.sqrt(self.xi_n_entry) * np.sqrt(self.xi_n_exit))


# ---------------------------------------------------------------------------
# quadrature


def simpson(fn: Callable[[np.ndarray], np.ndarray], a: float, b: float, tol: float = 1e-9, n0: int = 16, nmax: int = 2**18, min_refine: int = 2):
    """Composite Simpson rule, doubling panels until ``max|dQ| <= tol``.

    ``fn`` maps an array of nodes to values of shape ``(m, ...)``; the result
    has the trailing shape.
    """
    n = n0 + (n0 % 2)
    s = np.linspace(a, b, n + 1)
    vals = np.asarray(fn(s), float)
    w = np.ones(n + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    prev = (b - a) / (3 * n) * np.tensordot(w, vals, axes=1)
    refinements = 0
    while True:
        mid = 0.5 * (s[:-1] + s[1:])
        mvals = np.asarray(fn(mid), float)
        merged = np.empty((2 * n + 1,) + vals.shape[1:])
        merged[0::2], merged[1::2] = vals, mvals
        s = np.empty(2 * n + 1)
        s[0::2] = np.linspace(a, b, n + 1)
        s[1::2] = mid
        vals, n = merged, 2 * n
        w = np.ones(n + 1)
        w[1:-1:2], w[2:-1:2] = 4.0, 2.0
        cur = (b - a) / (3 * n) * np.tensordot(w, vals, axes=1)
        refinements += 1
        if refinements >= min_refine and np.max(np.abs(cur - prev)) <= tol:
            return cur
        if n >= nmax:
            return cur
        prev = cur


def _support_windows(leg: Leg, ball: Optional[Ball]) -> list[tuple[float, float]]:
    if ball is None:
        return [(float(leg.sigma[0]), float(leg.sigma[-1]))]
    gap = ball.radius / 8.0
    sig, pts = leg.dense_points(gap)
    near = np.linalg.norm(pts - ball.center, axis=1) <= ball.radius + 2.0 * gap
    if not np.any(near):
        return []
    idx = np.flatnonzero(near)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    out = []
    for run in runs:
        lo = sig[max(run[0] - 1, 0)]
        hi = sig[min(run[-1] + 1, sig.size - 1)]
        out.append((float(lo), float(hi)))
    return out


def _key(x, xi, k, direction):
    return (np.asarray(x, float).tobytes(), np.asarray(xi, float).tobytes(), int(k), direction)


def _ball_key(center, radius):
    return (np.asarray(center, float).tobytes(), float(radius))


# ---------------------------------------------------------------------------
# oracle


class SymbolOracle:
    """Stateless boundary observable simulator for one scenario.

    Traced trajectories and bump moments are cached behind a lock; set
    ``cache=False`` to disable.
    """

    def __init__(self, scenario: ElectromagneticScenario, options: TraceOptions = DEFAULT_OPTIONS, tol: float = 1e-9, eps_detect: float = EPS_DETECT, cache: bool = True, record: bool = False):
        self.scenario = scenario
        self.options = options
        self.tol = tol
        self.eps_detect = eps_detect
        self.cache = cache
        self.record = record
        self._lock = threading.Lock()
        self._traces: dict = {}
        self._moments: dict = {}
        self.log: list[dict] = []

    @property
    def metric(self) -> MetricField:
        return self.scenario.metric

    @property
    def domain(self) -> Domain:
        return self.scenario.domain

    # -- tracing -----------------------------------------------------------
    def trace(self, x, xi, k: int = 0, direction: str = "future") -> LensResult:
        key = _key(x, xi, k, direction)
        if self.cache:
            with self._lock:
                hit = self._traces.get(key)
            if hit is not None:
                return hit
        res = lens_relation(self.metric, x, xi, k, self.domain, direction, self.options)
        if self.cache:
            with self._lock:
                self._traces.setdefault(key, res)
        return res

    # -- integrals ---------------------------------------------------------
    def _velocity(self, leg: Leg, y):
        n = leg.dim
        return 2.0 * leg.orientation * np.einsum("mjk,mk->mj", self.metric.inverse(y[:, :n]), y[:, n:])

    def line_integral(self, lens: LensResult, form: Field) -> float:
        """``int form(x') ds`` along the (possibly broken) trajectory."""
        total = 0.0
        n = self.metric.dim
        for leg in lens.trajectory.legs:
            for a, b in _support_windows(leg, form.support):

                def integrand(s, leg=leg):
                    y = leg.state(s)
                    return np.einsum("mj,mj->m", np.asarray(form(y[:, :n]), float), self._velocity(leg, y))

                total += float(simpson(integrand, a, b, self.tol))
        return total

    def _moment(self, lens: LensResult, center, radius, order: int) -> np.ndarray:
        ball = Ball(center, radius)
        key = (id(lens), _ball_key(center, radius), order)
        if self.cache:
            with self._lock:
                hit = self._moments.get(key)
            if hit is not None and hit[0] is lens:
                return hit[1]
        n = self.metric.dim
        shape = (n,) if order == 1 else (n, n)
        total = np.zeros(shape)
        for leg in lens.trajectory.legs:
            for a, b in _support_windows(leg, ball):

                def integrand(s, leg=leg):
                    y = leg.state(s)
                    w = radial_bump(y[:, :n], ball.center, ball.radius)
                    v = self._velocity(leg, y)
                    if order == 1:
                        return w[:, None] * v
                    u = 0.5 * v  # g^{-1} xi up to orientation, which squares away
                    return w[:, None, None] * u[:, :, None] * u[:, None, :]

                total += simpson(integrand, a, b, self.tol * 1e-2)
        if self.cache:
            with self._lock:
                self._moments[key] = (lens, total)
        return total

    def em_moment(self, lens, center, radius) -> np.ndarray:
        """``W = int psi(|x - c|/r) x' ds``; ``Q = coeff . W`` for separable forms."""
        return self._moment(lens, center, radius, 1)

    def metric_moment(self, lens, center, radius) -> np.ndarray:
        """``W = int psi (g^-1 xi)(g^-1 xi)^T ds``; ``I = coeff : W``."""
        return self._moment(lens, center, radius, 2)

    def em_phase(self, lens: LensResult, delta_A: Field) -> float:
        sep = getattr(delta_A, "separable", None)
        if sep is not None and np.ndim(sep.coeff) == 1:
            return float(sep.coeff @ self.em_moment(lens, sep.center, sep.radius))
        return self.line_integral(lens, delta_A)

    def metric_variation(self, lens: LensResult, h: Field) -> float:
        sep = getattr(h, "separable", None)
        if sep is not None and np.ndim(sep.coeff) == 2:
            return float(np.sum(sep.coeff * self.metric_moment(lens, sep.center, sep.radius)))
        total = 0.0
        n = self.metric.dim
        for leg in lens.trajectory.legs:
            for a, b in _support_windows(leg, h.support):

                def integrand(s, leg=leg):
                    y = leg.state(s)
                    u = np.einsum("mjk,mk->mj", self.metric.inverse(y[:, :n]), y[:, n:])
                    return np.einsum("mj,mjk,mk->m", u, np.asarray(h(y[:, :n]), float), u)

                total += float(simpson(integrand, a, b, self.tol))
        return total

    # -- observables -------------------------------------------------------
    def _check_interior(self, f: Field):
        if f.support is None:
            raise PreconditionError("perturbation must be compactly supported")
        dom = self.domain
        b = f.support
        if not dom.is_interior_ball(b):
            raise PreconditionError("perturbation support touches the boundary")

    def _log(self, kind, x, xi, pert, value):
        if not self.record:
            return
        if isinstance(value, complex):
            value = [value.real, value.imag]
        with self._lock:
            self.log.append({"kind": kind, "covector": {"x": np.asarray(x, float).tolist(), "xi": np.asarray(xi, float).tolist()}, "perturbation": pert, "value": value})

    def phase_ratio(self, delta_A: Field, x, xi) -> SymbolRatio:
        """Ratio of principal symbols for potentials ``A`` and ``A_bg``.

        Parameters
        ----------
        delta_A : Field
            The difference ``A - A_bg``; must be interior supported.
        x, xi : boundary covector of the incoming ray.
        """
        self._check_interior(delta_A)
        lens = self.trace(x, xi)
        q = self.em_phase(lens, delta_A)
        val = complex(np.exp(1j * q))
        self._log("phase_ratio", x, xi, delta_A.name, val)
        return SymbolRatio(val, q, lens.trajectory.entry, lens.out, lens.trajectory)

    def full_principal_symbol(self, x, xi, k: int = 1, time_orientation: Optional[str] = None) -> FullSymbol:
        """Amplitude ``sign * 2i (-1)^k exp(i int A_bg) |xi_n^0|^1/2 |xi_n^k|^1/2``.

        ``sign`` is ``+1`` for past pointing input covectors.
        """
        if k < 1:
            raise ValueError("the full symbol is defined for k >= 1; use phase_ratio for k = 0")
        lens = self.trace(x, xi, k)
        start = lens.trajectory.entry
        if time_orientation is not None and time_orientation != start.time_orientation:
            raise ValueError(f"covector is {start.time_orientation} pointing, not {time_orientation}")
        leg0 = lens.trajectory.legs[0]
        n = self.metric.dim
        nu0, _ = boundary_normal(self.domain, self.metric, leg0.y[0, :n])
        nuk, _ = boundary_normal(self.domain, self.metric, lens.out.x, eps=max(self.options.eps_bd, 1e-9))
        xin0 = abs(float(leg0.y[0, n:] @ nu0))
        xink = abs(float(lens.trajectory.exit_covector @ nuk))
        bg = self.scenario.background
        phase = 0.0 if bg is None else self.line_integral(lens, bg)
        sign = 1 if start.time_orientation == "past" else -1
        amp = sign * 2j * (-1) ** k * np.exp(1j * phase) * np.sqrt(xin0) * np.sqrt(xink)
        self._log("full_symbol", x, xi, "background", complex(amp))
        return FullSymbol(complex(amp), sign, start.time_orientation, k, xin0, xink, phase, start, lens.out)

    def first_variation_metric(self, h: Field, x, xi) -> FirstVariation:
        """``I = int h^{jk} xi_j xi_k ds`` along the ray (indices raised by g)."""
        self._check_interior(h)
        lens = self.trace(x, xi)
        val = self.metric_variation(lens, h)
        self._log("first_variation", x, xi, h.name, val)
        return FirstVariation(val, self.eps_detect)

    def wavefront_flag(self, h: Field, x, xi) -> bool:
        """Whether the exit covector lies in the wavefront set of the linearized response."""
        self._check_interior(h)
        lens = self.trace(x, xi)
        b = h.support
        if float(np.min(lens.trajectory.distance_to(b.center[None, :]))) >= b.radius:
            return False
        return self.first_variation_metric(h, x, xi).detected

    def export_log(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.log:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
