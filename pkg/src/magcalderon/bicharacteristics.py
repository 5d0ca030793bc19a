"""Null bicharacteristic tracing, boundary lifts and the lens relation.

The flow is Hamilton's equations for ``p(x, xi) = g^{jk}(x) xi_j xi_k`` with a
sign ``o`` selecting the direction of the parameter::

    dx/ds  =  o * 2 g^{-1}(x) xi
    dxi/ds = -o * d_x p(x, xi)

Steps use the Dormand-Prince 5(4) pair with its quartic dense output.  After
every accepted step the time component of ``xi`` is moved to the nearest root
of ``p = 0``.  Boundary crossings are located on the dense output.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize
from scipy.integrate import RK45
from scipy.spatial import cKDTree

from .geometry import (
    EPS_BD,
    Domain,
    GeometryError,
    MetricField,
    boundary_normal,
    lorentz_cylinder,
)

__all__ = [
    "TraceOptions",
    "TracingError",
    "GlancingError",
    "TrappingError",
    "BoundaryCovector",
    "Leg",
    "Bicharacteristic",
    "LensResult",
    "classify_and_lift",
    "integrate_null",
    "lens_relation",
    "geodesic_through",
    "project_null",
    "EPS_NULL",
    "EPS_GLANCE",
]

EPS_NULL = 1e-9
EPS_GLANCE = 1e-6

# Dormand-Prince tableau and dense output matrix as shipped with scipy
_A, _B, _C, _E, _P = RK45.A, RK45.B, RK45.C, RK45.E, RK45.P
_NSTAGES = RK45.n_stages


class TracingError(GeometryError):
    pass


class GlancingError(TracingError):
    pass


class TrappingError(TracingError):
    pass


@dataclass(frozen=True)
class TraceOptions:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step_length: float = 0.1  # Euclidean length of x travelled per step
    first_step_length: float = 1e-3
    max_steps: int = 20000
    eps_glance: float = EPS_GLANCE
    eps_bd: float = EPS_BD
    eps_null: float = EPS_NULL
    root_tol: float = 1e-12


DEFAULT_OPTIONS = TraceOptions()


# ---------------------------------------------------------------------------
# boundary covectors


@dataclass
class BoundaryCovector:
    """A point of the boundary cotangent bundle.

    ``xi`` is stored as the canonical ambient extension, the one that
    annihilates the unit normal, so ``xi`` and ``xi + c * nu_flat`` project to
    the same boundary covector.
    """

    x: np.ndarray
    xi: np.ndarray
    classification: str
    time_orientation: str

    def frame_coords(self, metric: MetricField, domain: Domain) -> np.ndarray:
        """Components of ``xi`` in a g-orthonormal frame of the boundary."""
        return self.xi @ boundary_frame(metric, domain, self.x)

    def as_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "xi": self.xi.tolist(),
            "classification": self.classification,
            "time_orientation": self.time_orientation,
        }


def boundary_frame(metric: MetricField, domain: Domain, x) -> np.ndarray:
    """Columns form a g-orthonormal basis of the tangent space of the boundary.

    The first column is the timelike one.
    """
    x = np.asarray(x, float)
    nu, _ = boundary_normal(domain, metric, x, eps=1e-6)
    g = metric.eval(x)
    n = x.size
    cand = list(np.eye(n))
    basis = []
    for e in cand:
        v = e - (e @ g @ nu) * nu
        for b in basis:
            v = v - (v @ g @ b) / (b @ g @ b) * b
        nrm = v @ g @ v
        if abs(nrm) > 1e-8:
            basis.append(v / np.sqrt(abs(nrm)))
        if len(basis) == n - 1:
            break
    basis.sort(key=lambda b: b @ g @ b)
    return np.column_stack(basis)


def _split(metric, domain, x, xi, eps_bd):
    nu, nu_flat = boundary_normal(domain, metric, x, eps=eps_bd)
    xi = np.asarray(xi, float)
    xi_t = xi - (xi @ nu) * nu_flat
    return xi_t, nu, nu_flat


def _orientation(metric, x, xi_t) -> str:
    v = metric.inverse(x) @ xi_t
    return "future" if v[0] > 0 else "past"


def classify_and_lift(metric: MetricField, x, xi, domain: Optional[Domain] = None, eps_glance: float = EPS_GLANCE, eps_bd: float = EPS_BD):
    """Classify a boundary covector and lift it to the light cone.

    Parameters
    ----------
    metric : MetricField
    x : array_like
        Boundary point.
    xi : array_like
        Ambient covector; only its tangential part is used.

    Returns
    -------
    classification : {"hyperbolic", "glancing", "elliptic"}
    xi_in, xi_out : ndarray or None
        Null covectors with tangential part ``xi'``; ``xi_in(nu) < 0``.
        ``None`` unless the covector is hyperbolic.
    """
    domain = domain or lorentz_cylinder(metric.dim)
    x = np.asarray(x, float)
    xi_t, nu, nu_flat = _split(metric, domain, x, xi, eps_bd)
    scale = float(xi_t @ xi_t)
    if scale == 0.0:
        raise ValueError("boundary covector must be nonzero")
    p_t = float(xi_t @ metric.inverse(x) @ xi_t)
    disc = -p_t / scale
    if disc > eps_glance:
        cls = "hyperbolic"
    elif disc < -eps_glance:
        cls = "elliptic"
    else:
        cls = "glancing"
    if cls != "hyperbolic":
        return cls, None, None
    s = np.sqrt(-p_t)
    return cls, xi_t - s * nu_flat, xi_t + s * nu_flat


def boundary_covector(metric: MetricField, domain: Domain, x, xi, eps_glance=EPS_GLANCE, eps_bd=EPS_BD) -> BoundaryCovector:
    x = np.asarray(x, float)
    xi_t, _, _ = _split(metric, domain, x, xi, eps_bd)
    cls, _, _ = classify_and_lift(metric, x, xi_t, domain, eps_glance, eps_bd)
    return BoundaryCovector(x.copy(), xi_t, cls, _orientation(metric, x, xi_t))


# ---------------------------------------------------------------------------
# integration


def project_null(metric: MetricField, x, xi) -> np.ndarray:
    """Move ``xi_0`` to the nearest root of ``p(x, xi) = 0``."""
    gi = metric.inverse(x)
    a = gi[0, 0]
    b = gi[0, 1:] @ xi[1:]
    c = xi[1:] @ gi[1:, 1:] @ xi[1:]
    disc = b * b - a * c
    if disc < 0 or a == 0:
        return xi
    sq = np.sqrt(disc)
    r1, r2 = (-b + sq) / a, (-b - sq) / a
    out = xi.copy()
    out[0] = r1 if abs(r1 - xi[0]) <= abs(r2 - xi[0]) else r2
    return out


def _make_rhs(metric: MetricField, o: float):
    n = metric.dim

    def rhs(y):
        x, xi = y[:n], y[n:]
        gi = np.linalg.inv(metric.eval(x))
        v = gi @ xi
        D = metric.deriv(x)
        dpx = -np.einsum("j,ljk,k->l", v, D, v)
        return np.concatenate([2.0 * o * v, -o * dpx])

    return rhs


def _dopri_step(rhs, y, f, h):
    K = np.empty((_NSTAGES + 1, y.size))
    K[0] = f
    for s in range(1, _NSTAGES):
        dy = h * (K[:s].T @ _A[s, :s])
        K[s] = rhs(y + dy)
    y_new = y + h * (K[:-1].T @ _B)
    K[-1] = rhs(y_new)
    err = h * (K.T @ _E)
    return y_new, K, err


def _powers(theta):
    theta = np.atleast_1d(np.asarray(theta, float))
    return np.stack([theta, theta**2, theta**3, theta**4], axis=-1)


@dataclass
class Leg:
    """One smooth piece of a trajectory with dense output.

    ``sigma`` has shape ``(m + 1,)``, ``y`` shape ``(m + 1, 2n)`` (accepted
    states after projection) and ``Q`` shape ``(m, 2n, 4)``.
    """

    sigma: np.ndarray
    y: np.ndarray
    Q: np.ndarray
    orientation: float

    @property
    def dim(self) -> int:
        return self.y.shape[1] // 2

    def state(self, s) -> np.ndarray:
        s = np.asarray(s, float)
        flat = np.atleast_1d(s)
        m = self.Q.shape[0]
        idx = np.clip(np.searchsorted(self.sigma, flat, side="right") - 1, 0, m - 1)
        h = self.sigma[idx + 1] - self.sigma[idx]
        theta = np.where(h > 0, (flat - self.sigma[idx]) / np.where(h > 0, h, 1.0), 0.0)
        pw = _powers(theta)
        y = self.y[idx] + h[:, None] * np.einsum("mjp,mp->mj", self.Q[idx], pw)
        return y.reshape(s.shape + (self.y.shape[1],))

    def velocity(self, metric: MetricField, s) -> np.ndarray:
        y = self.state(s)
        n = self.dim
        return 2.0 * self.orientation * np.einsum("...jk,...k->...j", metric.inverse(y[..., :n]), y[..., n:])

    def dense_points(self, max_gap: float) -> tuple[np.ndarray, np.ndarray]:
        """Parameters and points with consecutive spacing below ``max_gap``."""
        n = self.dim
        sig = [self.sigma[:1]]
        for i in range(self.Q.shape[0]):
            seg = np.linalg.norm(self.y[i + 1, :n] - self.y[i, :n])
            k = max(1, int(np.ceil(seg / max_gap)) + 1)
            sig.append(np.linspace(self.sigma[i], self.sigma[i + 1], k + 1)[1:])
        sig = np.concatenate(sig)
        return sig, self.state(sig)[:, :n]


@dataclass
class Bicharacteristic:
    legs: list
    entry: Optional[BoundaryCovector]
    exit: Optional[BoundaryCovector]
    reflection_count: int
    orientation: float
    null_residual: float
    exit_covector: Optional[np.ndarray] = None
    _trees: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def s(self) -> np.ndarray:
        return np.concatenate([self.legs[0].sigma] + [L.sigma[1:] for L in self.legs[1:]])

    @property
    def x(self) -> np.ndarray:
        n = self.legs[0].dim
        return np.concatenate([self.legs[0].y[:, :n]] + [L.y[1:, :n] for L in self.legs[1:]])

    @property
    def xi(self) -> np.ndarray:
        n = self.legs[0].dim
        return np.concatenate([self.legs[0].y[:, n:]] + [L.y[1:, n:] for L in self.legs[1:]])

    @property
    def sigma_range(self) -> tuple[float, float]:
        return float(self.legs[0].sigma[0]), float(self.legs[-1].sigma[-1])

    def state(self, s) -> np.ndarray:
        """Dense state ``(x, xi)`` at parameters ``s`` (right-continuous at reflections)."""
        s = np.asarray(s, float)
        flat = np.atleast_1d(s)
        out = np.empty((flat.size, self.legs[0].y.shape[1]))
        starts = np.array([L.sigma[0] for L in self.legs[1:]])
        which = np.searchsorted(starts, flat, side="right")
        for j, L in enumerate(self.legs):
            sel = which == j
            if np.any(sel):
                out[sel] = L.state(flat[sel])
        return out.reshape(s.shape + (out.shape[-1],))

    def point_cloud(self, max_gap: float = 0.005) -> np.ndarray:
        return np.concatenate([L.dense_points(max_gap)[1] for L in self.legs])

    def distance_to(self, points, max_gap: float = 0.005) -> np.ndarray:
        """Euclidean distance from each point to the (densely sampled) curve.

        Sampling only overestimates the true distance, by at most ``max_gap``.
        """
        tree = self._trees.get(max_gap)
        if tree is None:
            tree = self._trees.setdefault(max_gap, cKDTree(self.point_cloud(max_gap)))
        d, _ = tree.query(np.atleast_2d(points))
        return d

    def reparametrized(self, factor: float) -> "Bicharacteristic":
        """Same curve with parameter ``s -> factor * s`` (velocities scale by 1/factor).

        Implemented by scaling ``xi`` by ``1 / factor``, which is exactly the
        Hamiltonian reparametrization of a null curve.
        """
        legs = []
        for L in self.legs:
            n = L.dim
            y = L.y.copy()
            y[:, n:] /= factor
            Q = L.Q.copy()
            Q[:, :n, :] /= factor
            Q[:, n:, :] /= factor**2
            legs.append(Leg(L.sigma * factor, y, Q, L.orientation))
        return Bicharacteristic(legs, self.entry, self.exit, self.reflection_count, self.orientation, self.null_residual, self.exit_covector)


@dataclass
class LensResult:
    out: BoundaryCovector
    travel_parameter: float
    transversal: bool
    trajectory: Bicharacteristic

    @property
    def travel_time(self) -> float:
        return float(self.out.x[0] - self.trajectory.legs[0].y[0, 0])


def _integrate_leg(metric, domain, x0, xi0, o, sigma0, opts: TraceOptions) -> tuple[Leg, tuple]:
    n = metric.dim
    rhs = _make_rhs(metric, o)
    y = np.concatenate([np.asarray(x0, float), np.asarray(xi0, float)])
    f = rhs(y)
    h = opts.first_step_length / max(np.linalg.norm(f[:n]), 1e-300)
    sig = [sigma0]
    ys = [y.copy()]
    Qs = []
    rho_prev = float(domain.rho(y[:n]))
    s_cur = sigma0
    for _ in range(opts.max_steps):
        h = min(h, opts.max_step_length / max(np.linalg.norm(f[:n]), 1e-300))
        y_new, K, err = _dopri_step(rhs, y, f, h)
        scale = opts.atol + opts.rtol * np.maximum(np.abs(y), np.abs(y_new))
        en = float(np.sqrt(np.mean((err / scale) ** 2)))
        if en > 1.0:
            h *= max(0.2, 0.9 * en ** -0.2)
            if h < 1e-14:
                raise TracingError("step size underflow")
            continue
        Q = K.T @ _P
        rho_new = float(domain.rho(y_new[:n]))
        if rho_new > 0.0:
            thetas = np.linspace(0.0, 1.0, 17)[1:]
            xs = y[:n] + h * (Q[:n] @ _powers(thetas).T).T
            rhos = domain.rho(xs)
            j = int(np.argmax(rhos > 0.0))
            lo_rho = rho_prev if j == 0 else rhos[j - 1]
            lo = 0.0 if j == 0 else thetas[j - 1]
            if lo_rho >= 0.0:
                # step grazes outward immediately after a boundary start; shorten
                h *= 0.25
                if h < 1e-14:
                    raise TracingError("trajectory leaves the domain without a root bracket")
                continue

            def rho_theta(th):
                return float(domain.rho(y[:n] + h * (Q[:n] @ _powers(th)[0])))

            th = optimize.brentq(rho_theta, lo, thetas[j], xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
            y_exit = y + h * (Q @ _powers(th)[0])
            if abs(float(domain.rho(y_exit[:n]))) > opts.root_tol:
                # one Newton polish on x along the velocity
                v = 2.0 * o * metric.inverse(y_exit[:n]) @ y_exit[n:]
                dr = float(domain.drho(y_exit[:n]) @ v)
                th = th - float(domain.rho(y_exit[:n])) / (dr * h)
                y_exit = y + h * (Q @ _powers(th)[0])
            y_exit[n:] = project_null(metric, y_exit[:n], y_exit[n:])
            Qs.append(Q * th ** np.arange(4))
            sig.append(s_cur + th * h)
            ys.append(y_exit)
            leg = Leg(np.array(sig), np.array(ys), np.array(Qs), o)
            return leg, (y_exit[:n].copy(), y_exit[n:].copy())
        xi_proj = project_null(metric, y_new[:n], y_new[n:])
        if np.max(np.abs(xi_proj - y_new[n:])) > 1e-14 * max(1.0, np.max(np.abs(xi_proj))):
            y_new = np.concatenate([y_new[:n], xi_proj])
            f_new = rhs(y_new)
        else:
            y_new[n:] = xi_proj
            f_new = K[-1]
        Qs.append(Q)
        s_cur = s_cur + h
        sig.append(s_cur)
        ys.append(y_new.copy())
        y, f = y_new, f_new
        rho_prev = rho_new
        h *= 10.0 if en == 0 else min(10.0, 0.9 * en ** -0.2)
    raise TrappingError(f"no boundary exit after {opts.max_steps} steps")


def _null_residual(metric, legs) -> float:
    worst = 0.0
    for L in legs:
        n = L.dim
        x, xi = L.y[:, :n], L.y[:, n:]
        p = np.einsum("mj,mjk,mk->m", xi, metric.inverse(x), xi)
        worst = max(worst, float(np.max(np.abs(p))))
    return worst


def integrate_null(metric: MetricField, x, xi, orientation: float = 1.0, domain: Optional[Domain] = None, options: TraceOptions = DEFAULT_OPTIONS) -> Bicharacteristic:
    """Trace the null bicharacteristic from ``(x, xi)`` to the boundary.

    Parameters
    ----------
    orientation : {+1, -1}
        Sign of the Hamiltonian parameter.
    """
    domain = domain or lorentz_cylinder(metric.dim)
    x = np.asarray(x, float)
    xi = np.asarray(xi, float)
    o = 1.0 if orientation > 0 else -1.0
    p = float(xi @ metric.inverse(x) @ xi)
    if abs(p) > options.eps_null * max(1.0, float(xi @ xi)):
        raise TracingError(f"start covector is not null: p = {p:.3e}")
    rho = float(domain.rho(x))
    entry = None
    if abs(rho) <= options.eps_bd:
        v = 2.0 * o * metric.inverse(x) @ xi
        if float(domain.drho(x) @ v) >= 0.0:
            raise TracingError("boundary start must point into the domain")
        entry = boundary_covector(metric, domain, x, xi, options.eps_glance, options.eps_bd)
    elif rho > 0:
        raise TracingError("start point outside the domain")
    leg, (xe, xie) = _integrate_leg(metric, domain, x, project_null(metric, x, xi), o, 0.0, options)
    ex = boundary_covector(metric, domain, xe, xie, options.eps_glance, max(options.eps_bd, 1e-9))
    return Bicharacteristic([leg], entry, ex, 0, o, _null_residual(metric, [leg]), xie)


def lens_relation(metric: MetricField, x, xi, k: int = 0, domain: Optional[Domain] = None, direction: str = "future", options: TraceOptions = DEFAULT_OPTIONS) -> LensResult:
    """Lens relation and its powers.

    ``k = 0`` follows the null geodesic entering at ``(x, xi')`` to its exit,
    ``k >= 1`` reflects ``k`` times, keeping the tangential covector and
    re-lifting inward.  ``direction`` selects travel to the future (default)
    or the past; tracing a lens output with ``direction="past"`` inverts it.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    domain = domain or lorentz_cylinder(metric.dim)
    x = np.asarray(x, float)
    start = boundary_covector(metric, domain, x, xi, options.eps_glance, options.eps_bd)
    if start.classification != "hyperbolic":
        raise GlancingError(f"input covector is {start.classification}")
    same = (start.time_orientation == "future") == (direction == "future")
    o = 1.0 if same else -1.0
    legs = []
    bc = start
    sigma = 0.0
    xe = xie = None
    for j in range(k + 1):
        cls, xi_in, xi_out = classify_and_lift(metric, bc.x, bc.xi, domain, options.eps_glance, options.eps_bd)
        if cls != "hyperbolic":
            raise GlancingError(f"reflection {j} is {cls}")
        lift = xi_in if o > 0 else xi_out
        leg, (xe, xie) = _integrate_leg(metric, domain, bc.x, lift, o, sigma, options)
        legs.append(leg)
        sigma = float(leg.sigma[-1])
        bc = boundary_covector(metric, domain, xe, xie, options.eps_glance, max(options.eps_bd, 1e-9))
        if j < k and bc.classification != "hyperbolic":
            raise GlancingError(f"intermediate exit {j} is {bc.classification}")
    traj = Bicharacteristic(legs, start, bc, k, o, _null_residual(metric, legs), xie)
    return LensResult(bc, sigma, bc.classification == "hyperbolic", traj)


def geodesic_through(metric: MetricField, x, v, domain: Optional[Domain] = None, options: TraceOptions = DEFAULT_OPTIONS):
    """Full boundary-to-boundary null geodesic through an interior point.

    Returns
    -------
    entry, exit : BoundaryCovector
    trajectory : Bicharacteristic
        Traced from ``entry`` in the direction of ``v``.
    """
    domain = domain or lorentz_cylinder(metric.dim)
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    g = metric.eval(x)
    if abs(v @ g @ v) > options.eps_null * max(1.0, float(v @ v)):
        raise TracingError("v is not lightlike")
    if float(domain.rho(x)) >= -options.eps_bd:
        raise TracingError("x must be interior")
    xi = g @ v
    back = integrate_null(metric, x, xi, -1.0, domain, options)
    xe, xie = back.legs[0].y[-1, :metric.dim], back.exit_covector
    fwd = integrate_null(metric, xe, xie, 1.0, domain, options)
    if fwd.exit.classification == "glancing" or fwd.entry.classification == "glancing":
        raise GlancingError("glancing endpoint")
    return fwd.entry, fwd.exit, fwd
