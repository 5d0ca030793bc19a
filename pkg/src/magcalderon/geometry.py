"""Domains, metric fields, tensor fields and pointwise metric calculus.

Lorentzian scenarios live on the cylinder ``[0, T] x B`` with ``B`` the closed
unit ball of ``R^(n-1)``; coordinates are ``x = (t, x_1, ..., x_{n-1})``.
Riemannian scenarios live on the unit box ``[0, 1]^n``.  Every field accepts
batched points of shape ``(..., n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "GeometryError",
    "DegenerateMetricError",
    "NotOnBoundaryError",
    "PreconditionError",
    "Ball",
    "Domain",
    "lorentz_cylinder",
    "riemann_box",
    "MetricField",
    "Field",
    "ScalarField",
    "OneFormField",
    "SymTensorField",
    "MetricPoint",
    "metric_calculus",
    "HamiltonianValue",
    "hamiltonian",
    "boundary_normal",
    "AdmissibilityReport",
    "admissibility_check",
    "christoffel",
    "EPS_BD",
    "EPS_II",
    "H_METRIC",
]

EPS_BD = 1e-9
EPS_II = 1e-8
H_METRIC = 1e-5


class GeometryError(Exception):
    """Base class for geometry failures."""


class DegenerateMetricError(GeometryError):
    pass


class NotOnBoundaryError(GeometryError):
    pass


class PreconditionError(GeometryError, ValueError):
    pass


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball in coordinate space."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "radius", float(self.radius))

    def contains(self, X) -> np.ndarray:
        d = np.asarray(X, dtype=float) - self.center
        return np.einsum("...i,...i->...", d, d) <= self.radius**2

    def distance(self, X) -> np.ndarray:
        """Euclidean distance from ``X`` to the center."""
        d = np.asarray(X, dtype=float) - self.center
        return np.sqrt(np.einsum("...i,...i->...", d, d))


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class Domain:
    """A coordinate domain with a boundary defining function ``rho``.

    ``kind`` is ``"lorentz_cylinder"`` (``rho = |x_spatial|^2 - 1``) or
    ``"riemann_box"`` (``rho = max_i |x_i - 1/2| - 1/2``, only piecewise
    smooth; faces are handled explicitly).
    """

    kind: str
    dim: int = 3
    time_window: tuple[float, float] = (0.0, 5.0)

    def rho(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.kind == "lorentz_cylinder":
            xs = X[..., 1:]
            return np.einsum("...i,...i->...", xs, xs) - 1.0
        return np.max(np.abs(X - 0.5), axis=-1) - 0.5

    def drho(self, X) -> np.ndarray:
        """Differential of ``rho`` (a covector), shape ``(..., n)``."""
        X = np.asarray(X, dtype=float)
        if self.kind == "lorentz_cylinder":
            out = np.zeros_like(X)
            out[..., 1:] = 2.0 * X[..., 1:]
            return out
        out = np.zeros_like(X)
        dev = X - 0.5
        idx = np.argmax(np.abs(dev), axis=-1)
        np.put_along_axis(out, idx[..., None], np.sign(np.take_along_axis(dev, idx[..., None], -1)), -1)
        return out

    def center(self) -> np.ndarray:
        if self.kind == "lorentz_cylinder":
            c = np.zeros(self.dim)
            c[0] = 0.5 * (self.time_window[0] + self.time_window[1])
            return c
        return np.full(self.dim, 0.5)

    def is_interior_ball(self, ball: Ball, margin: float = 0.0) -> bool:
        """True when ``ball`` sits strictly inside the domain (and time window)."""
        c = ball.center
        if self.kind == "lorentz_cylinder":
            t0, t1 = self.time_window
            inside_t = t0 + margin < c[0] - ball.radius and c[0] + ball.radius < t1 - margin
            return bool(inside_t and float(np.linalg.norm(c[1:])) + ball.radius < 1.0 - margin)
        return bool(np.all(c - ball.radius > margin) and np.all(c + ball.radius < 1.0 - margin))


def lorentz_cylinder(dim: int = 3, T: float = 5.0) -> Domain:
    return Domain("lorentz_cylinder", dim, (0.0, float(T)))


def riemann_box(dim: int = 3) -> Domain:
    return Domain("riemann_box", dim, (0.0, 0.0))


# ---------------------------------------------------------------------------
# metrics


class MetricField:
    """Smooth symmetric matrix field ``x -> g(x)``.

    Parameters
    ----------
    eval_fn : callable
        Maps points ``(..., n)`` to matrices ``(..., n, n)``.
    signature : {"lorentzian", "riemannian"}
    deriv_fn : callable, optional
        Closed-form ``d_l g_jk`` returned as ``(..., n, n, n)`` indexed
        ``[..., l, j, k]``.  Central differences with step ``h`` otherwise.
    """

    def __init__(
        self,
        eval_fn: Callable[[np.ndarray], np.ndarray],
        signature: str,
        name: str = "metric",
        deriv_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        dim: int = 3,
        h: float = H_METRIC,
    ):
        if signature not in ("lorentzian", "riemannian"):
            raise ValueError(f"unknown signature {signature!r}")
        self._eval = eval_fn
        self._deriv = deriv_fn
        self.signature = signature
        self.name = name
        self.dim = dim
        self.h = h

    def __repr__(self):
        return f"MetricField({self.name!r}, {self.signature})"

    @property
    def has_closed_form_derivative(self) -> bool:
        return self._deriv is not None

    def __call__(self, X) -> np.ndarray:
        return self.eval(X)

    def eval(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        G = np.asarray(self._eval(X), dtype=float)
        G = np.broadcast_to(G, X.shape[:-1] + (self.dim, self.dim))
        return 0.5 * (G + np.swapaxes(G, -1, -2))

    def inverse(self, X) -> np.ndarray:
        return np.linalg.inv(self.eval(X))

    def deriv(self, X, h: Optional[float] = None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self._deriv is not None and h is None:
            D = np.asarray(self._deriv(X), dtype=float)
            D = np.broadcast_to(D, X.shape[:-1] + (self.dim,) * 3)
            return 0.5 * (D + np.swapaxes(D, -1, -2))
        return self.fd_deriv(X, self.h if h is None else h)

    def fd_deriv(self, X, h: float) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[:-1] + (self.dim,) * 3)
        for l in range(self.dim):
            e = np.zeros(self.dim)
            e[l] = h
            out[..., l, :, :] = (self.eval(X + e) - self.eval(X - e)) / (2.0 * h)
        return out

    def inverse_deriv(self, X) -> np.ndarray:
        """``d_l g^{jk} = -(g^-1 d_l g g^-1)^{jk}``."""
        gi = self.inverse(X)
        D = self.deriv(X)
        return -np.einsum("...ja,...lab,...bk->...ljk", gi, D, gi)

    def scaled(self, c: float, name: Optional[str] = None) -> "MetricField":
        """Constant multiple ``c * g`` (closed-form derivative preserved)."""
        deriv = None
        if self._deriv is not None:
            deriv = lambda X: c * self.deriv(X)  # noqa: E731
        return MetricField(
            lambda X: c * self.eval(X), self.signature, name or f"{c}*{self.name}", deriv, self.dim, self.h
        )


# ---------------------------------------------------------------------------
# tensor fields


class Field:
    """Callable tensor field, exactly zero outside an optional support ball."""

    rank_shape: tuple = ()
    kind = "field"

    def __init__(self, fn: Callable, support: Optional[Ball] = None, dim: int = 3, smoothness: str = "C^inf", name: str = ""):
        self._fn = fn
        self.support = support
        self.dim = dim
        self.smoothness = smoothness
        self.name = name or self.kind

    def _values(self, X) -> np.ndarray:
        return np.asarray(self._fn(X), dtype=float)

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        shape = X.shape[:-1] + self.value_shape
        if self.support is None:
            return np.broadcast_to(self._values(X), shape).copy()
        out = np.zeros(shape)
        inside = self.support.contains(X)
        if np.any(inside):
            out[inside] = np.broadcast_to(self._values(X[inside]), (int(inside.sum()),) + self.value_shape)
        return out

    @property
    def value_shape(self) -> tuple:
        return tuple(self.dim for _ in self.rank_shape)


class ScalarField(Field):
    rank_shape = ()
    kind = "scalar"


class OneFormField(Field):
    rank_shape = (1,)
    kind = "one_form"


class SymTensorField(Field):
    rank_shape = (1, 1)
    kind = "sym_tensor"

    def __call__(self, X) -> np.ndarray:
        out = super().__call__(X)
        return 0.5 * (out + np.swapaxes(out, -1, -2))


# ---------------------------------------------------------------------------
# pointwise calculus


@dataclass
class MetricPoint:
    g: np.ndarray
    ginv: np.ndarray
    sqrt_det: float
    christoffel: np.ndarray  # [i, j, k] = Gamma^i_{jk}


def christoffel(metric: MetricField, X) -> np.ndarray:
    """Christoffel symbols ``Gamma^i_{jk}`` with shape ``(..., n, n, n)``."""
    X = np.asarray(X, dtype=float)
    gi = metric.inverse(X)
    D = metric.deriv(X)  # [l, j, k] = d_l g_jk
    # Gamma_{l jk} = 1/2 (d_j g_lk + d_k g_lj - d_l g_jk)
    low = 0.5 * (np.einsum("...jlk->...ljk", D) + np.einsum("...klj->...ljk", D) - D)
    return np.einsum("...il,...ljk->...ijk", gi, low)


def metric_calculus(metric: MetricField, x, cond_limit: float = 1e12) -> MetricPoint:
    """Metric, inverse, volume density and Christoffel symbols at one point."""
    x = np.asarray(x, dtype=float)
    g = metric.eval(x)
    det = np.linalg.det(g)
    if not np.isfinite(det) or abs(det) < 1e-300 or np.linalg.cond(g) > cond_limit:
        raise DegenerateMetricError(f"metric {metric.name} is degenerate at {x}")
    gi = np.linalg.inv(g)
    return MetricPoint(g, gi, float(np.sqrt(abs(det))), christoffel(metric, x))


@dataclass
class HamiltonianValue:
    p: np.ndarray
    dp_dx: np.ndarray
    dp_dxi: np.ndarray


def hamiltonian(metric: MetricField, x, xi) -> HamiltonianValue:
    """``p = g^{jk} xi_j xi_k`` and its partial derivatives (batched)."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    gi = metric.inverse(x)
    gixi = np.einsum("...jk,...k->...j", gi, xi)
    p = np.einsum("...j,...j->...", xi, gixi)
    dgi = metric.inverse_deriv(x)
    dp_dx = np.einsum("...ljk,...j,...k->...l", dgi, xi, xi)
    return HamiltonianValue(p, dp_dx, 2.0 * gixi)


def boundary_normal(domain: Domain, metric: MetricField, x, eps: float = EPS_BD):
    """Unit outward normal ``nu`` and its covector ``nu_flat = g(nu, .)``."""
    x = np.asarray(x, dtype=float)
    rho = float(domain.rho(x))
    if abs(rho) > eps:
        raise NotOnBoundaryError(f"|rho(x)| = {abs(rho):.3e} > {eps:.1e}")
    if domain.kind == "riemann_box":
        on_face = (np.abs(x) <= eps) | (np.abs(x - 1.0) <= eps)
        if on_face.sum() != 1:
            raise NotOnBoundaryError("normal undefined on edges and corners of the box")
    dr = domain.drho(x)
    gi = metric.inverse(x)
    norm2 = float(dr @ gi @ dr)
    if norm2 <= 0:
        raise PreconditionError("boundary is not timelike: d rho is not spacelike")
    nu_flat = dr / np.sqrt(norm2)
    return gi @ nu_flat, nu_flat


# ---------------------------------------------------------------------------
# admissibility


@dataclass
class AdmissibilityReport:
    timelike_boundary: bool
    null_convex: bool
    min_II: float
    samples: int

    @property
    def admissible(self) -> bool:
        return self.timelike_boundary and self.null_convex

    def as_dict(self) -> dict:
        return {
            "timelike_boundary": self.timelike_boundary,
            "null_convex": self.null_convex,
            "min_II": self.min_II,
            "samples": self.samples,
            "admissible": self.admissible,
        }


def _unit_normal_field(domain: Domain, metric: MetricField, X):
    dr = domain.drho(X)
    gi = metric.inverse(X)
    v = np.einsum("...jk,...k->...j", gi, dr)
    return v / np.sqrt(np.einsum("...j,...j->...", dr, v))[..., None]


def second_fundamental_form(domain: Domain, metric: MetricField, x, V, h: float = 1e-5) -> float:
    """``II(V, V) = g(nabla_V nu, V)`` with ``nu`` extended by the same formula."""
    x = np.asarray(x, dtype=float)
    V = np.asarray(V, dtype=float)
    n = x.size
    dN = np.empty((n, n))  # [j, i] = d_j nu^i
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        dN[j] = (_unit_normal_field(domain, metric, x + e) - _unit_normal_field(domain, metric, x - e)) / (2 * h)
    nu = _unit_normal_field(domain, metric, x)
    gam = christoffel(metric, x)
    cov = V @ dN + np.einsum("ijk,j,k->i", gam, V, nu)
    return float(cov @ metric.eval(x) @ V)


def admissibility_check(domain: Domain, metric: MetricField, sample_count: int = 64, seed: int = 0, eps_II: float = EPS_II) -> AdmissibilityReport:
    """Sample boundary points and boundary null vectors; report ``min II``.

    Inadmissible geometry is reported, never raised.  Only the Euclidean
    (Riemannian) signature is a precondition failure.
    """
    if domain.kind != "lorentz_cylinder" or metric.signature != "lorentzian":
        raise PreconditionError("admissibility is defined for Lorentzian cylinder scenarios")
    rng = np.random.default_rng(seed)
    n = domain.dim
    t0, t1 = domain.time_window
    timelike = True
    min_II = np.inf
    for _ in range(sample_count):
        w = rng.normal(size=n - 1)
        radial = w / np.linalg.norm(w)
        x = np.concatenate([[rng.uniform(t0, t1)], radial])
        # a random unit spatial vector tangent to the sphere
        z = rng.normal(size=n - 1)
        z -= (z @ radial) * radial
        z /= np.linalg.norm(z)
        et = np.zeros(n)
        et[0] = 1.0
        ez = np.concatenate([[0.0], z])
        g = metric.eval(x)
        a, b, c = et @ g @ et, et @ g @ ez, ez @ g @ ez
        disc = b * b - a * c
        if disc <= 0 or a * c - b * b >= 0:
            timelike = False
            continue
        for sgn in (1.0, -1.0):
            lam = (-b + sgn * np.sqrt(disc)) / c
            V = et + lam * ez
            min_II = min(min_II, second_fundamental_form(domain, metric, x, V))
    if not np.isfinite(min_II):
        min_II = float("nan")
    return AdmissibilityReport(timelike, bool(timelike and min_II >= -eps_II), float(min_II), sample_count)
