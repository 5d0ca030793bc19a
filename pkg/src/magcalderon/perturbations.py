"""Compactly supported perturbation fields and seeded generic samplers.

Most fields are *separable*: a radial bump times a constant tensor,
``a * psi(|x - c| / r) * T``.  Separable fields expose ``separable`` so that
norms and line integrals can be factorized; everything else is evaluated
pointwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Optional

import numpy as np
from scipy.spatial import cKDTree

from . import bump
from .geometry import Ball, Domain, MetricField, OneFormField, PreconditionError, ScalarField, SymTensorField, lorentz_cylinder

__all__ = [
    "BumpProfile",
    "Separable",
    "LocalizedOneForm",
    "ExactForm",
    "AlignedOneForm",
    "LocalizedSymTensor",
    "make_aligned_one_form",
    "make_exact_form",
    "make_sym_tensor",
    "make_bump_scalar",
    "ck_norm",
    "GenericSampler",
    "sample_generic",
    "SYM_MODES",
]

SYM_MODES = ("rank_one", "matrix", "conformal", "semi_geodesic")


class BumpProfile:
    """The profile ``psi`` and its normalized one dimensional rescaling."""

    @staticmethod
    def profile(r):
        return bump.profile(r)

    @staticmethod
    def mass() -> float:
        return bump.one_d_mass()

    @staticmethod
    def normalized(tau, eps: float):
        """``psi(tau / eps) / (eps * mass)``; integrates to one over the line."""
        return bump.profile(np.asarray(tau, float) / eps) / (eps * bump.one_d_mass())


@dataclass(frozen=True)
class Separable:
    """``field(x) = psi(|x - center| / radius) * coeff``."""

    center: np.ndarray
    radius: float
    coeff: np.ndarray


def _check_interior(domain: Optional[Domain], ball: Ball):
    if domain is None:
        return
    if not domain.is_interior_ball(ball):
        raise PreconditionError("perturbation support touches the boundary")


class _SeparableMixin:
    separable: Separable

    def _sep_values(self, X):
        s = self.separable
        return bump.radial_bump(X, s.center, s.radius)[(...,) + (None,) * s.coeff.ndim] * s.coeff


class LocalizedOneForm(_SeparableMixin, OneFormField):
    """``a * psi(|x - x0| / r) * beta``."""

    def __init__(self, center, radius, beta, amplitude=1.0, name="localized-one-form"):
        center = np.asarray(center, float)
        self.beta = np.asarray(beta, float)
        self.amplitude = float(amplitude)
        self.separable = Separable(center, float(radius), self.amplitude * self.beta)
        super().__init__(self._sep_values, Ball(center, radius), center.size, name=name)

    def scaled(self, c: float) -> "LocalizedOneForm":
        return LocalizedOneForm(self.separable.center, self.separable.radius, self.beta, c * self.amplitude, self.name)


class ExactForm(OneFormField):
    """``d omega`` for ``omega = a * psi(|x - c| / r)``, in closed form."""

    def __init__(self, center, radius, amplitude=1.0, name="exact-form"):
        center = np.asarray(center, float)
        self.center, self.radius, self.amplitude = center, float(radius), float(amplitude)
        super().__init__(
            lambda X: self.amplitude * bump.radial_bump_gradient(X, self.center, self.radius),
            Ball(center, radius),
            center.size,
            name=name,
        )

    def potential(self, X) -> np.ndarray:
        return self.amplitude * bump.radial_bump(X, self.center, self.radius)

    def hessian(self, X) -> np.ndarray:
        return self.amplitude * bump.radial_bump_hessian(X, self.center, self.radius)


class LocalizedSymTensor(SymTensorField):
    """Symmetric two tensor supported in a ball; see :func:`make_sym_tensor`."""

    def __init__(self, fn, center, radius, amplitude, mode, separable: Optional[Separable], name=None):
        center = np.asarray(center, float)
        self.center, self.radius, self.amplitude, self.mode = center, float(radius), float(amplitude), mode
        self.separable = separable
        super().__init__(fn, Ball(center, radius), center.size, name=name or f"sym-{mode}")


def make_bump_scalar(center, radius, amplitude=1.0) -> ScalarField:
    center = np.asarray(center, float)
    f = ScalarField(lambda X: amplitude * bump.radial_bump(X, center, radius), Ball(center, radius), center.size, name="bump")
    f.separable = Separable(center, float(radius), np.asarray(float(amplitude)))
    return f


def make_exact_form(center, radius, amplitude=1.0, domain: Optional[Domain] = None) -> ExactForm:
    """Exact one form ``d omega`` of an interior bump ``omega``."""
    center = np.asarray(center, float)
    _check_interior(domain, Ball(center, radius))
    return ExactForm(center, radius, amplitude)


def make_sym_tensor(mode: str, center, radius, amplitude=1.0, beta=None, matrix=None, metric: Optional[MetricField] = None, name=None) -> LocalizedSymTensor:
    """Localized symmetric two tensor.

    Modes
    -----
    rank_one
        ``a psi beta (x) beta``.
    matrix
        ``a psi M`` for a symmetric matrix ``M``.
    conformal
        ``f g`` with ``f = a psi``; needs ``metric``.
    semi_geodesic
        ``-a psi dt (x) dt``, i.e. ``g diag(f, 0, ..., 0)`` whenever
        ``g_00 = -1`` and ``g_0j = 0``.
    """
    center = np.asarray(center, float)
    n = center.size
    a = float(amplitude)
    if mode == "rank_one":
        if beta is None:
            raise ValueError("rank_one mode needs beta")
        b = np.asarray(beta, float)
        coeff = a * np.outer(b, b)
    elif mode == "matrix":
        if matrix is None:
            raise ValueError("matrix mode needs matrix")
        M = np.asarray(matrix, float)
        if M.shape != (n, n) or np.max(np.abs(M - M.T)) > 1e-12 * max(1.0, np.max(np.abs(M))):
            raise ValueError("matrix must be square and symmetric")
        coeff = a * 0.5 * (M + M.T)
    elif mode == "semi_geodesic":
        coeff = np.zeros((n, n))
        coeff[0, 0] = -a
    elif mode == "conformal":
        if metric is None:
            raise ValueError("conformal mode needs the metric")

        def fn(X):
            return (a * bump.radial_bump(X, center, radius))[..., None, None] * metric.eval(X)

        return LocalizedSymTensor(fn, center, radius, a, mode, None, name)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    sep = Separable(center, float(radius), coeff)

    def fn(X):
        return bump.radial_bump(X, center, radius)[..., None, None] * coeff

    return LocalizedSymTensor(fn, center, radius, a, mode, sep, name)


# ---------------------------------------------------------------------------
# aligned one forms


class AlignedOneForm(OneFormField):
    """One form whose pairing with the trajectory velocity is a prescribed bump.

    For ``x`` in a tube around ``gamma`` let ``s(x)`` be the nearest
    parameter and ``d(x)`` the distance.  Then::

        A'(x) = (1/C) * phi_eps(s(x) - s0) * chi(d(x) / r) * beta(s(x))

    with ``chi`` the profile rescaled to unit height and ``beta`` the
    Euclidean dual of the velocity, ``beta(s) = v(s) / |v(s)|^2``, so that
    ``A'(gamma'(s)) = phi_eps(s - s0) / C`` on the curve.
    """

    def __init__(self, leg, metric: MetricField, s0: float, eps: float, C: float, tube_radius: float, name="aligned-one-form"):
        self.leg, self.metric = leg, metric
        self.s0, self.eps, self.C, self.r = float(s0), float(eps), float(C), float(tube_radius)
        n = leg.dim
        lo, hi = s0 - eps, s0 + eps
        span = hi - lo
        self._grid = np.linspace(lo - 0.25 * span, hi + 0.25 * span, 801)
        pts = leg.state(self._grid)[:, :n]
        self._tree = cKDTree(pts)
        c = leg.state(s0)[:n]
        inner = leg.state(np.linspace(lo, hi, 401))[:, :n]
        R = float(np.max(np.linalg.norm(inner - c, axis=1))) + self.r
        super().__init__(self._values, Ball(c, R * (1 + 1e-9) + 1e-12), n, name=name)

    def project(self, X):
        """Nearest parameter and distance for points ``X`` of shape ``(m, n)``."""
        n = self.leg.dim
        X = np.atleast_2d(X)
        _, idx = self._tree.query(X)
        s = self._grid[idx].copy()
        for _ in range(30):
            y = self.leg.state(s)
            v = 2.0 * self.leg.orientation * np.einsum("mjk,mk->mj", self.metric.inverse(y[:, :n]), y[:, n:])
            dx = X - y[:, :n]
            step = np.einsum("mj,mj->m", dx, v) / np.einsum("mj,mj->m", v, v)
            s = np.clip(s + step, self._grid[0], self._grid[-1])
            if np.max(np.abs(step)) < 1e-15 * max(1.0, np.max(np.abs(s))):
                break
        y = self.leg.state(s)
        v = 2.0 * self.leg.orientation * np.einsum("mjk,mk->mj", self.metric.inverse(y[:, :n]), y[:, n:])
        return s, np.linalg.norm(X - y[:, :n], axis=1), v

    def _values(self, X):
        X = np.atleast_2d(X)
        s, d, v = self.project(X)
        w = BumpProfile.normalized(s - self.s0, self.eps) * (np.e * bump.profile(d / self.r)) / self.C
        return w[:, None] * v / np.einsum("mj,mj->m", v, v)[:, None]


def make_aligned_one_form(trajectory, t0: float, eps: float, C: float, tube_radius: float = 0.05, metric: Optional[MetricField] = None, domain: Optional[Domain] = None, U: Optional[Ball] = None) -> AlignedOneForm:
    """Aligned one form along a traced trajectory.

    Parameters
    ----------
    trajectory : Bicharacteristic
    t0, eps : float
        Center and half-width of the window in the trajectory parameter.
    C : float
        Scale; the line integral of the form along the trajectory is ``1/C``.
    tube_radius : float
        Transverse cutoff radius.
    metric : MetricField
        Metric the trajectory was traced in (needed for velocities).
    """
    if metric is None:
        raise ValueError("metric is required")
    domain = domain or lorentz_cylinder(metric.dim)
    leg = None
    for L in trajectory.legs:
        if L.sigma[0] < t0 - eps and t0 + eps < L.sigma[-1]:
            leg = L
    if leg is None:
        raise PreconditionError("window must lie inside a single leg of the trajectory")
    n = leg.dim
    pts = leg.state(np.linspace(t0 - eps, t0 + eps, 201))[:, :n]
    form = AlignedOneForm(leg, metric, t0, eps, C, tube_radius)
    if domain.kind == "lorentz_cylinder":
        spatial = np.linalg.norm(pts[:, 1:], axis=1)
        if np.max(spatial) + tube_radius >= 1.0:
            raise PreconditionError("tube exits the domain")
    if U is not None and np.max(U.distance(pts)) + tube_radius >= U.radius:
        raise PreconditionError("tube exits the prescribed open set")
    return form


# ---------------------------------------------------------------------------
# C^k norms


def _lattice(ball: Ball, points: int):
    axes = [np.linspace(c - ball.radius, c + ball.radius, points) for c in ball.center]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1), 2.0 * ball.radius / (points - 1)


def ck_norm(field, k: int = 2, points: int = 21) -> float:
    """Sup of all finite difference partials up to order ``k`` on a lattice.

    The lattice has ``points`` nodes per axis over the bounding box of the
    support ball (the center is a node when ``points`` is odd).
    """
    if k > 4 or k < 0:
        raise ValueError("k must be in 0..4")
    if field.support is None:
        raise ValueError("ck_norm needs a field with declared support")
    X, dx = _lattice(field.support, points)
    F = np.asarray(field(X), float)
    n = X.shape[-1]
    best = float(np.max(np.abs(F)))
    level = {(): F}
    for order in range(1, k + 1):
        nxt = {}
        for alpha, arr in level.items():
            start = alpha[-1] if alpha else 0
            for ax in range(start, n):
                key = alpha + (ax,)
                if key not in nxt:
                    nxt[key] = np.gradient(arr, dx, axis=ax, edge_order=2)
        level = nxt
        best = max(best, max(float(np.max(np.abs(a))) for a in level.values()))
    return best


@lru_cache(maxsize=256)
def _bump_ck(radius: float, k: int, n: int, points: int) -> float:
    return ck_norm(make_bump_scalar(np.zeros(n), radius), k, points)


# ---------------------------------------------------------------------------
# samplers


@dataclass
class GenericSampler:
    """Seeded stream of random bump-localized fields with ``ck_norm <= delta``.

    Parameters
    ----------
    kind : {"one_form", "sym_tensor", "exact"}
    center, radius : support ball
    delta : float
        Norm bound.
    k : int
        Derivative order of the norm.
    seed : int
        Master seed.
    stream : tuple of int
        Spawn key of this stream below the master seed.
    trace_free_metric : ndarray, optional
        Covariant metric at the center; sampled tensors are projected to
        their trace free part with respect to it.
    """

    kind: str
    center: np.ndarray
    radius: float
    delta: float = 1.0
    k: int = 2
    seed: int = 0
    stream: tuple = ()
    trace_free_metric: Optional[np.ndarray] = None
    points: int = 21

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.kind not in ("one_form", "sym_tensor", "exact"):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        self.center = np.asarray(self.center, float)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(int(self.seed), spawn_key=tuple(int(s) for s in self.stream)))

    def fields(self, count: int) -> list:
        return list(self.iter_fields(count))

    def iter_fields(self, count: Optional[int] = None) -> Iterator:
        rng = self.rng()
        n = self.center.size
        target = self.delta * (1.0 - 1e-9)
        i = 0
        while count is None or i < count:
            if self.kind == "one_form":
                b = rng.normal(size=n)
                b /= np.linalg.norm(b)
                a = target / (np.max(np.abs(b)) * _bump_ck(self.radius, self.k, n, self.points))
                yield LocalizedOneForm(self.center, self.radius, b, a, name=f"em:{self.seed}:{'.'.join(map(str, self.stream))}:{i}")
            elif self.kind == "exact":
                a = rng.uniform(-1.0, 1.0)
                unit = _exact_ck(self.radius, self.k, n, self.points)
                yield ExactForm(self.center, self.radius, np.sign(a) * target / unit, name=f"exact:{self.seed}:{i}")
            else:
                M = rng.uniform(-1.0, 1.0, size=(n, n))
                M = 0.5 * (M + M.T)
                if self.trace_free_metric is not None:
                    g = np.asarray(self.trace_free_metric, float)
                    M = M - (np.trace(np.linalg.solve(g, M)) / n) * g
                    M = 0.5 * (M + M.T)
                a = target / (np.max(np.abs(M)) * _bump_ck(self.radius, self.k, n, self.points))
                yield make_sym_tensor("matrix", self.center, self.radius, a, matrix=M, name=f"metric:{self.seed}:{'.'.join(map(str, self.stream))}:{i}")
            i += 1


@lru_cache(maxsize=256)
def _exact_ck(radius: float, k: int, n: int, points: int) -> float:
    return ck_norm(ExactForm(np.zeros(n), radius, 1.0), k, points)


def sample_generic(sampler: GenericSampler, count: int) -> list:
    return sampler.fields(count)
