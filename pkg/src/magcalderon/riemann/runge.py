"""Harmonic functions with prescribed 2-jets and the Hessian probes built on them.

A :class:`RungeBasis` holds ``m`` boundary data: the constant, the three
affine traces and seeded bumps on the faces.  At a lattice node ``p`` the
value, gradient and covariant Hessian of the harmonic extension are linear
functionals of the boundary datum; each is evaluated with one adjoint solve,
so the ``9 x m`` feature matrix never needs ``m`` forward solves.  The fitted
datum is then solved forward once and its features are measured directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg as sla

from .. import bump
from ..geometry import MetricField, PreconditionError, christoffel
from .grid import GridDomain, GridField, MagneticOperator

__all__ = [
    "RungeTarget",
    "RungeBasis",
    "RungeFit",
    "HessianProbeResult",
    "runge_fit",
    "hessian_probe",
    "trace_free_basis",
    "probe_matrices",
]

TRACE_TOL = 1e-12
FIT_TOL = 1e-3

_SYM_IDX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
_SYM_W = np.array([1.0, 1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0), np.sqrt(2.0)])


def _sym_vec(H) -> np.ndarray:
    H = np.asarray(H, float)
    return np.array([H[i, j] for i, j in _SYM_IDX]) * _SYM_W


def trace_free_basis(g) -> np.ndarray:
    """Orthonormal ``6 x 5`` basis of symmetric matrices with ``g^{jk} H_jk = 0``.

    Coordinates are the Frobenius-isometric vector ``(H11, H22, H33, r2 H12, r2 H13, r2 H23)``.
    """
    t = _sym_vec(np.linalg.inv(np.asarray(g, float)))
    return sla.null_space(t[None, :])


def trace_free_part(H, g) -> np.ndarray:
    """``H - (tr_g H / n) g``."""
    g = np.asarray(g, float)
    H = 0.5 * (np.asarray(H, float) + np.asarray(H, float).T)
    tr = float(np.einsum("jk,jk->", np.linalg.inv(g), H))
    return H - tr / g.shape[0] * g


def probe_matrices() -> list[tuple[str, np.ndarray]]:
    """Three ``e_i e_i - e_j e_j`` and three ``sym(e_i e_j)`` matrices."""
    out = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        H = np.zeros((3, 3))
        H[i, i], H[j, j] = 1.0, -1.0
        out.append((f"diag{i + 1}{j + 1}", H))
    for i, j in ((0, 1), (0, 2), (1, 2)):
        H = np.zeros((3, 3))
        H[i, j] = H[j, i] = 1.0
        out.append((f"off{i + 1}{j + 1}", H))
    return out


@dataclass
class RungeTarget:
    """Value ``a0``, covector ``xi0`` and trace free Hessian ``H0`` at ``p``."""

    p: np.ndarray
    a0: float = 0.0
    xi0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    H0: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        self.p = np.asarray(self.p, float)
        self.xi0 = np.asarray(self.xi0, float)
        self.H0 = np.asarray(self.H0, float)
        if not np.allclose(self.H0, self.H0.T, atol=0.0, rtol=0.0):
            raise PreconditionError("Hessian target must be symmetric")

    def check_trace(self, g) -> None:
        tr = float(np.einsum("jk,jk->", np.linalg.inv(g), self.H0))
        if abs(tr) > TRACE_TOL:
            raise PreconditionError(f"Hessian target is not trace free (trace {tr:.2e})")


@dataclass
class RungeFit:
    target: RungeTarget
    node: np.ndarray
    coefficients: np.ndarray
    datum: np.ndarray
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    residual: float
    predicted_residual: float
    solution: GridField

    @property
    def success(self) -> bool:
        return bool(self.residual <= FIT_TOL)

    def as_dict(self) -> dict:
        return {
            "node": self.node.tolist(),
            "value": self.value,
            "gradient": self.gradient.tolist(),
            "hessian": self.hessian.tolist(),
            "residual": self.residual,
            "predicted_residual": self.predicted_residual,
            "success": self.success,
            "coefficient_norm": float(np.linalg.norm(self.coefficients)),
        }


class RungeBasis:
    """Boundary data whose harmonic extensions span the fitting space.

    Parameters
    ----------
    metric : MetricField
        Riemannian metric of the Laplacian.
    N : int
        Lattice nodes per axis.
    m : int
        Number of boundary data (at least 4).
    radius : float
        Radius of the face bumps.
    seed : int
        Seed for bump centres.
    """

    def __init__(self, metric: MetricField, N: int = 33, m: int = 200, radius: float = 0.25, seed: int = 0):
        if m < 4:
            raise ValueError("basis needs the constant and affine data (m >= 4)")
        self.metric, self.m, self.radius, self.seed = metric, int(m), float(radius), int(seed)
        self.grid = GridDomain(N)
        self.op = MagneticOperator(self.grid, metric)
        Xb = self.grid.nodes[self.grid.boundary]
        cols = [np.ones(Xb.shape[0]), Xb[:, 0].copy(), Xb[:, 1].copy(), Xb[:, 2].copy()]
        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        self.centers = []
        for _ in range(self.m - 4):
            k, side = int(rng.integers(3)), int(rng.integers(2))
            c = rng.uniform(0.0, 1.0, 3)
            c[k] = float(side)
            self.centers.append(c)
            cols.append(bump.radial_bump(Xb, c, self.radius))
        self.data = np.stack(cols, axis=1)
        self._features: dict = {}

    # -- feature functionals ---------------------------------------------
    def snap(self, p) -> tuple[int, np.ndarray]:
        """Nearest lattice node with room for the wide Hessian stencil."""
        N = self.grid.N
        ijk = np.clip(np.rint(np.asarray(p, float) * (N - 1)).astype(int), 2, N - 3)
        flat = int(np.ravel_multi_index(tuple(ijk), self.grid.shape))
        return flat, self.grid.nodes[flat]

    def feature_rows(self, p) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Dense row vectors for value, gradient (3) and Hessian (3 x 3) at ``p``."""
        flat, x = self.snap(p)
        n = self.grid.size
        e = np.zeros(n)
        e[flat] = 1.0
        C = self.op.C
        grad_rows = np.stack([C[j].T @ e for j in range(3)])
        gam = christoffel(self.metric, x[None, :])[0]
        hess_rows = np.zeros((3, 3, n))
        for j in range(3):
            for k in range(3):
                r = C[k].T @ (C[j].T @ e)
                hess_rows[j, k] = r - np.einsum("m,mn->n", gam[:, j, k], grad_rows)
        return e, grad_rows, hess_rows

    def _reduce_rows(self, rows: np.ndarray) -> np.ndarray:
        """Boundary weights ``w`` with ``row . u = w . f_B`` for harmonic ``u``."""
        I, B = self.grid.interior, self.grid.boundary
        OUT = np.zeros((rows.shape[0], B.size))
        for i, r in enumerate(rows):
            z, _ = self.op.solve_interior(r[I], rtol=1e-12)
            OUT[i] = r[B] - self.op.L_IB.T @ z
        return OUT

    def features(self, p):
        """``(9 x m)`` feature matrix at the snapped node and the node itself.

        Rows: value, gradient, and the 5 trace free Hessian coordinates.
        """
        flat, x = self.snap(p)
        hit = self._features.get(flat)
        if hit is not None:
            return hit
        e, gr, hr = self.feature_rows(x)
        P = trace_free_basis(self.metric.eval(x[None, :])[0])
        hv = np.stack([hr[i, j] for i, j in _SYM_IDX]) * _SYM_W[:, None]
        rows = np.vstack([e[None, :], gr, P.T @ hv])
        W = self._reduce_rows(rows)
        F = W @ self.data
        self._features[flat] = (F, x, P)
        return self._features[flat]

    def measure(self, u: np.ndarray, p) -> tuple[float, np.ndarray, np.ndarray]:
        """Value, gradient and covariant Hessian of a nodal field at ``p``."""
        e, gr, hr = self.feature_rows(p)
        H = np.einsum("jkn,n->jk", hr, u)
        return float(e @ u), gr @ u, 0.5 * (H + H.T)


def runge_fit(basis: RungeBasis, target: RungeTarget, lam: float = 1e-8) -> RungeFit:
    """Tikhonov least squares for a harmonic function with the target 2-jet.

    Minimizes ``|F c - t|^2 + lam |c|^2`` over the basis coefficients; the
    reported residual is the max mismatch of the 9 constraint values measured
    on the forward solve of the fitted datum.  A residual above
    :data:`FIT_TOL` marks the fit as unsuccessful; nothing is raised.
    """
    F, x, P = basis.features(target.p)
    g = basis.metric.eval(x[None, :])[0]
    target.check_trace(g)
    t = np.concatenate([[target.a0], target.xi0, P.T @ _sym_vec(target.H0)])
    A = np.vstack([F, np.sqrt(lam) * np.eye(basis.m)])
    b = np.concatenate([t, np.zeros(basis.m)])
    c, *_ = np.linalg.lstsq(A, b, rcond=None)
    pred = float(np.max(np.abs(F @ c - t)))
    datum = basis.data @ c
    u = basis.op.solve(datum, rtol=1e-12)
    val, grad, H = basis.measure(u.values, x)
    got = np.concatenate([[val], grad, P.T @ _sym_vec(H)])
    res = float(np.max(np.abs(got - t)))
    return RungeFit(target, x, c, datum, val, grad, H, res, pred, u)


@dataclass
class HessianProbeResult:
    scalar_verdict: Optional[bool]
    C: Optional[float]
    diagonal: list
    antisymmetric: list
    witness: Optional[dict]
    node: np.ndarray
    fit_residuals: list
    eps_probe: float

    @property
    def inconclusive(self) -> bool:
        return self.scalar_verdict is None

    def as_dict(self) -> dict:
        return {
            "scalar_verdict": self.scalar_verdict,
            "C": self.C,
            "diagonal": self.diagonal,
            "antisymmetric": self.antisymmetric,
            "witness": self.witness,
            "node": self.node.tolist(),
            "fit_residuals": self.fit_residuals,
            "eps_probe": self.eps_probe,
        }


def _frozen(B, x) -> np.ndarray:
    if callable(B):
        return np.asarray(B(np.asarray(x, float)[None, :]), float).reshape(3, 3)
    return np.asarray(B, float).reshape(3, 3)


def hessian_probe(basis: RungeBasis, B: Union[np.ndarray, Callable], p, eps_probe: float = 1e-2, lam: float = 1e-8) -> HessianProbeResult:
    """Test whether ``B`` acts as a scalar on Hessians of harmonic functions.

    For each of six trace free test matrices ``H`` a harmonic ``u`` with
    ``du(p) = 0`` and ``Hess u(p) = H`` is fitted, and the antisymmetric part
    ``d_l w_k - d_k w_l`` of ``w = B du`` is evaluated at ``p`` by central
    differences, with ``B`` frozen at ``p``.  Three gradient probes
    ``du(p) = dx^i`` give the diagonal factors whose mean is ``C``.
    """
    F, x, _ = basis.features(p)
    g = basis.metric.eval(x[None, :])[0]
    Bp = _frozen(B, x)
    C = basis.op.C
    flat, _ = basis.snap(x)
    residuals, anti = [], []
    witness = None
    for name, H in probe_matrices():
        Ht = trace_free_part(H, g)
        fit = runge_fit(basis, RungeTarget(x, 0.0, np.zeros(3), Ht), lam)
        residuals.append({"probe": name, "residual": fit.residual})
        if not fit.success:
            return HessianProbeResult(None, None, [], anti, None, x, residuals, eps_probe)
        u = fit.solution.values
        du = np.stack([Cj @ u for Cj in C], axis=1)
        w = du @ Bp.T
        K = np.array([[(C[l] @ w[:, k])[flat] - (C[k] @ w[:, l])[flat] for k in range(3)] for l in range(3)])
        mag = float(np.max(np.abs(K)))
        anti.append({"probe": name, "magnitude": mag})
        if mag > eps_probe and (witness is None or mag > witness["magnitude"]):
            witness = {"type": "hessian_probe", "probe": name, "H": Ht.tolist(), "magnitude": mag, "node": x.tolist()}
    diag = []
    for i in range(3):
        xi = np.zeros(3)
        xi[i] = 1.0
        fit = runge_fit(basis, RungeTarget(x, 0.0, xi, np.zeros((3, 3))), lam)
        residuals.append({"probe": f"grad{i + 1}", "residual": fit.residual})
        if not fit.success:
            return HessianProbeResult(None, None, diag, anti, witness, x, residuals, eps_probe)
        du = np.array([(Cj @ fit.solution.values)[flat] for Cj in C])
        diag.append(float((Bp @ du)[i]))
    verdict = witness is None
    return HessianProbeResult(verdict, float(np.mean(diag)), diag, anti, witness, x, residuals, eps_probe)
