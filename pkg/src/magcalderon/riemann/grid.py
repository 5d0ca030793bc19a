"""Finite difference magnetic Laplacian on the unit cube.

The discrete operator approximates ``L = |g|^{1/2} Delta_{g,A}``::

    L u = sum_{jk} (d_j - i A_j) a^{jk} (d_k - i A_k) u,   a = |g|^{1/2} g^{-1}

Diagonal terms use a conservative flux form on half nodes, written as
``-W_k^H diag(a^kk) W_k`` with ``W_k = D_k - i diag(A_k) Avg_k`` so the
assembled matrix is Hermitian.  Mixed terms use node centered central
differences.  Dirichlet data sit on the boundary nodes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..geometry import Field, MetricField

__all__ = [
    "GridDomain",
    "GridField",
    "DnSample",
    "MagneticOperator",
    "SolverError",
    "solve_magnetic_dirichlet",
    "dn_map",
    "boundary_functional",
    "FACES",
]

# (axis, side) for the six faces; side 1 is x_axis = 1
FACES = tuple((k, side) for k in range(3) for side in (0, 1))


class SolverError(RuntimeError):
    pass


class GridDomain:
    """Uniform lattice with ``N`` nodes per axis on ``[0, 1]^3``."""

    def __init__(self, N: int):
        if N < 5:
            raise ValueError("need at least 5 nodes per axis")
        self.N = int(N)
        self.H = 1.0 / (N - 1)
        self.axis = np.linspace(0.0, 1.0, N)
        self.shape = (N, N, N)
        self.size = N**3

    @cached_property
    def nodes(self) -> np.ndarray:
        g = np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")
        return np.stack([a.ravel() for a in g], axis=1)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        i = np.arange(self.N)
        edge = (i == 0) | (i == self.N - 1)
        m = edge[:, None, None] | edge[None, :, None] | edge[None, None, :]
        return m.ravel()

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    @cached_property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    def half_nodes(self, k: int) -> np.ndarray:
        """Midpoints between neighbours along axis ``k``, C-ordered."""
        axes = [self.axis, self.axis, self.axis]
        axes[k] = 0.5 * (self.axis[:-1] + self.axis[1:])
        g = np.meshgrid(*axes, indexing="ij")
        return np.stack([a.ravel() for a in g], axis=1)

    def face_index(self, k: int, side: int) -> np.ndarray:
        """Flat node indices of a face, shaped ``(N, N)`` (remaining axes in order)."""
        idx = np.arange(self.size).reshape(self.shape)
        sl = [slice(None)] * 3
        sl[k] = 0 if side == 0 else self.N - 1
        return idx[tuple(sl)]

    def face_normal(self, k: int, side: int) -> np.ndarray:
        n = np.zeros(3)
        n[k] = 1.0 if side == 1 else -1.0
        return n

    @cached_property
    def trapezoid_2d(self) -> np.ndarray:
        w = np.full(self.N, self.H)
        w[0] = w[-1] = 0.5 * self.H
        return np.outer(w, w)

    @cached_property
    def trapezoid_3d(self) -> np.ndarray:
        w = np.full(self.N, self.H)
        w[0] = w[-1] = 0.5 * self.H
        return (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()

    def face_weights(self, metric: MetricField) -> list[np.ndarray]:
        """Trapezoid weights times the induced area density, one ``(N, N)`` array per face."""
        out = []
        for k, side in FACES:
            X = self.nodes[self.face_index(k, side)]
            G = metric.eval(X)
            tang = [j for j in range(3) if j != k]
            Gt = G[..., tang, :][..., :, tang]
            out.append(self.trapezoid_2d * np.sqrt(np.linalg.det(Gt)))
        return out

    def boundary_values(self, f) -> np.ndarray:
        """Nodal vector with ``f`` on boundary nodes and zero inside."""
        u = np.zeros(self.size, dtype=complex if np.iscomplexobj(f) else float)
        if callable(f):
            vals = np.asarray(f(self.nodes[self.boundary]))
            u = u.astype(np.result_type(u, vals))
            u[self.boundary] = vals
        else:
            f = np.asarray(f)
            if f.shape == (self.size,):
                u = u.astype(np.result_type(u, f))
                u[self.boundary] = f[self.boundary]
            elif f.shape == (self.boundary.size,):
                u = u.astype(np.result_type(u, f))
                u[self.boundary] = f
            else:
                raise ValueError("boundary data must be callable, nodal or boundary-sized")
        return u


@dataclass
class GridField:
    values: np.ndarray
    grid: GridDomain
    residual: float = 0.0

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def boundary_restriction(self) -> np.ndarray:
        return self.values[self.grid.boundary]


@dataclass
class DnSample:
    """Boundary values per face, ``faces[i]`` aligned with :data:`FACES`."""

    faces: list
    grid: GridDomain
    datum: str = ""

    def __add__(self, other):
        return DnSample([a + b for a, b in zip(self.faces, other.faces)], self.grid, self.datum)

    def __sub__(self, other):
        return DnSample([a - b for a, b in zip(self.faces, other.faces)], self.grid, self.datum)

    def scale(self, c):
        return DnSample([c * a for a in self.faces], self.grid, self.datum)

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(a)) for a in self.faces))


def _kron3(ops):
    return sp.kron(sp.kron(ops[0], ops[1], format="csr"), ops[2], format="csr")


def _axis_op(op1d, k, N):
    I = sp.identity(N, format="csr")
    ops = [I, I, I]
    ops[k] = op1d
    return _kron3(ops)


def _one_d_ops(N, H):
    D = sp.diags([-np.ones(N - 1), np.ones(N - 1)], [0, 1], shape=(N - 1, N), format="csr") / H
    Av = sp.diags([0.5 * np.ones(N - 1), 0.5 * np.ones(N - 1)], [0, 1], shape=(N - 1, N), format="csr")
    # central difference on interior rows only; boundary rows stay empty
    C = sp.lil_matrix((N, N))
    for i in range(1, N - 1):
        C[i, i - 1] = -1.0
        C[i, i + 1] = 1.0
    C = C.tocsr() / (2 * H)
    G = sp.lil_matrix((N, N))
    G[0, 0:3] = [-3.0, 4.0, -1.0]
    G[N - 1, N - 3:N] = [1.0, -4.0, 3.0]
    for i in range(1, N - 1):
        G[i, i - 1] = -1.0
        G[i, i + 1] = 1.0
    G = G.tocsr() / (2 * H)
    return D, Av, C, G


def _coupling(metric: MetricField, X):
    G = metric.eval(X)
    det = np.linalg.det(G)
    if np.any(det <= 0):
        raise SolverError("metric is not positive definite on the grid (registration error)")
    return np.sqrt(det)[:, None, None] * np.linalg.inv(G)


def _one_form_values(A: Optional[Field], X) -> Optional[np.ndarray]:
    if A is None:
        return None
    return np.asarray(A(X), float)


class MagneticOperator:
    """Assembled discrete ``|g|^{1/2} Delta_{g,A}`` with a cached solver.

    Parameters
    ----------
    grid : GridDomain
    metric : MetricField (Riemannian)
    A : Field, optional
        Magnetic one form.
    """

    def __init__(self, grid: GridDomain, metric: MetricField, A: Optional[Field] = None):
        self.grid, self.metric, self.A = grid, metric, A
        N, H = grid.N, grid.H
        D1, Av1, C1, G1 = _one_d_ops(N, H)
        self.D = [_axis_op(D1, k, N) for k in range(3)]
        self.Avg = [_axis_op(Av1, k, N) for k in range(3)]
        self.C = [_axis_op(C1, k, N) for k in range(3)]
        self.G = [_axis_op(G1, k, N) for k in range(3)]
        self.a_half = []
        for k in range(3):
            self.a_half.append(_coupling(metric, grid.half_nodes(k))[:, k, k])
        self.a_node = _coupling(metric, grid.nodes)
        self.L = self._assemble(A)
        I, B = grid.interior, grid.boundary
        self.L_II = self.L[I][:, I].tocsr()
        self.L_IB = self.L[I][:, B].tocsr()
        self._amg = None

    @property
    def complex(self) -> bool:
        return self.A is not None

    def _assemble(self, A):
        grid = self.grid
        L = None
        for k in range(3):
            W = self.D[k]
            if A is not None:
                Ah = _one_form_values(A, grid.half_nodes(k))[:, k]
                W = (W - 1j * sp.diags(Ah) @ self.Avg[k]).tocsr()
            term = -(W.conj().T @ sp.diags(self.a_half[k]) @ W)
            L = term if L is None else L + term
        An = _one_form_values(A, grid.nodes) if A is not None else None
        for j in range(3):
            for k in range(3):
                if j == k:
                    continue
                ajk = self.a_node[:, j, k]
                if not np.any(ajk):
                    continue
                Oj, Ok = self.C[j], self.C[k]
                if An is not None:
                    Oj = Oj - 1j * sp.diags(An[:, j])
                    Ok = Ok - 1j * sp.diags(An[:, k])
                L = L + Oj @ sp.diags(ajk) @ Ok
        return L.tocsr()

    # -- solves ------------------------------------------------------------
    def _hierarchy(self):
        if self._amg is None:
            M = (-self.L_II).tocsr()
            if np.iscomplexobj(M.data):
                # pyamg kernels need contiguous data, not a strided real view
                M = sp.csr_matrix((np.ascontiguousarray(M.data.real), M.indices.copy(), M.indptr.copy()), shape=M.shape)
                M.eliminate_zeros()
            self._amg = pyamg.smoothed_aggregation_solver(M, symmetry="symmetric", max_coarse=500)
        return self._amg

    def solve_interior(self, rhs: np.ndarray, rtol: float = 1e-11) -> tuple[np.ndarray, float]:
        """Solve ``L_II x = rhs``; returns ``(x, relative residual)``."""
        nb = float(np.linalg.norm(rhs))
        if nb == 0.0:
            return np.zeros_like(rhs), 0.0
        ml = self._hierarchy()
        M = -self.L_II
        b = -rhs
        if not np.iscomplexobj(M.data) and not np.iscomplexobj(b):
            # pyamg's cg divides 0/0 once a V-cycle solves the system exactly
            with np.errstate(invalid="ignore", divide="ignore"):
                x = ml.solve(b, tol=rtol, accel="cg", maxiter=500)
            if not np.all(np.isfinite(x)):
                x = ml.solve(b, tol=rtol, maxiter=500)
        else:
            # M is Hermitian positive definite; the real V-cycle acts on both parts
            P = ml.aspreconditioner(cycle="V")

            def apply(r):
                return P @ np.ascontiguousarray(r.real) + 1j * (P @ np.ascontiguousarray(r.imag))

            prec = spla.LinearOperator(M.shape, matvec=apply, dtype=complex)
            b = b.astype(complex)
            x, info = spla.cg(M, b, rtol=rtol, atol=0.0, maxiter=500, M=prec)
            if info != 0:
                x, info = spla.gmres(M, b, rtol=rtol, atol=0.0, restart=60, maxiter=200, M=prec)
        res = float(np.linalg.norm(M @ x - b)) / nb
        if not np.isfinite(res) or res > 1e-10:
            try:
                x = spla.spsolve(M.tocsc(), b)
                res = float(np.linalg.norm(M @ x - b)) / nb
            except MemoryError as exc:  # pragma: no cover - large grids only
                raise SolverError("direct fallback ran out of memory") from exc
            if res > 1e-10:
                raise SolverError(f"solver did not converge, relative residual {res:.2e}")
        return x, res

    def solve(self, f, rtol: float = 1e-11) -> GridField:
        """Dirichlet problem with boundary data ``f``."""
        u = self.grid.boundary_values(f)
        if self.complex:
            u = u.astype(complex)
        rhs = -(self.L_IB @ u[self.grid.boundary])
        x, res = self.solve_interior(rhs, rtol)
        u = u.astype(np.result_type(u, x))
        u[self.grid.interior] = x
        return GridField(u, self.grid, res)

    # -- derivatives -------------------------------------------------------
    def gradient(self, u: np.ndarray) -> np.ndarray:
        """Second order nodal gradient (one sided at the boundary), shape ``(size, 3)``."""
        return np.stack([G @ u for G in self.G], axis=1)

    def dn_map(self, u: np.ndarray, datum: str = "") -> DnSample:
        """``(d_nu - i A(nu)) u`` on every face."""
        grad = self.gradient(u)
        faces = []
        for k, side in FACES:
            idx = self.grid.face_index(k, side).ravel()
            X = self.grid.nodes[idx]
            gi = np.linalg.inv(self.metric.eval(X))
            n = self.grid.face_normal(k, side)
            gn = gi @ n
            norm = np.sqrt(np.einsum("j,mj->m", n, gn))
            val = np.einsum("mj,mj->m", gn, grad[idx]) / norm
            if self.A is not None:
                Av = _one_form_values(self.A, X)
                val = val - 1j * np.einsum("mj,mj->m", Av, gn) / norm * u[idx]
            faces.append(val.reshape(self.grid.N, self.grid.N))
        return DnSample(faces, self.grid, datum)

    @cached_property
    def functional_vector(self) -> np.ndarray:
        """``c`` with ``boundary_functional(dn_map(v)) = c . v`` for ``A = 0``."""
        c = np.zeros(self.grid.size)
        weights = self.grid.face_weights(self.metric)
        for (k, side), w in zip(FACES, weights):
            idx = self.grid.face_index(k, side).ravel()
            X = self.grid.nodes[idx]
            gi = np.linalg.inv(self.metric.eval(X))
            n = self.grid.face_normal(k, side)
            gn = gi @ n
            norm = np.sqrt(np.einsum("j,mj->m", n, gn))
            coef = w.ravel()[:, None] * gn / norm[:, None]
            for j in range(3):
                rows = self.G[j][idx]
                c += rows.T @ coef[:, j]
        return c

    # -- linearization -----------------------------------------------------
    def linearization(self, h: Field) -> sp.csr_matrix:
        """``S`` with ``L(A = eps h) = L0 - i eps S + O(eps^2)`` (background ``A = 0``)."""
        if self.A is not None:
            raise ValueError("linearization is implemented around the zero potential")
        grid = self.grid
        S = None
        for k in range(3):
            hk = np.asarray(h(grid.half_nodes(k)), float)[:, k]
            ha = sp.diags(hk * self.a_half[k])
            term = self.Avg[k].T @ ha @ self.D[k] - self.D[k].T @ ha @ self.Avg[k]
            S = term if S is None else S + term
        hn = np.asarray(h(grid.nodes), float)
        for j in range(3):
            for k in range(3):
                if j == k:
                    continue
                ajk = self.a_node[:, j, k]
                if not np.any(ajk):
                    continue
                S = S + sp.diags(hn[:, j] * ajk) @ self.C[k] + self.C[j] @ sp.diags(ajk * hn[:, k])
        return S.tocsr()

    @cached_property
    def adjoint_state(self) -> np.ndarray:
        """``z`` solving ``L_II^T z = c_I`` for the boundary functional vector ``c``."""
        z, _ = self.solve_interior(self.functional_vector[self.grid.interior], rtol=1e-12)
        return z


def solve_magnetic_dirichlet(metric: MetricField, A: Optional[Field], f, N: int = 33, operator: Optional[MagneticOperator] = None) -> GridField:
    op = operator or MagneticOperator(GridDomain(N), metric, A)
    return op.solve(f)


def dn_map(metric: MetricField, A: Optional[Field], f, N: int = 33, operator: Optional[MagneticOperator] = None) -> DnSample:
    op = operator or MagneticOperator(GridDomain(N), metric, A)
    u = op.solve(f)
    return op.dn_map(u.values, getattr(f, "__name__", ""))


def boundary_functional(metric: MetricField, sample: DnSample) -> complex:
    """``int_{boundary} N dS_g`` by trapezoid quadrature on the faces."""
    weights = sample.grid.face_weights(metric)
    tot = sum(np.sum(w * v) for w, v in zip(weights, sample.faces))
    return complex(tot) if np.iscomplexobj(tot) else float(tot)
