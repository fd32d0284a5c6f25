"""P1 finite element operators on :class:`~sbbm.mesh.Mesh`.

Vectors come in two flavours. *Nodal* vectors have one entry per lattice node
(length ``mesh.n_nodes``). *Dof* vectors have one entry per free degree of
freedom: Dirichlet boundary nodes are eliminated and periodic images are merged.
``FemOperators.expand`` and ``FemOperators.reduce`` move between the two.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss
from scipy.sparse.linalg import splu

from .mesh import Mesh

LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0

# Symmetric 4-point rule, exact for cubics (barycentric points, weights sum to 1).
CONVECTION_POINTS = np.array(
    [[1 / 3, 1 / 3, 1 / 3], [0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.6]]
)
CONVECTION_WEIGHTS = np.array([-27.0, 25.0, 25.0, 25.0]) / 48.0


def flux(u):
    """Scalar component of F(u) = (u + u^2/2, u + u^2/2)."""
    return u + 0.5 * u * u


def basis_gradients(mesh: Mesh) -> np.ndarray:
    """Constant gradients of the three hat functions, shape ``(n_triangles, 3, 2)``."""
    p = mesh.nodes[mesh.triangles]
    area2 = 2.0 * mesh.signed_areas()
    # grad(lambda_i) = rot90(edge opposite vertex i) / (2|T|)
    grads = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        a = p[:, (i + 1) % 3]
        b = p[:, (i + 2) % 3]
        grads[:, i, 0] = (a[:, 1] - b[:, 1]) / area2
        grads[:, i, 1] = (b[:, 0] - a[:, 0]) / area2
    return grads


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return sp.csr_matrix(
        (local.ravel(), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)
    )


def assemble_mass_full(mesh: Mesh) -> sp.csr_matrix:
    """Unconstrained mass matrix over all lattice nodes."""
    local = mesh.signed_areas()[:, None, None] * LOCAL_MASS[None]
    return _scatter(mesh, local)


def assemble_stiffness_full(mesh: Mesh) -> sp.csr_matrix:
    """Unconstrained stiffness matrix over all lattice nodes."""
    g = basis_gradients(mesh)
    local = mesh.signed_areas()[:, None, None] * np.einsum("tid,tjd->tij", g, g)
    return _scatter(mesh, local)


@lru_cache(maxsize=32)
def expansion_matrix(mesh: Mesh) -> sp.csr_matrix:
    """0/1 matrix mapping dof vectors to nodal vectors (zero on Dirichlet nodes)."""
    dofs = mesh.dof_map()
    rows = np.flatnonzero(dofs >= 0)
    return sp.csr_matrix(
        (np.ones(rows.size), (rows, dofs[rows])), shape=(mesh.n_nodes, mesh.n_dofs)
    )


def _constrain(mesh: Mesh, full: sp.spmatrix) -> sp.csr_matrix:
    P = expansion_matrix(mesh)
    return (P.T @ full @ P).tocsr()


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    return _constrain(mesh, assemble_mass_full(mesh))


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    return _constrain(mesh, assemble_stiffness_full(mesh))


class _ConvectionAssembler:
    """Exact per-triangle flux integrals for P1 ``u``.

    ``int_T u = |T| s1 / 3`` and ``int_T u^2 = |T| (s2 + s1^2) / 12`` with
    ``s1``, ``s2`` the sums of the vertex values and of their squares; this is
    what any rule exact for quadratics (e.g. the 4-point rule) returns.
    """

    def __init__(self, mesh: Mesh, dofs: np.ndarray | None = None):
        nt = mesh.n_triangles
        tri = mesh.triangles
        ncols = mesh.n_nodes
        if dofs is not None:  # act on dof vectors: Dirichlet entries drop out
            tri = dofs[tri]
            ncols = mesh.n_dofs
        keep = tri.ravel() >= 0
        rows = np.repeat(np.arange(nt), 3)[keep]
        self.T1 = sp.csr_matrix((np.ones(rows.size), (rows, tri.ravel()[keep])), shape=(nt, ncols))
        self.area = mesh.signed_areas()
        g = basis_gradients(mesh)
        dsum = (g[:, :, 0] + g[:, :, 1]).ravel()[keep]
        self.C = sp.csr_matrix((dsum, (tri.ravel()[keep], rows)), shape=(ncols, nt))

    def __call__(self, u: np.ndarray) -> np.ndarray:
        s1 = self.T1 @ u
        s2 = self.T1 @ (u * u)
        area = self.area.reshape((-1,) + (1,) * (u.ndim - 1))
        integral = area * (s1 / 3.0 + (s2 + s1 * s1) / 24.0)
        return self.C @ integral


def convection_quadrature(mesh: Mesh, u) -> np.ndarray:
    """Same load as :func:`assemble_convection`, by the 4-point cubic rule (cross-check)."""
    u = np.asarray(u, dtype=float)
    uq = np.einsum("qi,ti...->tq...", CONVECTION_POINTS, u[mesh.triangles])
    wa = mesh.signed_areas()[:, None] * CONVECTION_WEIGHTS[None, :]
    integral = np.einsum("tq,tq...->t...", wa, flux(uq))
    g = basis_gradients(mesh)
    local = (g[:, :, 0] + g[:, :, 1])[(...,) + (None,) * (u.ndim - 1)] * integral[:, None]
    out = np.zeros(u.shape)
    np.add.at(out, mesh.triangles.ravel(), local.reshape((-1,) + u.shape[1:]))
    return out


@lru_cache(maxsize=32)
def _convection_assembler(mesh: Mesh) -> _ConvectionAssembler:
    return _ConvectionAssembler(mesh)


@lru_cache(maxsize=32)
def _dof_convection_assembler(mesh: Mesh) -> _ConvectionAssembler:
    return _ConvectionAssembler(mesh, mesh.dof_map())


def assemble_convection(mesh: Mesh, u) -> np.ndarray:
    """Nodal load ``b_i = int (u + u^2/2)(d_x phi_i + d_y phi_i)``.

    ``u`` holds nodal values (zeros on Dirichlet nodes); a trailing batch axis
    is allowed, i.e. shape ``(n_nodes,)`` or ``(n_nodes, n_samples)``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[0] != mesh.n_nodes:
        raise ValueError(f"expected {mesh.n_nodes} nodal values, got {u.shape[0]}")
    return _convection_assembler(mesh)(u)


@dataclass(eq=False)
class FemOperators:
    """Assembled matrices for one mesh and, when ``k`` is given, the implicit system.

    ``S = (1 + nu*k) M + A`` is factorized once and reused for every solve.
    """

    mesh: Mesh
    nu: float = 1.0
    k: float | None = None
    M: sp.csr_matrix = field(init=False, repr=False)
    A: sp.csr_matrix = field(init=False, repr=False)
    H: sp.csr_matrix = field(init=False, repr=False)
    S: sp.csr_matrix | None = field(init=False, repr=False, default=None)
    M_full: sp.csr_matrix = field(init=False, repr=False)
    P: sp.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("damping nu must be nonnegative")
        self.M_full = assemble_mass_full(self.mesh)
        self.P = expansion_matrix(self.mesh)
        self.M = _constrain(self.mesh, self.M_full)
        self.A = _constrain(self.mesh, assemble_stiffness_full(self.mesh))
        self.H = (self.M + self.A).tocsr()
        self._noise_rows = (self.P.T @ self.M_full).tocsr()
        dofs = self.mesh.dof_map()
        free = np.flatnonzero(dofs >= 0)
        _, first = np.unique(dofs[free], return_index=True)
        self._rep = free[first]  # lowest node index carrying each dof
        self._h_lu = None
        self._s_lu = None
        if self.k is not None:
            if not self.k > 0:
                raise ValueError("time step k must be positive")
            self.S = ((1.0 + self.nu * self.k) * self.M + self.A).tocsc()
            self._s_lu = _factorize(self.S)

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_dofs

    def expand(self, x: np.ndarray) -> np.ndarray:
        """Dof vector -> nodal vector."""
        return self.P @ x

    def reduce(self, b_full: np.ndarray) -> np.ndarray:
        """Nodal load -> dof load (tests against the free basis functions)."""
        return self.P.T @ b_full

    def restrict(self, u_full: np.ndarray) -> np.ndarray:
        """Nodal values of a function in V_h -> its dof coefficients."""
        return np.asarray(u_full)[self._rep]

    def convection(self, x: np.ndarray) -> np.ndarray:
        """Dof load of the nonlinear flux term for the dof vector ``x``."""
        return _dof_convection_assembler(self.mesh)(np.asarray(x, dtype=float))

    def noise_load(self, g_full: np.ndarray) -> np.ndarray:
        """Dof load ``(I_h g, phi_i)`` for nodal values ``g`` on all nodes."""
        return self._noise_rows @ g_full

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._s_lu is None:
            raise RuntimeError("operators were built without a time step; no system to solve")
        return self._s_lu.solve(rhs)

    def solve_h1(self, rhs: np.ndarray) -> np.ndarray:
        if self._h_lu is None:
            self._h_lu = _factorize(self.H.tocsc())
        return self._h_lu.solve(rhs)

    def h1_inner(self, u, v) -> float:
        u, v = self._check(u), self._check(v)
        return float(u @ (self.H @ v))

    def h1_norm(self, u) -> float:
        return float(np.sqrt(max(self.h1_inner(u, u), 0.0)))

    def l2_norm(self, u) -> float:
        u = self._check(u)
        return float(np.sqrt(max(u @ (self.M @ u), 0.0)))

    def h1_sq_columns(self, U: np.ndarray) -> np.ndarray:
        """Squared H1 norms of each column of a ``(n_dofs, J)`` array."""
        return np.einsum("ij,ij->j", U, self.H @ U)

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.n_dofs:
            raise ValueError(f"expected {self.n_dofs} dof values, got {u.shape[0]}")
        return u


def _factorize(S: sp.csc_matrix):
    return splu(S, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})


def build_operators(mesh: Mesh, nu: float = 1.0, k: float | None = None) -> FemOperators:
    return FemOperators(mesh, nu=nu, k=k)


def h1_inner(ops: FemOperators, u, v) -> float:
    return ops.h1_inner(u, v)


def h1_norm(ops: FemOperators, u) -> float:
    return ops.h1_norm(u)


def elliptic_project(ops: FemOperators, load_l2, load_h1) -> np.ndarray:
    """Solve ``(M + A) p = load_l2 + load_h1`` for the projection coefficients."""
    rhs = np.asarray(load_l2, dtype=float) + np.asarray(load_h1, dtype=float)
    if rhs.shape[0] != ops.n_dofs:
        raise ValueError(f"expected loads of length {ops.n_dofs}, got {rhs.shape[0]}")
    p = ops.solve_h1(rhs)
    if not np.all(np.isfinite(p)):
        raise ArithmeticError("elliptic projection produced non-finite coefficients")
    return p


# --- quadrature for closed-form functions -----------------------------------------


@lru_cache(maxsize=8)
def triangle_rule(order: int = 6):
    """Collapsed Gauss-Legendre rule on the reference triangle.

    Returns barycentric points ``(n, 3)`` and weights summing to 1.
    Exact for polynomials of total degree ``2*order - 2``.
    """
    x, w = leggauss(order)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    a, b = np.meshgrid(s, s, indexing="ij")
    wa, wb = np.meshgrid(ws, ws, indexing="ij")
    xi = a.ravel()
    eta = (b * (1.0 - a)).ravel()
    weight = (wa * wb * (1.0 - a)).ravel() * 2.0
    bary = np.column_stack([1.0 - xi - eta, xi, eta])
    return bary, weight


def _quadrature_points(mesh: Mesh, order: int):
    bary, weight = triangle_rule(order)
    p = mesh.nodes[mesh.triangles]  # (t, 3, 2)
    xy = np.einsum("qi,tid->tqd", bary, p)
    return bary, mesh.signed_areas()[:, None] * weight[None, :], xy


def projection_loads(ops: FemOperators, f, grad_f, order: int = 6):
    """Dof loads ``(v, phi_i)`` and ``(grad v, grad phi_i)`` for a closed-form ``v``."""
    mesh = ops.mesh
    bary, wa, xy = _quadrature_points(mesh, order)
    fv = f(xy[..., 0], xy[..., 1])
    gx, gy = grad_f(xy[..., 0], xy[..., 1])
    g = basis_gradients(mesh)
    l2_local = np.einsum("tq,tq,qi->ti", wa, fv, bary)
    h1_local = np.einsum("tq,tq,ti->ti", wa, gx, g[:, :, 0]) + np.einsum(
        "tq,tq,ti->ti", wa, gy, g[:, :, 1]
    )
    tri = mesh.triangles.ravel()
    l2 = np.bincount(tri, l2_local.ravel(), minlength=mesh.n_nodes)
    h1 = np.bincount(tri, h1_local.ravel(), minlength=mesh.n_nodes)
    return ops.reduce(l2), ops.reduce(h1)


def error_norms(ops: FemOperators, coeffs, f, grad_f, order: int = 6):
    """``(||v - u_h||_L2, ||grad(v - u_h)||_L2)`` for a closed-form ``v``."""
    mesh = ops.mesh
    u = ops.expand(np.asarray(coeffs, dtype=float))
    bary, wa, xy = _quadrature_points(mesh, order)
    ut = u[mesh.triangles]
    uq = np.einsum("qi,ti->tq", bary, ut)
    g = basis_gradients(mesh)
    ugrad = np.einsum("ti,tid->td", ut, g)
    gx, gy = grad_f(xy[..., 0], xy[..., 1])
    e0 = np.sum(wa * (f(xy[..., 0], xy[..., 1]) - uq) ** 2)
    e1 = np.sum(wa * ((gx - ugrad[:, None, 0]) ** 2 + (gy - ugrad[:, None, 1]) ** 2))
    return float(np.sqrt(e0)), float(np.sqrt(e1))
