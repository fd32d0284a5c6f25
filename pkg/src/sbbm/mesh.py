"""Uniform right-triangle meshes of the unit square and nested prolongation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIRICHLET = "dirichlet"
PERIODIC = "periodic"
BOUNDARY_CONDITIONS = (DIRICHLET, PERIODIC)

# Beyond this the (2^L+1)^2 node indices no longer fit comfortably in memory/int32 sparse indices.
MAX_LEVEL = 14


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation of [0,1]^2 on the (2^level+1)^2 lattice.

    Nodes are stored row-major: node ``j * (n+1) + i`` sits at ``(i*h, j*h)``.
    Every grid cell is split along its lower-left to upper-right diagonal.
    """

    level: int
    bc: str
    nodes: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    boundary_mask: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        return 2.0 ** -self.level

    @property
    def n(self) -> int:
        """Number of cells per side."""
        return 2 ** self.level

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def node_index(self, i, j):
        return np.asarray(j) * (self.n + 1) + np.asarray(i)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def interpolate(self, f) -> np.ndarray:
        """Nodal values of ``f(x, y)`` on all lattice nodes."""
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        return np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape).copy()

    def dof_map(self) -> np.ndarray:
        """Node -> free degree of freedom, ``-1`` for eliminated Dirichlet nodes.

        Periodic: nodes are identified modulo the lattice, giving 4^level classes.
        """
        n = self.n
        j, i = np.divmod(np.arange(self.n_nodes), n + 1)
        if self.bc == PERIODIC:
            return (j % n) * n + (i % n)
        dofs = np.full(self.n_nodes, -1, dtype=np.int64)
        interior = ~self.boundary_mask
        dofs[interior] = (j[interior] - 1) * (n - 1) + (i[interior] - 1)
        return dofs

    @property
    def n_dofs(self) -> int:
        return self.n ** 2 if self.bc == PERIODIC else (self.n - 1) ** 2


def build_uniform_mesh(level: int, bc: str = DIRICHLET) -> Mesh:
    if bc not in BOUNDARY_CONDITIONS:
        raise ValueError(f"unknown boundary condition {bc!r}; expected one of {BOUNDARY_CONDITIONS}")
    if int(level) != level or level < 0:
        raise ValueError(f"mesh level must be a nonnegative integer, got {level!r}")
    level = int(level)
    if level > MAX_LEVEL:
        raise MemoryError(f"level {level} exceeds the supported maximum {MAX_LEVEL}")

    n = 2 ** level
    h = 1.0 / n
    jj, ii = np.divmod(np.arange((n + 1) ** 2), n + 1)
    nodes = np.column_stack([ii * h, jj * h])
    boundary = (ii == 0) | (ii == n) | (jj == 0) | (jj == n)

    cj, ci = np.divmod(np.arange(n * n), n)
    sw = cj * (n + 1) + ci
    se = sw + 1
    nw = sw + (n + 1)
    ne = nw + 1
    # Both triangles have their right angle at vertex 0 and are counterclockwise.
    lower = np.column_stack([se, ne, sw])
    upper = np.column_stack([nw, sw, ne])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    return Mesh(level=level, bc=bc, nodes=nodes, triangles=triangles, boundary_mask=boundary)


@dataclass(frozen=True, eq=False)
class ProlongationMap:
    coarse_level: int
    fine_level: int
    vertex_copies: dict = field(repr=False)
    edge_midpoints: dict = field(repr=False)
    # array form of the two maps: fine node -> (coarse a, coarse b); a == b for copies
    _ends: np.ndarray = field(repr=False)
    n_coarse: int = 0

    def __len__(self) -> int:
        return self._ends.shape[0]


def build_prolongation(coarse: Mesh, fine: Mesh) -> ProlongationMap:
    if fine.level != coarse.level + 1:
        raise ValueError(f"fine level {fine.level} must equal coarse level {coarse.level} + 1")
    if fine.bc != coarse.bc:
        raise ValueError("coarse and fine meshes must share the boundary condition")

    nf = fine.n
    J, I = np.divmod(np.arange(fine.n_nodes), nf + 1)
    ia, ja = I // 2, J // 2
    ib = ia + (I % 2)
    jb = ja + (J % 2)
    a = coarse.node_index(ia, ja)
    b = coarse.node_index(ib, jb)
    ends = np.column_stack([a, b])

    copies = {int(f): int(c) for f, c, d in zip(range(fine.n_nodes), a, b) if c == d}
    mids = {int(f): (int(c), int(d)) for f, c, d in zip(range(fine.n_nodes), a, b) if c != d}
    return ProlongationMap(coarse.level, fine.level, copies, mids, ends, coarse.n_nodes)


def prolong(pmap: ProlongationMap, coarse_vec) -> np.ndarray:
    """Fine nodal values of the coarse P1 function (exact interpolation).

    Accepts a vector of length ``n_coarse`` or an array with that leading axis.
    """
    coarse_vec = np.asarray(coarse_vec, dtype=float)
    if coarse_vec.shape[0] != pmap.n_coarse:
        raise ValueError(f"expected {pmap.n_coarse} coarse nodal values, got {coarse_vec.shape[0]}")
    ends = pmap._ends
    return 0.5 * (coarse_vec[ends[:, 0]] + coarse_vec[ends[:, 1]])
