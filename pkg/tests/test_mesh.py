import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sbbm.mesh import build_prolongation, build_uniform_mesh, prolong


@pytest.mark.parametrize(
    "level, nodes, tris, interior",
    [(0, 4, 2, 0), (1, 9, 8, 1), (5, 1089, 2048, 961)],
)
def test_counts(level, nodes, tris, interior):
    mesh = build_uniform_mesh(level)
    assert mesh.n_nodes == nodes
    assert mesh.n_triangles == tris
    assert np.count_nonzero(~mesh.boundary_mask) == interior
    assert mesh.n_dofs == interior
    assert mesh.h == 2.0 ** -level


@pytest.mark.parametrize("level", range(0, 6))
def test_periodic_dofs(level):
    assert build_uniform_mesh(level, "periodic").n_dofs == 4 ** level
    dofs = build_uniform_mesh(level, "periodic").dof_map()
    assert sorted(set(dofs.tolist())) == list(range(4 ** level))


@pytest.mark.parametrize("level", range(0, 9))
def test_areas(level):
    mesh = build_uniform_mesh(level)
    areas = mesh.signed_areas()
    assert np.all(areas == mesh.h ** 2 / 2)
    assert abs(areas.sum() - 1.0) <= 1e-14


def test_triangles_tile_square():
    # every cell centre-of-triangle lies in exactly one triangle
    mesh = build_uniform_mesh(3)
    p = mesh.nodes[mesh.triangles]
    centroids = p.mean(axis=1)
    for c in centroids:
        d = p - c
        cross = lambda a, b: a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        inside = (cross(d[:, 0], d[:, 1]) > 0) & (cross(d[:, 1], d[:, 2]) > 0) & (cross(d[:, 2], d[:, 0]) > 0)
        assert inside.sum() == 1


def test_boundary_mask():
    mesh = build_uniform_mesh(4)
    x, y = mesh.nodes.T
    expected = (x == 0) | (x == 1) | (y == 0) | (y == 1)
    assert np.array_equal(mesh.boundary_mask, expected)


def test_row_major_ordering():
    mesh = build_uniform_mesh(2)
    assert np.allclose(mesh.nodes[:5, 1], 0)
    assert np.allclose(mesh.nodes[:5, 0], [0, 0.25, 0.5, 0.75, 1])


def test_bad_arguments():
    with pytest.raises(ValueError):
        build_uniform_mesh(-1)
    with pytest.raises(ValueError):
        build_uniform_mesh(2, "neumann")
    with pytest.raises(MemoryError):
        build_uniform_mesh(40)


def test_prolongation_level0_to_1():
    pm = build_prolongation(build_uniform_mesh(0), build_uniform_mesh(1))
    assert len(pm.vertex_copies) == 4
    assert len(pm.edge_midpoints) == 5
    assert set(pm.vertex_copies) | set(pm.edge_midpoints) == set(range(9))
    assert not set(pm.vertex_copies) & set(pm.edge_midpoints)
    # centre of the square is the midpoint of the sw-ne diagonal
    assert pm.edge_midpoints[4] == (0, 3)


def test_prolongation_level_mismatch():
    with pytest.raises(ValueError):
        build_prolongation(build_uniform_mesh(1), build_uniform_mesh(3))
    with pytest.raises(ValueError):
        build_prolongation(build_uniform_mesh(1), build_uniform_mesh(2, "periodic"))
    pm = build_prolongation(build_uniform_mesh(1), build_uniform_mesh(2))
    with pytest.raises(ValueError):
        prolong(pm, np.zeros(4))


def test_prolong_zero_and_midpoint():
    coarse, fine = build_uniform_mesh(1), build_uniform_mesh(2)
    pm = build_prolongation(coarse, fine)
    assert np.all(prolong(pm, np.zeros(9)) == 0)
    v = np.arange(9.0)
    out = prolong(pm, v)
    for f, (a, b) in pm.edge_midpoints.items():
        assert out[f] == (v[a] + v[b]) / 2
    for f, c in pm.vertex_copies.items():
        assert out[f] == v[c]


@given(
    level=st.integers(0, 5),
    a=st.floats(-10, 10),
    b=st.floats(-10, 10),
    c=st.floats(-10, 10),
)
def test_prolong_reproduces_affine(level, a, b, c):
    coarse, fine = build_uniform_mesh(level), build_uniform_mesh(level + 1)
    f = lambda x, y: a * x + b * y + c
    out = prolong(build_prolongation(coarse, fine), coarse.interpolate(f))
    assert np.allclose(out, fine.interpolate(f), rtol=0, atol=1e-12)


def test_two_level_prolongation_matches_direct_interpolation(rng):
    m1, m2, m3 = (build_uniform_mesh(L) for L in (1, 2, 3))
    v = rng.normal(size=m1.n_nodes)
    twice = prolong(build_prolongation(m2, m3), prolong(build_prolongation(m1, m2), v))
    # direct evaluation of the level-1 P1 function at the level-3 nodes
    direct = np.empty(m3.n_nodes)
    for idx, (x, y) in enumerate(m3.nodes):
        i, j = min(int(x / m1.h), m1.n - 1), min(int(y / m1.h), m1.n - 1)
        s, t = x / m1.h - i, y / m1.h - j
        sw, se, nw, ne = (v[m1.node_index(i + di, j + dj)] for di, dj in ((0, 0), (1, 0), (0, 1), (1, 1)))
        direct[idx] = sw + s * (se - sw) + t * (ne - se) if s >= t else sw + t * (nw - sw) + s * (ne - nw)
    assert np.allclose(twice, direct, atol=1e-14)
