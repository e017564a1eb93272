import numpy as np
import pytest

from vemsad.errors import (EmptyDirichletError, GeometryError, TopologyError)
from vemsad.mesh import (DIRICHLET, NEUMANN, MomentTable, PolyMesh,
                         build_structured_mesh, check_regularity,
                         classify_boundary)

from conftest import single_prism_cell, single_voronoi_cell


def test_hex_mesh_counts(hex2):
    assert hex2.num_cells == 8
    assert hex2.num_vertices == 27
    assert hex2.num_faces == 36
    assert hex2.num_edges == 54
    assert len(hex2.boundary_faces) == 24


def test_hex_mesh_volumes(hex2):
    np.testing.assert_allclose(hex2.geom.cell_volume, 0.125, rtol=1e-14)
    assert hex2.geom.cell_volume.sum() == pytest.approx(1.0, rel=1e-14)
    np.testing.assert_allclose(hex2.geom.cell_h, np.sqrt(3) / 2, rtol=1e-14)


def test_prism_mesh_counts(prism2):
    assert prism2.num_cells == 16
    assert prism2.geom.cell_volume.sum() == pytest.approx(1.0, rel=1e-13)
    np.testing.assert_allclose(prism2.geom.cell_volume, 1 / 16, rtol=1e-13)


def test_face_normals_unit(hex2):
    np.testing.assert_allclose(
        np.linalg.norm(hex2.geom.face_normal, axis=1), 1.0, rtol=1e-14)


def test_cell_face_signs_outward(hex2):
    for ci in range(hex2.num_cells):
        for f, s in zip(hex2.cells[ci], hex2.cell_face_sign[ci]):
            out = (hex2.geom.face_centroid[f] - hex2.geom.cell_centroid[ci])
            assert out @ (s * hex2.geom.face_normal[f]) > 0


def test_face_cells_owner_first(hex2):
    for f in range(hex2.num_faces):
        c0, c1 = hex2.face_cells[f]
        assert c0 >= 0
        if c1 >= 0:
            assert c0 < c1


def test_quadrature_weights_sum(hex2):
    for fi in (0, 5, 11):
        _, wts = hex2.face_quadrature(fi, 4)
        assert wts.sum() == pytest.approx(hex2.geom.face_area[fi], rel=1e-13)
    for ci in (0, 7):
        _, wts = hex2.cell_quadrature(ci, 4)
        assert wts.sum() == pytest.approx(hex2.geom.cell_volume[ci], rel=1e-13)


def test_quadrature_memoized(hex2):
    a = hex2.cell_quadrature(0, 3)
    b = hex2.cell_quadrature(0, 3)
    assert a[0] is b[0]


def test_voronoi_and_prism_cells_valid():
    for mesh in (single_prism_cell(), single_voronoi_cell()):
        assert mesh.num_cells == 1
        assert mesh.geom.cell_volume[0] > 0
        _, wts = mesh.cell_quadrature(0, 2)
        assert wts.sum() == pytest.approx(mesh.geom.cell_volume[0], rel=1e-12)


# --- moment table -----------------------------------------------------------

def test_cell_moments_unit_cube(unit_cube, unit_cube_mt):
    mom = unit_cube_mt.cell_moments(0, 2)
    h = unit_cube.geom.cell_h[0]
    assert h == pytest.approx(np.sqrt(3), rel=1e-14)
    assert mom[0] == pytest.approx(1.0, rel=1e-13)          # volume
    np.testing.assert_allclose(mom[1:4], 0.0, atol=1e-14)   # centered
    # int ((x - 1/2)/h)^2 = (1/12) / h^2 = 1/36
    exps = unit_cube.cell_basis(0, 2).exponents
    for q in range(4, 10):
        e = exps[q]
        expect = 1 / 36 if 2 in e else 0.0
        assert mom[q] == pytest.approx(expect, abs=1e-14)


def test_face_moments_constant_is_area(hex2, hex2_mt):
    for fi in (0, 17):
        mom = hex2_mt.face_moments(fi, 2)
        assert mom[0] == pytest.approx(hex2.geom.face_area[fi], rel=1e-13)
        np.testing.assert_allclose(mom[1:3], 0.0, atol=1e-14)


def test_cell_gram_spd(hex2, hex2_mt):
    G = hex2_mt.cell_gram(0, 2)
    np.testing.assert_allclose(G, G.T, atol=1e-15)
    assert np.linalg.eigvalsh(G).min() > 0


def test_moments_match_quadrature_on_voronoi():
    mesh = single_voronoi_cell(3)
    mt = MomentTable(mesh)
    mom = mt.cell_moments(0, 3)
    pts, wts = mesh.cell_quadrature(0, 3)
    ref = wts @ mesh.cell_basis(0, 3).eval(pts)
    np.testing.assert_allclose(mom, ref, rtol=1e-12, atol=1e-15)


# --- validation -------------------------------------------------------------

def test_nonplanar_face_rejected():
    verts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0.2], [0, 1, 0],
                      [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]], float)
    faces = [[0, 1, 2, 3], [4, 5, 6, 7], [0, 1, 5, 4],
             [1, 2, 6, 5], [2, 3, 7, 6], [3, 0, 4, 7]]
    with pytest.raises(GeometryError):
        PolyMesh(verts, faces, [list(range(6))])


def test_open_cell_rejected():
    mesh = build_structured_mesh("hex", 1)
    faces = [np.array(f) for f in mesh.faces]
    with pytest.raises(TopologyError):
        PolyMesh(mesh.vertices, faces, [[0, 1, 2, 3, 4]])  # one face missing


def test_inverted_cell_rejected():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 0]], float)
    with pytest.raises(GeometryError):
        PolyMesh(verts, [[0, 1, 2], [0, 3, 1], [1, 3, 2], [2, 3, 0]],
                 [[0, 1, 2, 3]])


# --- boundary classification ------------------------------------------------

def test_classify_boundary_tags(hex2):
    mesh = classify_boundary(
        hex2, lambda c: "N" if c[2] > 0.99 else "D", name="t")
    tags = mesh.boundary_tags["t"]
    assert np.count_nonzero(tags == NEUMANN) == 4
    assert np.count_nonzero(tags == DIRICHLET) == 20
    interior = np.setdiff1d(np.arange(mesh.num_faces), mesh.boundary_faces)
    assert np.all(tags[interior] == 0)


def test_classify_boundary_needs_dirichlet(hex2):
    with pytest.raises(EmptyDirichletError):
        classify_boundary(hex2, lambda c: "N", name="bad")


def test_classify_boundary_rejects_junk(hex2):
    with pytest.raises(ValueError):
        classify_boundary(hex2, lambda c: "X", name="bad2")


# --- regularity -------------------------------------------------------------

def test_regularity_structured(hex2):
    rep = check_regularity(hex2, rho=0.2)
    assert rep.pass_fraction == 1.0
    # a stricter rho than the centroid-face distance ratio must fail
    rep = check_regularity(hex2, rho=0.5)
    assert rep.pass_fraction == 0.0
