import numpy as np
import pytest

from vemsad.mesh import MomentTable, PolyMesh, build_structured_mesh


@pytest.fixture(scope="session")
def unit_cube():
    return build_structured_mesh("hex", 1)


@pytest.fixture(scope="session")
def hex2():
    return build_structured_mesh("hex", 2)


@pytest.fixture(scope="session")
def prism2():
    return build_structured_mesh("prism", 2)


@pytest.fixture(scope="session")
def unit_cube_mt(unit_cube):
    return MomentTable(unit_cube)


@pytest.fixture(scope="session")
def hex2_mt(hex2):
    return MomentTable(hex2)


def single_prism_cell() -> PolyMesh:
    mesh = build_structured_mesh("prism", 1)
    # extract cell 0 as its own mesh
    cfaces = mesh.cells[0]
    verts_used = sorted({int(v) for f in cfaces for v in mesh.faces[f]})
    remap = {v: i for i, v in enumerate(verts_used)}
    faces = [[remap[int(v)] for v in mesh.faces[f]] for f in cfaces]
    return PolyMesh(mesh.vertices[verts_used], faces,
                    [list(range(len(faces)))])


def single_voronoi_cell(seed: int = 0) -> PolyMesh:
    """One bounded Voronoi cell: bisector halfspaces around a central seed."""
    from scipy.spatial import HalfspaceIntersection

    rng = np.random.default_rng(seed)
    c = np.full(3, 0.5)
    neighbors = c + 0.55 * _fibonacci_directions(9) \
        + 0.08 * rng.standard_normal((9, 3))
    halfspaces = []
    for nb in neighbors:
        d = nb - c
        nrm = d / np.linalg.norm(d)
        mid = 0.5 * (nb + c)
        halfspaces.append(np.append(nrm, -nrm @ mid))   # n.x + b <= 0
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        halfspaces.append(np.append(e, -1.0))
        halfspaces.append(np.append(-e, 0.0))
    hs = HalfspaceIntersection(np.array(halfspaces), c)
    verts = hs.intersections
    # dedup vertices
    key = np.round(verts / 1e-9).astype(np.int64)
    _, idx, inv = np.unique(key, axis=0, return_index=True,
                            return_inverse=True)
    verts = verts[idx]
    faces = []
    for n_b in np.array(halfspaces):
        n, b = n_b[:3], n_b[3]
        on = np.nonzero(np.abs(verts @ n + b) < 1e-9)[0]
        if len(on) < 3:
            continue
        # order the loop by angle in the face plane
        fc = verts[on].mean(axis=0)
        t1 = verts[on[0]] - fc
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        ang = np.arctan2((verts[on] - fc) @ t2, (verts[on] - fc) @ t1)
        faces.append([int(v) for v in on[np.argsort(ang)]])
    return PolyMesh(verts, faces, [list(range(len(faces)))])


def _fibonacci_directions(n):
    k = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * k / n)
    theta = np.pi * (1 + 5 ** 0.5) * k
    return np.stack([np.sin(phi) * np.cos(theta),
                     np.sin(phi) * np.sin(theta), np.cos(phi)], axis=-1)
