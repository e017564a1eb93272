#!/usr/bin/env python3
"""Generate a perforated-cylinder (annulus prism) mesh as a JSON mesh file.

The curved surfaces are approximated by regular polygon segments, so every
face is planar and the mesh is directly usable by the polyhedral solver.
"""

import argparse
from pathlib import Path

import numpy as np

from vemsad.mesh import PolyMesh
from vemsad.meshfile import save_json


def annulus_mesh(r_in=1.0, r_out=5.0, height=5.0,
                 n_theta=16, n_r=3, n_z=4) -> PolyMesh:
    radii = np.linspace(r_in, r_out, n_r + 1)
    thetas = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    zs = np.linspace(0.0, height, n_z + 1)

    def vid(ir, it, iz):
        return (iz * (n_r + 1) + ir) * n_theta + (it % n_theta)

    verts = np.empty(((n_z + 1) * (n_r + 1) * n_theta, 3))
    for iz, z in enumerate(zs):
        for ir, r in enumerate(radii):
            for it, th in enumerate(thetas):
                verts[vid(ir, it, iz)] = (r * np.cos(th), r * np.sin(th), z)

    faces = []
    findex = {}

    def face(loop):
        key = tuple(sorted(loop))
        if key not in findex:
            findex[key] = len(faces)
            faces.append(list(loop))
        return findex[key]

    cells = []
    for iz in range(n_z):
        for ir in range(n_r):
            for it in range(n_theta):
                a = [vid(ir, it, iz), vid(ir, it + 1, iz),
                     vid(ir + 1, it + 1, iz), vid(ir + 1, it, iz)]
                b = [vid(ir, it, iz + 1), vid(ir, it + 1, iz + 1),
                     vid(ir + 1, it + 1, iz + 1), vid(ir + 1, it, iz + 1)]
                cells.append([
                    face(a), face(b),
                    face([a[0], a[1], b[1], b[0]]),   # inner arc side
                    face([a[3], a[2], b[2], b[3]]),   # outer arc side
                    face([a[0], a[3], b[3], b[0]]),   # theta side
                    face([a[1], a[2], b[2], b[1]]),   # theta side
                ])
    return PolyMesh(verts, faces, cells)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--r-in", type=float, default=1.0)
    ap.add_argument("--r-out", type=float, default=5.0)
    ap.add_argument("--height", type=float, default=5.0)
    ap.add_argument("--n-theta", type=int, default=16)
    ap.add_argument("--n-r", type=int, default=3)
    ap.add_argument("--n-z", type=int, default=4)
    ap.add_argument("--out", type=Path, default=Path("annulus.json"))
    args = ap.parse_args()
    mesh = annulus_mesh(args.r_in, args.r_out, args.height,
                        args.n_theta, args.n_r, args.n_z)
    save_json(mesh, args.out)
    print(f"{mesh.num_cells} cells, {mesh.num_faces} faces, "
          f"{mesh.num_vertices} vertices -> {args.out}")


if __name__ == "__main__":
    main()
