"""One Loop subdivision step restricted to cone neighborhoods.

Faces incident to a cone are 1:4 split with Loop edge masks; neighbors with
split edges are re-triangulated conformingly.  The cone and the interior
vertices of the split faces are repositioned with the Loop vertex mask, which
smooths the area where the flattening concentrates curvature.  Old vertices
keep their indices, so cone ids stay valid.
"""

from __future__ import annotations

import numpy as np

from quadcontour.mesh import Mesh


def _loop_beta(k: int) -> float:
    c = 3.0 / 8.0 + 0.25 * np.cos(2.0 * np.pi / k)
    return (5.0 / 8.0 - c * c) / k


def subdivide_cone_neighborhoods(mesh: Mesh, cones: np.ndarray) -> Mesh:
    if len(cones) == 0:
        return mesh
    cone_set = set(int(c) for c in cones)
    red = np.zeros(len(mesh.faces), dtype=bool)
    for f, tri in enumerate(mesh.faces):
        if any(int(v) in cone_set for v in tri):
            red[f] = True

    split_edges: set[int] = set()
    for f in np.nonzero(red)[0]:
        for k in range(3):
            split_edges.add(int(mesh.edge_of_halfedge[3 * f + k]))

    old = mesh.vertices
    new_pos = old.copy()
    reposition = set()
    for f in np.nonzero(red)[0]:
        for v in mesh.faces[f]:
            if not mesh.boundary_vertex[v]:
                reposition.add(int(v))
    for v in reposition:
        ring = mesh.vertex_ring(v)
        k = len(ring)
        beta = _loop_beta(k)
        new_pos[v] = (1 - k * beta) * old[v] + beta * old[ring].sum(axis=0)

    verts = [p for p in new_pos]
    midpoint: dict[int, int] = {}
    for e in sorted(split_edges):
        i, j = (int(v) for v in mesh.edges[e])
        h = int(mesh.halfedge_of_edge[e])
        t = int(mesh.twin[h])
        if t < 0:
            p = 0.5 * (old[i] + old[j])
        else:
            c = mesh.halfedge_dst(3 * (h // 3) + (h + 1) % 3)
            d = mesh.halfedge_dst(3 * (t // 3) + (t + 1) % 3)
            p = 0.375 * (old[i] + old[j]) + 0.125 * (old[c] + old[d])
        midpoint[e] = len(verts)
        verts.append(p)

    faces: list[list[int]] = []
    for f, tri in enumerate(mesh.faces):
        a, b, c = (int(v) for v in tri)
        eids = [int(mesh.edge_of_halfedge[3 * f + k]) for k in range(3)]
        m = [midpoint.get(e) for e in eids]  # m[0] on (a,b), m[1] on (b,c), m[2] on (c,a)
        count = sum(x is not None for x in m)
        if count == 0:
            faces.append([a, b, c])
        elif count == 3:
            faces.extend([[a, m[0], m[2]], [m[0], b, m[1]],
                          [m[2], m[1], c], [m[0], m[1], m[2]]])
        elif count == 1:
            k = m.index(next(x for x in m if x is not None))
            v = [a, b, c]
            # rotate so the split edge is (v0, v1)
            v = v[k:] + v[:k]
            mm = m[k]
            faces.extend([[v[0], mm, v[2]], [mm, v[1], v[2]]])
        else:  # two split edges
            k = next(i for i in range(3) if m[i] is None)
            # rotate so the unsplit edge is (v2, v0): split are (v0,v1), (v1,v2)
            rot = (k + 1) % 3
            v = [a, b, c][rot:] + [a, b, c][:rot]
            ms = m[rot:] + m[:rot]
            m01, m12 = ms[0], ms[1]
            faces.extend([[m01, v[1], m12], [v[0], m01, m12],
                          [v[0], m12, v[2]]])
    return Mesh(np.array(verts), np.array(faces, dtype=np.int64))
