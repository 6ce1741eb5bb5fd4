"""Cone vertex selection.

Closed genus-0 components get 8 cone vertices, genus-1 components none, and
higher genus 4*(g-1).  Candidate regions come from farthest-point clustering
on graph distances so the cones spread evenly; within each cluster the vertex
with the smallest absolute angle defect is chosen, which keeps cones away
from sharp features.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from quadcontour.mesh import Mesh, MeshError

logger: logging.Logger = logging.getLogger(__name__)


def corner_angles(mesh: Mesh) -> np.ndarray:
    """Interior angle at each face corner, shape (f, 3)."""
    p = mesh.vertices[mesh.faces]
    out = np.empty((len(mesh.faces), 3))
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        cos = np.einsum("ij,ij->i", a, b) / (na * nb)
        out[:, k] = np.arccos(np.clip(cos, -1.0, 1.0))
    return out


def angle_defects(mesh: Mesh) -> np.ndarray:
    """Discrete curvature: 2*pi minus the angle sum (pi at boundary vertices)."""
    sums = np.zeros(len(mesh.vertices))
    np.add.at(sums, mesh.faces.ravel(), corner_angles(mesh).ravel())
    target = np.where(mesh.boundary_vertex, np.pi, 2 * np.pi)
    return target - sums


def cone_count_for_genus(genus: int) -> int:
    if genus == 0:
        return 8
    if genus == 1:
        return 0
    return 4 * (genus - 1)


def _adjacency(mesh: Mesh) -> coo_matrix:
    n = len(mesh.vertices)
    i = np.concatenate([mesh.edges[:, 0], mesh.edges[:, 1]])
    j = np.concatenate([mesh.edges[:, 1], mesh.edges[:, 0]])
    w = np.concatenate([mesh.edge_lengths()] * 2)
    return coo_matrix((w, (i, j)), shape=(n, n))


def pick_cluster_cone(defects: np.ndarray, cluster: np.ndarray,
                      boundary: np.ndarray) -> int:
    """Vertex of smallest |defect| in the cluster; boundary vertices excluded."""
    candidates = cluster[~boundary[cluster]]
    if len(candidates) == 0:
        raise MeshError("cone cluster contains only boundary vertices",
                        cluster=cluster.tolist())
    return int(candidates[np.argmin(np.abs(defects[candidates]))])


def select_cones(mesh: Mesh) -> np.ndarray:
    """Cone vertex ids across all closed components, sorted ascending."""
    labels = mesh.vertex_components()
    stats = mesh.component_stats()
    defects = angle_defects(mesh)
    graph = _adjacency(mesh).tocsr()
    cones: list[int] = []
    for c, st in enumerate(stats):
        if st["boundary_loops"] > 0:
            continue  # open components are flattened with a free boundary
        k = cone_count_for_genus(st["genus"])
        if k == 0:
            continue
        members = np.nonzero(labels == c)[0]
        if len(members) < k:
            raise MeshError("component has fewer vertices than required cones",
                            component=c, vertices=len(members), cones=k)
        seeds = _farthest_point_seeds(graph, members, k)
        dist = dijkstra(graph, directed=False, indices=seeds)
        assign = np.argmin(dist[:, members], axis=0)
        for s in range(k):
            cluster = members[assign == s]
            cones.append(pick_cluster_cone(defects, cluster,
                                           mesh.boundary_vertex))
    logger.debug("selected %d cones", len(cones))
    return np.array(sorted(cones), dtype=np.int64)


def _farthest_point_seeds(graph, members: np.ndarray, k: int) -> np.ndarray:
    start = int(members[0])
    d = dijkstra(graph, directed=False, indices=start)
    seeds = [int(members[np.argmax(d[members])])]
    best = dijkstra(graph, directed=False, indices=seeds[0])
    while len(seeds) < k:
        nxt = int(members[np.argmax(best[members])])
        seeds.append(nxt)
        best = np.minimum(best, dijkstra(graph, directed=False, indices=nxt))
    return np.array(seeds, dtype=np.int64)
