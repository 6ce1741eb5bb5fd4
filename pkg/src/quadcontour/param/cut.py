"""Cutting to a disk and greedy flat layout.

The flattened metric from the conformal stage is intrinsically flat away from
cones, so each component can be unfolded into the plane once it is cut open
to a disk.  The cut graph is a spanning set of shortest edge paths connecting
the cones, extended by handle loops (tree-cotree construction) for positive
genus and by arcs joining boundary loops for multiply-connected open
components.  Faces are then placed breadth-first: each new triangle is pinned
by its two already-placed corners and the metric lengths of the remaining
sides.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from quadcontour.mesh import Mesh

logger: logging.Logger = logging.getLogger(__name__)


class LayoutError(Exception):
    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = dict(details)


@dataclass
class SeamedParameterization:
    """Per-corner uv atlas with seam correspondences.

    `corner_uv[f, k]` is the parametric image of corner k of face f.  Corners
    of the same vertex that are separated by a cut get distinct copies; the
    copy index is `corner_copy[f, k]` and `copy_vertex` maps copies back to
    mesh vertices.  `seam_halfedges` pairs the two halfedges of every cut
    edge, whose uv images match in length.  Charts are attached by
    `build_charts`.
    """

    mesh: Mesh
    corner_uv: np.ndarray       # (f, 3, 2)
    corner_copy: np.ndarray     # (f, 3) int
    copy_vertex: np.ndarray     # (n_copies,) int
    seam_halfedges: np.ndarray  # (s, 2) halfedge id pairs
    cut_edges: np.ndarray       # (s,) edge ids
    cones: np.ndarray           # vertex ids in mesh indexing
    charts: object | None = None
    diagnostics: dict = field(default_factory=dict)

    def is_cone(self) -> np.ndarray:
        mask = np.zeros(len(self.mesh.vertices), dtype=bool)
        if len(self.cones):
            mask[self.cones] = True
        return mask


class _UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)

    def find(self, a: int) -> int:
        p = self.parent
        root = a
        while p[root] != root:
            root = p[root]
        while p[a] != root:
            p[a], a = root, p[a]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def _boundary_collapse_labels(mesh: Mesh) -> tuple[np.ndarray, list[int]]:
    """Relabel each boundary loop to a single node for cut-graph purposes.

    Returns per-vertex labels and the list of loop label ids.
    """
    n = len(mesh.vertices)
    labels = np.arange(n, dtype=np.int64)
    loop_labels = []
    for loop in mesh.boundary_loops():
        rep = loop[0]
        labels[loop] = rep
        loop_labels.append(rep)
    return labels, loop_labels


def _shortest_cone_paths(mesh: Mesh, lengths: np.ndarray,
                         cones: np.ndarray) -> set[int]:
    """Edge ids forming shortest paths that connect all cones per component.

    Boundary edges get zero weight so paths may ride along boundary loops
    without adding cut edges (they are dropped from the cut set later).
    """
    n = len(mesh.vertices)
    w = lengths.copy()
    boundary_edge = mesh.twin[mesh.halfedge_of_edge] < 0
    w[boundary_edge] = 0.0
    i, j = mesh.edges[:, 0], mesh.edges[:, 1]
    graph = coo_matrix((w, (i, j)), shape=(n, n))
    graph = graph + graph.T

    comp = mesh.vertex_components()
    chosen: set[int] = set()
    edge_key = {(int(a), int(b)): e for e, (a, b) in enumerate(mesh.edges)}

    for c in range(int(comp.max()) + 1):
        cone_here = [int(v) for v in cones if comp[v] == c]
        if len(cone_here) < 2:
            continue
        reached = {cone_here[0]}
        remaining = set(cone_here[1:])
        while remaining:
            dist, pred, _ = dijkstra(graph, indices=sorted(reached),
                                     return_predecessors=True, min_only=True)
            best = min(remaining, key=lambda v: dist[v])
            if not np.isfinite(dist[best]):
                raise LayoutError("cones not connected in mesh graph",
                                  component=c)
            v = best
            while pred[v] >= 0:
                u = int(pred[v])
                key = (u, v) if u < v else (v, u)
                e = edge_key[key]
                if not boundary_edge[e]:
                    chosen.add(e)
                reached.add(v)
                v = u
            remaining.discard(best)
    return chosen


def _cut_edge_set(mesh: Mesh, lengths: np.ndarray,
                  cones: np.ndarray) -> np.ndarray:
    """Select the edges to cut along.

    Spanning tree (seeded with the shortest cone paths) plus the leftover
    edges of a dual spanning tree, pruned back to the paths and loops that
    topology actually needs.
    """
    labels, loop_labels = _boundary_collapse_labels(mesh)
    boundary_edge = mesh.twin[mesh.halfedge_of_edge] < 0

    tree: set[int] = set()
    uf = _UnionFind(len(mesh.vertices))
    for e in sorted(_shortest_cone_paths(mesh, lengths, cones)):
        a, b = (int(labels[v]) for v in mesh.edges[e])
        if uf.union(a, b):
            tree.add(e)
    order = np.argsort(lengths)
    for e in order:
        e = int(e)
        if boundary_edge[e]:
            continue
        a, b = (int(labels[v]) for v in mesh.edges[e])
        if a != b and uf.union(a, b):
            tree.add(e)

    dual = _UnionFind(len(mesh.faces))
    leftover: list[int] = []
    for e in order:
        e = int(e)
        if boundary_edge[e] or e in tree:
            continue
        h = int(mesh.halfedge_of_edge[e])
        f1, f2 = h // 3, int(mesh.twin[h]) // 3
        if not dual.union(f1, f2):
            leftover.append(e)

    cut = tree | set(leftover)
    terminals = {int(labels[v]) for v in cones} | {int(l) for l in loop_labels}
    return _prune_cut_graph(mesh, cut, labels, terminals)


def _prune_cut_graph(mesh: Mesh, cut: set[int], labels: np.ndarray,
                     terminals: set[int]) -> np.ndarray:
    incident: dict[int, set[int]] = {}
    for e in cut:
        for v in mesh.edges[e]:
            incident.setdefault(int(labels[v]), set()).add(e)
    queue = [v for v, es in incident.items()
             if len(es) == 1 and v not in terminals]
    while queue:
        v = queue.pop()
        es = incident.get(v)
        if es is None or len(es) != 1:
            continue
        e = es.pop()
        cut.discard(e)
        del incident[v]
        for u in (int(labels[x]) for x in mesh.edges[e]):
            if u == v or u not in incident:
                continue
            incident[u].discard(e)
            if len(incident[u]) == 1 and u not in terminals:
                queue.append(u)
    return np.array(sorted(cut), dtype=np.int64)


def _corner_copies(mesh: Mesh, cut: np.ndarray) \
        -> tuple[np.ndarray, np.ndarray]:
    """Split each vertex fan into wedges at cut edges and boundary gaps."""
    is_cut = np.zeros(len(mesh.edges), dtype=bool)
    is_cut[cut] = True
    corner_copy = np.full(mesh.faces.shape, -1, dtype=np.int64)
    parents: list[int] = []
    for v in range(len(mesh.vertices)):
        hs = mesh.outgoing_halfedges(v)
        breaks = [bool(is_cut[mesh.edge_of_halfedge[h]]) for h in hs]
        circular = not mesh.boundary_vertex[v]
        if circular and not any(breaks):
            cid = len(parents)
            parents.append(v)
            for h in hs:
                corner_copy[h // 3, h % 3] = cid
            continue
        if circular:
            start = breaks.index(True)
            hs = hs[start:] + hs[:start]
            breaks = breaks[start:] + breaks[:start]
        cid = -1
        for h, brk in zip(hs, breaks):
            if brk or cid < 0:
                cid = len(parents)
                parents.append(v)
            corner_copy[h // 3, h % 3] = cid
    return corner_copy, np.array(parents, dtype=np.int64)


def _check_disk_topology(mesh: Mesh, corner_copy: np.ndarray,
                         n_copies: int, n_components: int):
    pairs = np.concatenate([
        corner_copy[:, [0, 1]], corner_copy[:, [1, 2]],
        corner_copy[:, [2, 0]]])
    pairs.sort(axis=1)
    pairs = np.unique(pairs, axis=0)

    uf = _UnionFind(n_copies)
    for a, b in pairs:
        uf.union(int(a), int(b))
    root = np.array([uf.find(i) for i in range(n_copies)])
    uniq, idx = np.unique(root, return_inverse=True)
    if len(uniq) != n_components:
        raise LayoutError("cut graph separated a component",
                          pieces=len(uniq), components=n_components)
    nv = np.bincount(idx, minlength=len(uniq))
    ne = np.bincount(idx[pairs[:, 0]], minlength=len(uniq))
    nf = np.bincount(idx[corner_copy[:, 0]], minlength=len(uniq))
    chi = nv - ne + nf
    if (chi != 1).any():
        raise LayoutError(
            "cut mesh is not a union of disks; cut graph misses a handle",
            chi=chi.tolist())


def _place_faces(mesh: Mesh, lengths: np.ndarray, corner_copy: np.ndarray,
                 n_copies: int, is_cut: np.ndarray) -> np.ndarray:
    """Breadth-first layout; each face pinned by two placed corners."""
    fl = lengths[mesh.edge_of_halfedge].reshape(-1, 3)
    pos = np.full((n_copies, 2), np.nan)
    placed_face = np.zeros(len(mesh.faces), dtype=bool)
    comp = mesh.vertex_components()[mesh.faces[:, 0]]

    from collections import deque
    queue: deque[int] = deque()
    for c in range(int(comp.max()) + 1):
        f0 = int(np.nonzero(comp == c)[0][0])
        a, b, cc = corner_copy[f0]
        l01, l12, l20 = fl[f0]
        pos[a] = (0.0, 0.0)
        pos[b] = (l01, 0.0)
        pos[cc] = _third_point(pos[a], pos[b], l20, l12)
        placed_face[f0] = True
        queue.append(f0)

    while queue:
        f = queue.popleft()
        for k in range(3):
            h = 3 * f + k
            t = int(mesh.twin[h])
            if t < 0 or is_cut[mesh.edge_of_halfedge[h]]:
                continue
            g = t // 3
            if placed_face[g]:
                continue
            kk = t % 3
            a = corner_copy[g, kk]
            b = corner_copy[g, (kk + 1) % 3]
            c = corner_copy[g, (kk + 2) % 3]
            if np.isnan(pos[c]).any():
                la = fl[g, (kk + 2) % 3]  # |c - a|
                lb = fl[g, (kk + 1) % 3]  # |c - b|
                pos[c] = _third_point(pos[a], pos[b], la, lb)
            placed_face[g] = True
            queue.append(g)

    if not placed_face.all():
        raise LayoutError("layout did not reach every face",
                          missing=int((~placed_face).sum()))
    return pos


def _third_point(a: np.ndarray, b: np.ndarray,
                 ra: float, rb: float) -> np.ndarray:
    """Intersection of circles around a and b, on the left of a -> b."""
    ab = b - a
    d = float(np.hypot(ab[0], ab[1]))
    x = (d * d + ra * ra - rb * rb) / (2 * d)
    y2 = ra * ra - x * x
    y = np.sqrt(max(y2, 0.0))
    ex = ab / d
    ey = np.array([-ex[1], ex[0]])
    return a + x * ex + y * ey


def cut_and_layout(mesh: Mesh, lengths: np.ndarray,
                   cones: np.ndarray) -> SeamedParameterization:
    """Cut each component to a disk and unfold it with the given metric.

    `lengths` are per-edge metric lengths (from the conformal stage).  The
    result satisfies: all parametric triangles positively oriented, seam
    images equal in length, and corner angles of every interior non-cone
    vertex summing to 2*pi jointly over its copies.
    """
    cones = np.asarray(cones, dtype=np.int64)
    cut = _cut_edge_set(mesh, lengths, cones)
    is_cut = np.zeros(len(mesh.edges), dtype=bool)
    is_cut[cut] = True

    missing = [int(v) for v in cones
               if not any(is_cut[mesh.edge_of_halfedge[h]]
                          for h in mesh.outgoing_halfedges(v))]
    if missing:
        raise LayoutError("cone vertex not reached by the cut graph",
                          vertices=missing)

    corner_copy, copy_vertex = _corner_copies(mesh, cut)
    n_components = int(mesh.vertex_components().max()) + 1
    _check_disk_topology(mesh, corner_copy, len(copy_vertex), n_components)
    pos = _place_faces(mesh, lengths, corner_copy, len(copy_vertex), is_cut)
    uv = pos[corner_copy]

    seam = np.array([[int(mesh.halfedge_of_edge[e]),
                      int(mesh.twin[mesh.halfedge_of_edge[e]])]
                     for e in cut], dtype=np.int64).reshape(-1, 2)

    param = SeamedParameterization(
        mesh=mesh, corner_uv=uv, corner_copy=corner_copy,
        copy_vertex=copy_vertex, seam_halfedges=seam,
        cut_edges=cut, cones=cones)
    param.diagnostics = validate_layout(param)
    logger.info("cut %d edges into %d seams, %d vertex copies, "
                "worst seam mismatch %.2e",
                len(cut), len(seam), len(copy_vertex),
                param.diagnostics["seam_mismatch"])
    return param


def validate_layout(param: SeamedParameterization,
                    tol: float = 1e-8) -> dict:
    """Check layout invariants; raises LayoutError beyond tolerance."""
    mesh, uv = param.mesh, param.corner_uv
    e1 = uv[:, 1] - uv[:, 0]
    e2 = uv[:, 2] - uv[:, 0]
    area2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if (area2 <= 0).any():
        raise LayoutError("flipped or collapsed parametric triangle",
                          faces=np.nonzero(area2 <= 0)[0].tolist()[:8],
                          min_doubled_area=float(area2.min()))

    seam_mismatch = 0.0
    for h1, h2 in param.seam_halfedges:
        l1 = _uv_halfedge_length(uv, int(h1))
        l2 = _uv_halfedge_length(uv, int(h2))
        seam_mismatch = max(seam_mismatch, abs(l1 - l2))
    if seam_mismatch > tol:
        raise LayoutError("seam images differ in length",
                          mismatch=float(seam_mismatch))

    angle = _corner_angles_uv(uv)
    sums = np.zeros(len(mesh.vertices))
    np.add.at(sums, mesh.faces.ravel(), angle.ravel())
    check = ~(mesh.boundary_vertex | param.is_cone())
    angle_residual = float(np.abs(sums[check] - 2 * np.pi).max()) \
        if check.any() else 0.0
    if angle_residual > tol:
        raise LayoutError("angle sums deviate from 2*pi",
                          residual=angle_residual)

    return {"seam_mismatch": float(seam_mismatch),
            "angle_residual": angle_residual,
            "min_doubled_area": float(area2.min())}


def _uv_halfedge_length(uv: np.ndarray, h: int) -> float:
    f, k = h // 3, h % 3
    d = uv[f, (k + 1) % 3] - uv[f, k]
    return float(np.hypot(d[0], d[1]))


def _corner_angles_uv(uv: np.ndarray) -> np.ndarray:
    out = np.empty(uv.shape[:2])
    for k in range(3):
        a = uv[:, (k + 1) % 3] - uv[:, k]
        b = uv[:, (k + 2) % 3] - uv[:, k]
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        dot = (a * b).sum(axis=1)
        out[:, k] = np.arctan2(np.abs(cross), dot)
    return out
