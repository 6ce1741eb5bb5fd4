"""Triangle mesh with halfedge connectivity.

Faces are stored as index triples with counterclockwise orientation when seen
from outside.  Halfedge h = 3*f + k runs from corner k to corner k+1 of face
f, so `next` is index arithmetic and only the twin map is stored explicitly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger: logging.Logger = logging.getLogger(__name__)


class MeshError(Exception):
    """Raised for topologically or numerically invalid mesh input.

    Carries a `details` dict suitable for JSON diagnostics.
    """

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = dict(details)


def _he_next(h: int) -> int:
    return h - h % 3 + (h + 1) % 3


def _he_prev(h: int) -> int:
    return h - h % 3 + (h + 2) % 3


@dataclass
class Mesh:
    """Manifold triangle mesh. Multiple connected components are allowed."""

    vertices: np.ndarray  # (n, 3) float64
    faces: np.ndarray     # (f, 3) int64, CCW

    twin: np.ndarray = field(init=False)          # (3f,), -1 on boundary
    edges: np.ndarray = field(init=False)         # (m, 2) each sorted (i < j)
    edge_of_halfedge: np.ndarray = field(init=False)  # (3f,)
    halfedge_of_edge: np.ndarray = field(init=False)  # (m,) a representative
    vertex_out: np.ndarray = field(init=False)    # (n,) one outgoing halfedge
    boundary_vertex: np.ndarray = field(init=False)   # (n,) bool

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertex array must be (n, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("face array must be (f, 3)")
        self._build_connectivity()

    # -- construction ------------------------------------------------------

    def _build_connectivity(self):
        n = len(self.vertices)
        f = len(self.faces)
        if f == 0:
            raise MeshError("mesh has no faces")
        if self.faces.min() < 0 or self.faces.max() >= n:
            raise MeshError("face index out of range",
                            max_index=int(self.faces.max()), vertex_count=n)
        bad = self.faces[(self.faces[:, 0] == self.faces[:, 1])
                         | (self.faces[:, 1] == self.faces[:, 2])
                         | (self.faces[:, 2] == self.faces[:, 0])]
        if len(bad):
            raise MeshError("degenerate face with repeated vertex",
                            faces=bad.tolist())

        src = self.faces.ravel()
        dst = self.faces[:, [1, 2, 0]].ravel()

        directed: dict[tuple[int, int], int] = {}
        for h in range(3 * f):
            key = (int(src[h]), int(dst[h]))
            if key in directed:
                raise MeshError(
                    "directed edge repeated; non-manifold or inconsistently "
                    "oriented faces", edge=list(key),
                    faces=[directed[key] // 3, h // 3])
            directed[key] = h

        twin = np.full(3 * f, -1, dtype=np.int64)
        edge_index: dict[tuple[int, int], int] = {}
        edge_list: list[tuple[int, int]] = []
        edge_rep: list[int] = []
        edge_of_he = np.empty(3 * f, dtype=np.int64)
        for h in range(3 * f):
            a, b = int(src[h]), int(dst[h])
            opp = directed.get((b, a))
            if opp is not None:
                twin[h] = opp
            key = (a, b) if a < b else (b, a)
            e = edge_index.get(key)
            if e is None:
                e = len(edge_list)
                edge_index[key] = e
                edge_list.append(key)
                edge_rep.append(h)
            edge_of_he[h] = e
        self.twin = twin
        self.edges = np.array(edge_list, dtype=np.int64).reshape(-1, 2)
        self.edge_of_halfedge = edge_of_he
        self.halfedge_of_edge = np.array(edge_rep, dtype=np.int64)

        vertex_out = np.full(n, -1, dtype=np.int64)
        for h in range(3 * f):
            v = int(src[h])
            # prefer a boundary-starting halfedge so fans traverse fully
            if vertex_out[v] < 0:
                vertex_out[v] = h
        # rewind to the clockwise-most outgoing halfedge at boundary vertices
        for v in range(n):
            h = int(vertex_out[v])
            if h < 0:
                raise MeshError("isolated vertex", vertex=v)
            start = h
            while True:
                t = twin[h]
                if t < 0:
                    vertex_out[v] = h
                    break
                h2 = _he_next(int(t))
                if h2 == start:
                    break
                h = h2
        self.vertex_out = vertex_out

        on_boundary = np.zeros(n, dtype=bool)
        for h in np.nonzero(twin < 0)[0]:
            on_boundary[src[h]] = True
            on_boundary[dst[h]] = True
        self.boundary_vertex = on_boundary

        self._check_vertex_fans()

    def _check_vertex_fans(self):
        """Every vertex's incident faces must form a single fan (no bowties)."""
        n = len(self.vertices)
        incident = np.zeros(n, dtype=np.int64)
        np.add.at(incident, self.faces.ravel(), 1)
        for v in range(n):
            seen = len(self.faces_around_vertex(v))
            if seen != incident[v]:
                raise MeshError("non-manifold vertex (bowtie)", vertex=v,
                                fan_faces=seen, incident_faces=int(incident[v]))

    # -- traversal ---------------------------------------------------------

    def halfedge_count(self) -> int:
        return 3 * len(self.faces)

    def halfedge_src(self, h: int) -> int:
        return int(self.faces[h // 3, h % 3])

    def halfedge_dst(self, h: int) -> int:
        return int(self.faces[h // 3, (h + 1) % 3])

    def outgoing_halfedges(self, v: int) -> list[int]:
        """Outgoing halfedges around v in counterclockwise order."""
        out = []
        h = int(self.vertex_out[v])
        start = h
        while True:
            out.append(h)
            t = self.twin[_he_prev(h)]
            if t < 0:
                break
            h = int(t)
            if h == start:
                break
        return out

    def faces_around_vertex(self, v: int) -> list[int]:
        return [h // 3 for h in self.outgoing_halfedges(v)]

    def vertex_ring(self, v: int) -> list[int]:
        """Neighbor vertices in CCW order; for boundary vertices the final
        clockwise neighbor is appended to close the fan."""
        hs = self.outgoing_halfedges(v)
        ring = [self.halfedge_dst(h) for h in hs]
        last_in = _he_prev(hs[-1])
        if self.twin[last_in] < 0:
            ring.append(self.halfedge_src(last_in))
        return ring

    # -- measures and topology --------------------------------------------

    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 0]] - self.vertices[self.edges[:, 1]]
        return np.linalg.norm(d, axis=1)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self) -> float:
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def vertex_components(self) -> np.ndarray:
        """Connected component label per vertex."""
        n = len(self.vertices)
        label = np.full(n, -1, dtype=np.int64)
        nxt = 0
        for seed in range(n):
            if label[seed] >= 0:
                continue
            stack = [seed]
            label[seed] = nxt
            while stack:
                v = stack.pop()
                for w in self.vertex_ring(v):
                    if label[w] < 0:
                        label[w] = nxt
                        stack.append(w)
            nxt += 1
        return label

    def boundary_loops(self) -> list[list[int]]:
        """Vertex ids of each boundary loop, walked in order."""
        boundary_he = np.nonzero(self.twin < 0)[0]
        nxt_boundary = {self.halfedge_dst(int(h)): int(h) for h in boundary_he}
        loops: list[list[int]] = []
        seen: set[int] = set()
        for h in boundary_he:
            h = int(h)
            if h in seen:
                continue
            loop = []
            cur = h
            while cur not in seen:
                seen.add(cur)
                loop.append(self.halfedge_src(cur))
                cur = nxt_boundary[self.halfedge_src(cur)]
            loops.append(loop)
        return loops

    def component_stats(self) -> list[dict]:
        """Per component: vertex/edge/face counts, boundary loop count, genus."""
        label = self.vertex_components()
        k = int(label.max()) + 1
        stats = []
        face_label = label[self.faces[:, 0]]
        edge_label = label[self.edges[:, 0]]
        boundary_he = np.nonzero(self.twin < 0)[0]
        # count boundary loops by walking unvisited boundary halfedges
        loops_of = np.zeros(k, dtype=np.int64)
        visited: set[int] = set()
        nxt_boundary: dict[int, int] = {}
        for h in boundary_he:
            nxt_boundary[self.halfedge_dst(int(h))] = int(h)
        for h in boundary_he:
            h = int(h)
            if h in visited:
                continue
            loops_of[label[self.halfedge_src(h)]] += 1
            cur = h
            while cur not in visited:
                visited.add(cur)
                cur = nxt_boundary[self.halfedge_src(cur)]
        for c in range(k):
            nv = int((label == c).sum())
            ne = int((edge_label == c).sum())
            nf = int((face_label == c).sum())
            chi = nv - ne + nf
            b = int(loops_of[c])
            g2 = 2 - chi - b
            if g2 < 0 or g2 % 2:
                raise MeshError("inconsistent Euler characteristic",
                                component=c, chi=chi, boundary_loops=b)
            stats.append({"vertices": nv, "edges": ne, "faces": nf,
                          "chi": chi, "boundary_loops": b, "genus": g2 // 2})
        return stats

    def genus(self) -> int:
        """Genus of a single-component mesh."""
        stats = self.component_stats()
        if len(stats) != 1:
            raise MeshError("genus of multi-component mesh is per component",
                            components=len(stats))
        return stats[0]["genus"]

    def is_closed(self) -> bool:
        return bool((self.twin >= 0).all())


# -- OBJ input/output ------------------------------------------------------


def load_obj(path: str) -> Mesh:
    """Load an ASCII OBJ file. Quads are fan-triangulated; larger polygons
    are rejected."""
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshError("malformed vertex line", line=lineno)
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif parts[0] == "f":
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/")[0]
                    i = int(head)
                    if i < 0:
                        i = len(verts) + 1 + i
                    idx.append(i - 1)
                if len(idx) == 3:
                    faces.append(idx)
                elif len(idx) == 4:
                    faces.append([idx[0], idx[1], idx[2]])
                    faces.append([idx[0], idx[2], idx[3]])
                else:
                    raise MeshError("only triangle and quad faces supported",
                                    line=lineno, arity=len(idx))
    if not verts:
        raise MeshError("no vertices in OBJ", path=path)
    return Mesh(np.array(verts, dtype=np.float64),
                np.array(faces, dtype=np.int64))


def save_obj(mesh: Mesh, path: str):
    with open(path, "w", encoding="utf-8") as fh:
        for p in mesh.vertices:
            fh.write(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# -- cleaning and normalization -------------------------------------------


def _link_condition(mesh: Mesh, e: int) -> bool:
    """Edge collapse keeps the complex manifold iff the vertex links of the
    endpoints intersect in exactly the opposite vertices of the shared faces."""
    i, j = (int(v) for v in mesh.edges[e])
    ring_i = set(mesh.vertex_ring(i))
    ring_j = set(mesh.vertex_ring(j))
    shared = ring_i & ring_j
    h = int(mesh.halfedge_of_edge[e])
    expected = 2 if mesh.twin[h] >= 0 else 1
    if len(shared) != expected:
        return False
    if mesh.twin[h] >= 0 and mesh.boundary_vertex[i] and mesh.boundary_vertex[j]:
        return False  # interior edge between boundary vertices would pinch
    return True


def validate_and_clean(mesh: Mesh, min_edge: float | None = None) -> Mesh:
    """Collapse edges shorter than `min_edge` (default 1e-5 of the bbox
    diagonal).  Raises when a required collapse violates the link condition.
    """
    if min_edge is None:
        min_edge = 1e-5
    threshold = min_edge * mesh.bbox_diagonal()
    passes = 0
    while True:
        lengths = mesh.edge_lengths()
        short = np.nonzero(lengths < threshold)[0]
        if len(short) == 0:
            return mesh
        passes += 1
        if passes > 64:
            raise MeshError("edge collapse did not converge",
                            remaining=len(short))
        order = short[np.argsort(lengths[short], kind="stable")]
        rejected = [int(e) for e in order if not _link_condition(mesh, int(e))]
        if rejected:
            raise MeshError(
                "edge collapse would create a non-manifold configuration",
                edges=[mesh.edges[e].tolist() for e in rejected])
        touched = np.zeros(len(mesh.vertices), dtype=bool)
        parent = np.arange(len(mesh.vertices))
        new_pos = mesh.vertices.copy()
        collapsed = 0
        for e in order:
            i, j = (int(v) for v in mesh.edges[e])
            if touched[i] or touched[j]:
                continue  # defer to the next pass
            touched[i] = touched[j] = True
            parent[j] = i
            new_pos[i] = 0.5 * (mesh.vertices[i] + mesh.vertices[j])
            collapsed += 1
        logger.debug("collapse pass %d: %d edges", passes, collapsed)
        faces = parent[mesh.faces]
        keep = ((faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2])
                & (faces[:, 2] != faces[:, 0]))
        faces = faces[keep]
        used = np.zeros(len(mesh.vertices), dtype=bool)
        used[faces.ravel()] = True
        remap = np.cumsum(used) - 1
        mesh = Mesh(new_pos[used], remap[faces])


@dataclass
class NormalizationTransform:
    """out = scale * p + translation, mapping the input bbox into [0, 1]^3."""

    scale: float
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points * self.scale + self.translation

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (points - self.translation) / self.scale


def normalize_unit_box(mesh: Mesh) -> tuple[Mesh, NormalizationTransform]:
    lo, hi = mesh.bbox()
    extent = float((hi - lo).max())
    if extent <= 0:
        raise MeshError("mesh has zero extent")
    scale = 1.0 / extent
    transform = NormalizationTransform(scale, -lo * scale)
    return Mesh(transform.apply(mesh.vertices), mesh.faces.copy()), transform
