"""Discrete conformal flattening.

Finds per-vertex log scale factors u so that the rescaled edge lengths
l_ij = exp((u_i + u_j) / 2) * L_ij have angle sum 2*pi at every interior
non-cone vertex.  Cones and boundary vertices keep u = 0; a closed component
without either (a torus) gets one gauge vertex pinned.  The system is the
gradient of a convex energy, so Newton steps with a backtracking line search
that keeps every triangle inequality valid converge quadratically.  If the
line search stalls, edges are flipped with Ptolemy lengths (which preserves
the conformal class); a result that needs residual flips cannot be laid out
on the input connectivity and is reported as an error rather than refined.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.sparse import coo_matrix, identity
from scipy.sparse.linalg import splu

from quadcontour.mesh import Mesh

logger: logging.Logger = logging.getLogger(__name__)


class ConformalError(Exception):
    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = dict(details)


class ConformalMetric:
    """Flattened metric: per-edge lengths and per-vertex scale factors."""

    def __init__(self, lengths: np.ndarray, scale_factors: np.ndarray,
                 residual: float, iterations: int, flips: int):
        self.lengths = lengths
        self.scale_factors = scale_factors
        self.residual = residual
        self.iterations = iterations
        self.flips = flips


class _Triangulation:
    """Connectivity plus log edge lengths, supporting Ptolemy edge flips.

    The hot path is fully vectorized; flips mutate the arrays in place and
    are expected to be rare.
    """

    def __init__(self, mesh: Mesh):
        self.faces = mesh.faces.copy()
        self.edges = mesh.edges.copy()
        self.base_log = np.log(mesh.edge_lengths())
        # edge opposite corner k of face f
        self.face_edge = np.empty_like(self.faces)
        for k in range(3):
            self.face_edge[:, k] = mesh.edge_of_halfedge[
                np.arange(len(self.faces)) * 3 + (k + 1) % 3]
        self.flips = 0

    def edge_lengths(self, u: np.ndarray) -> np.ndarray:
        i, j = self.edges[:, 0], self.edges[:, 1]
        return np.exp(self.base_log + 0.5 * (u[i] + u[j]))

    def face_lengths(self, u: np.ndarray) -> np.ndarray:
        return self.edge_lengths(u)[self.face_edge]

    def validity_margin(self, u: np.ndarray) -> np.ndarray:
        fl = self.face_lengths(u)
        return fl.sum(axis=1) - 2 * fl.max(axis=1)

    def flip_invalid_edges(self, u: np.ndarray) -> int:
        done = 0
        for _ in range(16 * len(self.faces) + 16):
            margin = self.validity_margin(u)
            bad = np.nonzero(margin <= 0)[0]
            if len(bad) == 0:
                return done
            f = int(bad[0])
            fl = self.face_lengths(u)[f]
            k = int(np.argmax(fl))
            i = int(self.faces[f, (k + 1) % 3])
            j = int(self.faces[f, (k + 2) % 3])
            if not self._flip(i, j, u):
                raise ConformalError("edge flip failed on a violated triangle",
                                     face=f, edge=[i, j])
            done += 1
        raise ConformalError("edge flipping did not terminate")

    def _flip(self, i: int, j: int, u: np.ndarray) -> bool:
        has_i = (self.faces == i).any(axis=1)
        has_j = (self.faces == j).any(axis=1)
        adj = np.nonzero(has_i & has_j)[0]
        if len(adj) != 2:
            return False
        f1, f2 = (int(f) for f in adj)
        k = int(next(v for v in self.faces[f1] if v not in (i, j)))
        l = int(next(v for v in self.faces[f2] if v not in (i, j)))
        if k == l:
            return False
        ln = self.edge_lengths(u)
        eid = self._edge_id(i, j)
        lik = ln[self._edge_id(i, k)]
        ljl = ln[self._edge_id(j, l)]
        ljk = ln[self._edge_id(j, k)]
        lil = ln[self._edge_id(i, l)]
        new_len = (lik * ljl + ljk * lil) / ln[eid]
        self.edges[eid] = sorted((k, l))
        self.base_log[eid] = np.log(new_len) - 0.5 * (u[k] + u[l])

        def oriented(f, a, b):
            tri = list(self.faces[f])
            return tri[(tri.index(a) + 1) % 3] == b

        if oriented(f1, i, j):
            self.faces[f1] = (i, l, k)
            self.faces[f2] = (j, k, l)
        else:
            self.faces[f1] = (j, l, k)
            self.faces[f2] = (i, k, l)
        for f in (f1, f2):
            for c in range(3):
                a = int(self.faces[f, (c + 1) % 3])
                b = int(self.faces[f, (c + 2) % 3])
                self.face_edge[f, c] = self._edge_id(a, b)
        self.flips += 1
        return True

    def _edge_id(self, a: int, b: int) -> int:
        lo, hi = (a, b) if a < b else (b, a)
        hit = np.nonzero((self.edges[:, 0] == lo) & (self.edges[:, 1] == hi))[0]
        if len(hit) != 1:
            raise ConformalError("edge lookup failed", edge=[a, b])
        return int(hit[0])


def _angles(face_len: np.ndarray) -> np.ndarray:
    """face_len[:, k] is the length opposite corner k; returns corner angles.

    A triangle violating the triangle inequality gets angles (pi, 0, 0) via
    the clipped arccos, which is the convex extension of the flattening
    energy: its gradient stays defined, so Newton steps may pass through
    infeasible configurations instead of creeping along their boundary.
    """
    out = np.empty_like(face_len)
    for k in range(3):
        opp = face_len[:, k]
        e1 = face_len[:, (k + 1) % 3]
        e2 = face_len[:, (k + 2) % 3]
        cos = (e1 * e1 + e2 * e2 - opp * opp) / (2 * e1 * e2)
        out[:, k] = np.arccos(np.clip(cos, -1.0, 1.0))
    return out


def compute_conformal_metric(mesh: Mesh, cones: np.ndarray,
                             tol: float = 1e-10,
                             max_iterations: int = 100) -> ConformalMetric:
    n = len(mesh.vertices)
    fixed = np.zeros(n, dtype=bool)
    fixed[mesh.boundary_vertex] = True
    if len(cones):
        fixed[np.asarray(cones, dtype=np.int64)] = True
    labels = mesh.vertex_components()
    for c in range(int(labels.max()) + 1):
        members = np.nonzero(labels == c)[0]
        if not fixed[members].any():
            fixed[members[0]] = True  # gauge for flat closed components
    free = np.nonzero(~fixed)[0]

    tri = _Triangulation(mesh)
    u = np.zeros(n)

    def residual(u):
        ang = _angles(tri.face_lengths(u))
        sums = np.zeros(n)
        np.add.at(sums, tri.faces.ravel(), ang.ravel())
        return sums - 2 * np.pi, ang

    if len(free) == 0:
        return ConformalMetric(tri.edge_lengths(u), u, 0.0, 0, tri.flips)

    r, ang = residual(u)
    it = 0
    while it < max_iterations:
        if np.abs(r[free]).max() < tol:
            if (tri.validity_margin(u) > 0).all():
                break
            flips = tri.flip_invalid_edges(u)
            logger.debug("converged metric has %d degenerate triangles; "
                         "flipped", flips)
            r, ang = residual(u)
            continue
        it += 1
        cot = 1.0 / np.tan(np.clip(ang, 1e-12, np.pi - 1e-12))
        cot[tri.validity_margin(u) <= 0] = 0.0  # extension region is linear
        fi = tri.faces
        rows = np.concatenate([fi[:, 1], fi[:, 2], fi[:, 2], fi[:, 0],
                               fi[:, 0], fi[:, 1],
                               fi[:, 0], fi[:, 1], fi[:, 2]])
        cols = np.concatenate([fi[:, 2], fi[:, 1], fi[:, 0], fi[:, 2],
                               fi[:, 1], fi[:, 0],
                               fi[:, 0], fi[:, 1], fi[:, 2]])
        w = 0.5 * cot
        diag = 0.5 * np.stack([cot[:, 1] + cot[:, 2],
                               cot[:, 2] + cot[:, 0],
                               cot[:, 0] + cot[:, 1]], axis=1)
        vals = np.concatenate([-w[:, 0], -w[:, 0], -w[:, 1], -w[:, 1],
                               -w[:, 2], -w[:, 2],
                               diag[:, 0], diag[:, 1], diag[:, 2]])
        lap = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        lff = lap[free][:, free].tocsc()
        try:
            delta = splu(lff).solve(r[free])
        except RuntimeError:
            reg = lff + 1e-12 * abs(lff.diagonal()).max() * identity(len(free))
            delta = splu(reg.tocsc()).solve(r[free])

        step = 1.0
        base_norm = np.linalg.norm(r[free])
        accepted = False
        while step > 1e-12:
            u_try = u.copy()
            u_try[free] += step * delta
            r_try, ang_try = residual(u_try)
            if np.linalg.norm(r_try[free]) <= base_norm * (1 - 1e-4 * step):
                u, r, ang = u_try, r_try, ang_try
                accepted = True
                break
            step *= 0.5
        if not accepted:
            u_try = u.copy()
            u_try[free] += delta
            flips = tri.flip_invalid_edges(u_try)
            logger.debug("line search stalled; %d Ptolemy flips", flips)
            u = u_try
            r, ang = residual(u)
        logger.debug("conformal iteration %d residual %.3e", it,
                     np.abs(r[free]).max())

    err = float(np.abs(r[free]).max())
    if err >= tol:
        raise ConformalError("flattening did not converge",
                             residual=err, iterations=it)
    if tri.flips:
        raise ConformalError(
            "flattening required intrinsic edge flips; the target metric "
            "does not exist on the input connectivity", flips=tri.flips)
    return ConformalMetric(tri.edge_lengths(u), u, err, it, tri.flips)
