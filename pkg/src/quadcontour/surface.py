"""Piecewise-quadratic surface over a twelve-way triangle split.

Each mesh triangle carries twelve quadratic Bezier sub-patches whose control
points are fixed rational combinations of twelve local degrees of freedom:
three corner positions, six corner derivatives along the parametric edges,
and three midpoint cross derivatives.  Adjacent macropatches share vertex
and edge data, which makes the assembled surface C1 away from cone apexes.

The split refines a parametric triangle by its medians and medial triangle:
corners r_i, edge midpoints, the barycenter, and the three points where the
medians cross the medial edges.  All control tables below are exact
fractions derived from value and derivative interpolation at those nodes;
they depend only on the split, never on geometry.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from quadcontour.mesh import Mesh
from quadcontour.param.charts import Charts
from quadcontour.param.cut import SeamedParameterization

logger: logging.Logger = logging.getLogger(__name__)


class SurfaceError(Exception):
    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = dict(details)


# -- local degree-of-freedom layout ----------------------------------------
#
# q_loc rows: [p0, p1, p2, d01, d10, d12, d21, d20, d02, h01, h12, h20]
# d_ij is the derivative at corner i along the parametric edge to corner j
# (full edge vector, not unit); h_ij is the derivative at the midpoint of
# edge (i, j) along the vector from the midpoint to the opposite corner.

_P = {0: 0, 1: 1, 2: 2}
_D = {(0, 1): 3, (1, 0): 4, (1, 2): 5, (2, 1): 6, (2, 0): 7, (0, 2): 8}
_H = {(0, 1): 9, (1, 2): 10, (2, 0): 11}


def _control_rows() -> dict[str, np.ndarray]:
    """Every named control point as exact coefficients over q_loc."""
    F = Fraction
    rows: dict[str, list[Fraction]] = {}

    def combine(parts) -> list[Fraction]:
        out = [F(0)] * 12
        for coeff, r in parts:
            for t in range(12):
                out[t] += coeff * r[t]
        return out

    for i in range(3):
        r = [F(0)] * 12
        r[_P[i]] = F(1)
        rows[f"p{i}"] = r
    for (i, j), d_idx in _D.items():
        r = [F(0)] * 12
        r[_P[i]] = F(1)
        r[d_idx] = F(1, 4)
        rows[f"p{i}{j}"] = r
    for (i, j) in _H:
        rows[f"pm{i}{j}"] = combine([(F(1, 2), rows[f"p{i}{j}"]),
                                     (F(1, 2), rows[f"p{j}{i}"])])
        r = list(rows[f"pm{i}{j}"])
        r[_H[(i, j)]] += F(1, 6)
        rows[f"pc{i}{j}"] = r
    for i, (j, k) in {0: (1, 2), 1: (2, 0), 2: (0, 1)}.items():
        rows[f"pv{i}"] = combine([(F(1, 2), rows[f"p{i}{j}"]),
                                  (F(1, 2), rows[f"p{i}{k}"])])
    edge_of = {0: ("pc01", "pc20"), 1: ("pc01", "pc12"), 2: ("pc12", "pc20")}
    for i, (a, b) in edge_of.items():
        rows[f"pc{i}"] = combine([(F(1, 2), rows[a]), (F(1, 2), rows[b])])
        rows[f"pm{i}"] = combine([(F(1, 4), rows[f"pv{i}"]),
                                  (F(3, 4), rows[f"pc{i}"])])
    edge_name = {(0, 1): "pc01", (1, 0): "pc01", (1, 2): "pc12",
                 (2, 1): "pc12", (2, 0): "pc20", (0, 2): "pc20"}
    for (i, j) in _D:
        rows[f"pd{i}{j}"] = combine([(F(1, 4), rows[f"p{i}{j}"]),
                                     (F(3, 4), rows[edge_name[(i, j)]])])
    rows["pc"] = combine([(F(1, 3), rows["pc01"]), (F(1, 3), rows["pc12"]),
                          (F(1, 3), rows["pc20"])])
    return {k: np.array([float(x) for x in v]) for k, v in rows.items()}


# Canonical split nodes in the unit triangle (r0=(0,0), r1=(1,0), r2=(0,1)).
_NODES = {
    "r0": (0.0, 0.0), "r1": (1.0, 0.0), "r2": (0.0, 1.0),
    "m01": (0.5, 0.0), "m12": (0.5, 0.5), "m20": (0.0, 0.5),
    "x0": (0.25, 0.25), "x1": (0.5, 0.25), "x2": (0.25, 0.5),
    "c": (1.0 / 3.0, 1.0 / 3.0),
}

# For each sub-patch: domain corners (A, B, C) and the six control points in
# Bernstein order (p00, p20, p02, p10, p01, p11) = (A corner, B corner,
# C corner, AB midpoint, AC midpoint, BC midpoint).
_SUBPATCHES = [
    (("r0", "m01", "x0"), ("p0", "pm01", "pm0", "p01", "pv0", "pd01")),
    (("r0", "x0", "m20"), ("p0", "pm0", "pm20", "pv0", "p02", "pd02")),
    (("r1", "m12", "x1"), ("p1", "pm12", "pm1", "p12", "pv1", "pd12")),
    (("r1", "x1", "m01"), ("p1", "pm1", "pm01", "pv1", "p10", "pd10")),
    (("r2", "m20", "x2"), ("p2", "pm20", "pm2", "p20", "pv2", "pd20")),
    (("r2", "x2", "m12"), ("p2", "pm2", "pm12", "pv2", "p21", "pd21")),
    (("m01", "x1", "c"), ("pm01", "pm1", "pc", "pd10", "pc01", "pc1")),
    (("m01", "c", "x0"), ("pm01", "pc", "pm0", "pc01", "pd01", "pc0")),
    (("m12", "x2", "c"), ("pm12", "pm2", "pc", "pd21", "pc12", "pc2")),
    (("m12", "c", "x1"), ("pm12", "pc", "pm1", "pc12", "pd12", "pc1")),
    (("m20", "x0", "c"), ("pm20", "pm0", "pc", "pd02", "pc20", "pc0")),
    (("m20", "c", "x2"), ("pm20", "pc", "pm2", "pc20", "pd20", "pc2")),
]


def _build_tables() -> tuple[np.ndarray, np.ndarray]:
    rows = _control_rows()
    control = np.stack([np.stack([rows[name] for name in names])
                        for _, names in _SUBPATCHES])   # (12, 6, 12)
    domains = np.array([[_NODES[n] for n in corners]
                        for corners, _ in _SUBPATCHES])  # (12, 3, 2)
    return control, domains


CONTROL_TABLES, CANONICAL_DOMAINS = _build_tables()


# -- global degree-of-freedom vector ---------------------------------------


def dof_count(mesh: Mesh) -> int:
    return 3 * len(mesh.vertices) + len(mesh.edges)


def zero_dofs(mesh: Mesh) -> np.ndarray:
    """Global DOF array (3n + m, 3): per vertex position and two chart
    gradient rows, then one midpoint-derivative row per edge."""
    return np.zeros((dof_count(mesh), 3))


def face_dof_rows(mesh: Mesh, f: int) -> np.ndarray:
    """Global DOF row indices feeding one face, in gather order."""
    n3 = 3 * len(mesh.vertices)
    v = mesh.faces[f]
    rows = []
    for k in range(3):
        rows += [3 * v[k], 3 * v[k] + 1, 3 * v[k] + 2]
    for k in range(3):
        rows.append(n3 + int(mesh.edge_of_halfedge[3 * f + k]))
    return np.array(rows, dtype=np.int64)


def local_dof_matrices(param: SeamedParameterization,
                       charts: Charts | None = None) -> np.ndarray:
    """Per-face 12x12 maps from gathered global DOFs to local DOFs.

    Gathered order: [p, gu, gv] for each corner vertex, then the three edge
    midpoint derivatives.  Local order: three positions, six edge
    derivatives, three midpoint cross derivatives.
    """
    charts = charts or param.charts
    if charts is None:
        raise SurfaceError("charts missing; build them before fitting")
    mesh, uv = param.mesh, param.corner_uv
    nf = len(mesh.faces)
    G = np.zeros((nf, 12, 12))
    G[:, 0, 0] = G[:, 1, 3] = G[:, 2, 6] = 1.0  # positions

    pairs = [(0, 1), (1, 0), (1, 2), (2, 1), (2, 0), (0, 2)]
    for row, (a, b) in enumerate(pairs, start=3):
        evec = uv[:, b] - uv[:, a]
        chart_vec = np.einsum("fij,fj->fi", charts.vertex_rotation[:, a],
                              evec)
        G[:, row, 3 * a + 1] = chart_vec[:, 0]
        G[:, row, 3 * a + 2] = chart_vec[:, 1]

    d_row = {p: i for i, p in enumerate(pairs, start=3)}
    for k in range(3):
        a, b = k, (k + 1) % 3
        row = 9 + k
        eid = mesh.edge_of_halfedge[np.arange(nf) * 3 + k]
        length = charts.edge_uv_length[eid]
        alpha = charts.midpoint_offset[:, k, 0]
        beta = charts.midpoint_offset[:, k, 1]
        lo_is_a = mesh.faces[:, a] == mesh.edges[eid, 0]
        # slope along the edge runs from its lower-index endpoint
        scale = alpha / length
        i_col = np.where(lo_is_a, 3 * a, 3 * b)
        j_col = np.where(lo_is_a, 3 * b, 3 * a)
        dij = np.where(lo_is_a, d_row[(a, b)], d_row[(b, a)])
        dji = np.where(lo_is_a, d_row[(b, a)], d_row[(a, b)])
        idx = np.arange(nf)
        G[idx, row, i_col] += -2.0 * scale
        G[idx, row, j_col] += 2.0 * scale
        G[idx, row, :] += (-0.5 * scale)[:, None] * G[idx, dij, :]
        G[idx, row, :] += (0.5 * scale)[:, None] * G[idx, dji, :]
        G[:, row, 9 + k] += beta
    return G


def extract_local_dofs(q: np.ndarray, param: SeamedParameterization,
                       f: int, charts: Charts | None = None) -> np.ndarray:
    """Local DOFs (12, 3) of one face from the global vector."""
    G = local_dof_matrices(param, charts)
    rows = face_dof_rows(param.mesh, f)
    return G[f] @ q[rows]


# -- patches ----------------------------------------------------------------


@dataclass
class QuadraticPatch:
    """One quadratic Bezier triangle.

    Control order (p00, p20, p02, p10, p01, p11); p(u, v) =
    p00 w^2 + p20 u^2 + p02 v^2 + 2 p10 uw + 2 p01 vw + 2 p11 uv
    with w = 1 - u - v.  `domain` holds the patch corners in face uv.
    """

    control: np.ndarray          # (6, 3)
    domain: np.ndarray           # (3, 2)

    def evaluate(self, u: float, v: float) -> np.ndarray:
        w = 1.0 - u - v
        c = self.control
        return (c[0] * w * w + c[1] * u * u + c[2] * v * v
                + 2 * c[3] * u * w + 2 * c[4] * v * w + 2 * c[5] * u * v)

    def jacobian(self, u: float, v: float) -> tuple[np.ndarray, np.ndarray]:
        w = 1.0 - u - v
        c = self.control
        pu = 2 * ((c[3] - c[0]) * w + (c[1] - c[3]) * u + (c[5] - c[4]) * v)
        pv = 2 * ((c[4] - c[0]) * w + (c[5] - c[3]) * u + (c[2] - c[4]) * v)
        return pu, pv

    def normal(self, u: float, v: float) -> np.ndarray:
        pu, pv = self.jacobian(u, v)
        return np.cross(pu, pv)

    def contains(self, u: float, v: float, tol: float = 0.0) -> bool:
        return u >= -tol and v >= -tol and u + v <= 1.0 + tol


@dataclass
class MacroPatch:
    """Twelve sub-patches over one mesh triangle."""

    face: int
    q_loc: np.ndarray            # (12, 3)
    children: list[QuadraticPatch]

    def child_containing(self, u: float, v: float) -> tuple[int, float, float]:
        """Locate face-uv point in a child; returns (index, local u, local v).

        Coordinates here are barycentric in the face's own uv triangle.
        """
        pt = np.array([u, v])
        for i, dom in enumerate(CANONICAL_DOMAINS):
            a, b, c = dom
            m = np.column_stack([b - a, c - a])
            loc = np.linalg.solve(m, pt - a)
            if loc[0] >= -1e-12 and loc[1] >= -1e-12 \
                    and loc.sum() <= 1 + 1e-12:
                return i, float(loc[0]), float(loc[1])
        raise SurfaceError("point outside the unit triangle", u=u, v=v)


def build_macropatch(q_loc: np.ndarray, domain_uv: np.ndarray,
                     face: int = -1) -> MacroPatch:
    """Assemble the twelve sub-patches from local DOFs.

    `domain_uv` is the face's parametric triangle; child domains are its
    affine images of the canonical split.
    """
    domain_uv = np.asarray(domain_uv, dtype=np.float64)
    a = domain_uv[0]
    span = np.stack([domain_uv[1] - a, domain_uv[2] - a], axis=1)
    if abs(np.linalg.det(span)) < 1e-300:
        raise SurfaceError("degenerate parametric triangle", face=face)
    control = np.einsum("lcd,dx->lcx", CONTROL_TABLES, q_loc)
    children = [
        QuadraticPatch(control[l], (CANONICAL_DOMAINS[l] @ span.T) + a)
        for l in range(12)
    ]
    return MacroPatch(face=face, q_loc=q_loc, children=children)


@dataclass
class PatchSet:
    """All sub-patches of a surface in flat arrays.

    Patch p belongs to face `p // 12` with split index `p % 12`; `control`
    is indexed the same way as QuadraticPatch.  `domain` maps each patch's
    unit triangle into face uv.
    """

    mesh: Mesh
    control: np.ndarray       # (12 f, 6, 3)
    domain: np.ndarray        # (12 f, 3, 2)

    def patch(self, p: int) -> QuadraticPatch:
        return QuadraticPatch(self.control[p], self.domain[p])

    def face_of(self, p: int) -> int:
        return p // 12

    def __len__(self) -> int:
        return len(self.control)


def build_surface(param: SeamedParameterization, q: np.ndarray,
                  charts: Charts | None = None) -> PatchSet:
    """Evaluate the control net of every face from global DOFs."""
    charts = charts or param.charts
    mesh = param.mesh
    cone = charts.cone_vertex if charts is not None else None
    if cone is not None and cone.any():
        g = q[:3 * len(mesh.vertices)].reshape(-1, 3, 3)[cone, 1:, :]
        if np.abs(g).max() != 0.0:
            raise SurfaceError("cone vertices must carry zero gradients",
                               worst=float(np.abs(g).max()))
    G = local_dof_matrices(param, charts)
    rows = np.stack([face_dof_rows(mesh, f) for f in range(len(mesh.faces))])
    q_loc = np.einsum("fab,fbx->fax", G, q[rows])
    control = np.einsum("lcd,fdx->flcx", CONTROL_TABLES, q_loc)
    control = control.reshape(-1, 6, 3)

    a = param.corner_uv[:, 0]
    span = np.stack([param.corner_uv[:, 1] - a, param.corner_uv[:, 2] - a],
                    axis=2)                      # (f, 2, 2) columns
    dom = np.einsum("lcd,fed->flce", CANONICAL_DOMAINS,
                    span) + a[:, None, None, :]
    domain = dom.reshape(-1, 3, 2)
    return PatchSet(mesh=mesh, control=control, domain=domain)


def make_cone_patch(apex: np.ndarray, delta_u2: np.ndarray,
                    delta_v2: np.ndarray, delta_uv: np.ndarray,
                    domain: np.ndarray | None = None) -> QuadraticPatch:
    """Quadratic patch whose corner control points collapse onto the apex.

    p(u, v) = apex + delta_u2 u^2 + delta_v2 v^2 + 2 delta_uv uv: parameter
    lines through the origin map to straight rays, and the normal vanishes
    at the apex.
    """
    apex = np.asarray(apex, dtype=np.float64)
    control = np.stack([
        apex, apex + delta_u2, apex + delta_v2, apex, apex, apex + delta_uv])
    if domain is None:
        domain = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return QuadraticPatch(control, np.asarray(domain, dtype=np.float64))


# -- monomial form ----------------------------------------------------------


def monomial_coefficients(control: np.ndarray) -> np.ndarray:
    """Coefficients (c, u, v, uu, vv, uv) of the patch polynomial.

    Works for a single (6, 3) net or a batch (..., 6, 3).
    """
    c = np.asarray(control)
    p00, p20, p02, p10, p01, p11 = (c[..., i, :] for i in range(6))
    return np.stack([
        p00,
        2 * (p10 - p00),
        2 * (p01 - p00),
        p00 + p20 - 2 * p10,
        p00 + p02 - 2 * p01,
        2 * (p00 - p10 - p01 + p11),
    ], axis=-2)


# -- debug dump -------------------------------------------------------------


def save_patches(patches: PatchSet, path: str):
    payload = {
        "format": "quadcontour-patches",
        "version": 1,
        "control": patches.control.tolist(),
        "domain": patches.domain.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_patch_arrays(path: str) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "quadcontour-patches":
        raise SurfaceError("unrecognized patch file", path=path)
    return (np.array(payload["control"], dtype=np.float64),
            np.array(payload["domain"], dtype=np.float64))
