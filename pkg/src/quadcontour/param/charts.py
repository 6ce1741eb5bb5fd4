"""Vertex and edge charts over the seamed layout.

A vertex chart places the full star of a vertex into one plane by rigid
motions, even when seams split the star across uv islands: the center goes
to the origin, the first outgoing edge to the +u axis, and each next
triangle is aligned to the previous one along their shared edge using only
lengths and shapes from each face's own uv image.  What downstream fitting
needs from the chart is the per-corner rotation taking face-uv vectors into
chart coordinates.

An edge chart is the analogous two-triangle assembly around an edge, with
the edge on the u axis from its lower-index endpoint.  Only the offset from
the edge midpoint to each opposite vertex survives into the arrays; the
component along the edge couples to endpoint data and the transverse
component to the midpoint derivative degree of freedom.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from quadcontour.param.cut import (SeamedParameterization, LayoutError,
                                   _corner_angles_uv)

logger: logging.Logger = logging.getLogger(__name__)


@dataclass
class Charts:
    """Chart data in per-corner arrays.

    vertex_rotation[f, k] rotates face-f uv vectors into the chart of the
    vertex at corner k.  midpoint_offset[f, k] is the offset from the
    midpoint of edge (k, k+1) to the opposite corner k+2, in that edge's
    chart; its second component is positive on the side of the face that
    sees the edge in increasing-index direction.
    """

    vertex_rotation: np.ndarray   # (f, 3, 2, 2)
    midpoint_offset: np.ndarray   # (f, 3, 2)
    edge_uv_length: np.ndarray    # (m,)
    cone_vertex: np.ndarray       # (n,) bool
    vertex_angle_sum: np.ndarray  # (n,)
    closure_residual: float

    def rotation_at(self, f: int, k: int) -> np.ndarray:
        return self.vertex_rotation[f, k]


def _rot(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def build_charts(param: SeamedParameterization, tol: float = 1e-8,
                 fan_start_offset: int = 0) -> Charts:
    """Assemble charts for every vertex and edge of the layout.

    `fan_start_offset` rotates the arbitrary choice of which incident edge
    becomes each interior vertex's chart u axis; fitted surfaces must not
    depend on it.
    """
    mesh, uv = param.mesh, param.corner_uv
    n = len(mesh.vertices)
    cone = param.is_cone()

    vrot = np.zeros((len(mesh.faces), 3, 2, 2))
    worst_closure = 0.0
    for v in range(n):
        hs = mesh.outgoing_halfedges(v)
        interior = not mesh.boundary_vertex[v]
        if interior and fan_start_offset:
            s = fan_start_offset % len(hs)
            hs = hs[s:] + hs[:s]
        direction = None
        first_len = 0.0
        for t, h in enumerate(hs):
            f, k = h // 3, h % 3
            a = uv[f, k]
            out_edge = uv[f, (k + 1) % 3] - a
            if t == 0:
                phi = -np.arctan2(out_edge[1], out_edge[0])
                first_len = float(np.hypot(*out_edge))
            else:
                phi = np.arctan2(direction[1], direction[0]) \
                    - np.arctan2(out_edge[1], out_edge[0])
            rot = _rot(phi)
            vrot[f, k] = rot
            direction = rot @ (uv[f, (k + 2) % 3] - a)
        if interior and not cone[v] and direction is not None:
            gap = np.arctan2(direction[1], direction[0])
            residual = abs(np.arctan2(np.sin(gap), np.cos(gap)))
            residual = max(residual,
                           abs(float(np.hypot(*direction)) - first_len))
            worst_closure = max(worst_closure, residual)

    if worst_closure > tol:
        raise LayoutError("vertex chart does not close up",
                          residual=float(worst_closure))

    angle = _corner_angles_uv(uv)
    sums = np.zeros(n)
    np.add.at(sums, mesh.faces.ravel(), angle.ravel())

    offsets, edge_len = _edge_chart_offsets(param)
    charts = Charts(vertex_rotation=vrot, midpoint_offset=offsets,
                    edge_uv_length=edge_len, cone_vertex=cone,
                    vertex_angle_sum=sums,
                    closure_residual=float(worst_closure))
    param.charts = charts
    logger.info("charts built for %d vertices, %d edges; closure %.2e",
                n, len(edge_len), worst_closure)
    return charts


def _edge_chart_offsets(param: SeamedParameterization) \
        -> tuple[np.ndarray, np.ndarray]:
    mesh, uv = param.mesh, param.corner_uv
    f_count = len(mesh.faces)
    offsets = np.zeros((f_count, 3, 2))
    edge_len = np.zeros(len(mesh.edges))
    edge_sides = np.zeros(len(mesh.edges), dtype=np.int64)

    for f in range(f_count):
        for k in range(3):
            e = int(mesh.edge_of_halfedge[3 * f + k])
            a = uv[f, k]
            b = uv[f, (k + 1) % 3]
            opp = uv[f, (k + 2) % 3]
            length = float(np.hypot(*(b - a)))
            if int(mesh.faces[f, k]) == int(mesh.edges[e, 0]):
                origin, udir = a, (b - a) / length
            else:
                origin, udir = b, (a - b) / length
            rel = opp - origin
            cx = float(udir @ rel)
            cy = float(udir[0] * rel[1] - udir[1] * rel[0])
            offsets[f, k] = (cx - 0.5 * length, cy)
            edge_len[e] += length
            edge_sides[e] += 1

    edge_len /= np.maximum(edge_sides, 1)
    return offsets, edge_len
