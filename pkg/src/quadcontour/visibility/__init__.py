"""Exact visibility for closed-form contours.

Contour segments are chained into a graph, event points (cusps and
image crossings) are spliced in, and a quantitative invisibility count
is assigned to every edge: one ray test seeds each component and local
transfer rules carry the count across events.  All root finding runs
through one pencil-based solver for pairs of bivariate quadratics.
"""

from quadcontour.visibility.cusps import (
    CuspPoint,
    find_interior_cusps,
    is_boundary_cusp,
    tangent_quadratics,
    view_frame,
)
from quadcontour.visibility.graph import (
    GraphEdge,
    GraphNode,
    ViewGraph,
    attach_cusps,
    chain_across_patches,
    find_boundary_cusps,
    split_at_events,
)
from quadcontour.visibility.intersect import Crossing, find_image_intersections
from quadcontour.visibility.propagate import compute_visibility, propagate_qi
from quadcontour.visibility.quadratics import (
    VisibilityError,
    solve_quadratic_pair,
)
from quadcontour.visibility.raytest import (
    RayResult,
    RayTester,
    SpatialGrid,
)

__all__ = [
    "Crossing",
    "CuspPoint",
    "GraphEdge",
    "GraphNode",
    "RayResult",
    "RayTester",
    "SpatialGrid",
    "ViewGraph",
    "VisibilityError",
    "attach_cusps",
    "chain_across_patches",
    "compute_visibility",
    "find_boundary_cusps",
    "find_image_intersections",
    "find_interior_cusps",
    "is_boundary_cusp",
    "propagate_qi",
    "solve_quadratic_pair",
    "split_at_events",
    "tangent_quadratics",
    "view_frame",
]
