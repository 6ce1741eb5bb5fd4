"""Ray tests against the quadratic patch surface.

A view ray through an image point hits a patch where two quadratics
vanish simultaneously (one per image axis), so hits come from the same
pencil solver as cusps.  Counting the hits strictly nearer the camera
than a query point gives that point's quantitative invisibility.  A
uniform image-space grid over patch bounding boxes prunes candidates;
with the grid disabled the same bounding-box test runs over all
patches, so results are identical either way.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from ..surface import monomial_coefficients
from .cusps import view_frame
from .quadratics import VisibilityError, quad_value, solve_quadratic_pair

log = logging.getLogger(__name__)

BOUNDARY_BAND = 1e-7
DEPTH_BAND_REL = 1e-9
SELF_BAND_REL = 1e-7
# A query point on the surface is a tangency of its own ray, so the own
# patch returns it as a double root.  Roundoff splits that pair by the
# square root of the coefficient noise, which reaches a few 1e-4 in the
# domain; the radius must cover the split.  Two roots of one patch this
# close can only be a collapsing pair (one image point, two parameters
# is the fold itself), never a separate sheet.
OWN_PARAM_RADIUS = 3e-3


@dataclass
class RayResult:
    """Occluder count for one query, with a reliability verdict."""

    count: int
    reliable: bool
    hits: list = field(default_factory=list)   # (patch, u, v, depth)


class SpatialGrid:
    """Uniform image-plane grid of item bounding boxes.

    Boxes are stored CSR-style: `order` lists item ids grouped by cell
    and `offsets` delimits each cell's group.  Every item is registered
    in every cell its box overlaps.
    """

    def __init__(self, boxes, resolution):
        boxes = np.asarray(boxes, dtype=np.float64)
        self.boxes = boxes
        self.resolution = int(resolution)
        lo = boxes[:, 0].min(axis=0)
        hi = boxes[:, 1].max(axis=0)
        span = np.maximum(hi - lo, 1e-12)
        self.origin = lo
        self.cell = span / self.resolution
        n = self.resolution
        i0 = self._index(boxes[:, 0])
        i1 = self._index(boxes[:, 1])
        pairs = []
        for dx in range(int((i1[:, 0] - i0[:, 0]).max()) + 1):
            for dy in range(int((i1[:, 1] - i0[:, 1]).max()) + 1):
                ix = i0[:, 0] + dx
                iy = i0[:, 1] + dy
                ok = (ix <= i1[:, 0]) & (iy <= i1[:, 1])
                ids = np.nonzero(ok)[0]
                pairs.append(np.stack([ix[ids] * n + iy[ids], ids], axis=1))
        pairs = np.concatenate(pairs, axis=0)
        order = np.argsort(pairs[:, 0], kind="stable")
        cells = pairs[order, 0]
        self.order = pairs[order, 1]
        self.offsets = np.searchsorted(cells, np.arange(n * n + 1))

    def _index(self, pts):
        idx = ((pts - self.origin) / self.cell).astype(np.int64)
        return np.clip(idx, 0, self.resolution - 1)

    def candidates(self, x, y):
        """Item ids whose box contains the point."""
        ix, iy = self._index(np.array([x, y]))
        c = ix * self.resolution + iy
        ids = self.order[self.offsets[c]:self.offsets[c + 1]]
        return ids[self._box_mask(ids, x, y)]

    def _box_mask(self, ids, x, y):
        b = self.boxes[ids]
        return ((b[:, 0, 0] <= x) & (x <= b[:, 1, 0])
                & (b[:, 0, 1] <= y) & (y <= b[:, 1, 1]))

    def all_candidates(self, x, y):
        """Grid-free variant: box test over every item."""
        ids = np.arange(len(self.boxes))
        return ids[self._box_mask(ids, x, y)]

    def overlap_pairs(self):
        """Unique id pairs (i < j) whose boxes overlap, via cell co-residency.

        Conservative in the same way as `candidates`: co-residency over-counts
        and the box test prunes, so the result equals the brute-force pair list.
        """
        found = set()
        for c in range(len(self.offsets) - 1):
            ids = self.order[self.offsets[c]:self.offsets[c + 1]]
            for a in range(len(ids)):
                for b in range(a + 1, len(ids)):
                    i, j = sorted((ids[a], ids[b]))
                    found.add((int(i), int(j)))
        b = self.boxes
        return [(i, j) for i, j in sorted(found)
                if (b[i, 0, 0] <= b[j, 1, 0] and b[j, 0, 0] <= b[i, 1, 0]
                    and b[i, 0, 1] <= b[j, 1, 1] and b[j, 0, 1] <= b[i, 1, 1])]


def patch_image_boxes(control, tau1, tau2):
    """Per-patch image bounding boxes from the control hulls."""
    x = control @ tau1
    y = control @ tau2
    lo = np.stack([x.min(axis=1), y.min(axis=1)], axis=1)
    hi = np.stack([x.max(axis=1), y.max(axis=1)], axis=1)
    return np.stack([lo, hi], axis=1)


class RayTester:
    """Occlusion queries against one patch set for a fixed view."""

    def __init__(self, patchset, tau, use_grid=True):
        self.tau1, self.tau2, self.tau = view_frame(tau)
        control = patchset.control
        self.faces = patchset.mesh.faces
        self.mono = monomial_coefficients(control)
        self.qx = self.mono @ self.tau1            # (n, 6)
        self.qy = self.mono @ self.tau2
        self.qz = self.mono @ self.tau
        self.boxes = patch_image_boxes(control, self.tau1, self.tau2)
        self.depth_scale = max(float(np.abs(control @ self.tau).max()), 1.0)
        resolution = max(1, int(np.ceil(np.sqrt(len(control)))))
        self.grid = SpatialGrid(self.boxes, resolution)
        self.use_grid = use_grid

    def patch_hits(self, p, x, y, inside_tol=1e-9):
        """Ray hits on one patch: (u, v, depth, margin) rows.

        `margin` is the hit's barycentric distance to the domain border;
        only hits inside the domain (up to `inside_tol`) are returned.
        The second value is False when the root solve itself failed.
        """
        q1 = self.qx[p].copy()
        q2 = self.qy[p].copy()
        q1[0] -= x
        q2[0] -= y
        if np.abs(q1).max() == 0.0 or np.abs(q2).max() == 0.0:
            return np.empty((0, 4)), False
        try:
            roots = solve_quadratic_pair(q1, q2)
        except VisibilityError as err:
            log.debug("ray-patch solve failed on patch %d: %s", p, err)
            return np.empty((0, 4)), False
        hits = []
        for u, v in roots:
            margin = min(u, v, 1.0 - u - v)
            if margin < -inside_tol:
                continue
            hits.append((u, v, quad_value(self.qz[p], u, v), margin))
        return np.array(hits).reshape(-1, 4), True

    def query(self, x, y, depth, own=None):
        """Count surface sheets strictly nearer than the query depth.

        `own` is (patch, u, v) of the query point itself when it lies
        on the surface.  Hits that evaluate back to the query point are
        not occluders: the own patch within a small parameter radius,
        and any depth-tying hit from a face that touches the query's
        face (the surface folds at a contour, so a neighbouring patch
        sees the same point again, usually right at its border).  The
        result is unreliable when a counted hit sits near a patch
        boundary, a foreign hit nearly ties the query depth, or two
        hits of one patch graze; callers then retry from a nearby
        query point.
        """
        if self.use_grid:
            ids = self.grid.candidates(x, y)
        else:
            ids = self.grid.all_candidates(x, y)
        band = DEPTH_BAND_REL * self.depth_scale
        self_band = SELF_BAND_REL * self.depth_scale
        own_verts = None
        if own is not None:
            own_verts = set(self.faces[own[0] // 12].tolist())
        count = 0
        reliable = True
        kept = []
        for p in ids:
            ph, ok = self.patch_hits(p, x, y)
            if not ok:
                reliable = False
                continue
            for u, v, z, margin in ph:
                if own is not None and p == own[0] \
                        and np.hypot(u - own[1], v - own[2]) \
                        < OWN_PARAM_RADIUS:
                    continue
                if own_verts is not None and abs(z - depth) <= self_band \
                        and own_verts & set(self.faces[p // 12].tolist()):
                    continue
                kept.append((int(p), float(u), float(v), float(z), margin))
        for i, (p, u, v, z, margin) in enumerate(kept):
            if z < depth - band:
                count += 1
                if margin < BOUNDARY_BAND:
                    reliable = False   # could be counted again next door
            elif z < depth + band:
                reliable = False
            for p2, u2, v2, _, _ in kept[i + 1:]:
                if p2 == p and np.hypot(u - u2, v - v2) < 1e-4:
                    reliable = False   # tangential graze
        hits = [(p, u, v, z) for p, u, v, z, _ in kept]
        return RayResult(count=count, reliable=reliable, hits=hits)
