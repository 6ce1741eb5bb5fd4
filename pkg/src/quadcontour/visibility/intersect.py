"""Image-space crossings between projected contour segments.

Each segment projects to a rational quartic, held in homogeneous
Bernstein form (hx, hy, hw).  Crossings between two segments are
located by fat-line clipping: one curve's image is bracketed between
two lines, the clip interval on the other curve comes from the control
polygon of a degree-four scalar polynomial, and the roles alternate
until both parameter intervals collapse.  A Newton step on the exact
rational images then polishes each root.  When the clip stops making
progress (near-tangential crossings) the longer interval is bisected
and both halves are pushed, which degrades to plain subdivision and
still converges.  Segments tracing the same image arc admit no finite
answer and raise.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..contours.bernstein import (bernstein_derivative, bernstein_eval,
                                  bernstein_restrict)
from .cusps import view_frame
from .quadratics import VisibilityError
from .raytest import SpatialGrid

log = logging.getLogger(__name__)

PARAM_TOL = 1e-10
SUBDIV_TOL = 1e-12
DEDUPE_TOL = 1e-9
ENDPOINT_GUARD = 1e-6
RAW_CONTACT_GUARD = 1e-4
MAX_POPS = 40000


@dataclass
class Crossing:
    """One transversal image crossing between two segments."""

    seg_a: int
    s: float
    seg_b: int
    t: float
    point: np.ndarray        # image coordinates
    z_a: float               # view depth of segment a at s
    z_b: float


class _ImagePiece:
    """A slice of one segment's homogeneous image curve.

    The slice is subdivided until the weight coefficients are strictly
    positive, so the affine control points bound the actual image arc.
    """

    def __init__(self, t0, t1, hx, hy, hw):
        self.t0 = t0
        self.t1 = t1
        self.hx = hx
        self.hy = hy
        self.hw = hw
        self.ctrl = np.stack([hx / hw, hy / hw], axis=1)
        lo = self.ctrl.min(axis=0)
        hi = self.ctrl.max(axis=0)
        self.box = np.stack([lo, hi])


def _segment_pieces(seg, tau1, tau2, max_depth=30):
    """Split a segment's image curve into positive-weight pieces."""
    hx0 = seg.space_num @ tau1
    hy0 = seg.space_num @ tau2
    hw0 = seg.space_den
    out = []
    stack = [(0.0, 1.0, 0)]
    while stack:
        t0, t1, depth = stack.pop()
        hx = bernstein_restrict(hx0, t0, t1)
        hy = bernstein_restrict(hy0, t0, t1)
        hw = bernstein_restrict(hw0, t0, t1)
        scale = np.abs(hw).max()
        if scale > 0:
            hx, hy, hw = hx / scale, hy / scale, hw / scale
        if (hw > 0).all() or depth >= max_depth:
            if (hw <= 0).any():
                # the weight pinches to zero inside this sliver; clamp so
                # the affine hull stays finite (it only widens the box)
                hw = np.maximum(hw, 1e-9)
            out.append(_ImagePiece(t0, t1, hx, hy, hw))
        else:
            tm = 0.5 * (t0 + t1)
            stack.append((t0, tm, depth + 1))
            stack.append((tm, t1, depth + 1))
    return out


def _boxes_overlap(a, b, pad=0.0):
    return (a[0, 0] <= b[1, 0] + pad and b[0, 0] <= a[1, 0] + pad
            and a[0, 1] <= b[1, 1] + pad and b[0, 1] <= a[1, 1] + pad)


def _keep_interval(g):
    """Conservative [lo, hi] containing every root region of g >= 0.

    Works off chords between all coefficient pairs; the convex hull
    edges are among them, so the bound can only be loose, never wrong.
    """
    n = len(g)
    xs = np.arange(n) / (n - 1)
    lo = np.inf
    hi = -np.inf
    for i in range(n):
        if g[i] >= 0:
            lo = min(lo, xs[i])
            hi = max(hi, xs[i])
    for i in range(n):
        for j in range(i + 1, n):
            if (g[i] < 0) != (g[j] < 0):
                x = xs[i] + (xs[j] - xs[i]) * g[i] / (g[i] - g[j])
                lo = min(lo, x)
                hi = max(hi, x)
    if lo > hi:
        return None
    return lo, hi


def _fat_clip(target, other):
    """Clip `target`'s interval against the fat line around `other`.

    Both arguments are (hx, hy, hw) coefficient triples on the current
    subinterval.  Returns the retained (lo, hi) in local [0, 1] or
    None when the fat lines separate the curves.
    """
    hx, hy, hw = other
    pts = np.stack([hx / hw, hy / hw], axis=1)
    chord = pts[-1] - pts[0]
    nrm = np.linalg.norm(chord)
    if nrm < 1e-13:
        return 0.0, 1.0        # other collapsed to a point; no clip power
    normal = np.array([-chord[1], chord[0]]) / nrm
    c = -normal @ pts[0]
    dists = pts @ normal + c
    dmin = dists.min()
    dmax = dists.max()
    tx, ty, tw = target
    e = normal[0] * tx + normal[1] * ty + c * tw
    k1 = _keep_interval(e - dmin * tw)       # where dist(t) >= dmin
    if k1 is None:
        return None
    k2 = _keep_interval(dmax * tw - e)       # where dist(t) <= dmax
    if k2 is None:
        return None
    lo = max(k1[0], k2[0])
    hi = min(k1[1], k2[1])
    if lo > hi:
        return None
    return lo, hi


def _restrict3(h, lo, hi):
    if lo == 0.0 and hi == 1.0:
        return h
    return tuple(bernstein_restrict(c, lo, hi) for c in h)


def _pair_roots(pa, pb, img_tol=0.0):
    """All (s, t) crossings between two positive-weight pieces.

    Parameters returned are local to each piece's [t0, t1] span, i.e.
    already mapped into the owning segment's parameter.
    """
    roots = []
    stack = [(0.0, 1.0, 0.0, 1.0)]
    pops = 0
    ha0 = (pa.hx, pa.hy, pa.hw)
    hb0 = (pb.hx, pb.hy, pb.hw)
    while stack:
        sa0, sa1, sb0, sb1 = stack.pop()
        pops += 1
        if pops > MAX_POPS:
            # a tangential contact stalls the clip along a short strip of
            # parameters; a shared arc stalls it everywhere.  Collapse the
            # former to one root, refuse the latter.  The unresolved
            # intervals may stay wide in parameter (one curve can be far
            # shorter than the other), so pointlikeness is also judged on
            # the image of curve a.
            ss = [0.5 * (sa0 + sa1)] + [0.5 * (q[0] + q[1]) for q in stack]
            ts = [0.5 * (sb0 + sb1)] + [0.5 * (q[2] + q[3]) for q in stack]
            tight = np.ptp(ss) < 1e-3 and np.ptp(ts) < 1e-3
            if not tight and img_tol > 0.0:
                pts = _image_eval(ha0, np.asarray(ss))
                tight = np.ptp(pts, axis=0).max() < img_tol
            if tight:
                log.warning("tangential image contact collapsed to a point "
                            "near s=%.6f t=%.6f", np.mean(ss), np.mean(ts))
                roots.append((float(np.mean(ss)), float(np.mean(ts))))
                break
            raise VisibilityError(
                "image crossing search failed to converge; the segments "
                "likely overlap along an arc",
                spans=((pa.t0, pa.t1), (pb.t0, pb.t1)))
        ha = _restrict3(ha0, sa0, sa1)
        hb = _restrict3(hb0, sb0, sb1)
        ca = np.stack([ha[0] / ha[2], ha[1] / ha[2]], axis=1)
        cb = np.stack([hb[0] / hb[2], hb[1] / hb[2]], axis=1)
        boxa = np.stack([ca.min(axis=0), ca.max(axis=0)])
        boxb = np.stack([cb.min(axis=0), cb.max(axis=0)])
        # restriction roundoff can pry truly touching boxes apart by a few
        # ulps once an interval has collapsed; pad by that much
        pad = 1e-12 * max(np.abs(ca).max(), np.abs(cb).max(), 1.0)
        if not _boxes_overlap(boxa, boxb, pad=pad):
            continue
        wa = sa1 - sa0
        wb = sb1 - sb0
        if wa < SUBDIV_TOL and wb < SUBDIV_TOL:
            roots.append((0.5 * (sa0 + sa1), 0.5 * (sb0 + sb1)))
            continue
        if img_tol > 0.0 and max((boxa[1] - boxa[0]).max(),
                                 (boxb[1] - boxb[0]).max()) < 1e-3 * img_tol:
            # both images are pointlike well below the contact scale; a
            # tangential strip would otherwise shed one subdivision box
            # per parameter tick and exhaust the budget
            roots.append((0.5 * (sa0 + sa1), 0.5 * (sb0 + sb1)))
            continue
        ka = _fat_clip(ha, hb)
        if ka is None:
            continue
        kb = _fat_clip(hb, ha)
        if kb is None:
            continue
        na0 = sa0 + ka[0] * wa
        na1 = sa0 + ka[1] * wa
        nb0 = sb0 + kb[0] * wb
        nb1 = sb0 + kb[1] * wb
        shrink = max((na1 - na0) / wa if wa > 0 else 0.0,
                     (nb1 - nb0) / wb if wb > 0 else 0.0)
        if shrink > 0.8:
            # stagnating: tangential or multiple crossings in view; bisect
            # the longer interval and keep clipping the halves
            if na1 - na0 >= nb1 - nb0:
                mid = 0.5 * (na0 + na1)
                stack.append((na0, mid, nb0, nb1))
                stack.append((mid, na1, nb0, nb1))
            else:
                mid = 0.5 * (nb0 + nb1)
                stack.append((na0, na1, nb0, mid))
                stack.append((na0, na1, mid, nb1))
        else:
            stack.append((na0, na1, nb0, nb1))
    mapped = [(pa.t0 + s * (pa.t1 - pa.t0), pb.t0 + t * (pb.t1 - pb.t0))
              for s, t in roots]
    return mapped


def _image_curve(seg, tau1, tau2):
    hx = seg.space_num @ tau1
    hy = seg.space_num @ tau2
    hw = seg.space_den
    return hx, hy, hw


class _BoundaryArc:
    """One quadratic border curve of a patch on the surface boundary.

    Duck-typed to the slots of a contour segment that the clipping
    machinery reads (space_num, space_den, point), so the same fat-line
    search runs against it unchanged.
    """

    def __init__(self, ctrl):
        self.space_num = np.asarray(ctrl, dtype=float)    # (3, 3)
        self.space_den = np.ones(3)

    def point(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        basis = np.stack([(1 - t) ** 2, 2 * t * (1 - t), t ** 2], axis=-1)
        return basis @ self.space_num


# Control rows forming the border Bezier of the two sub-patches along
# each side of the macro triangle, in the (p00, p20, p02, p10, p01, p11)
# layout: side k runs from face vertex k over the edge midpoint to
# vertex k+1, so each half is one sub-patch border.
_SIDE_SUBPATCH_ROWS = {
    0: ((0, (0, 3, 1)), (3, (0, 4, 2))),
    1: ((2, (0, 3, 1)), (5, (0, 4, 2))),
    2: ((4, (0, 3, 1)), (1, (0, 4, 2))),
}


def boundary_arcs(patchset):
    """Border curves of the fitted surface along the mesh boundary."""
    mesh = patchset.mesh
    arcs = []
    for h in np.nonzero(mesh.twin < 0)[0]:
        f, k = divmod(int(h), 3)
        for sub, rows in _SIDE_SUBPATCH_ROWS[k]:
            arcs.append(_BoundaryArc(patchset.control[12 * f + sub,
                                                      list(rows)]))
    return arcs


def find_rim_occlusions(segments, arcs, tau, depth_band=0.0):
    """Contour parameters crossed by the image of the surface boundary.

    An open surface simply stops at its boundary, so the boundary's
    image is an occlusion edge: the sheet count changes by one across
    it, which the contour-only event set cannot express.  Every
    crossing where the boundary is not clearly behind the contour is
    reported as (segment index, parameter, space position) so the graph
    stage can fence propagation there.  Contours that end on the
    boundary touch it at their endpoint; those contacts are dropped
    here and handled by the endpoint's own node.
    """
    tau = np.asarray(tau, dtype=float)
    tau1, tau2, tau = view_frame(tau)
    if not len(segments) or not len(arcs):
        return []
    seg_pieces = [_segment_pieces(s, tau1, tau2) for s in segments]
    arc_pieces = [_segment_pieces(a, tau1, tau2) for a in arcs]

    def hull(pieces):
        allb = np.stack([p.box for p in pieces])
        return np.stack([allb[:, 0].min(axis=0), allb[:, 1].max(axis=0)])

    seg_boxes = [hull(ps) for ps in seg_pieces]
    arc_boxes = [hull(ps) for ps in arc_pieces]
    lo = np.minimum.reduce([b[0] for b in seg_boxes + arc_boxes])
    hi = np.maximum.reduce([b[1] for b in seg_boxes + arc_boxes])
    diag = float(np.linalg.norm(hi - lo))
    contact_tol = max(1e-7 * diag, 1e-12)

    events = []
    for i, seg in enumerate(segments):
        ha = _image_curve(seg, tau1, tau2)
        ends_img = _image_eval(ha, np.array([0.0, 1.0]))
        found = []
        for j, arc in enumerate(arcs):
            if not _boxes_overlap(seg_boxes[i], arc_boxes[j]):
                continue
            hb = _image_curve(arc, tau1, tau2)
            raw = []
            for pa in seg_pieces[i]:
                for pb in arc_pieces[j]:
                    if not _boxes_overlap(pa.box, pb.box):
                        continue
                    raw.extend(_pair_roots(pa, pb, img_tol=contact_tol))
            for s, t in raw:
                s, t = _polish_root(ha, hb, s, t)
                pa = _image_eval(ha, s)[0]
                pb = _image_eval(hb, t)[0]
                if np.linalg.norm(pa - pb) > 1e-6 * max(diag, 1.0):
                    continue
                if min(np.linalg.norm(pa - e) for e in ends_img) \
                        < 2.0 * contact_tol:
                    continue           # the contour's own boundary contact
                z_seg = float(seg.point(np.array([s]))[0] @ tau)
                z_arc = float(arc.point(np.array([t]))[0] @ tau)
                if z_arc > z_seg + depth_band:
                    continue           # boundary clearly behind; no change
                found.append(float(s))
        found.sort()
        for s in found:
            if events and events[-1][0] == i and abs(events[-1][1] - s) \
                    < DEDUPE_TOL:
                continue
            events.append((i, s, seg.point(np.array([s]))[0]))
    return events


def _image_eval(h, t):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = bernstein_eval(h[0], t)
    y = bernstein_eval(h[1], t)
    w = bernstein_eval(h[2], t)
    return np.stack([x / w, y / w], axis=-1)


def _image_velocity(h, t):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = bernstein_eval(h[0], t)
    y = bernstein_eval(h[1], t)
    w = bernstein_eval(h[2], t)
    dx = bernstein_eval(bernstein_derivative(h[0]), t)
    dy = bernstein_eval(bernstein_derivative(h[1]), t)
    dw = bernstein_eval(bernstein_derivative(h[2]), t)
    vx = (dx * w - x * dw) / w ** 2
    vy = (dy * w - y * dw) / w ** 2
    return np.stack([vx, vy], axis=-1)


def _polish_root(ha, hb, s, t, iters=6):
    """Newton on image_a(s) - image_b(t); returns refined (s, t)."""
    for _ in range(iters):
        f = (_image_eval(ha, s) - _image_eval(hb, t))[0]
        va = _image_velocity(ha, s)[0]
        vb = _image_velocity(hb, t)[0]
        jac = np.stack([va, -vb], axis=1)
        det = np.linalg.det(jac)
        if abs(det) < 1e-14 * max(np.abs(jac).max() ** 2, 1e-30):
            break                      # tangential; keep subdivision answer
        ds, dt = np.linalg.solve(jac, -f)
        s = min(1.0, max(0.0, s + ds))
        t = min(1.0, max(0.0, t + dt))
        if max(abs(ds), abs(dt)) < 1e-14:
            break
    return s, t


def _shared_ends(seg_a, seg_b, tol):
    """Endpoint index pairs (ea, eb) where the two segments meet in space."""
    pa = [seg_a.point(np.array([e]))[0] for e in (0.0, 1.0)]
    pb = [seg_b.point(np.array([e]))[0] for e in (0.0, 1.0)]
    return [(ea, eb) for ea in (0, 1) for eb in (0, 1)
            if np.linalg.norm(pa[ea] - pb[eb]) < tol]


def find_image_intersections(segments, tau, use_grid=True):
    """Locate all transversal image crossings among contour segments.

    Adjacent segments of a chain touch at their shared endpoint; those
    contacts are recognised through the 3d endpoint positions and not
    reported.  A crossing that lands on only one segment's endpoint is
    kept (the graph stage retypes that node instead of splitting).
    """
    tau = np.asarray(tau, dtype=float)
    tau1, tau2, tau = view_frame(tau)
    n = len(segments)
    if n == 0:
        return []
    pieces = [_segment_pieces(s, tau1, tau2) for s in segments]
    boxes = np.empty((n, 2, 2))
    for i, ps in enumerate(pieces):
        allb = np.stack([p.box for p in ps])
        boxes[i, 0] = allb[:, 0].min(axis=0)
        boxes[i, 1] = allb[:, 1].max(axis=0)
    diag = np.linalg.norm(boxes[:, 1].max(axis=0) - boxes[:, 0].min(axis=0))
    contact_tol = max(1e-7 * diag, 1e-12)

    if use_grid and n > 1:
        resolution = max(1, int(np.ceil(np.sqrt(n))))
        candidates = SpatialGrid(boxes, resolution).overlap_pairs()
    else:
        candidates = [(i, j) for i in range(n) for j in range(i + 1, n)
                      if _boxes_overlap(boxes[i], boxes[j])]

    crossings = []
    for i, j in candidates:
        sa, sb = segments[i], segments[j]
        shared = _shared_ends(sa, sb, contact_tol)
        ha = _image_curve(sa, tau1, tau2)
        hb = _image_curve(sb, tau1, tau2)
        raw = []
        for pa in pieces[i]:
            for pb in pieces[j]:
                if not _boxes_overlap(pa.box, pb.box):
                    continue
                raw.extend(_pair_roots(pa, pb, img_tol=contact_tol))
        end_imgs = [_image_eval(ha, float(ea))[0] for ea, _ in shared]
        kept = []
        for s, t in raw:
            # drop chain contacts before polishing: at the shared node the
            # tangents are near parallel, so a Newton step would slide far
            # along the curves and report a bogus interior parameter
            if any(abs(s - ea) < RAW_CONTACT_GUARD
                   and abs(t - eb) < RAW_CONTACT_GUARD
                   for ea, eb in shared):
                continue
            # same, by image distance: a collapsed tangential contact on a
            # very short segment can carry a mid-range parameter yet still
            # sit on the shared node
            if end_imgs and min(np.linalg.norm(_image_eval(ha, s)[0] - e)
                                for e in end_imgs) < 2.0 * contact_tol:
                continue
            s, t = _polish_root(ha, hb, s, t)
            if any(abs(s - ea) < ENDPOINT_GUARD and abs(t - eb) < ENDPOINT_GUARD
                   for ea, eb in shared):
                continue
            if any(abs(s - s0) < DEDUPE_TOL and abs(t - t0) < DEDUPE_TOL
                   for s0, t0 in kept):
                continue
            kept.append((s, t))
        for s, t in kept:
            pa = _image_eval(ha, s)[0]
            pb = _image_eval(hb, t)[0]
            if np.linalg.norm(pa - pb) > 1e-6 * max(diag, 1.0):
                log.warning("discarding drifted crossing candidate "
                            "(%d@%.6f vs %d@%.6f)", i, s, j, t)
                continue
            crossings.append(Crossing(
                seg_a=i, s=float(s), seg_b=j, t=float(t),
                point=0.5 * (pa + pb),
                z_a=float(sa.point(np.array([s]))[0] @ tau),
                z_b=float(sb.point(np.array([t]))[0] @ tau)))
    return crossings
