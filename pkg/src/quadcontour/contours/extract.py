"""Per-patch contour extraction: cull, classify, trim, and lift.

The entry point is extract_contours, which walks every sub-patch of a
surface, discards the ones whose normal never turns across the view
direction (a Bernstein sign test), classifies the conic of the rest,
clips the resulting curves to the domain triangle, and composes them
with the patch map.  The output segments carry both the domain curve
(degree two rational) and the view-space curve (degree four rational),
in Bernstein form on [0, 1].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from quadcontour.contours.bernstein import (
    bernstein_derivative,
    bernstein_eval,
    bernstein_from_monomial,
    monomial_from_bernstein,
    poly_affine,
    poly_eval,
    poly_mul,
    poly_pad,
    quadratic_roots,
)
from quadcontour.contours.conics import (
    ZERO_EPS,
    ConicContourEq,
    LocalCurve,
    classify_and_parameterize,
)
from quadcontour.surface import monomial_coefficients

log = logging.getLogger(__name__)

# how far outside the unit triangle a trimmed midpoint may fall
INSIDE_TOL = 1e-9

# endpoint tags: domain triangle edges, or the join of two ellipse arcs
EDGE_TAGS = ("u0", "v0", "w0")
ARC_TAG = "arc"


class ContourError(Exception):
    """Contour extraction failed."""

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


@dataclass
class ParamCurve:
    """Trimmed domain curve of one patch, Bernstein on [0, 1]."""

    case: str
    patch: int
    numerator: np.ndarray     # (3, 2) Bernstein
    denominator: np.ndarray   # (3,) Bernstein
    end_tags: tuple

    def point(self, t):
        num = bernstein_eval(self.numerator, t)
        den = bernstein_eval(self.denominator, t)
        return num / den[..., None]


@dataclass
class ContourSegment:
    """One contour piece: domain curve plus its lift to view space.

    The view-space curve is rational of degree four; its first two
    coordinates are the image curve and the third is the depth.  The
    quantitative invisibility is attached later by the visibility pass.
    """

    param: ParamCurve
    space_num: np.ndarray     # (5, 3) Bernstein
    space_den: np.ndarray     # (5,) Bernstein
    qi: int | None = field(default=None)

    @property
    def patch(self):
        return self.param.patch

    @property
    def case(self):
        return self.param.case

    def point(self, t):
        num = bernstein_eval(self.space_num, t)
        den = bernstein_eval(self.space_den, t)
        return num / den[..., None]

    def image(self, t):
        return self.point(t)[..., :2]

    def depth(self, t):
        return self.point(t)[..., 2]

    def velocity(self, t):
        """Derivative of the view-space curve (not unit length)."""
        num = bernstein_eval(self.space_num, t)
        den = bernstein_eval(self.space_den, t)
        dnum = bernstein_eval(bernstein_derivative(self.space_num), t)
        dden = bernstein_eval(bernstein_derivative(self.space_den), t)
        return (dnum * den[..., None] - num * dden[..., None]) \
            / (den * den)[..., None]

    def endpoints(self):
        return self.point(0.0), self.point(1.0)


def normal_coefficients(monomials):
    """Monomial coefficients of the patch normal, batched.

    For p with coefficient rows (c, u, v, uu, vv, uv), the cross product
    of the partials expands into six quadratic coefficient vectors.
    """
    m = np.asarray(monomials)
    p_u, p_v = m[..., 1, :], m[..., 2, :]
    p_uu, p_vv, p_uv = m[..., 3, :], m[..., 4, :], m[..., 5, :]
    return np.stack([
        np.cross(p_u, p_v),
        np.cross(p_u, p_uv) + 2.0 * np.cross(p_uu, p_v),
        2.0 * np.cross(p_u, p_vv) + np.cross(p_uv, p_v),
        2.0 * np.cross(p_uu, p_uv),
        2.0 * np.cross(p_uv, p_vv),
        4.0 * np.cross(p_uu, p_vv),
    ], axis=-2)


def _conic_arrays(monomials, tau):
    """Conic coefficients (A, b, c, scale) of view . normal, batched."""
    tau = np.asarray(tau, dtype=float)
    norm = np.linalg.norm(tau)
    if norm == 0.0:
        raise ContourError("view direction must be nonzero")
    tau = tau / norm
    n = normal_coefficients(monomials) @ tau
    c = n[..., 0]
    b = np.stack([n[..., 1], n[..., 2]], axis=-1)
    a = np.empty(n.shape[:-1] + (2, 2))
    a[..., 0, 0] = 2.0 * n[..., 3]
    a[..., 1, 1] = 2.0 * n[..., 4]
    a[..., 0, 1] = a[..., 1, 0] = n[..., 5]
    scale = np.max(np.abs(np.stack([a[..., 0, 0], a[..., 1, 1],
                                    a[..., 0, 1], b[..., 0], b[..., 1], c],
                                   axis=-1)), axis=-1)
    return a, b, c, scale


def contour_coefficients(patch, tau) -> ConicContourEq:
    """Exact conic of the contour equation for one patch.

    `patch` may be a QuadraticPatch or a (6, 3) control array.
    """
    control = getattr(patch, "control", patch)
    monomials = monomial_coefficients(np.asarray(control, dtype=float))
    a, b, c, scale = _conic_arrays(monomials, tau)
    return ConicContourEq(a, b, float(c), float(scale))


def _bernstein_signs(a, b, c):
    """Bernstein coefficients of the conic over the unit triangle."""
    b1, b2 = b[..., 0], b[..., 1]
    return np.stack([
        c,
        c + b1 + 0.5 * a[..., 0, 0],
        c + b2 + 0.5 * a[..., 1, 1],
        c + 0.5 * b1,
        c + 0.5 * b2,
        c + 0.5 * (b1 + b2 + a[..., 0, 1]),
    ], axis=-1)


def emitting_patches(patchset, tau):
    """Indices of sub-patches that may carry a contour.

    A patch whose six Bernstein coefficients of the contour equation all
    share a strict sign cannot cross zero (convex hull property) and is
    culled; the test never discards a patch with an actual contour.
    """
    monomials = monomial_coefficients(patchset.control)
    a, b, c, _ = _conic_arrays(monomials, tau)
    coeffs = _bernstein_signs(a, b, c)
    keep = ~((coeffs > 0.0).all(axis=-1) | (coeffs < 0.0).all(axis=-1))
    return np.flatnonzero(keep)


def _boundary_polys(curve: LocalCurve):
    """Crossing polynomials in t for the lines u=0, v=0, u+v=1."""
    a = curve.numerator[:, 0]
    b = curve.numerator[:, 1]
    d = curve.denominator
    return [a, b, a + b - d]


def trim_to_triangle(curve: LocalCurve, eps: float = ZERO_EPS):
    """Clip an untrimmed curve against the unit triangle.

    Returns a list of (t0, t1, (tag0, tag1)) intervals whose interiors
    lie inside the triangle.  Crossing parameters come from the (at most
    quadratic) numerators of the three boundary-line substitutions;
    tangential grazing counts as no crossing, and unbounded parameter
    ranges can only contribute between two genuine crossings.
    """
    lo, hi = curve.t_range
    events = []
    if np.isfinite(lo):
        events.append((lo, ARC_TAG))
    if np.isfinite(hi):
        events.append((hi, ARC_TAG))
    for tag, poly in zip(EDGE_TAGS, _boundary_polys(curve)):
        if np.max(np.abs(poly)) <= eps:
            # the curve runs along this boundary line; not a crossing
            log.debug("curve lies on boundary %s", tag)
            continue
        for root in quadratic_roots(poly[0], poly[1], poly[2], eps):
            if lo < root < hi:
                events.append((float(root), tag))
    events.sort(key=lambda item: item[0])
    merged = []
    for t, tag in events:
        if merged and abs(t - merged[-1][0]) <= 1e-12 * max(1.0, abs(t)):
            if merged[-1][1] == ARC_TAG and tag != ARC_TAG:
                merged[-1] = (merged[-1][0], tag)
            continue
        merged.append((t, tag))
    out = []
    for (t0, tag0), (t1, tag1) in zip(merged[:-1], merged[1:]):
        if t1 - t0 <= 1e-12 * max(1.0, abs(t0)):
            continue
        mid = curve.point(0.5 * (t0 + t1))
        u, v = mid
        if u >= -INSIDE_TOL and v >= -INSIDE_TOL and u + v <= 1.0 + INSIDE_TOL:
            out.append((t0, t1, (tag0, tag1)))
    return out


def _reparameterized_polys(curve: LocalCurve, t0, t1):
    """Monomial (u, v) numerator and denominator on [0, 1] for [t0, t1]."""
    num = poly_affine(curve.numerator, t0, t1 - t0)
    den = poly_affine(curve.denominator, t0, t1 - t0)
    peak = np.max(np.abs(den))
    return num / peak, den / peak


def _param_curve(curve: LocalCurve, patch, t0, t1, tags) -> ParamCurve:
    num, den = _reparameterized_polys(curve, t0, t1)
    return ParamCurve(curve.case, patch, bernstein_from_monomial(num),
                      bernstein_from_monomial(den), tags)


def lift(curve: ParamCurve, patch) -> ContourSegment:
    """Compose a trimmed domain curve with the patch map.

    The quadratic patch applied to a rational-quadratic curve yields a
    rational curve with quartic numerator and denominator; projecting to
    the image just drops the third coordinate later, so the whole
    view-space curve is stored.
    """
    control = getattr(patch, "control", patch)
    m = monomial_coefficients(np.asarray(control, dtype=float))
    num = monomial_from_bernstein(curve.numerator)
    den = monomial_from_bernstein(curve.denominator)
    a, b = num[:, 0], num[:, 1]
    terms = (
        np.multiply.outer(poly_mul(den, den), m[0]),
        np.multiply.outer(poly_mul(a, den), m[1]),
        np.multiply.outer(poly_mul(b, den), m[2]),
        np.multiply.outer(poly_mul(a, a), m[3]),
        np.multiply.outer(poly_mul(b, b), m[4]),
        np.multiply.outer(poly_mul(a, b), m[5]),
    )
    space_num = sum(poly_pad(term, 5) for term in terms)
    space_den = poly_pad(poly_mul(den, den), 5)
    return ContourSegment(curve, bernstein_from_monomial(space_num),
                          bernstein_from_monomial(space_den))


def _degenerate_arc(seg, tol=1e-9):
    """True when a lifted arc has collapsed to a point.

    A conic clipping exactly through a triangle corner yields an arc of
    zero length; the neighbouring patches carry the actual curve, and
    point arcs only confuse the chaining and crossing stages.  The
    dropped length is far below the chaining tolerance, so no gap opens.
    """
    pts = seg.point(np.array([0.0, 0.5, 1.0]))
    span = np.linalg.norm(pts[0] - pts[1]) + np.linalg.norm(pts[1] - pts[2])
    return span <= tol * max(1.0, np.abs(pts).max())


def _drop_duplicates(segments, radius=1e-7):
    """Remove arcs that trace the same surface curve twice.

    When the contour runs exactly along a patch border (symmetric
    meshes under symmetric views) both bordering patches report the
    same arc, once in each direction.  A candidate pair found by
    proximity of its sampled points only counts as a duplicate when
    the deviation is small against the arc length itself, so distinct
    short arcs that merely share a corner are kept.  The lower-index
    copy survives, keeping the result deterministic.
    """
    if len(segments) < 2:
        return segments, 0
    ts = np.linspace(0.0, 1.0, 5)
    samples = np.stack([s.point(ts) for s in segments])     # (n, 5, 3)
    lengths = np.linalg.norm(np.diff(samples, axis=1), axis=2).sum(axis=1)
    flat = samples.reshape(len(segments), -1)
    scale = max(1.0, float(np.abs(flat).max()))
    tree = cKDTree(flat)
    rev = samples[:, ::-1].reshape(len(segments), -1)
    candidates = set(tree.query_pairs(radius * scale))
    for i, js in enumerate(tree.query_ball_point(rev, radius * scale)):
        for j in js:
            if j > i:
                candidates.add((i, j))
    drop = set()
    for i, j in sorted(candidates):
        if i in drop:
            continue
        dev = min(np.abs(flat[i] - flat[j]).max(),
                  np.abs(rev[i] - flat[j]).max())
        if dev <= max(1e-9 * scale, 0.2 * min(lengths[i], lengths[j])):
            drop.add(j)
    kept = [s for i, s in enumerate(segments) if i not in drop]
    return kept, len(drop)


def extract_contours(patchset, tau, collect_stats=False):
    """All contour segments of a patch set for one view direction.

    Patches are processed in index order and curves in classification
    order, so the result is deterministic.  With collect_stats=True a
    (segments, stats) pair is returned, where stats counts patches per
    conic case for the debug dump.
    """
    monomials = monomial_coefficients(patchset.control)
    a, b, c, scale = _conic_arrays(monomials, tau)
    coeffs = _bernstein_signs(a, b, c)
    keep = ~((coeffs > 0.0).all(axis=-1) | (coeffs < 0.0).all(axis=-1))
    candidates = np.flatnonzero(keep)
    segments = []
    stats = {"patches": len(patchset), "candidates": len(candidates),
             "cases": {}}
    for p in candidates:
        eq = ConicContourEq(a[p], b[p], float(c[p]), float(scale[p]))
        curves = classify_and_parameterize(eq)
        if curves:
            name = curves[0].case
            stats["cases"][name] = stats["cases"].get(name, 0) + 1
        for curve in curves:
            for t0, t1, tags in trim_to_triangle(curve):
                param = _param_curve(curve, int(p), t0, t1, tags)
                seg = lift(param, patchset.control[p])
                if _degenerate_arc(seg):
                    stats["dropped_points"] = \
                        stats.get("dropped_points", 0) + 1
                    continue
                segments.append(seg)
    segments, duplicates = _drop_duplicates(segments)
    if duplicates:
        stats["dropped_duplicates"] = duplicates
    stats["segments"] = len(segments)
    if collect_stats:
        return segments, stats
    return segments
