"""Common real roots of a pair of bivariate quadratics.

Cusp detection and ray-patch intersection both reduce to the same
problem: given two quadratic polynomials in (u, v), find the points
where both vanish.  The solver here runs the classical conic-pencil
reduction: some member of the pencil q1 + t q2 is a degenerate conic (t
is a root of a cubic determinant), a degenerate conic splits into two
lines, and intersecting those lines with either input conic yields all
common roots.  Roots are polished with Newton steps and verified; when
the pencil itself is degenerate the solver falls back to subdivision
over the domain triangle.

Scalar quadratics use the coefficient order (1, u, v, u^2, v^2, uv),
matching the patch monomial layout.
"""

import logging

import numpy as np

log = logging.getLogger(__name__)

ROOT_EPS = 1e-10
RESIDUAL_TOL = 1e-8
DEDUPE_TOL = 1e-8


class VisibilityError(Exception):
    """Raised when the view graph or its inputs are inconsistent."""

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


def quad_value(q, u, v):
    """Evaluate a 6-coefficient quadratic at (u, v); broadcasts."""
    q = np.asarray(q)
    return (q[..., 0] + q[..., 1] * u + q[..., 2] * v
            + q[..., 3] * u * u + q[..., 4] * v * v + q[..., 5] * u * v)


def quad_gradient(q, u, v):
    du = q[..., 1] + 2.0 * q[..., 3] * u + q[..., 5] * v
    dv = q[..., 2] + 2.0 * q[..., 4] * v + q[..., 5] * u
    return du, dv


def conic_matrix(q):
    """Symmetric 3x3 matrix M with [u, v, 1] M [u, v, 1]^T = q(u, v)."""
    return np.array([
        [q[3], 0.5 * q[5], 0.5 * q[1]],
        [0.5 * q[5], q[4], 0.5 * q[2]],
        [0.5 * q[1], 0.5 * q[2], q[0]],
    ])


def _det_cubic(m1, m2):
    """Coefficients (c0..c3) of det(m1 + t m2)."""
    c0 = np.linalg.det(m1)
    c3 = np.linalg.det(m2)
    f1 = np.linalg.det(m1 + m2)
    fm1 = np.linalg.det(m1 - m2)
    c2 = 0.5 * (f1 + fm1) - c0
    c1 = f1 - c0 - c2 - c3
    return np.array([c0, c1, c2, c3])


def split_degenerate_conic(n, eps=1e-12):
    """Split a degenerate conic matrix into real lines or a point.

    Returns (lines, point) where each line is a homogeneous covector
    (a, b, c) meaning a u + b v + c = 0, and point is the conic's real
    singular point (u, v) when the line pair is complex.  Relies on the
    eigenbasis: with eigenvalues ordered |l1| >= |l2| >= |l3| ~ 0, the
    kernel vector is the singular point and the form restricted to the
    other two eigenvectors is diag(l1, l2).
    """
    vals, vecs = np.linalg.eigh(n)
    order = np.argsort(-np.abs(vals))
    vals, vecs = vals[order], vecs[:, order]
    scale = abs(vals[0])
    if scale == 0.0:
        return [], None
    if abs(vals[1]) <= eps * scale:
        # rank one: a doubled line
        return [vecs[:, 0]], None
    p = vecs[:, 2]
    if vals[0] * vals[1] > 0.0:
        # complex line pair; the real locus is the singular point alone
        if abs(p[2]) <= 1e-12 * np.linalg.norm(p):
            return [], None
        return [], (p[0] / p[2], p[1] / p[2])
    w0 = np.sqrt(abs(vals[1])) * vecs[:, 0]
    w1 = np.sqrt(abs(vals[0])) * vecs[:, 1]
    return [np.cross(p, w0 + w1), np.cross(p, w0 - w1)], None


def _roots_keeping_double(c0, c1, c2, eps):
    """Real roots of a univariate quadratic, tangency kept as one root.

    Unlike the trimming helper in the contour stage, a grazing
    discriminant here must not discard the root: a tangential meeting
    of the pencil line with the conic is a genuine double common root.
    """
    m = max(abs(c0), abs(c1), abs(c2))
    if m == 0.0:
        return []
    if abs(c2) <= eps * m:
        if abs(c1) <= eps * m:
            return []
        return [-c0 / c1]
    disc = c1 * c1 - 4.0 * c2 * c0
    if disc < -eps * m * m:
        return []
    if disc <= eps * m * m:
        return [-0.5 * c1 / c2]
    root = np.sqrt(disc)
    q = -0.5 * (c1 + np.copysign(root, c1))
    return [q / c2, c0 / q]


def _line_points(line, q, eps):
    """Intersect the homogeneous line with the conic q."""
    a, b, c = line
    norm = np.hypot(a, b)
    if norm <= eps * abs(c):
        return []                      # line at infinity
    a, b, c = a / norm, b / norm, c / norm
    p0 = np.array([-a * c, -b * c])
    d = np.array([-b, a])
    c0 = quad_value(q, p0[0], p0[1])
    gu, gv = quad_gradient(q, p0[0], p0[1])
    c1 = gu * d[0] + gv * d[1]
    c2 = q[3] * d[0] ** 2 + q[4] * d[1] ** 2 + q[5] * d[0] * d[1]
    return [p0 + s * d for s in _roots_keeping_double(c0, c1, c2, eps)]


def _polish(q1, q2, pts, iters=3):
    out = []
    for p in pts:
        u, v = float(p[0]), float(p[1])
        for _ in range(iters):
            f = np.array([quad_value(q1, u, v), quad_value(q2, u, v)])
            j = np.array([quad_gradient(q1, u, v),
                          quad_gradient(q2, u, v)])
            det = j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0]
            if abs(det) < 1e-14:
                break
            du = (f[0] * j[1, 1] - f[1] * j[0, 1]) / det
            dv = (f[1] * j[0, 0] - f[0] * j[1, 0]) / det
            u, v = u - du, v - dv
        out.append((u, v))
    return out


def _dedupe(pts, tol=DEDUPE_TOL):
    kept = []
    for p in pts:
        if all(abs(p[0] - k[0]) > tol or abs(p[1] - k[1]) > tol
               for k in kept):
            kept.append(p)
    return kept


def _triangle_bernstein(q, corners):
    """Quadratic Bernstein coefficients of q over an arbitrary triangle.

    Corner coefficients are values; edge coefficients follow from the
    midpoint rule b_e = 2 f(m) - (f(a) + f(b)) / 2.
    """
    a, b, c = corners
    fa = quad_value(q, a[0], a[1])
    fb = quad_value(q, b[0], b[1])
    fc = quad_value(q, c[0], c[1])
    mab = 0.5 * (a + b)
    mbc = 0.5 * (b + c)
    mca = 0.5 * (c + a)
    return np.array([
        fa, fb, fc,
        2.0 * quad_value(q, mab[0], mab[1]) - 0.5 * (fa + fb),
        2.0 * quad_value(q, mbc[0], mbc[1]) - 0.5 * (fb + fc),
        2.0 * quad_value(q, mca[0], mca[1]) - 0.5 * (fc + fa),
    ])


def _subdivision_roots(q1, q2, margin=1e-2, max_depth=22):
    """Exclusion-based root isolation over the padded unit triangle.

    Splits triangles whose Bernstein coefficients do not certify a
    fixed sign for either quadratic; surviving cells at the depth limit
    are clustered into candidate roots.  A pair sharing a whole curve
    keeps strip-like cell populations alive at every level and trips
    the work cap; isolated (even tangential) roots stay well under it.
    """
    base = np.array([[-margin, -margin],
                     [1.0 + 2.0 * margin, -margin],
                     [-margin, 1.0 + 2.0 * margin]])
    stack = [(base, 0)]
    cells = []
    processed = 0
    while stack:
        tri, depth = stack.pop()
        processed += 1
        if processed > 200_000:
            raise VisibilityError(
                "quadratic pair appears to share a component")
        excluded = False
        for q in (q1, q2):
            coeff = _triangle_bernstein(q, tri)
            if coeff.min() > 0.0 or coeff.max() < 0.0:
                excluded = True
                break
        if excluded:
            continue
        if depth >= max_depth:
            cells.append(tri.mean(axis=0))
            continue
        a, b, c = tri
        mab, mbc, mca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
        for sub in ([a, mab, mca], [mab, b, mbc],
                    [mca, mbc, c], [mab, mbc, mca]):
            stack.append((np.array(sub), depth + 1))
    if not cells:
        return []
    cells = np.array(cells)
    merge_radius = 2.0 ** (3 - max_depth) * (1.0 + 3.0 * margin)
    merged = []
    for p in cells:
        for m in merged:
            if np.linalg.norm(p - np.mean(m, axis=0)) < 16.0 * merge_radius:
                m.append(p)
                break
        else:
            merged.append([p])
    clusters = [np.array(m) for m in merged]
    if any(np.ptp(c, axis=0).max() > 1e-3 for c in clusters) \
            or len(clusters) > 8:
        raise VisibilityError("quadratic pair appears to share a component",
                              clusters=len(clusters))
    return [c.mean(axis=0) for c in clusters]


def _homogeneous_roots(q1, q2, eps):
    """Common roots of two quadratics with no constant or linear part.

    Such a pair vanishes doubly at the origin (on cone sub-patches the
    tangent field has exactly this form) and the pencil determinant is
    identically zero, so the general path cannot handle it.  Each zero
    set is a pair of rays through the origin; a shared ray means a
    continuum of common roots and is reported as an error.
    """
    roots1 = _roots_keeping_double(q1[3], q1[5], q1[4], eps)
    roots2 = _roots_keeping_double(q2[3], q2[5], q2[4], eps)
    shared = any(abs(a - b) <= 1e-6 * (1.0 + abs(a))
                 for a in roots1 for b in roots2)
    if abs(q1[4]) <= eps and abs(q2[4]) <= eps:
        shared = True                  # both contain the ray u = 0
    if shared:
        raise VisibilityError("homogeneous pair shares a ray")
    return np.zeros((1, 2))


def solve_quadratic_pair(q1, q2, eps=ROOT_EPS):
    """All verified common roots of two quadratics near the unit triangle.

    Roots are returned as an (k, 2) array.  Isolated roots anywhere in
    the plane are found by the pencil reduction; if the pencil is
    identically degenerate the subdivision fallback only covers a small
    margin around the unit triangle, which is all the callers use.
    """
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    s1 = np.abs(q1).max()
    s2 = np.abs(q2).max()
    if s1 == 0.0 or s2 == 0.0:
        raise VisibilityError("degenerate quadratic in pair",
                              scales=(float(s1), float(s2)))
    q1 = q1 / s1
    q2 = q2 / s2
    if min(np.abs(q1 - q2).max(), np.abs(q1 + q2).max()) <= 1e-12:
        raise VisibilityError("quadratic pair is proportional")
    if np.abs(q1[:3]).max() <= 1e-12 and np.abs(q2[:3]).max() <= 1e-12:
        return _homogeneous_roots(q1, q2, eps)

    m1 = conic_matrix(q1)
    m2 = conic_matrix(q2)
    cubic = _det_cubic(m1, m2)
    cmax = np.abs(cubic).max()

    candidates = []
    if cmax > 1e-13:
        coeffs = cubic[::-1]
        lead = np.nonzero(np.abs(coeffs) > 1e-12 * cmax)[0]
        roots = np.roots(coeffs[lead[0]:]) if len(lead) else []
        # real parts of all roots: a double root can come back with a
        # small spurious imaginary part, and a member built from a
        # genuinely complex root just yields candidates that fail the
        # residual check
        members = [m1 + float(t.real) * m2 for t in roots]
        if abs(cubic[3]) <= 1e-10 * cmax:
            members.append(m2)
        for n in members:
            peak = np.abs(n).max()
            if peak == 0.0:
                continue
            lines, point = split_degenerate_conic(n / peak)
            for line in lines:
                candidates.extend(_line_points(line, q1, eps))
                candidates.extend(_line_points(line, q2, eps))
            if point is not None:
                candidates.append(np.array(point))

    verified = []
    for u, v in _polish(q1, q2, candidates):
        if abs(quad_value(q1, u, v)) < RESIDUAL_TOL \
                and abs(quad_value(q2, u, v)) < RESIDUAL_TOL:
            verified.append((u, v))
    if not verified and (cmax <= 1e-13 or not candidates):
        log.debug("conic pencil gave no roots; subdividing")
        polished = _polish(q1, q2, _subdivision_roots(q1, q2), iters=8)
        for u, v in polished:
            if abs(quad_value(q1, u, v)) < 1e-6 \
                    and abs(quad_value(q2, u, v)) < 1e-6:
                verified.append((u, v))
    unique = _dedupe(verified)
    if not unique:
        return np.empty((0, 2))
    return np.array(unique)
