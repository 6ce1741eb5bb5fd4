"""Cusp detection on quadratic patches.

A cusp is a contour point whose 3D tangent is parallel to the view
direction; in the image the curve reverses there and visibility flips.
The tangent field of the contour has quadratic components, so interior
cusps are common roots of two quadratics (one per transverse axis) and
reuse the pencil solver.  Cusps can also appear at patch boundaries
where the one-sided tangents disagree; those are detected on chained
segment pairs.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..contours.extract import INSIDE_TOL, normal_coefficients
from ..surface import monomial_coefficients
from .quadratics import VisibilityError, quad_value, solve_quadratic_pair

log = logging.getLogger(__name__)

CONTOUR_FILTER_TOL = 1e-8
BOUNDARY_SIGN_EPS = 1e-8


@dataclass
class CuspPoint:
    """One cusp: domain location, patch, and the 3D tangent there."""

    patch: int
    u: float
    v: float
    position: np.ndarray      # (3,) surface point
    tangent: np.ndarray       # (3,) contour tangent, parallel to the view
    kind: str = "interior"


def view_frame(tau):
    """Deterministic orthonormal frame (tau1, tau2, tau).

    The transverse axes complete the view direction by Gram-Schmidt
    against the coordinate axis of smallest view component, so the
    frame is reproducible across runs.
    """
    tau = np.asarray(tau, dtype=np.float64)
    tau = tau / np.linalg.norm(tau)
    axis = np.zeros(3)
    axis[np.argmin(np.abs(tau))] = 1.0
    tau1 = axis - (axis @ tau) * tau
    tau1 /= np.linalg.norm(tau1)
    tau2 = np.cross(tau, tau1)
    return tau1, tau2, tau


def _linear_product(a, b):
    """Product of linear fields: coefficients (1, u, v) -> (1,...,uv).

    `a` has shape (..., 3, k) (vector valued), `b` shape (..., 3).
    """
    a0, a1, a2 = a[..., 0, :], a[..., 1, :], a[..., 2, :]
    b0 = b[..., 0, None]
    b1 = b[..., 1, None]
    b2 = b[..., 2, None]
    return np.stack([
        a0 * b0,
        a0 * b1 + a1 * b0,
        a0 * b2 + a2 * b0,
        a1 * b1,
        a2 * b2,
        a1 * b2 + a2 * b1,
    ], axis=-2)


def tangent_quadratics(monomials, tau):
    """Monomial coefficients (..., 6, 3) of the contour tangent field.

    The field is the pushforward of the domain isoline direction of
    view . normal: t = -p_u (n_v . tau) + p_v (n_u . tau).  It is
    tangent to the contour wherever the contour passes and vanishes
    nowhere on a regular patch.
    """
    m = np.asarray(monomials)
    tau = np.asarray(tau, dtype=np.float64)
    tau = tau / np.linalg.norm(tau)
    g = normal_coefficients(m) @ tau                 # (..., 6)
    p_u = np.stack([m[..., 1, :], 2.0 * m[..., 3, :], m[..., 5, :]],
                   axis=-2)
    p_v = np.stack([m[..., 2, :], m[..., 5, :], 2.0 * m[..., 4, :]],
                   axis=-2)
    g_u = np.stack([g[..., 1], 2.0 * g[..., 3], g[..., 5]], axis=-1)
    g_v = np.stack([g[..., 2], g[..., 5], 2.0 * g[..., 4]], axis=-1)
    return _linear_product(p_v, g_u) - _linear_product(p_u, g_v)


def evaluate_quadratic_rows(rows, u, v):
    """Evaluate (..., 6, k) monomial rows at (u, v)."""
    basis = np.array([1.0, u, v, u * u, v * v, u * v])
    return np.moveaxis(rows, -2, -1) @ basis


def find_interior_cusps(patchset, tau, patches=None,
                        contour_tol=CONTOUR_FILTER_TOL):
    """Find all interior cusps on the given patches.

    `patches` restricts the search (cusps lie on contours, so patches
    that emitted no contour segment cannot carry one); by default every
    patch is scanned.  Roots of the two transverse tangent equations
    are filtered to the domain triangle and onto the contour.
    """
    tau1, tau2, tau = view_frame(tau)
    control = patchset.control
    ids = range(len(control)) if patches is None else patches
    mono = monomial_coefficients(control)
    t_rows = tangent_quadratics(mono, tau)
    g_rows = normal_coefficients(mono) @ tau
    cusps = []
    for p in ids:
        q1 = t_rows[p] @ tau1
        q2 = t_rows[p] @ tau2
        t_scale = np.abs(t_rows[p]).max()
        if np.abs(q1).max() == 0.0 or np.abs(q2).max() == 0.0:
            log.debug("tangent field vanishes on patch %d", p)
            continue
        g_scale = max(np.abs(g_rows[p]).max(), 1e-300)
        try:
            roots = solve_quadratic_pair(q1, q2)
        except VisibilityError as err:
            log.warning("cusp solve failed on patch %d: %s", p, err)
            continue
        seen = []
        for u, v in roots:
            if u < -INSIDE_TOL or v < -INSIDE_TOL \
                    or u + v > 1.0 + INSIDE_TOL:
                continue
            if abs(quad_value(g_rows[p], u, v)) > contour_tol * g_scale:
                continue
            if any(np.hypot(u - su, v - sv) < 1e-5 for su, sv in seen):
                continue               # split double root at a tangency
            seen.append((u, v))
            tangent = evaluate_quadratic_rows(t_rows[p], u, v)
            if np.linalg.norm(tangent) <= 1e-9 * t_scale:
                continue               # field zero (cone apex), not a cusp
            position = evaluate_quadratic_rows(mono[p], u, v)
            cusps.append(CuspPoint(patch=int(p), u=float(u), v=float(v),
                                   position=position, tangent=tangent))
    return cusps


def is_boundary_cusp(tangent_in, tangent_out, normal, tau,
                     eps=BOUNDARY_SIGN_EPS):
    """Decide whether a junction of two chained segments is a cusp.

    The two one-sided tangents come from the tangent field of each
    patch; the image curve reverses at the junction exactly when
    tau . (n x t) changes sign.  Near-zero values are treated as cusps
    so visibility is never propagated through an uncertain junction.
    """
    tau = np.asarray(tau, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    n = n / max(np.linalg.norm(n), 1e-300)
    a = tau @ np.cross(n, tangent_in / max(np.linalg.norm(tangent_in), 1e-300))
    b = tau @ np.cross(n, tangent_out / max(np.linalg.norm(tangent_out), 1e-300))
    if min(abs(a), abs(b)) < eps:
        return True
    return (a > 0.0) != (b > 0.0)
