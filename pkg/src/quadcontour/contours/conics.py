"""Classification and rational parameterization of contour conics.

The contour equation of one quadratic patch is a conic in the domain
coordinates r = (u, v):

    dot(view, normal(r)) = c + b . r + r^T A r / 2 = 0.

Diagonalizing A sorts the zero set into the stable cases: ellipse,
hyperbola, a pair of intersecting lines through the center (cone
patches), parabola, parallel lines, or a single straight line when the
quadratic part vanishes (cylinders).  Each case is covered by rational
curves of degree two or less, so the lifted contours stay rational.

Zero tests compare against 1e-10 after scaling the six coefficients to
unit infinity norm; the scale is kept alongside the raw coefficients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

ZERO_EPS = 1e-10


@dataclass(frozen=True)
class ConicContourEq:
    """Raw conic coefficients for one patch plus their magnitude scale."""

    quadratic: np.ndarray      # (2, 2) symmetric
    linear: np.ndarray         # (2,)
    constant: float
    scale: float               # infinity norm of the six coefficients


@dataclass(frozen=True)
class LocalCurve:
    """Untrimmed rational-quadratic curve in patch domain coordinates.

    numerator rows are ascending powers of t for (u, v); denominator is
    a scalar polynomial, strictly positive inside t_range.  t_range may
    be unbounded for the open cases.
    """

    case: str
    numerator: np.ndarray      # (3, 2) monomial
    denominator: np.ndarray    # (3,) monomial
    t_range: tuple

    def point(self, t):
        t = np.asarray(t, dtype=float)
        num = (self.numerator[0] + np.multiply.outer(t, self.numerator[1])
               + np.multiply.outer(t * t, self.numerator[2]))
        den = (self.denominator[0] + self.denominator[1] * t
               + self.denominator[2] * t * t)
        return num / den[..., None]


def conic_value(eq: ConicContourEq, points):
    """Evaluate the conic at (..., 2) domain points."""
    r = np.asarray(points, dtype=float)
    quad = 0.5 * np.einsum("...i,ij,...j->...", r, eq.quadratic, r)
    return quad + r @ eq.linear + eq.constant


def classify_and_parameterize(eq: ConicContourEq,
                              eps: float = ZERO_EPS) -> list[LocalCurve]:
    """Break a conic into rational curve pieces, or none if it is empty.

    The coefficient scale of `eq` normalizes all the zero tests, so the
    classification does not depend on the overall magnitude of the
    normal field.
    """
    if eq.scale == 0.0:
        # the normal is orthogonal to the view over the whole patch; a
        # view nudge removes this, so nothing is emitted
        log.debug("degenerate patch: contour equation vanishes identically")
        return []
    a = eq.quadratic / eq.scale
    b = eq.linear / eq.scale
    c = eq.constant / eq.scale
    sigma, vecs = np.linalg.eigh(a)
    order = np.argsort(-np.abs(sigma))
    sigma = sigma[order]
    vecs = vecs[:, order]            # r = vecs @ z (+ center)
    if abs(sigma[0]) <= eps:
        return _line_case(b, c, eps)
    if abs(sigma[1]) <= eps:
        return _singular_case(sigma[0], vecs, b, c, eps)
    return _center_case(sigma, vecs, a, b, c, eps)


def _line_case(b, c, eps):
    """Vanishing quadratic part: a single line, or nothing."""
    if np.max(np.abs(b)) <= eps:
        return []
    anchor = -c * b / (b @ b)
    direction = np.array([-b[1], b[0]])
    direction /= np.linalg.norm(direction)
    num = np.stack([anchor, direction, np.zeros(2)])
    return [LocalCurve("line", num, np.array([1.0, 0.0, 0.0]),
                       (-np.inf, np.inf))]


def _singular_case(s1, vecs, b, c, eps):
    """One vanishing eigenvalue: parabola or a pair of parallel lines."""
    bhat = vecs.T @ b
    if s1 < 0.0:
        s1, bhat, c = -s1, -bhat, -c
    den = np.array([1.0, 0.0, 0.0])
    if abs(bhat[1]) > eps:
        # z2 solves the equation exactly for every z1 = t
        z2 = -np.array([c, bhat[0], 0.5 * s1]) / bhat[1]
        num_z = np.zeros((3, 2))
        num_z[1, 0] = 1.0
        num_z[:, 1] = z2
        return [LocalCurve("parabola", num_z @ vecs.T, den,
                           (-np.inf, np.inf))]
    disc = bhat[0] ** 2 - 2.0 * s1 * c
    if disc <= eps:
        # empty, or a double line that a view nudge removes
        return []
    out = []
    for root in ((-bhat[0] + np.sqrt(disc)) / s1,
                 (-bhat[0] - np.sqrt(disc)) / s1):
        num_z = np.zeros((3, 2))
        num_z[0, 0] = root
        num_z[1, 1] = 1.0
        out.append(LocalCurve("parallel-lines", num_z @ vecs.T, den,
                              (-np.inf, np.inf)))
    return out


def _center_case(sigma, vecs, a, b, c, eps):
    """Nonsingular A: ellipse, hyperbola, crossing lines, or empty."""
    ainv_b = np.linalg.solve(a, b)
    center = -ainv_b
    chat = c - 0.5 * b @ ainv_b
    s = sigma.copy()
    if chat < 0.0:
        s, chat = -s, -chat
    if chat <= eps:
        if s[0] * s[1] < 0.0:
            return _crossing_lines(s, vecs, center)
        return []                      # isolated point
    if s[0] < 0.0 and s[1] < 0.0:
        return _ellipse(s, vecs, center, chat)
    if s[0] * s[1] < 0.0:
        return _hyperbola(s, vecs, center, chat)
    return []                          # definite and offset: no zero set


def _with_center(num_z, vecs, center, den):
    num = num_z @ vecs.T
    return num + np.multiply.outer(den, center)


def _ellipse(s, vecs, center, chat):
    """Two half-turn rational arcs, t in [-1, 1] each, joined at the ends.

    A single rational parameterization misses one point of the ellipse;
    two arcs relate by point reflection about the center and chain into
    the full loop.
    """
    k = np.sqrt(2.0 * chat / np.abs(s))
    den = np.array([1.0, 0.0, 1.0])
    out = []
    for flip in (1.0, -1.0):
        num_z = flip * np.array([[k[0], 0.0],
                                 [0.0, 2.0 * k[1]],
                                 [-k[0], 0.0]])
        out.append(LocalCurve("ellipse", _with_center(num_z, vecs, center,
                                                      den), den, (-1.0, 1.0)))
    return out


def _hyperbola(s, vecs, center, chat):
    """Two branches, each covered once by t in (0, inf)."""
    neg = 0 if s[0] < 0.0 else 1
    pos = 1 - neg
    k_neg = np.sqrt(2.0 * chat / abs(s[neg]))
    k_pos = np.sqrt(2.0 * chat / s[pos])
    den = np.array([0.0, 2.0, 0.0])
    out = []
    for side in (1.0, -1.0):
        num_z = np.zeros((3, 2))
        num_z[:, neg] = side * k_neg * np.array([1.0, 0.0, 1.0])
        num_z[:, pos] = k_pos * np.array([1.0, 0.0, -1.0])
        out.append(LocalCurve("hyperbola-branch",
                              _with_center(num_z, vecs, center, den), den,
                              (0.0, np.inf)))
    return out


def _crossing_lines(s, vecs, center):
    """Degenerate center case: two lines through the center.

    This happens stably at cone patches, where the contour passes
    through the apex.
    """
    neg = 0 if s[0] < 0.0 else 1
    pos = 1 - neg
    den = np.array([1.0, 0.0, 0.0])
    out = []
    for side in (1.0, -1.0):
        dir_z = np.zeros(2)
        dir_z[pos] = side * np.sqrt(abs(s[neg]))
        dir_z[neg] = np.sqrt(s[pos])
        direction = vecs @ dir_z
        direction /= np.linalg.norm(direction)
        num = np.stack([center, direction, np.zeros(2)])
        out.append(LocalCurve("intersecting-lines", num, den,
                              (-np.inf, np.inf)))
    return out
