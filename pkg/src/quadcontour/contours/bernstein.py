"""Small dense polynomial helpers in monomial and Bernstein bases.

Polynomials are coefficient arrays with the degree axis first, ascending
power (monomial) or ascending index (Bernstein on [0, 1]); trailing axes
carry vector components.  Everything here is degree four or less, so the
basis conversions are well conditioned.
"""

from __future__ import annotations

from math import comb

import numpy as np


def poly_mul(p, q):
    """Product of two coefficient arrays along the degree axis."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out_shape = (len(p) + len(q) - 1,) + np.broadcast_shapes(p.shape[1:],
                                                             q.shape[1:])
    out = np.zeros(out_shape)
    for i in range(len(p)):
        for j in range(len(q)):
            out[i + j] += p[i] * q[j]
    return out


def poly_pad(p, length):
    """Zero-pad a coefficient array to the given degree-axis length."""
    p = np.asarray(p, dtype=float)
    if len(p) > length:
        raise ValueError(f"polynomial degree {len(p) - 1} exceeds {length - 1}")
    out = np.zeros((length,) + p.shape[1:])
    out[:len(p)] = p
    return out


def poly_eval(p, t):
    """Evaluate monomial coefficients at scalar or array t (Horner)."""
    p = np.asarray(p, dtype=float)
    t = np.asarray(t, dtype=float)
    acc = np.broadcast_to(p[-1], t.shape + p.shape[1:]).copy()
    for k in range(len(p) - 2, -1, -1):
        acc = acc * t[(...,) + (None,) * (p.ndim - 1)] + p[k]
    return acc


def poly_affine(p, shift, scale):
    """Coefficients of p(shift + scale * s) in the new variable s."""
    p = np.asarray(p, dtype=float)
    # Horner in the linear polynomial (shift + scale s)
    acc = np.zeros((1,) + p.shape[1:])
    acc[0] = p[-1]
    for k in range(len(p) - 2, -1, -1):
        grown = np.zeros((len(acc) + 1,) + p.shape[1:])
        grown[:len(acc)] += shift * acc
        grown[1:len(acc) + 1] += scale * acc
        grown[0] += p[k]
        acc = grown
    return acc


def bernstein_from_monomial(p):
    """Convert monomial coefficients on [0, 1] to Bernstein form."""
    p = np.asarray(p, dtype=float)
    n = len(p) - 1
    out = np.zeros_like(p)
    for k in range(n + 1):
        for j in range(k + 1):
            out[k] += p[j] * comb(k, j) / comb(n, j)
    return out


def monomial_from_bernstein(c):
    """Inverse of bernstein_from_monomial."""
    c = np.asarray(c, dtype=float)
    n = len(c) - 1
    basis = np.zeros((n + 1, n + 1))
    for k in range(n + 1):
        for j in range(k + 1):
            basis[k, j] = comb(k, j) / comb(n, j)
    flat = c.reshape(n + 1, -1)
    return np.linalg.solve(basis, flat).reshape(c.shape)


def bernstein_eval(c, t):
    """De Casteljau evaluation at scalar or array t."""
    c = np.asarray(c, dtype=float)
    t = np.asarray(t, dtype=float)
    tt = t[(...,) + (None,) * (c.ndim - 1)]
    layers = [np.broadcast_to(ci, t.shape + c.shape[1:]) for ci in c]
    while len(layers) > 1:
        layers = [(1.0 - tt) * a + tt * b
                  for a, b in zip(layers[:-1], layers[1:])]
    return layers[0]


def bernstein_derivative(c):
    """Bernstein coefficients of the derivative (degree drops by one)."""
    c = np.asarray(c, dtype=float)
    n = len(c) - 1
    return n * (c[1:] - c[:-1])


def bernstein_restrict(c, t0, t1):
    """Bernstein coefficients of the curve restricted to [t0, t1]."""
    mono = monomial_from_bernstein(c)
    return bernstein_from_monomial(poly_affine(mono, t0, t1 - t0))


def quadratic_roots(c0, c1, c2, eps=1e-10):
    """Real roots of c2 t^2 + c1 t + c0, with grazing treated as no root.

    Coefficients are compared against the largest magnitude among them:
    a tiny leading coefficient degrades to the linear case, and a
    discriminant within eps of zero (relative) reports no roots, which
    implements the convention that tangential contact is not a crossing.
    """
    m = max(abs(c0), abs(c1), abs(c2))
    if m == 0.0:
        return np.empty(0)
    if abs(c2) <= eps * m:
        if abs(c1) <= eps * m:
            return np.empty(0)
        return np.array([-c0 / c1])
    disc = c1 * c1 - 4.0 * c2 * c0
    if disc <= eps * m * m:
        return np.empty(0)
    root = np.sqrt(disc)
    if c1 >= 0.0:
        q = -0.5 * (c1 + root)
    else:
        q = -0.5 * (c1 - root)
    r1 = q / c2
    r2 = c0 / q if q != 0.0 else r1
    return np.sort(np.array([r1, r2]))
