"""Quadrature on segments and convex polygons.

Polygon rules are built from a centroid fan whose triangles are graded
geometrically toward the polygon corners, where the rational basis
functions have nearby poles.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from .geometry import Polygon

DEFAULT_DEGREE = 12
DEFAULT_GRADING = 8
DEFAULT_EDGE_POINTS = 16


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray  # (Q, 2)
    weights: np.ndarray  # (Q,)
    region: np.ndarray | None = None  # vertices of the polygon the rule was built on

    def integrate(self, values) -> float | np.ndarray:
        """Apply the rule to samples of shape (..., Q)."""
        return np.asarray(values) @ self.weights

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def _collapsed_reference(degree: int):
    """Rule on the triangle (0,0),(1,0),(0,1) collapsed at the origin.

    Gauss-Jacobi(0, 1) in the radial-like direction and Gauss-Legendre in
    the angular-like one; exact for total degree <= `degree`.
    """
    n = degree // 2 + 1
    tj, wj = roots_jacobi(n, 0.0, 1.0)
    u = 0.5 * (tj + 1.0)
    wu = wj / 4.0  # maps (1+t) dt on [-1,1] to u du on [0,1]
    tl, wl = leggauss(n)
    s = 0.5 * (tl + 1.0)
    ws = 0.5 * wl
    U, S = np.meshgrid(u, s, indexing="ij")
    W = np.outer(wu, ws)
    # point = u * ((1 - s) e1 + s e2); Jacobian u (already in the Jacobi weight)
    lam1 = (U * (1 - S)).ravel()
    lam2 = (U * S).ravel()
    return lam1, lam2, W.ravel()


def triangle_rule(a, b, c, degree: int):
    """Points and weights on triangle (a, b, c), densest near vertex `a`."""
    lam1, lam2, w = _collapsed_reference(degree)
    a, b, c = (np.asarray(p, dtype=float) for p in (a, b, c))
    pts = a + np.outer(lam1, b - a) + np.outer(lam2, c - a)
    det = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    return pts, w * det


def _graded_triangles(corner, p, q, levels):
    """Split triangle (corner, p, q) into geometrically graded pieces."""
    out = []
    for _ in range(levels):
        pm = corner + 0.5 * (p - corner)
        qm = corner + 0.5 * (q - corner)
        out.append((pm, p, q))
        out.append((pm, q, qm))
        p, q = pm, qm
    out.append((corner, p, q))
    return out


def _edge_pieces(a, b, c, levels):
    """Triangles covering the fan triangle (a, b, c), graded toward edge [a, b].

    The apex c is pulled toward the edge by halving, in strips parallel to
    it, until the remaining trapezoid is about as tall as the edge is long.
    That trapezoid is fanned from its center and graded toward a and b.
    """
    length = np.linalg.norm(b - a)
    height = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) / length
    n_strips = max(0, int(np.ceil(np.log2(height / length))))
    out = []
    ta, tb = c, c
    for j in range(1, n_strips + 1):
        lam = 0.5**j
        ba, bb = a + lam * (c - a), b + lam * (c - b)
        if j == 1:
            out.append((ba, bb, c))
        else:
            out += [(ba, bb, tb), (ba, tb, ta)]
        ta, tb = ba, bb
    m = 0.5 * (a + b)
    if n_strips == 0:
        center = c
    else:
        center = 0.25 * (a + b + ta + tb)
        out += _graded_triangles(b, tb, center, levels) + _graded_triangles(a, center, ta, levels)
        out.append((tb, ta, center))
    out += _graded_triangles(a, m, center, levels) + _graded_triangles(b, center, m, levels)
    return out


def polygon_rule(poly, degree: int = DEFAULT_DEGREE, grading_levels: int = DEFAULT_GRADING) -> QuadratureRule:
    """Quadrature rule on a convex polygon.

    The polygon is fanned from its centroid. Each fan triangle is graded
    toward its edge in strips when the edge is short compared with the
    triangle height, and the part next to the edge is graded toward both
    corners `grading_levels` times with ratio 1/2.
    """
    if degree < 1 or grading_levels < 0:
        raise ValueError("degree must be >= 1 and grading_levels >= 0")
    if not isinstance(poly, Polygon):
        poly = Polygon(poly)
    v = poly.vertices
    c = poly.centroid
    pts, wts = [], []
    n = len(v)
    for k in range(n):
        for tri in _edge_pieces(v[k], v[(k + 1) % n], c, grading_levels):
            p, w = triangle_rule(*tri, degree)
            pts.append(p)
            wts.append(w)
    return QuadratureRule(np.concatenate(pts), np.concatenate(wts), region=v)


def edge_rule(a, b, n_points: int = DEFAULT_EDGE_POINTS) -> QuadratureRule:
    """Gauss-Legendre rule on the segment [a, b]."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))
    if n_points < 1 or length == 0.0:
        raise ValueError("edge_rule needs n_points >= 1 and a != b")
    t, w = leggauss(n_points)
    s = 0.5 * (t + 1.0)
    return QuadratureRule(a + np.outer(s, b - a), 0.5 * w * length)


def boundary_rule(poly: Polygon, n_points: int = DEFAULT_EDGE_POINTS):
    """Edge rules on every edge; returns (points, weights, edge index)."""
    pts, wts, idx = [], [], []
    n = len(poly)
    for k in range(n):
        r = edge_rule(poly.vertices[k], poly.vertices[(k + 1) % n], n_points)
        pts.append(r.points)
        wts.append(r.weights)
        idx.append(np.full(n_points, k))
    return np.concatenate(pts), np.concatenate(wts), np.concatenate(idx)
