"""Quadrature rules on the reference triangle (0,0),(1,0),(0,1) and on [0, 1]."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

MAX_DEGREE = 6


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, w), (b, a, w), (a, b, w)]


def _orbit6(a, b, w):
    c = 1.0 - a - b
    return [(a, b, w), (b, a, w), (b, c, w), (c, b, w), (c, a, w), (a, c, w)]


# Dunavant rules, weights normalized to unit area
_RULES = {
    1: [(1 / 3, 1 / 3, 1.0)],
    2: _orbit3(1 / 6, 1 / 3),
    4: _orbit3(0.445948490915965, 0.223381589678011) + _orbit3(0.091576213509771, 0.109951743655322),
    5: [(1 / 3, 1 / 3, 0.225)]
    + _orbit3(0.470142064105115, 0.132394152788506)
    + _orbit3(0.101286507323456, 0.125939180544827),
    6: _orbit3(0.249286745170910, 0.116786275726379)
    + _orbit3(0.063089014491502, 0.050844906370207)
    + _orbit6(0.053145049844817, 0.310352451033784, 0.082851075618374),
}
_RULES[3] = _RULES[4]


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Points (Q, 2) and weights (Q,) exact up to ``degree``; weights sum to 1/2."""
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"no triangle rule of degree {degree} (supported: 0..{MAX_DEGREE})")
    rule = np.array(_RULES[max(degree, 1)])
    pts = rule[:, :2]
    w = 0.5 * rule[:, 2] / rule[:, 2].sum()
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


@lru_cache(maxsize=None)
def edge_rule(degree):
    """Gauss-Legendre points and weights on [0, 1], exact up to ``degree``."""
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"no edge rule of degree {degree} (supported: 0..{MAX_DEGREE})")
    n = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    pts, w = 0.5 * (x + 1.0), 0.5 * w
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


def quadrature(degree):
    """``(triangle_points, triangle_weights, edge_points, edge_weights)``."""
    return triangle_rule(degree) + edge_rule(degree)
