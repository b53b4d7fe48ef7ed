"""Quadrature on the reference triangle (0,0), (1,0), (0,1)."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (nq, 2) reference coordinates
    weights: np.ndarray  # (nq,), sum 1/2
    degree: int


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Collapsed Gauss-Legendre rule exact for polynomials of total degree ``degree``.

    The square ``(s, t)`` is mapped onto the triangle by ``(s, t (1 - s))``;
    the Jacobian ``1 - s`` adds one degree in ``s``.
    """
    degree = max(int(degree), 0)
    n = (degree + 3) // 2
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    s, t = np.meshgrid(x, x, indexing="ij")
    ws, wt = np.meshgrid(w, w, indexing="ij")
    pts = np.column_stack([s.ravel(), (t * (1.0 - s)).ravel()])
    wts = (ws * wt * (1.0 - s)).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, degree)


@lru_cache(maxsize=None)
def line_rule(degree):
    """Gauss-Legendre on [0, 1], exact to ``degree``; weights sum to 1."""
    n = max(int(degree) // 2 + 1, 1)
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w
