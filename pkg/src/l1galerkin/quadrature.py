"""Quadrature rules on the reference interval [0, 1] and the unit triangle."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

__all__ = [
    "QuadratureRule",
    "gauss_legendre",
    "triangle_conical",
    "triangle_radon7",
    "assembly_rule",
    "error_rule",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Points in reference coordinates, shape ``(n_points, dim)``, and weights.

    The weights sum to the reference measure: 1 on the interval, 1/2 on the
    triangle.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> QuadratureRule:
    """``n``-point Gauss-Legendre rule on [0, 1]; exact to degree ``2n - 1``."""
    x, w = special.roots_legendre(n)
    return QuadratureRule(points=(0.5 * (x + 1.0))[:, None], weights=0.5 * w, degree=2 * n - 1)


@lru_cache(maxsize=None)
def triangle_radon7() -> QuadratureRule:
    """Radon's 7-point rule on the unit triangle, exact to degree 5."""
    r = np.sqrt(15.0)
    a1, b1 = (6.0 - r) / 21.0, (9.0 + 2.0 * r) / 21.0
    a2, b2 = (6.0 + r) / 21.0, (9.0 - 2.0 * r) / 21.0
    w1, w2 = (155.0 - r) / 1200.0, (155.0 + r) / 1200.0
    pts = np.array(
        [
            [1.0 / 3.0, 1.0 / 3.0],
            [a1, a1], [b1, a1], [a1, b1],
            [a2, a2], [b2, a2], [a2, b2],
        ]
    )
    w = np.array([9.0 / 40.0, w1, w1, w1, w2, w2, w2])
    return QuadratureRule(points=pts, weights=0.5 * w, degree=5)


@lru_cache(maxsize=None)
def triangle_conical(n: int) -> QuadratureRule:
    """Collapsed-square (Stroud conical product) rule with ``n * n`` points.

    Exact to degree ``2n - 1``.  Maps the square through ``(u, v) -> (u, v(1 - u))``
    and absorbs the Jacobian ``1 - u`` into a Gauss-Jacobi rule.
    """
    t, wt = special.roots_jacobi(n, 1.0, 0.0)
    s, ws = special.roots_legendre(n)
    u = 0.5 * (t + 1.0)
    v = 0.5 * (s + 1.0)
    U, V = np.meshgrid(u, v, indexing="ij")
    WU, WV = np.meshgrid(0.25 * wt, 0.5 * ws, indexing="ij")
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    return QuadratureRule(points=pts, weights=(WU * WV).ravel(), degree=2 * n - 1)


def assembly_rule(dim: int) -> QuadratureRule:
    """Rule used for matrices and load vectors (degree 5)."""
    return gauss_legendre(3) if dim == 1 else triangle_radon7()


def error_rule(dim: int) -> QuadratureRule:
    """Higher-order rule used for L2 errors (degree 9 in 1D, 7 in 2D)."""
    return gauss_legendre(5) if dim == 1 else triangle_conical(4)
