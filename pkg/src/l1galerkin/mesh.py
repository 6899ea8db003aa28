"""Uniform interval meshes and structured triangulations of rectangles."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["Mesh", "interval_mesh", "rect_tri_mesh"]


@dataclass(frozen=True)
class Mesh:
    """A conforming simplicial mesh.

    Attributes
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    nodes : ndarray, shape (n_nodes, dim)
    elements : ndarray of int, shape (n_elements, dim + 1)
        Vertex indices; triangles are counter-clockwise.
    boundary_nodes : ndarray of int
        Sorted indices of the nodes on the domain boundary.
    m : int
        Subdivisions per axis.
    h : float
        Largest element diameter.
    bounds : tuple
        ``((a, b),)`` in 1D, ``((x0, x1), (y0, y1))`` in 2D.
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    boundary_nodes: np.ndarray
    m: int
    h: float
    bounds: tuple

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def measure(self) -> float:
        return float(np.prod([b - a for a, b in self.bounds]))

    def element_measures(self) -> np.ndarray:
        """Lengths (1D) or signed areas (2D) of every element."""
        v = self.nodes[self.elements]
        if self.dim == 1:
            return v[:, 1, 0] - v[:, 0, 0]
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def dump(self, path: str | Path) -> None:
        """Write nodes then elements as plain text, for debugging."""
        with open(path, "w") as fh:
            fh.write(f"# {self.n_nodes} nodes\n")
            for x in self.nodes:
                fh.write(" ".join(f"{c:.17g}" for c in x) + "\n")
            fh.write(f"# {self.n_elements} elements\n")
            for e in self.elements:
                fh.write(" ".join(str(i) for i in e) + "\n")


def interval_mesh(a: float, b: float, m: int) -> Mesh:
    if not a < b:
        raise ValueError(f"degenerate interval [{a}, {b}]")
    if m < 1:
        raise ValueError(f"need at least one element, got m={m}")

    h = (b - a) / m
    x = a + h * np.arange(m + 1)
    x[-1] = b
    elements = np.column_stack([np.arange(m), np.arange(1, m + 1)])
    return Mesh(
        dim=1,
        nodes=x[:, None],
        elements=elements,
        boundary_nodes=np.array([0, m]),
        m=m,
        h=h,
        bounds=((float(a), float(b)),),
    )


def rect_tri_mesh(
    xrange: tuple[float, float] = (0.0, 1.0),
    yrange: tuple[float, float] = (0.0, 1.0),
    m: int = 1,
) -> Mesh:
    """Split an ``m x m`` grid of cells along their bottom-left to top-right diagonal.

    Nodes are numbered lexicographically with ``x`` running fastest.
    """
    (x0, x1), (y0, y1) = xrange, yrange
    if not (x0 < x1 and y0 < y1):
        raise ValueError(f"degenerate rectangle {xrange} x {yrange}")
    if m < 1:
        raise ValueError(f"need at least one cell per axis, got m={m}")

    xs = np.linspace(x0, x1, m + 1)
    ys = np.linspace(y0, y1, m + 1)
    X, Y = np.meshgrid(xs, ys)  # row index is y
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(m), np.arange(m))
    i, j = i.ravel(), j.ravel()
    bl = j * (m + 1) + i
    br = bl + 1
    tl = bl + (m + 1)
    tr = tl + 1
    lower = np.column_stack([bl, br, tr])
    upper = np.column_stack([bl, tr, tl])
    elements = np.empty((2 * m * m, 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper

    ii, jj = np.meshgrid(np.arange(m + 1), np.arange(m + 1))
    on_edge = (ii == 0) | (ii == m) | (jj == 0) | (jj == m)
    boundary = np.flatnonzero(on_edge.ravel())

    dx, dy = (x1 - x0) / m, (y1 - y0) / m
    return Mesh(
        dim=2,
        nodes=nodes,
        elements=elements,
        boundary_nodes=boundary,
        m=m,
        h=float(np.hypot(dx, dy)),
        bounds=((float(x0), float(x1)), (float(y0), float(y1))),
    )
