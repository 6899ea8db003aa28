"""Continuous P1/P2 Lagrange finite elements on simplicial meshes.

Fields passed to this module are callables taking an array of points of shape
``(n_points, dim)`` and returning ``(n_points,)`` values.  Nonlinear functions
``f(u, x)`` receive the finite element values at quadrature points together
with the points themselves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .quadrature import QuadratureRule, assembly_rule, error_rule

__all__ = [
    "FemSpace",
    "apply_dirichlet",
    "assemble_convection",
    "assemble_load",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_weighted_mass",
    "interpolate_nodal",
    "l2_error",
    "nonlinear_load",
]

Field = Callable[[np.ndarray], np.ndarray]


# {{{ reference basis


def _basis_1d(degree: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the local basis, shapes ``(nq, nloc)`` and ``(nq, nloc, 1)``.

    Local order: left vertex, right vertex, midpoint.
    """
    x = xi[:, 0]
    if degree == 1:
        phi = np.column_stack([1.0 - x, x])
        dphi = np.column_stack([-np.ones_like(x), np.ones_like(x)])
    else:
        phi = np.column_stack([(1.0 - x) * (1.0 - 2.0 * x), x * (2.0 * x - 1.0), 4.0 * x * (1.0 - x)])
        dphi = np.column_stack([4.0 * x - 3.0, 4.0 * x - 1.0, 4.0 - 8.0 * x])
    return phi, dphi[:, :, None]


def _basis_2d(degree: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and gradients on the unit triangle, shapes ``(nq, nloc)``, ``(nq, nloc, 2)``.

    Local order: vertices 0, 1, 2, then edge midpoints 01, 12, 20.
    """
    x, y = xi[:, 0], xi[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    # gradients of barycentrics
    g0, g1, g2 = np.array([-1.0, -1.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])
    if degree == 1:
        phi = np.column_stack([l0, l1, l2])
        dphi = np.broadcast_to(np.stack([g0, g1, g2]), (len(x), 3, 2)).copy()
        return phi, dphi

    lam = [l0, l1, l2]
    grad = [g0, g1, g2]
    phi = []
    dphi = []
    for i in range(3):
        phi.append(lam[i] * (2.0 * lam[i] - 1.0))
        dphi.append((4.0 * lam[i] - 1.0)[:, None] * grad[i])
    for i, j in ((0, 1), (1, 2), (2, 0)):
        phi.append(4.0 * lam[i] * lam[j])
        dphi.append(4.0 * (lam[j][:, None] * grad[i] + lam[i][:, None] * grad[j]))
    return np.column_stack(phi), np.stack(dphi, axis=1)


def _reference_basis(dim: int, degree: int, rule: QuadratureRule):
    if dim == 1:
        return _basis_1d(degree, rule.points)
    return _basis_2d(degree, rule.points)


# }}}


# {{{ space


def _p2_dofs(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Append one DOF per unique edge after the vertex DOFs."""
    if mesh.dim == 1:
        n = mesh.n_nodes
        mids = 0.5 * (mesh.nodes[mesh.elements[:, 0]] + mesh.nodes[mesh.elements[:, 1]])
        edofs = np.column_stack([mesh.elements, n + np.arange(mesh.n_elements)])
        return np.vstack([mesh.nodes, mids]), edofs

    el = mesh.elements
    local_edges = ((0, 1), (1, 2), (2, 0))
    edges = np.concatenate([np.sort(el[:, [i, j]], axis=1) for i, j in local_edges])
    unique, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(len(local_edges), -1).T
    mids = 0.5 * (mesh.nodes[unique[:, 0]] + mesh.nodes[unique[:, 1]])
    edofs = np.column_stack([el, mesh.n_nodes + inverse])
    return np.vstack([mesh.nodes, mids]), edofs


@dataclass(frozen=True)
class FemSpace:
    """Lagrange space of degree 1 or 2 bound to a mesh.

    Precomputes per-element geometry and the reference basis at the assembly
    and error quadrature points.
    """

    mesh: Mesh
    degree: int
    dof_coords: np.ndarray = field(init=False, repr=False)
    element_dofs: np.ndarray = field(init=False, repr=False)
    free_dofs: np.ndarray = field(init=False, repr=False)
    constrained_dofs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {self.degree}")

        mesh = self.mesh
        if self.degree == 1:
            coords, edofs = mesh.nodes.copy(), mesh.elements.copy()
        else:
            coords, edofs = _p2_dofs(mesh)

        on_boundary = np.zeros(len(coords), dtype=bool)
        for d, (lo, hi) in enumerate(mesh.bounds):
            tol = 1.0e-12 * (hi - lo)
            c = coords[:, d]
            on_boundary |= (np.abs(c - lo) < tol) | (np.abs(c - hi) < tol)

        set_ = object.__setattr__
        set_(self, "dof_coords", coords)
        set_(self, "element_dofs", edofs)
        set_(self, "constrained_dofs", np.flatnonzero(on_boundary))
        set_(self, "free_dofs", np.flatnonzero(~on_boundary))

        # affine maps x = x0 + J xi
        v = mesh.nodes[mesh.elements]
        x0 = v[:, 0]
        J = np.stack([v[:, k + 1] - x0 for k in range(mesh.dim)], axis=-1)
        set_(self, "_x0", x0)
        set_(self, "_J", J)
        set_(self, "_detJ", np.abs(np.linalg.det(J)))
        set_(self, "_invJ", np.linalg.inv(J))
        set_(self, "_cache", {})

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def n_dofs(self) -> int:
        return len(self.dof_coords)

    @property
    def n_local(self) -> int:
        return self.element_dofs.shape[1]

    def _tables(self, kind: str):
        """Physical points, JxW weights, basis values and gradients for a rule."""
        cache = self._cache
        if kind in cache:
            return cache[kind]
        rule = assembly_rule(self.dim) if kind == "assembly" else error_rule(self.dim)
        phi, dphi = _reference_basis(self.dim, self.degree, rule)
        pts = self._x0[:, None, :] + np.einsum("eij,qj->eqi", self._J, rule.points)
        jxw = self._detJ[:, None] * rule.weights[None, :]
        # physical gradient: dphi_ref @ inv(J)
        grads = np.einsum("qlj,eji->eqli", dphi, self._invJ)
        cache[kind] = (pts, jxw, phi, grads)
        return cache[kind]

    def _pattern(self):
        """Cached map from element-matrix entries to CSR storage."""
        if "pattern" in self._cache:
            return self._cache["pattern"]
        ed = self.element_dofs
        nl = self.n_local
        rows = np.repeat(ed, nl, axis=1).ravel()
        cols = np.tile(ed, (1, nl)).ravel()
        n = self.n_dofs
        key = rows.astype(np.int64) * n + cols
        unique, inverse = np.unique(key, return_inverse=True)
        ur, uc = unique // n, unique % n
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, ur + 1, 1)
        indptr = np.cumsum(indptr)
        self._cache["pattern"] = (indptr, uc.astype(np.int32), inverse, len(unique))
        return self._cache["pattern"]

    def _to_csr(self, local: np.ndarray) -> sp.csr_matrix:
        indptr, indices, inverse, nnz = self._pattern()
        data = np.bincount(inverse, weights=local.ravel(), minlength=nnz)
        A = sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=(self.n_dofs, self.n_dofs))
        A.has_sorted_indices = True
        return A

    def _scatter(self, local: np.ndarray) -> np.ndarray:
        return np.bincount(self.element_dofs.ravel(), weights=local.ravel(), minlength=self.n_dofs)

    def evaluate(self, U: np.ndarray, kind: str = "assembly") -> tuple[np.ndarray, np.ndarray]:
        """Values of the FE function at quadrature points, with those points."""
        pts, _, phi, _ = self._tables(kind)
        return np.einsum("el,ql->eq", U[self.element_dofs], phi), pts

    def evaluate_gradient(self, U: np.ndarray, kind: str = "assembly") -> np.ndarray:
        _, _, _, grads = self._tables(kind)
        return np.einsum("el,eqli->eqi", U[self.element_dofs], grads)


# }}}


# {{{ operators


def interpolate_nodal(space: FemSpace, u: Field) -> np.ndarray:
    return np.asarray(u(space.dof_coords), dtype=np.float64).reshape(space.n_dofs)


def assemble_stiffness(space: FemSpace) -> sp.csr_matrix:
    _, jxw, _, grads = space._tables("assembly")
    local = np.einsum("eq,eqai,eqbi->eab", jxw, grads, grads)
    local = 0.5 * (local + local.transpose(0, 2, 1))
    return space._to_csr(local)


def assemble_weighted_mass(space: FemSpace, weight: np.ndarray | None = None) -> sp.csr_matrix:
    """``(w phi_j, phi_i)`` with ``w`` given at assembly quadrature points."""
    _, jxw, phi, _ = space._tables("assembly")
    wq = jxw if weight is None else jxw * weight
    local = np.einsum("eq,qa,qb->eab", wq, phi, phi)
    # exact symmetry: the (a, b) and (b, a) products round differently
    local = 0.5 * (local + local.transpose(0, 2, 1))
    return space._to_csr(local)


def assemble_mass(space: FemSpace) -> sp.csr_matrix:
    return assemble_weighted_mass(space)


def assemble_convection(space: FemSpace, velocity: Callable[[np.ndarray], np.ndarray]) -> sp.csr_matrix:
    """``(b . grad phi_j, phi_i)``; ``velocity`` maps points to ``(..., dim)`` vectors."""
    pts, jxw, phi, grads = space._tables("assembly")
    b = np.asarray(velocity(pts.reshape(-1, space.dim))).reshape(pts.shape)
    bgrad = np.einsum("eqi,eqbi->eqb", b, grads)
    local = np.einsum("eq,qa,eqb->eab", jxw, phi, bgrad)
    return space._to_csr(local)


def assemble_load(space: FemSpace, w: Field) -> np.ndarray:
    pts, jxw, phi, _ = space._tables("assembly")
    wq = np.asarray(w(pts.reshape(-1, space.dim))).reshape(jxw.shape)
    return space._scatter(np.einsum("eq,qa->ea", jxw * wq, phi))


def nonlinear_load(space: FemSpace, U: np.ndarray, f: Callable) -> np.ndarray:
    """``(f(u_h, x), phi_i)`` with ``u_h`` evaluated at quadrature points.

    ``f`` is called as ``f(u, x)`` with ``u`` of shape ``(n,)`` and ``x`` of
    shape ``(n, dim)``.
    """
    _, jxw, phi, _ = space._tables("assembly")
    uq, pts = space.evaluate(U)
    fq = np.asarray(f(uq.ravel(), pts.reshape(-1, space.dim))).reshape(jxw.shape)
    return space._scatter(np.einsum("eq,qa->ea", jxw * fq, phi))


def apply_dirichlet(matrix, rhs: np.ndarray, constrained_dofs: np.ndarray):
    """Eliminate homogeneous Dirichlet DOFs symmetrically.

    Returns ``(A_ff, b_f, free)`` where ``free`` indexes the unconstrained DOFs.
    Solve the reduced system and scatter back with zeros on ``constrained_dofs``.
    """
    n = matrix.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[np.asarray(constrained_dofs, dtype=np.int64)] = False
    free = np.flatnonzero(mask)
    A = sp.csr_matrix(matrix)[free][:, free].tocsr()
    A.sort_indices()
    return A, np.asarray(rhs)[free], free


def l2_error(space: FemSpace, U: np.ndarray, u: Field) -> float:
    pts, jxw, _, _ = space._tables("error")
    uh, _ = space.evaluate(U, kind="error")
    ue = np.asarray(u(pts.reshape(-1, space.dim))).reshape(jxw.shape)
    return float(np.sqrt(np.sum(jxw * (uh - ue) ** 2)))


# }}}
