import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from l1galerkin import fem
from l1galerkin.mesh import interval_mesh, rect_tri_mesh
from l1galerkin.quadrature import (
    assembly_rule,
    error_rule,
    gauss_legendre,
    triangle_conical,
    triangle_radon7,
)
from l1galerkin.sparse import cg_solve


def space_1d(m, degree, a=0.0, b=1.0):
    return fem.FemSpace(interval_mesh(a, b, m), degree)


def space_2d(m, degree):
    return fem.FemSpace(rect_tri_mesh((0.0, 1.0), (0.0, 1.0), m), degree)


ALL_SPACES = [
    pytest.param(lambda: space_1d(7, 1), id="1d-p1"),
    pytest.param(lambda: space_1d(7, 2), id="1d-p2"),
    pytest.param(lambda: space_2d(4, 1), id="2d-p1"),
    pytest.param(lambda: space_2d(4, 2), id="2d-p2"),
]


# {{{ quadrature


@pytest.mark.parametrize(
    "rule", [gauss_legendre(3), gauss_legendre(5)], ids=["gl3", "gl5"]
)
def test_interval_rule_exactness(rule):
    x = rule.points[:, 0]
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-15)
    for k in range(rule.degree + 1):
        assert rule.weights @ x**k == pytest.approx(1.0 / (k + 1), abs=1e-14)


@pytest.mark.parametrize(
    "rule", [triangle_radon7(), triangle_conical(4)], ids=["radon7", "conical4"]
)
def test_triangle_rule_exactness(rule):
    x, y = rule.points.T
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-15)
    assert np.all(rule.weights > 0)
    for a in range(rule.degree + 1):
        for b in range(rule.degree + 1 - a):
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            assert rule.weights @ (x**a * y**b) == pytest.approx(exact, abs=1e-14)


def test_triangle_rule_inexact_beyond_degree():
    rule = triangle_radon7()
    x, _ = rule.points.T
    exact = math.factorial(6) / math.factorial(8)
    assert abs(rule.weights @ x**6 - exact) > 1e-8


@pytest.mark.parametrize("dim", [1, 2])
def test_rule_degrees(dim):
    assert assembly_rule(dim).degree >= 4
    assert error_rule(dim).degree >= 6


# }}}


# {{{ spaces


@pytest.mark.parametrize(
    "make, ndofs",
    [
        (lambda: space_1d(6, 1), 7),
        (lambda: space_1d(6, 2), 13),
        (lambda: space_2d(5, 1), 36),
        (lambda: space_2d(5, 2), 121),
    ],
)
def test_dof_counts(make, ndofs):
    space = make()
    assert space.n_dofs == ndofs
    assert len(space.free_dofs) + len(space.constrained_dofs) == ndofs
    assert np.intersect1d(space.free_dofs, space.constrained_dofs).size == 0


@pytest.mark.parametrize("make", ALL_SPACES)
def test_constrained_dofs_on_boundary(make):
    space = make()
    X = space.dof_coords
    on_bdry = np.any((np.abs(X) < 1e-12) | (np.abs(X - 1.0) < 1e-12), axis=1)
    np.testing.assert_array_equal(np.flatnonzero(on_bdry), space.constrained_dofs)


def test_rejects_degree():
    with pytest.raises(ValueError):
        fem.FemSpace(interval_mesh(0, 1, 3), 3)


# }}}


# {{{ interpolation and errors


@pytest.mark.parametrize("make", ALL_SPACES)
def test_interpolate_zero(make):
    space = make()
    U = fem.interpolate_nodal(space, lambda x: np.zeros(len(x)))
    assert not U.any()


@pytest.mark.parametrize("make", ALL_SPACES)
def test_interpolate_linear_exact(make):
    space = make()

    def u(x):
        return 0.3 + x @ np.arange(1.0, space.dim + 1.0)

    U = fem.interpolate_nodal(space, u)
    assert fem.l2_error(space, U, u) < 1e-12


@pytest.mark.parametrize("make", [lambda: space_1d(5, 2), lambda: space_2d(3, 2)])
def test_interpolate_quadratic_exact_p2(make):
    space = make()

    def u(x):
        return x[:, 0] ** 2 - 0.5 * x[:, 0] * x[:, -1] + 1.0

    U = fem.interpolate_nodal(space, u)
    assert fem.l2_error(space, U, u) < 1e-12


def test_l2_error_examples():
    space = space_1d(16, 1)
    zero = np.zeros(space.n_dofs)
    assert fem.l2_error(space, zero, lambda x: np.ones(len(x))) == pytest.approx(1.0, abs=1e-14)
    s = fem.l2_error(space, zero, lambda x: np.sin(np.pi * x[:, 0]))
    assert s == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-8)


# }}}


# {{{ matrices


def test_stiffness_1d_p1_row():
    m = 8
    h = 1.0 / m
    A = fem.assemble_stiffness(space_1d(m, 1)).toarray()
    np.testing.assert_allclose(A[3, 2:5], [-1 / h, 2 / h, -1 / h], rtol=1e-13)
    assert np.count_nonzero(A[3]) == 3


def test_mass_1d_p1_row():
    m = 8
    h = 1.0 / m
    M = fem.assemble_mass(space_1d(m, 1)).toarray()
    np.testing.assert_allclose(M[3, 2:5], [h / 6, 2 * h / 3, h / 6], rtol=1e-13)


def test_mass_unit_square_m1():
    M = fem.assemble_mass(space_2d(1, 1)).toarray()
    assert M.sum() == pytest.approx(1.0, abs=1e-14)
    # diagonal 2 |T| / 12 per incident triangle, two triangles on the diagonal
    np.testing.assert_allclose(np.diag(M), [1 / 6, 1 / 12, 1 / 12, 1 / 6], rtol=1e-13)
    np.testing.assert_allclose(M.sum(axis=1), [1 / 3, 1 / 6, 1 / 6, 1 / 3], rtol=1e-13)


@pytest.mark.parametrize("make", ALL_SPACES)
def test_matrices_symmetric(make):
    space = make()
    for K in (fem.assemble_mass(space), fem.assemble_stiffness(space)):
        assert abs(K - K.T).max() == 0.0


@pytest.mark.parametrize("make", ALL_SPACES)
def test_partition_of_unity(make):
    space = make()
    one = np.ones(space.n_dofs)
    assert np.abs(fem.assemble_stiffness(space) @ one).max() < 1e-12
    assert one @ fem.assemble_mass(space) @ one == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("make", ALL_SPACES)
def test_stiffness_positive_definite_on_free(make):
    space = make()
    A = fem.assemble_stiffness(space)
    Af, _, _ = fem.apply_dirichlet(A, np.zeros(space.n_dofs), space.constrained_dofs)
    rng = np.random.default_rng(11)
    X = rng.standard_normal((100, Af.shape[0]))
    assert np.all(np.einsum("ki,ki->k", X, (Af @ X.T).T) > 0.0)
    x, rep = cg_solve(Af, rng.standard_normal(Af.shape[0]))
    assert rep.converged


def test_convection_constant_velocity_1d():
    # (phi_j', phi_i) for hats: antisymmetric interior stencil (-1/2, 0, 1/2)
    space = space_1d(6, 1)
    C = fem.assemble_convection(space, lambda x: np.ones_like(x)).toarray()
    np.testing.assert_allclose(C[3, 2:5], [-0.5, 0.0, 0.5], atol=1e-14)
    Cf = C[1:-1, 1:-1]
    np.testing.assert_allclose(Cf, -Cf.T, atol=1e-14)


def test_convection_against_derivative():
    space = space_1d(10, 2)
    u = fem.interpolate_nodal(space, lambda x: x[:, 0] ** 2)
    C = fem.assemble_convection(space, lambda x: np.exp(x))
    load = fem.assemble_load(space, lambda x: 2.0 * x[:, 0] * np.exp(x[:, 0]))
    np.testing.assert_allclose(C @ u, load, atol=1e-13)


# }}}


# {{{ loads


@pytest.mark.parametrize("make", ALL_SPACES)
def test_load_examples(make):
    space = make()
    M = fem.assemble_mass(space)
    zero = fem.assemble_load(space, lambda x: np.zeros(len(x)))
    assert not zero.any()
    one = fem.assemble_load(space, lambda x: np.ones(len(x)))
    np.testing.assert_allclose(one, M @ np.ones(space.n_dofs), atol=1e-14)


@pytest.mark.parametrize("make", ALL_SPACES)
def test_load_of_basis_function_is_mass_column(make):
    space = make()
    j = space.free_dofs[len(space.free_dofs) // 2]
    e = np.zeros(space.n_dofs)
    e[j] = 1.0
    M = fem.assemble_mass(space)
    load = fem.nonlinear_load(space, e, lambda u, x: u)
    np.testing.assert_allclose(load, M[:, [j]].toarray().ravel(), atol=1e-14)


@pytest.mark.parametrize("make", ALL_SPACES)
def test_nonlinear_load_identity_and_constant(make):
    space = make()
    rng = np.random.default_rng(2)
    U = rng.standard_normal(space.n_dofs)
    M = fem.assemble_mass(space)
    np.testing.assert_allclose(fem.nonlinear_load(space, U, lambda u, x: u), M @ U, atol=1e-13)
    c = fem.nonlinear_load(space, U, lambda u, x: np.full_like(u, 2.5))
    np.testing.assert_allclose(c, 2.5 * (M @ np.ones(space.n_dofs)), atol=1e-13)


def test_nonlinear_load_square_single_element():
    h = 0.4
    space = fem.FemSpace(interval_mesh(0.0, h, 1), 1)
    load = fem.nonlinear_load(space, np.array([0.0, 1.0]), lambda u, x: u**2)
    np.testing.assert_allclose(load, [h / 12, h / 4], rtol=1e-14)


def test_nonlinear_load_uses_quadrature_values():
    # a nodal product would give (f(U), phi) = M f(U); with u_h = x on one
    # element, f(u) = u^2 differs from its P1 interpolant
    space = fem.FemSpace(interval_mesh(0.0, 1.0, 1), 1)
    U = np.array([0.0, 1.0])
    nodal = fem.assemble_mass(space) @ U**2
    consistent = fem.nonlinear_load(space, U, lambda u, x: u**2)
    assert not np.allclose(nodal, consistent)


# }}}


# {{{ Dirichlet and Poisson


def test_dirichlet_all_constrained():
    space = space_1d(1, 1)
    A = fem.assemble_stiffness(space)
    Af, bf, free = fem.apply_dirichlet(A, np.ones(2), space.constrained_dofs)
    assert Af.shape == (0, 0) and bf.size == 0 and free.size == 0


def test_dirichlet_one_unknown():
    space = space_1d(2, 1)
    A = fem.assemble_stiffness(space)
    b = fem.assemble_load(space, lambda x: np.ones(len(x)))
    Af, bf, free = fem.apply_dirichlet(A, b, space.constrained_dofs)
    np.testing.assert_array_equal(free, [1])
    assert np.linalg.solve(Af.toarray(), bf)[0] == pytest.approx(1.0 / 8.0, abs=1e-14)


@pytest.mark.parametrize("make", ALL_SPACES)
def test_dirichlet_block_symmetric(make):
    space = make()
    A = fem.assemble_stiffness(space) + fem.assemble_mass(space)
    Af, _, _ = fem.apply_dirichlet(A, np.zeros(space.n_dofs), space.constrained_dofs)
    assert abs(Af - Af.T).max() == 0.0


def _poisson_error(space, u, rhs):
    A = fem.assemble_stiffness(space)
    b = fem.assemble_load(space, rhs)
    Af, bf, free = fem.apply_dirichlet(A, b, space.constrained_dofs)
    U = np.zeros(space.n_dofs)
    U[free] = np.linalg.solve(Af.toarray(), bf)
    return fem.l2_error(space, U, u)


@pytest.mark.parametrize("degree", [1, 2])
def test_poisson_rate_1d(degree):
    def u(x):
        return np.sin(np.pi * x[:, 0])

    def rhs(x):
        return np.pi**2 * np.sin(np.pi * x[:, 0])

    errs = [_poisson_error(space_1d(m, degree), u, rhs) for m in (8, 16, 32)]
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    np.testing.assert_allclose(rates, degree + 1, atol=0.15)


@pytest.mark.parametrize("degree", [1, 2])
def test_poisson_rate_2d(degree):
    def u(x):
        return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])

    def rhs(x):
        return 2 * np.pi**2 * u(x)

    errs = [_poisson_error(space_2d(m, degree), u, rhs) for m in (4, 8, 16)]
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    np.testing.assert_allclose(rates[-1], degree + 1, atol=0.15)


# }}}


@settings(max_examples=30, deadline=None)
@given(m=st.integers(1, 12), degree=st.sampled_from([1, 2]), two_d=st.booleans())
def test_mass_total_is_measure(m, degree, two_d):
    space = space_2d(m, degree) if two_d else space_1d(m, degree, 0.0, 2.5)
    one = np.ones(space.n_dofs)
    measure = 1.0 if two_d else 2.5
    assert one @ (fem.assemble_mass(space) @ one) == pytest.approx(measure, rel=1e-13)
