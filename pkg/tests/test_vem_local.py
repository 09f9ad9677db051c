import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vemcurve.dofs import GlobalDofMap, local_dof_count, n_moments
from vemcurve.exceptions import DegenerateCell
from vemcurve.mesh import structured_quad_mesh
from vemcurve.quadrature import polygon_area, polygon_rule
from vemcurve.vem_local import (
    MonomialBasis,
    build_projector,
    interpolate,
    interpolate_cell,
    l2_project_element,
    local_load,
    local_stiffness,
    monomial_exponents,
    monomial_index,
    n_monomials,
)

from conftest import UNIT_SQUARE, polygons, random_polygon, regular_polygon


def poly_from_coeffs(basis, coeffs):
    return lambda x, y: basis.evaluate(np.column_stack([x, y])) @ coeffs


def dirichlet_product(ops, cp, cq):
    """Oracle: int_K grad p . grad q by quadrature of the exact gradients."""
    g = ops.basis.gradient(ops.quad.points)
    gp = np.einsum("pak,a->pk", g, cp)
    gq = np.einsum("pak,a->pk", g, cq)
    return float(np.dot(ops.quad.weights, np.sum(gp * gq, axis=1)))


def test_monomial_ordering():
    assert n_monomials(3) == 10 and n_monomials(-1) == 0
    e = monomial_exponents(2)
    np.testing.assert_array_equal(e, [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]])
    assert all(monomial_index(a, b) == i for i, (a, b) in enumerate(monomial_exponents(5)))


def test_dof_counts():
    assert [n_moments(m) for m in range(1, 5)] == [0, 1, 3, 6]
    assert local_dof_count(5, 3) == 18


def test_directional_derivative_matches_restriction():
    basis = MonomialBasis(np.array([0.2, -0.1]), 0.7, 4)
    x0 = np.array([[0.5, 0.3]])
    nu = np.array([0.6, -0.8])
    t = np.linspace(-1.0, 1.0, 9)
    vals = basis.evaluate(x0 + t[:, None] * nu)
    # values along the line are degree-4 polynomials in t: the fit gives all derivatives at t = 0
    fit = np.polynomial.polynomial.polyfit(t, vals, 4)
    for j in range(5):
        got = basis.directional(x0, nu, j)[0]
        np.testing.assert_allclose(got, fit[j] * math.factorial(j), rtol=1e-9, atol=1e-9)
    assert not basis.directional(x0, nu, 5).any()


def test_unit_square_m1_projector_oracle():
    # dofs (0, 0, 1, 0): the harmonic VEM function is xy, so Pi_nabla = (x + y) / 2 - 1/4
    ops = build_projector(UNIT_SQUARE, 1)
    c = ops.project(np.array([0.0, 0.0, 1.0, 0.0]))
    pts = np.random.default_rng(0).uniform(0, 1, (10, 2))
    np.testing.assert_allclose(ops.basis.evaluate(pts) @ c, 0.5 * (pts[:, 0] + pts[:, 1]) - 0.25, atol=1e-14)


def test_constant_dofs_project_to_e0_in_monomial_basis():
    V = regular_polygon(5)
    for m in (1, 2, 3):
        ops = build_projector(V, m, basis="monomial")
        dofs = interpolate_cell(lambda x, y: np.ones_like(x), V, m, basis="monomial")
        np.testing.assert_allclose(ops.project(dofs), np.eye(len(ops.basis))[0], atol=1e-13)


def test_constant_interpolant():
    V = regular_polygon(6, center=(0.3, 0.1))
    m = 3
    dofs = interpolate_cell(lambda x, y: np.ones_like(x), V, m, basis="monomial")
    nv = len(V)
    np.testing.assert_allclose(dofs[: nv * m], 1.0)
    ops = build_projector(V, m, basis="monomial")
    quad = polygon_rule(V, 2 * m)
    avg = ops.basis.raw(quad.points)[:, : n_moments(m)].T @ quad.weights / polygon_area(V)
    np.testing.assert_allclose(dofs[nv * m:], avg, atol=1e-15)
    assert dofs[nv * m] == pytest.approx(1.0)


@pytest.mark.parametrize("m", range(1, 7))
@pytest.mark.parametrize("basis", ["orthonormal", "monomial"])
def test_projector_reproduces_polynomials(m, basis):
    rng = np.random.default_rng(m)
    tol = 1e-11 if basis == "orthonormal" else 1e-6
    for _ in range(10):
        V = random_polygon(rng)
        ops = build_projector(V, m, basis=basis)
        c = rng.standard_normal(len(ops.basis))
        dofs = interpolate_cell(poly_from_coeffs(ops.basis, c), V, m, basis=basis)
        assert np.max(np.abs(ops.project(dofs) - c)) <= tol * max(1.0, np.max(np.abs(c)))


@settings(max_examples=25, deadline=None)
@given(polygons(), st.integers(1, 5))
def test_m_consistency(V, m):
    ops = build_projector(V, m)
    rng = np.random.default_rng(0)
    cp, cq = rng.standard_normal((2, len(ops.basis)))
    up = interpolate_cell(poly_from_coeffs(ops.basis, cp), V, m)
    uq = interpolate_cell(poly_from_coeffs(ops.basis, cq), V, m)
    exact = dirichlet_product(ops, cp, cq)
    scale = np.sqrt(dirichlet_product(ops, cp, cp) * dirichlet_product(ops, cq, cq))
    assert up @ local_stiffness(ops) @ uq == pytest.approx(exact, abs=1e-11 * scale)


@settings(max_examples=20, deadline=None)
@given(polygons(), st.integers(1, 4))
def test_constants_in_kernel_and_symmetry(V, m):
    ops = build_projector(V, m)
    ones = interpolate_cell(lambda x, y: np.ones_like(x), V, m)
    K = ops.stiffness
    assert np.max(np.abs(K @ ones)) <= 1e-12 * np.max(np.abs(K))
    np.testing.assert_allclose(K, K.T, atol=1e-14 * np.max(np.abs(K)))
    assert np.min(np.linalg.eigvalsh(K)) > -1e-12 * np.max(np.abs(K))


@settings(max_examples=20, deadline=None)
@given(polygons(), st.integers(1, 4))
def test_stabilization_vanishes_on_polynomials(V, m):
    ops = build_projector(V, m)
    c = np.random.default_rng(1).standard_normal(len(ops.basis))
    u = interpolate_cell(poly_from_coeffs(ops.basis, c), V, m)
    r = u - ops.pi_dofs @ u
    assert ops.stab_scale * r @ r <= 1e-22 * max(1.0, u @ u)


def test_unit_square_m1_energy_of_x():
    ops = build_projector(UNIT_SQUARE, 1)
    u = UNIT_SQUARE[:, 0]
    assert u @ ops.stiffness @ u == pytest.approx(1.0, rel=1e-14)


def test_bases_give_identical_consistency_energy():
    # the moment dofs differ between bases, the virtual function and its projection do not
    V = random_polygon(np.random.default_rng(5))
    u = lambda x, y: np.exp(x) * np.sin(2 * y)  # noqa: E731
    for m in (1, 2, 3, 4):
        energies = []
        for basis in ("orthonormal", "monomial"):
            ops = build_projector(V, m, basis=basis)
            dofs = interpolate_cell(u, V, m, basis=basis)
            energies.append(dofs @ ops.consistency @ dofs)
        assert energies[0] == pytest.approx(energies[1], rel=1e-9)


def test_projector_is_idempotent():
    V = random_polygon(np.random.default_rng(9), 6, 8)
    for m in range(1, 7):
        P = build_projector(V, m).pi_dofs
        assert np.max(np.abs(P @ P - P)) <= 1e-12 * np.max(np.abs(P))


def test_rejects_bad_input():
    with pytest.raises(DegenerateCell):
        build_projector(UNIT_SQUARE[::-1], 1)
    with pytest.raises(ValueError):
        build_projector(UNIT_SQUARE, 0)
    with pytest.raises(ValueError):
        build_projector(UNIT_SQUARE, 1, basis="legendre")


def test_l2_projection_examples():
    ops = build_projector(UNIT_SQUARE, 2)
    pts = np.random.default_rng(2).uniform(0, 1, (12, 2))
    c = l2_project_element(ops, 1, lambda x, y: x**2)
    np.testing.assert_allclose(ops.basis.evaluate(pts)[:, :3] @ c, pts[:, 0] - 1 / 6, atol=1e-14)
    assert not l2_project_element(ops, 2, lambda x, y: 0 * x).any()
    own = np.random.default_rng(3).standard_normal(6)
    np.testing.assert_allclose(l2_project_element(ops, 2, poly_from_coeffs(ops.basis, own)), own, atol=1e-12)
    with pytest.raises(ValueError):
        l2_project_element(ops, 3, lambda x, y: x)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
@pytest.mark.parametrize("projection", ["pi_nabla", "pi_zero"])
def test_load_of_constant_source(m, projection):
    V = regular_polygon(7, 0.4)
    ops = build_projector(V, m)
    if projection == "pi_zero" and m == 1:
        with pytest.raises(ValueError):
            local_load(ops, lambda x, y: np.ones_like(x), projection)
        return
    b = local_load(ops, lambda x, y: 3.0 * np.ones_like(x), projection)
    ones = interpolate_cell(lambda x, y: np.ones_like(x), V, m)
    assert b @ ones == pytest.approx(3.0 * ops.area, rel=1e-13)


def test_interpolant_projection_converges():
    u = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)  # noqa: E731

    def du(x, y):
        return np.pi * np.column_stack([np.cos(np.pi * x) * np.sin(np.pi * y), np.sin(np.pi * x) * np.cos(np.pi * y)])

    for m in (1, 2, 3):
        errs, hs = [], []
        for n in (4, 8, 16):
            mesh = structured_quad_mesh(n)
            dm = GlobalDofMap(mesh, m)
            dofs = interpolate(u, mesh, m, dm)
            total = 0.0
            for c in range(mesh.n_cells):
                ops = build_projector(mesh.cell_vertices(c), m)
                coef = ops.project(dofs[dm.cell_dofs[c]])
                p = ops.quad.points
                diff = du(p[:, 0], p[:, 1]) - np.einsum("pak,a->pk", ops.basis.gradient(p), coef)
                total += np.dot(ops.quad.weights, np.sum(diff**2, axis=1))
            errs.append(np.sqrt(total))
            hs.append(1.0 / n)
        rate = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert rate >= m - 0.3


def test_global_interpolant_matches_local(quad2):
    m = 3
    u = lambda x, y: np.exp(x) * np.cos(2 * y)  # noqa: E731
    dm = GlobalDofMap(quad2, m)
    glob = interpolate(u, quad2, m, dm)
    for c in range(quad2.n_cells):
        np.testing.assert_allclose(glob[dm.cell_dofs[c]], interpolate_cell(u, quad2.cell_vertices(c), m), atol=1e-13)
