import numpy as np
import pytest

from vemcurve.boundary_forms import (
    NitscheParams,
    bdt_correction_local,
    boundary_rhs_local,
    edge_ops,
    lagrange_matrix,
    nitsche_local,
)
from vemcurve.vem_local import build_projector, interpolate_cell

from conftest import UNIT_SQUARE, random_polygon

GAMMA, H = 10.0, 0.5


def params(k=0, gamma=GAMMA, h=H):
    return NitscheParams(gamma, k, h)


def bottom_edge(m, k=1, delta=None):
    """Edge ``(0,0) -> (1,0)`` of the unit square cell, outward normal ``(0, -1)``."""
    ops = build_projector(UNIT_SQUARE, m)
    return ops, edge_ops(ops, 0, max(1, k), delta=delta)


def dofs_of(u, m):
    return interpolate_cell(u, UNIT_SQUARE, m)


def test_params_validation_and_defaults():
    with pytest.raises(ValueError):
        NitscheParams(0.0, 0, 1.0)
    with pytest.raises(ValueError):
        NitscheParams(1.0, -1, 1.0)
    with pytest.raises(ValueError):
        NitscheParams(1.0, 0, 0.0)
    with pytest.raises(ValueError):
        NitscheParams.default(2, 0.1, k=3)
    p = NitscheParams.default(3, 0.1)
    assert (p.gamma, p.k, p.h) == (90.0, 1, 0.1)
    assert NitscheParams.default(4, 0.1, gamma=5.0, k=0).gamma == 5.0


def test_lagrange_matrix_is_identity_on_nodes():
    nodes = np.array([-1.0, -0.3, 0.4, 1.0])
    np.testing.assert_allclose(lagrange_matrix(nodes, nodes), np.eye(4), atol=1e-15)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_penalty_of_constant(m):
    _, edge = bottom_edge(m)
    one = dofs_of(lambda x, y: np.ones_like(x), m)
    A = nitsche_local(edge, params(), consistency=False)
    assert one @ A @ one == pytest.approx(GAMMA / H * 1.0, rel=1e-13)
    # the full form agrees: constants have no normal derivative
    assert one @ nitsche_local(edge, params()) @ one == pytest.approx(GAMMA / H, rel=1e-13)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_tangential_linear_reduces_to_penalty(m):
    _, edge = bottom_edge(m)
    x = dofs_of(lambda x, y: x, m)
    full = x @ nitsche_local(edge, params()) @ x
    assert full == pytest.approx(x @ nitsche_local(edge, params(), consistency=False) @ x, rel=1e-13)
    assert full == pytest.approx(GAMMA / (3 * H), rel=1e-13)


def test_unit_square_m1_y_on_bottom_edge_is_zero():
    _, edge = bottom_edge(1)
    y = dofs_of(lambda x, y: y, 1)
    assert abs(y @ nitsche_local(edge, params()) @ y) <= 1e-14


def test_nitsche_cross_term_against_hand_integral():
    # phi = x + y, psi = 1 + x on y = 0: -<dnu phi, psi> - <phi, dnu psi> + gamma/h <phi, psi>
    _, edge = bottom_edge(2)
    phi = dofs_of(lambda x, y: x + y, 2)
    psi = dofs_of(lambda x, y: 1 + x, 2)
    expected = -(-1.0) * 1.5 - 0.0 + GAMMA / H * (1 / 2 + 1 / 3)
    assert psi @ nitsche_local(edge, params()) @ phi == pytest.approx(expected, rel=1e-13)


def test_nitsche_is_symmetric():
    ops = build_projector(random_polygon(np.random.default_rng(4)), 3)
    A = nitsche_local(edge_ops(ops, 1, 1), params())
    np.testing.assert_allclose(A, A.T, atol=1e-13 * np.max(np.abs(A)))


def test_correction_vanishes_for_zero_delta_or_k0():
    _, flat = bottom_edge(2)
    assert not bdt_correction_local(flat, params(k=1)).any()
    _, bent = bottom_edge(2, delta=np.full(4, 0.1))
    assert not bdt_correction_local(bent, params(k=0)).any()
    assert bdt_correction_local(bent, params(k=1)).any()


@pytest.mark.parametrize(
    "v, dnu_v, v_int",
    [
        (lambda x, y: x**2, 0.0, 1 / 3),
        (lambda x, y: x + y, -1.0, 1 / 2),
        (lambda x, y: 1 - 2 * y + x * y, 2.0 - 1 / 2, 1.0),
    ],
    ids=["x2", "x_plus_y", "mixed"],
)
def test_k1_correction_symbolic_oracle(v, dnu_v, v_int):
    # Pi u = y, nu = (0, -1): integrand -(d * (-1)) (dnu Pi v - gamma/h v), d constant
    d = 0.03
    _, edge = bottom_edge(2, delta=np.full(4, d))
    C = bdt_correction_local(edge, params(k=1))
    u = dofs_of(lambda x, y: y, 2)
    # dnu_v is the edge integral of the normal derivative, v_int that of the trace
    expected = d * (dnu_v - GAMMA / H * v_int)
    assert dofs_of(v, 2) @ C @ u == pytest.approx(expected, rel=1e-12)


def test_k2_correction_includes_second_derivative():
    # Pi u = y^2: dnu u = 0 and dnu^2 u = 2 on y = 0, so the correction is (d^2/2 * 2) against the flux
    d = 0.05
    _, edge = bottom_edge(2, k=2, delta=np.full(4, d))
    C = bdt_correction_local(edge, params(k=2))
    u = dofs_of(lambda x, y: y**2, 2)
    one = dofs_of(lambda x, y: np.ones_like(x), 2)
    assert one @ C @ u == pytest.approx(-(d**2) * (0.0 - GAMMA / H), rel=1e-12)


def test_rhs_zero_data():
    _, edge = bottom_edge(2)
    assert not boundary_rhs_local(edge, params(), np.zeros(4)).any()


def test_rhs_linear_data_matches_nitsche_identity():
    # g = p = 1 + x, q = x + y: -(<p, dnu q> - gamma/h <p, q>)
    _, edge = bottom_edge(2)
    g = 1 + edge.points[:, 0]
    q = dofs_of(lambda x, y: x + y, 2)
    expected = -(-1.5 - GAMMA / H * (1 / 2 + 1 / 3))
    assert boundary_rhs_local(edge, params(), g) @ q == pytest.approx(expected, rel=1e-13)


def test_rhs_constant_penalty_part():
    # the penalty part is linear in gamma: differences isolate c gamma/h int(trace basis)
    c = 2.5
    _, edge = bottom_edge(2)
    g = np.full(4, c)
    diff = boundary_rhs_local(edge, params(gamma=30.0), g) - boundary_rhs_local(edge, params(gamma=10.0), g)
    expected = np.zeros(9)
    expected[[0, 1, 4]] = c * 20.0 / H * np.array([1 / 6, 1 / 6, 2 / 3])
    np.testing.assert_allclose(diff, expected, atol=1e-12)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_edge_ops_trace_and_derivatives(m):
    rng = np.random.default_rng(m)
    V = random_polygon(rng, 4, 7)
    ops = build_projector(V, m)
    c = rng.standard_normal(len(ops.basis))

    def p(x, y):
        return ops.basis.evaluate(np.column_stack([x, y])) @ c

    dofs = interpolate_cell(p, V, m)
    edge = edge_ops(ops, 0, m)
    exact = p(edge.points[:, 0], edge.points[:, 1])
    scale = np.max(np.abs(exact))
    np.testing.assert_allclose(edge.trace @ dofs, exact, atol=1e-11 * scale)
    np.testing.assert_allclose(edge.normal_derivs[0] @ dofs, exact, atol=1e-11 * scale)
    # central difference along the normal
    eps = 1e-5 * ops.h
    plus = edge.points + eps * edge.normal
    minus = edge.points - eps * edge.normal
    fd = (p(plus[:, 0], plus[:, 1]) - p(minus[:, 0], minus[:, 1])) / (2 * eps)
    np.testing.assert_allclose(edge.normal_derivs[1] @ dofs, fd, rtol=1e-7, atol=1e-7 * scale / ops.h)
