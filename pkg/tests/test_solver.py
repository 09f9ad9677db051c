import dataclasses

import numpy as np
import pytest
import scipy.sparse as sp

from vemcurve.cases import PolynomialSolution, disk_domain, square_domain
from vemcurve.exceptions import SolveFailure
from vemcurve.geometry import DomainSpec
from vemcurve.mesh import PolyMesh
from vemcurve.solver import assemble, solve
from vemcurve.vem_local import interpolate
from vemcurve.voronoi import generate_voronoi_mesh


def zero_data(domain):
    zero = lambda x, y: np.zeros(np.shape(x))  # noqa: E731
    return DomainSpec(domain.boundary, f=zero, g=zero, convex=domain.convex, name=domain.name)


@pytest.fixture(scope="module")
def square_voronoi():
    return generate_voronoi_mesh(square_domain(), 40, 10, rng_seed=7)


def test_quad_mesh_m1_system(quad2):
    system = assemble(quad2, square_domain(), 1, gamma=10.0, k=0)
    A = system.A.toarray()
    assert A.shape == (9, 9)
    np.testing.assert_allclose(A, A.T, atol=1e-14 * np.abs(A).max())
    assert np.linalg.eigvalsh(0.5 * (A + A.T)).min() > 0


def test_homogeneous_problem(disk_meshes):
    system = assemble(disk_meshes[0], zero_data(disk_domain()), 2)
    assert not system.b.any()
    assert not solve(system).dofs.any()


@pytest.mark.parametrize("m", [1, 2, 3])
def test_sparsity_matches_cell_sharing(disk_meshes, m):
    system = assemble(disk_meshes[0], disk_domain(), m)
    n = system.n_dofs
    pattern = np.zeros((n, n), dtype=bool)
    for idx in system.dofmap.cell_dofs:
        pattern[np.ix_(idx, idx)] = True
    A = system.A.tocoo()
    got = np.zeros((n, n), dtype=bool)
    got[A.row, A.col] = True
    assert np.array_equal(got, pattern)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_patch_test(square_voronoi, m):
    sol = PolynomialSolution.random(m, np.random.default_rng(m))
    dom = square_domain(sol)
    field = solve(assemble(square_voronoi, dom, m, k=0))
    exact = interpolate(sol.u, square_voronoi, m)
    assert np.max(np.abs(field.dofs - exact)) <= 1e-10 * np.max(np.abs(exact))


def test_patch_test_is_unaffected_by_correction_on_straight_domain(square_voronoi):
    sol = PolynomialSolution.random(2, np.random.default_rng(0))
    a = assemble(square_voronoi, square_domain(sol), 2, k=1)
    assert a.diagnostics["max_abs_delta"] < 1e-12
    exact = interpolate(sol.u, square_voronoi, 2)
    assert np.max(np.abs(solve(a).dofs - exact)) <= 1e-10 * np.max(np.abs(exact))


def test_deterministic(disk_meshes):
    runs = [solve(assemble(disk_meshes[1], disk_domain(), 2)).dofs for _ in range(2)]
    assert runs[0].tobytes() == runs[1].tobytes()


def test_symmetry_without_correction(square_voronoi):
    A = assemble(square_voronoi, square_domain(), 3, k=0).A
    assert sp.linalg.norm(A - A.T) <= 1e-12 * sp.linalg.norm(A)


def test_correction_breaks_symmetry_on_curved_domain(disk_meshes):
    A = assemble(disk_meshes[0], disk_domain(), 2, k=1).A
    assert sp.linalg.norm(A - A.T) > 1e-8 * sp.linalg.norm(A)


@pytest.mark.parametrize("s", [1e-3, 7.0])
def test_interior_block_is_scale_invariant(disk_meshes, s):
    mesh = disk_meshes[0]
    scaled = PolyMesh(s * mesh.vertices, mesh.cells)
    K = assemble(mesh, disk_domain(), 2, delta_mode="zero").blocks["stiffness"]
    Ks = assemble(scaled, disk_domain(), 2, delta_mode="zero").blocks["stiffness"]
    assert sp.linalg.norm(K - Ks) <= 1e-11 * sp.linalg.norm(K)


def test_identity_stub_returns_rhs(quad2):
    system = assemble(quad2, square_domain(), 1)
    stub = dataclasses.replace(system, A=sp.identity(system.n_dofs, format="csr"))
    np.testing.assert_array_equal(solve(stub).dofs, system.b)


def test_singular_system_raises(quad2):
    system = assemble(quad2, square_domain(), 1)
    stub = dataclasses.replace(system, A=sp.csr_matrix((system.n_dofs, system.n_dofs)))
    with pytest.raises(SolveFailure):
        solve(stub)


def test_solution_field_matches_projection(disk_meshes):
    system = assemble(disk_meshes[0], disk_domain(), 2)
    field = solve(system)
    assert field.residual <= 1e-10
    c = 5
    idx = system.dofmap.cell_dofs[c]
    np.testing.assert_allclose(field.coeffs[c], system.pi_coeffs[c] @ field.dofs[idx])
    centroid = disk_meshes[0].cell_vertices(c).mean(axis=0)
    assert field.evaluate(centroid[None])[0] == pytest.approx(field.cell_values(c, centroid[None])[0])
    assert np.isnan(field.evaluate(np.array([[5.0, 5.0]]))[0])


def test_diagnostics_report_delta(disk_meshes):
    d = assemble(disk_meshes[1], disk_domain(), 1).diagnostics
    assert d["n_delta_fallback"] == 0
    assert 0 < d["max_abs_delta"] < 0.1
    assert d["delta_h_over_h2"] == pytest.approx(d["max_abs_delta"] * disk_meshes[1].n_vertices)


def test_rejects_unknown_delta_mode(quad2):
    with pytest.raises(ValueError):
        assemble(quad2, square_domain(), 1, delta_mode="absolute")
