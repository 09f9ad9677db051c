import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vemcurve.cases import disk_domain, flower_domain, square_domain
from vemcurve.mesh import audit_shape, structured_quad_mesh
from vemcurve.voronoi import generate_voronoi_mesh


@pytest.fixture(scope="module")
def disk64():
    return generate_voronoi_mesh(disk_domain(), 64, 20, rng_seed=0)


def test_disk_mesh_size_and_boundary(disk64):
    assert 100 <= disk64.n_vertices <= 200
    bv = disk64.vertices[disk64.is_boundary_vertex]
    np.testing.assert_allclose(np.hypot(*bv.T), 1.0, atol=1e-10)
    assert disk64.n_cells == 64
    assert disk64.euler_characteristic() == 1
    disk64.validate(disk_domain())


def test_disk_mesh_covers_inscribed_polygon(disk64):
    assert disk64.areas.sum() == pytest.approx(disk64.boundary_polygon_area(), rel=1e-12)
    # inscribed polygon: pi minus the circular segments cut off by its edges
    _, _, length, _ = disk64.edge_geometry(disk64.boundary_edges)
    theta = 2 * np.arcsin(length / 2)
    segments = 0.5 * np.sum(theta - np.sin(theta))
    assert disk64.areas.sum() == pytest.approx(np.pi - segments, rel=1e-12)


def test_deterministic(disk64):
    again = generate_voronoi_mesh(disk_domain(), 64, 20, rng_seed=0)
    assert again.vertices.tobytes() == disk64.vertices.tobytes()
    assert all(np.array_equal(a, b) for a, b in zip(again.cells, disk64.cells))


def test_different_seed_gives_different_mesh(disk64):
    other = generate_voronoi_mesh(disk_domain(), 64, 20, rng_seed=1)
    assert other != disk64


def test_grid_seeds_give_structured_quad_mesh():
    seeds = np.array([[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])
    mesh = generate_voronoi_mesh(square_domain(), 4, 0, seeds=seeds)
    assert mesh == structured_quad_mesh(2)


def test_lloyd_improves_uniformity():
    raw = audit_shape(generate_voronoi_mesh(disk_domain(), 100, 0, rng_seed=3))
    relaxed = audit_shape(generate_voronoi_mesh(disk_domain(), 100, 20, rng_seed=3))
    assert relaxed.quasi_uniformity < raw.quasi_uniformity


def test_nonconvex_flower_mesh():
    dom = flower_domain()
    mesh = generate_voronoi_mesh(dom, 400, 10, rng_seed=0)
    mesh.validate(dom)
    assert mesh.euler_characteristic() == 1
    bv = mesh.vertices[mesh.is_boundary_vertex]
    assert np.max(dom.boundary_distance(bv)) < 1e-10 * dom.diameter


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000), st.integers(8, 60))
def test_random_disk_meshes_are_valid(rng_seed, n):
    mesh = generate_voronoi_mesh(disk_domain(), n, 5, rng_seed=rng_seed)
    mesh.validate(disk_domain())
    assert mesh.n_cells == n
    assert np.all(mesh.areas > 0)


def test_rejects_too_few_seeds():
    with pytest.raises(ValueError):
        generate_voronoi_mesh(disk_domain(), 2)
