import numpy as np
import pytest
from hypothesis import strategies as st

from vemcurve.cases import disk_domain
from vemcurve.mesh import structured_quad_mesh
from vemcurve.voronoi import generate_voronoi_mesh

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def regular_polygon(n, radius=1.0, phase=0.0, center=(0.0, 0.0)):
    t = phase + 2 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def random_polygon(rng, n_min=3, n_max=10):
    """Convex, shape-regular polygon: jittered angles on a jittered circle, random scale and offset."""
    n = int(rng.integers(n_min, n_max + 1))
    gaps = rng.uniform(0.5, 1.5, n)
    t = np.cumsum(gaps) / gaps.sum() * 2 * np.pi + rng.uniform(0, 2 * np.pi)
    r = rng.uniform(0.8, 1.0, n)
    pts = np.column_stack([r * np.cos(t), r * np.sin(t)])
    from scipy.spatial import ConvexHull

    pts = pts[ConvexHull(pts).vertices]  # CCW convex hull order
    scale = 10.0 ** rng.uniform(-2, 1)
    return scale * pts + rng.uniform(-5, 5, 2)


@st.composite
def polygons(draw, n_min=3, n_max=9):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_polygon(np.random.default_rng(seed), n_min, n_max)


@pytest.fixture(scope="session")
def quad2():
    return structured_quad_mesh(2)


@pytest.fixture(scope="session")
def disk_meshes():
    dom = disk_domain()
    return [generate_voronoi_mesh(dom, n, 20, 0) for n in (32, 64, 128)]
