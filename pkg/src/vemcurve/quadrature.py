"""One-dimensional Gauss rules and polygon quadrature by triangle fans."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre
from scipy.special import roots_jacobi

from .exceptions import DegenerateCell, NonConvergence


@dataclass(frozen=True)
class QuadratureRule1D:
    """Rule on the reference interval [-1, 1]."""

    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    def integrate(self, f, a: float = -1.0, b: float = 1.0) -> float:
        x = 0.5 * (b - a) * self.nodes + 0.5 * (b + a)
        return 0.5 * (b - a) * float(np.dot(self.weights, f(x)))


@dataclass(frozen=True)
class PolygonQuadrature:
    points: np.ndarray  # (n, 2)
    weights: np.ndarray  # (n,), area-scaled

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate sampled values; leading axis must match the points."""
        return np.tensordot(self.weights, values, axes=(0, 0))


@lru_cache(maxsize=None)
def gauss_lobatto(n: int) -> QuadratureRule1D:
    """``n``-point Gauss-Lobatto rule, exact up to degree ``2n - 3``.

    Interior nodes are the roots of ``P'_{n-1}``; they are found with a
    Newton iteration started from the Chebyshev-Gauss-Lobatto points.
    """
    if n < 2:
        raise ValueError(f"Gauss-Lobatto needs at least 2 points, got {n}")
    N = n - 1
    x = np.cos(np.pi * np.arange(n) / N)
    P = np.zeros((n, n))
    for it in range(100):
        x_old = x.copy()
        P[:, 0] = 1.0
        P[:, 1] = x
        for k in range(2, n):
            P[:, k] = ((2 * k - 1) * x * P[:, k - 1] - (k - 1) * P[:, k - 2]) / k
        x = x_old - (x * P[:, N] - P[:, N - 1]) / (n * P[:, N])
        if np.max(np.abs(x - x_old)) <= 1e-15:
            break
    else:
        raise NonConvergence(f"Gauss-Lobatto nodes for n={n} did not converge")
    P[:, 0] = 1.0
    P[:, 1] = x
    for k in range(2, n):
        P[:, k] = ((2 * k - 1) * x * P[:, k - 1] - (k - 1) * P[:, k - 2]) / k
    w = 2.0 / (N * n * P[:, N] ** 2)
    order = np.argsort(x)
    x = x[order]
    w = w[order]
    # the endpoints are exact by construction
    x[0], x[-1] = -1.0, 1.0
    if n % 2 == 1:
        x[n // 2] = 0.0
    return QuadratureRule1D(x, w, 2 * n - 3)


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> QuadratureRule1D:
    """``n``-point Gauss-Legendre rule, exact up to degree ``2n - 1``."""
    if n < 1:
        raise ValueError(f"Gauss-Legendre needs at least 1 point, got {n}")
    x, w = legendre.leggauss(n)
    return QuadratureRule1D(x, w, 2 * n - 1)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Conical-product rule on the reference triangle (0,0), (1,0), (0,1).

    Returns barycentric-free reference points ``(n, 2)`` and weights summing
    to 1/2. Exact for polynomials of total degree ``degree``.
    """
    n = max(1, (degree + 2) // 2)
    s, ws = roots_jacobi(n, 1.0, 0.0)  # weight (1 - s)
    v, wv = legendre.leggauss(n)
    u = 0.5 * (1.0 + s)
    v = 0.5 * (1.0 + v)
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([U.ravel(), ((1.0 - U) * V).ravel()])
    W = np.outer(ws / 4.0, wv / 2.0).ravel()
    return pts, W


def polygon_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(vertices: np.ndarray) -> np.ndarray:
    x, y = vertices[:, 0], vertices[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return np.array([cx, cy])


def _fan_triangles(vertices: np.ndarray, center: np.ndarray) -> np.ndarray:
    nv = len(vertices)
    tris = np.empty((nv, 3, 2))
    tris[:, 0] = center
    tris[:, 1] = vertices
    tris[:, 2] = np.roll(vertices, -1, axis=0)
    return tris


def _signed_areas(tris: np.ndarray) -> np.ndarray:
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def triangulate(vertices: np.ndarray, center: np.ndarray | None = None) -> np.ndarray:
    """Split a simple CCW polygon into triangles ``(nt, 3, 2)``.

    The centroid fan is used whenever it is valid; otherwise the polygon is
    not star-shaped w.r.t. its centroid and a constrained Delaunay
    triangulation is used instead.
    """
    vertices = np.asarray(vertices, dtype=float)
    area = polygon_area(vertices)
    if not area > 0.0:
        raise DegenerateCell(f"polygon has non-positive area {area:g}")
    if center is None:
        center = polygon_centroid(vertices)
    tris = _fan_triangles(vertices, center)
    sa = _signed_areas(tris)
    if np.all(sa > -1e-14 * area):
        return tris[sa > 1e-14 * area]
    import shapely

    poly = shapely.Polygon(vertices)
    parts = shapely.get_parts(shapely.constrained_delaunay_triangles(poly))
    tris = np.array([np.asarray(p.exterior.coords)[:3] for p in parts])
    sa = _signed_areas(tris)
    tris[sa < 0] = tris[sa < 0][:, [0, 2, 1]]
    if abs(np.abs(sa).sum() - area) > 1e-10 * area:
        raise DegenerateCell("triangulation does not cover the polygon")
    return tris


def polygon_rule(vertices: np.ndarray, degree: int, center: np.ndarray | None = None) -> PolygonQuadrature:
    """Quadrature exact on polynomials of total degree ``degree``."""
    tris = triangulate(vertices, center)
    ref, w = triangle_rule(degree)
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    pts = tris[:, None, 0] + ref[None, :, 0, None] * e1[:, None] + ref[None, :, 1, None] * e2[:, None]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    weights = det[:, None] * w[None, :]
    return PolygonQuadrature(pts.reshape(-1, 2), weights.ravel())
