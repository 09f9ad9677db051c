"""Per-cell VEM operators: scaled monomials, projectors, stiffness, loads."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Callable, Optional

import numpy as np

from .dofs import GlobalDofMap, local_dof_count, n_moments
from .exceptions import DegenerateCell, SingularG, SingularMass
from .quadrature import PolygonQuadrature, gauss_lobatto, polygon_area, polygon_centroid, polygon_rule

COND_LIMIT = 1e14


def n_monomials(m: int) -> int:
    """``dim P_m``; zero for negative ``m``."""
    return (m + 1) * (m + 2) // 2 if m >= 0 else 0


@lru_cache(maxsize=None)
def monomial_exponents(m: int) -> np.ndarray:
    """Exponents ``(a, b)`` ordered by total degree, then by ``b``."""
    return np.array([(d - b, b) for d in range(m + 1) for b in range(d + 1)], dtype=int).reshape(-1, 2)


def monomial_index(a: int, b: int) -> int:
    d = a + b
    return d * (d + 1) // 2 + b


def _powers(t: np.ndarray, m: int) -> np.ndarray:
    out = np.ones((len(t), m + 1))
    for k in range(1, m + 1):
        out[:, k] = out[:, k - 1] * t
    return out


def _falling(a: np.ndarray, k: int) -> np.ndarray:
    out = np.ones(a.shape)
    for i in range(k):
        out = out * (a - i)
    return out


class MonomialBasis:
    """Scaled monomials ``((x - x_K) / h_K) ** alpha`` of total degree ``<= m``.

    With a ``transform`` ``T`` the basis becomes ``p_j = sum_i T[i, j] m_i``.
    ``T`` is kept upper triangular so that the first ``n_r`` functions span
    ``P_r`` for every ``r`` and ``p_0`` is constant.
    """

    def __init__(self, center, h: float, m: int, transform: Optional[np.ndarray] = None):
        self.center = np.asarray(center, dtype=float)
        self.h = float(h)
        self.m = int(m)
        self.exponents = monomial_exponents(self.m)
        self.transform = transform

    def __len__(self) -> int:
        return len(self.exponents)

    def _scaled(self, points):
        xi = (np.atleast_2d(np.asarray(points, dtype=float)) - self.center) / self.h
        return _powers(xi[:, 0], self.m), _powers(xi[:, 1], self.m)

    def _apply(self, values: np.ndarray) -> np.ndarray:
        return values if self.transform is None else values @ self.transform

    def raw(self, points) -> np.ndarray:
        """Plain scaled monomials, ignoring any transform."""
        px, py = self._scaled(points)
        return px[:, self.exponents[:, 0]] * py[:, self.exponents[:, 1]]

    def evaluate(self, points) -> np.ndarray:
        """Values ``(n_points, n_m)``."""
        return self._apply(self.raw(points))

    def _raw_derivative(self, px, py, dx: int, dy: int) -> np.ndarray:
        a, b = self.exponents[:, 0], self.exponents[:, 1]
        coef = _falling(a, dx) * _falling(b, dy) / self.h ** (dx + dy)
        return coef * px[:, np.maximum(a - dx, 0)] * py[:, np.maximum(b - dy, 0)]

    def derivative(self, points, dx: int, dy: int) -> np.ndarray:
        """Partial derivative ``d^dx/dx^dx d^dy/dy^dy`` of every basis function."""
        px, py = self._scaled(points)
        return self._apply(self._raw_derivative(px, py, dx, dy))

    def gradient(self, points) -> np.ndarray:
        """Gradients ``(n_points, n_m, 2)``."""
        return np.stack([self.derivative(points, 1, 0), self.derivative(points, 0, 1)], axis=-1)

    def directional(self, points, normals, j: int) -> np.ndarray:
        """``(n . grad)^j`` of every basis function, one direction per point."""
        points = np.atleast_2d(points)
        if j == 0:
            return self.evaluate(points)
        if j > self.m:
            return np.zeros((len(points), len(self)))
        normals = np.broadcast_to(np.asarray(normals, dtype=float), points.shape)
        px, py = self._scaled(points)
        out = np.zeros((len(points), len(self)))
        for i in range(j + 1):
            w = comb(j, i) * normals[:, 0] ** i * normals[:, 1] ** (j - i)
            out += w[:, None] * self._raw_derivative(px, py, i, j - i)
        return self._apply(out)

    def laplacian_matrix(self) -> np.ndarray:
        """``L`` with ``h^2 Lap p_j = sum_g L[j, g] p_g`` over the first ``n_{m-2}`` functions."""
        L = laplacian_matrix(self.m)
        if self.transform is None:
            return L
        r = L.shape[1]
        # m_beta = sum_g p_g (T_r^{-1})[g, beta]
        return self.transform.T @ L @ np.linalg.inv(self.transform[:r, :r]).T


def orthonormal_transform(raw_values: np.ndarray, weights: np.ndarray, area: float) -> np.ndarray:
    """Upper-triangular ``T`` making the basis orthonormal in ``L2(K) / |K|``.

    Cholesky-based Gram-Schmidt applied twice; the second pass cleans up the
    loss of orthogonality of the first on ill-conditioned cells.
    """
    n = raw_values.shape[1]
    T = np.eye(n)
    for _ in range(2):
        P = raw_values @ T
        H = P.T @ (weights[:, None] * P) / area
        H = 0.5 * (H + H.T)
        try:
            C = np.linalg.cholesky(H)
        except np.linalg.LinAlgError as exc:
            raise SingularMass("mass matrix is not positive definite") from exc
        # T <- T C^{-T}; C^{-T} is upper triangular
        T = T @ np.linalg.inv(C).T
    return np.triu(T)


@lru_cache(maxsize=None)
def laplacian_matrix(m: int) -> np.ndarray:
    """``L`` with ``h^2 Lap m_alpha = sum_beta L[alpha, beta] m_beta``, ``|beta| <= m-2``."""
    E = monomial_exponents(m)
    L = np.zeros((len(E), n_monomials(m - 2)))
    for k, (a, b) in enumerate(E):
        if a >= 2:
            L[k, monomial_index(a - 2, b)] += a * (a - 1)
        if b >= 2:
            L[k, monomial_index(a, b - 2)] += b * (b - 1)
    return L


@lru_cache(maxsize=None)
def _edge_dof_columns(nv: int, m: int) -> np.ndarray:
    """Local dof index of Gauss-Lobatto node ``j`` on local edge ``i``."""
    cols = np.empty((nv, m + 1), dtype=np.intp)
    for i in range(nv):
        cols[i, 0] = i
        cols[i, m] = (i + 1) % nv
        cols[i, 1:m] = nv + i * (m - 1) + np.arange(m - 1)
    return cols


def edge_gl_points(vertices: np.ndarray, m: int) -> np.ndarray:
    """Gauss-Lobatto nodes on each local edge, ``(nv, m + 1, 2)``."""
    s = gauss_lobatto(m + 1).nodes
    v0 = vertices
    v1 = np.roll(vertices, -1, axis=0)
    t = 0.5 * (s + 1.0)
    return v0[:, None, :] + t[None, :, None] * (v1 - v0)[:, None, :]


@dataclass
class LocalElementOps:
    """Projector and stiffness matrices of one cell.

    Attributes:
        vertices: CCW cell vertices.
        m: VEM order.
        basis: scaled monomial basis of degree ``m``.
        area: cell area.
        quad: polygon rule of degree ``2m + 2`` (or the requested one).
        D: ``(n_dof, n_m)`` dofs of the monomials.
        B: ``(n_m, n_dof)`` right-hand side of the projector system.
        G: ``B D``.
        pi_coeffs: ``G^{-1} B``, monomial coefficients of ``Pi_nabla`` from dofs.
        pi_dofs: ``D pi_coeffs``, the projector acting on dof vectors.
        mass: monomial mass matrix ``H`` on the cell.
        consistency: ``pi_coeffs^T G~ pi_coeffs``.
        stab_scale: the scalar multiplying the dofi-dofi product.
        stiffness: full local stiffness.
    """

    vertices: np.ndarray
    m: int
    basis: MonomialBasis
    area: float
    quad: PolygonQuadrature
    D: np.ndarray
    B: np.ndarray
    G: np.ndarray
    pi_coeffs: np.ndarray
    pi_dofs: np.ndarray
    mass: np.ndarray
    consistency: np.ndarray
    stab_scale: float
    stiffness: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.D.shape[0]

    @property
    def center(self) -> np.ndarray:
        return self.basis.center

    @property
    def h(self) -> float:
        return self.basis.h

    def project(self, dofs: np.ndarray) -> np.ndarray:
        """Monomial coefficients of ``Pi_nabla`` of a local dof vector."""
        return self.pi_coeffs @ dofs

    def moment_projector(self, dofs: np.ndarray) -> np.ndarray:
        """Coefficients of ``Pi^0_{m-2}`` from the moment dofs (empty for ``m = 1``).

        The coefficients refer to the first ``n_{m-2}`` functions of ``basis``.
        """
        r = n_moments(self.m)
        if r == 0:
            return np.zeros(0)
        return self.area * np.linalg.solve(self.mass[:r, :r], dofs[-r:])


BASES = ("monomial", "orthonormal")


def build_projector(
    vertices,
    m: int,
    quad_degree: Optional[int] = None,
    stab_factor: float = 1.0,
    basis: str = "orthonormal",
) -> LocalElementOps:
    """Assemble ``D``, ``B``, ``G``, ``Pi_nabla`` and the local stiffness.

    Args:
        vertices: ``(nv, 2)`` counter-clockwise cell vertices.
        m: order, ``m >= 1``.
        quad_degree: polygon rule degree; defaults to ``2m + 2``.
        stab_factor: multiplier on the trace-scaled stabilization.
        basis: ``"monomial"`` for plain scaled monomials, ``"orthonormal"``
            for their Gram-Schmidt orthonormalization on the cell. Both span
            ``P_m``; the second keeps ``G`` well conditioned at high order.

    Raises:
        DegenerateCell: non-positive area.
        SingularG: ``cond(G) > 1e14``.
    """
    if m < 1:
        raise ValueError(f"order must be >= 1, got {m}")
    if basis not in BASES:
        raise ValueError(f"basis must be one of {BASES}, got {basis!r}")
    V = np.asarray(vertices, dtype=float)
    nv = len(V)
    area = polygon_area(V)
    if not area > 0.0:
        raise DegenerateCell(f"cell has non-positive area {area:g}")
    center = polygon_centroid(V)
    diff = V[:, None, :] - V[None, :, :]
    hK = float(np.sqrt(np.max(np.sum(diff * diff, axis=-1))))
    nmom = n_moments(m)
    ndof = local_dof_count(nv, m)
    quad = polygon_rule(V, 2 * m + 2 if quad_degree is None else quad_degree, center)

    mono = MonomialBasis(center, hK, m)
    Mraw = mono.raw(quad.points)
    T = orthonormal_transform(Mraw, quad.weights, area) if basis == "orthonormal" else None
    poly = MonomialBasis(center, hK, m, T)
    M = Mraw if T is None else Mraw @ T
    nm = len(poly)
    H = M.T @ (quad.weights[:, None] * M)

    pts = edge_gl_points(V, m)
    D = np.empty((ndof, nm))
    D[:nv] = poly.evaluate(V)
    if m > 1:
        D[nv : nv * m] = poly.evaluate(pts[:, 1:m].reshape(-1, 2))
        D[nv * m :] = M[:, :nmom].T @ (quad.weights[:, None] * M) / area

    # boundary part of B: int_{dK} phi dp/dn, exact from the Gauss-Lobatto trace
    gl = gauss_lobatto(m + 1)
    edge = np.roll(V, -1, axis=0) - V
    length = np.hypot(edge[:, 0], edge[:, 1])
    normal = np.column_stack([edge[:, 1], -edge[:, 0]]) / length[:, None]
    grads = poly.gradient(pts.reshape(-1, 2)).reshape(nv, m + 1, nm, 2)
    dn = np.einsum("ijak,ik->ija", grads, normal)
    dn *= (0.5 * length[:, None] * gl.weights[None, :])[:, :, None]
    B = np.zeros((nm, ndof))
    np.add.at(B.T, _edge_dof_columns(nv, m).ravel(), dn.reshape(-1, nm))
    if m > 1:
        B[:, nv * m :] -= (area / hK**2) * poly.laplacian_matrix()
    B[0] = 0.0
    if m == 1:
        B[0, :nv] = 1.0 / nv
    else:
        B[0, nv * m] = 1.0

    G = B @ D
    cond = np.linalg.cond(G)
    if not cond <= COND_LIMIT:
        raise SingularG(f"projector matrix G has condition number {cond:.3e}")
    pi_coeffs = np.linalg.solve(G, B)
    pi_dofs = D @ pi_coeffs
    Gt = G.copy()
    Gt[0] = 0.0
    Kc = pi_coeffs.T @ Gt @ pi_coeffs
    Kc = 0.5 * (Kc + Kc.T)
    s = stab_factor * np.trace(Kc) / ndof
    R = np.eye(ndof) - pi_dofs
    K = Kc + s * (R.T @ R)
    return LocalElementOps(V, m, poly, area, quad, D, B, G, pi_coeffs, pi_dofs, H, Kc, s, K)


def local_stiffness(ops: LocalElementOps) -> np.ndarray:
    """``a_h^K``: consistency plus trace-scaled dofi-dofi stabilization."""
    return ops.stiffness


def local_load(ops: LocalElementOps, f: Callable, projection: str = "auto") -> np.ndarray:
    """Local load vector ``int_K f P v`` for a polynomial projection ``P``.

    Args:
        ops: cell operators.
        f: vectorized source ``f(x, y)``.
        projection: ``"pi_nabla"`` uses ``Pi_nabla v``; ``"pi_zero"`` uses
            ``Pi^0_{m-2} v`` from the moments; ``"auto"`` picks ``pi_nabla``
            for ``m <= 2`` and ``pi_zero`` otherwise.
    """
    if projection == "auto":
        projection = "pi_nabla" if ops.m <= 2 else "pi_zero"
    pts = ops.quad.points
    fw = ops.quad.weights * f(pts[:, 0], pts[:, 1])
    if projection == "pi_nabla":
        F = ops.basis.evaluate(pts).T @ fw
        return ops.pi_coeffs.T @ F
    if projection == "pi_zero":
        r = n_moments(ops.m)
        if r == 0:
            raise ValueError("pi_zero load needs m >= 2")
        F = ops.basis.evaluate(pts)[:, :r].T @ fw
        b = np.zeros(ops.n_dofs)
        b[-r:] = ops.area * np.linalg.solve(ops.mass[:r, :r], F)
        return b
    raise ValueError(f"unknown load projection {projection!r}")


def l2_project_element(ops: LocalElementOps, r: int, f: Callable) -> np.ndarray:
    """Coefficients of the L2 projection of ``f`` onto ``P_r`` on the cell.

    Raises:
        SingularMass: the mass matrix is numerically singular.
    """
    if not 0 <= r <= ops.m:
        raise ValueError(f"projection degree must be in [0, {ops.m}], got {r}")
    n = n_monomials(r)
    H = ops.mass[:n, :n]
    cond = np.linalg.cond(H)
    if not cond <= COND_LIMIT:
        raise SingularMass(f"mass matrix has condition number {cond:.3e}")
    pts = ops.quad.points
    F = ops.basis.evaluate(pts)[:, :n].T @ (ops.quad.weights * f(pts[:, 0], pts[:, 1]))
    return np.linalg.solve(H, F)


def interpolate_cell(u: Callable, vertices, m: int, quad: Optional[PolygonQuadrature] = None,
                     basis: str = "orthonormal") -> np.ndarray:
    """Local dof vector of the VEM interpolant of ``u`` on one cell.

    ``basis`` must match the one used by :func:`build_projector`, since the
    moment dofs are taken against that basis.
    """
    V = np.asarray(vertices, dtype=float)
    nv = len(V)
    out = np.empty(local_dof_count(nv, m))
    out[:nv] = u(V[:, 0], V[:, 1])
    if m > 1:
        p = edge_gl_points(V, m)[:, 1:m].reshape(-1, 2)
        out[nv : nv * m] = u(p[:, 0], p[:, 1])
        out[nv * m :] = _moments(u, V, m, quad, basis)
    return out


def _moments(u, V, m, quad, basis):
    if basis not in BASES:
        raise ValueError(f"basis must be one of {BASES}, got {basis!r}")
    area = polygon_area(V)
    center = polygon_centroid(V)
    diff = V[:, None, :] - V[None, :, :]
    hK = float(np.sqrt(np.max(np.sum(diff * diff, axis=-1))))
    if quad is None:
        quad = polygon_rule(V, 2 * m, center)
    raw = MonomialBasis(center, hK, m - 2).raw(quad.points)
    vals = raw if basis == "monomial" else raw @ orthonormal_transform(raw, quad.weights, area)
    return vals.T @ (quad.weights * u(quad.points[:, 0], quad.points[:, 1])) / area


def interpolate(u: Callable, mesh, m: int, dofmap: Optional[GlobalDofMap] = None,
                basis: str = "orthonormal") -> np.ndarray:
    """Global dof vector of the interpolant ``u_I``.

    Vertex and edge dofs are point values of ``u``; moments use a polygon
    rule of degree ``2m`` and the cell basis named by ``basis``.
    """
    dofmap = GlobalDofMap(mesh, m) if dofmap is None else dofmap
    out = np.empty(dofmap.n_dofs)
    X = mesh.vertices
    out[: mesh.n_vertices] = u(X[:, 0], X[:, 1])
    if m > 1:
        s = gauss_lobatto(m + 1).nodes[1:m]
        t = 0.5 * (s + 1.0)
        p0 = X[mesh.edges[:, 0]]
        p1 = X[mesh.edges[:, 1]]
        pts = p0[:, None, :] + t[None, :, None] * (p1 - p0)[:, None, :]
        out[dofmap.edge_offset : dofmap.cell_offset] = u(pts[..., 0].ravel(), pts[..., 1].ravel())
        r = dofmap.n_mom
        for c in range(mesh.n_cells):
            start = dofmap.cell_offset + c * r
            out[start : start + r] = _moments(u, mesh.cell_vertices(c), m, None, basis)
    return out
