"""Energy and L2 errors of discrete solutions, and empirical convergence rates."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .boundary_forms import lagrange_matrix
from .exceptions import InsufficientData
from .mesh import PolyMesh
from .quadrature import gauss_legendre, gauss_lobatto, polygon_rule
from .solver import SolutionField


def _as_grad(g, n: int) -> np.ndarray:
    if isinstance(g, tuple):
        g = np.column_stack(g)
    return np.asarray(g, dtype=float).reshape(n, 2)


def _cell_rules(mesh: PolyMesh, degree: int):
    rules = [polygon_rule(mesh.cell_vertices(c), degree, mesh.centroids[c]) for c in range(mesh.n_cells)]
    sizes = np.array([len(r.weights) for r in rules])
    offsets = np.r_[0, np.cumsum(sizes)]
    pts = np.concatenate([r.points for r in rules])
    w = np.concatenate([r.weights for r in rules])
    return rules, offsets, pts, w


def _boundary_rule(mesh: PolyMesh, n_points: int):
    rule = gauss_legendre(n_points)
    p0, p1, length, _ = mesh.edge_geometry(mesh.boundary_edges)
    t = 0.5 * (rule.nodes + 1.0)
    pts = p0[:, None, :] + t[None, :, None] * (p1 - p0)[:, None, :]
    w = 0.5 * length[:, None] * rule.weights[None, :]
    return rule, pts, w


def boundary_trace(field: SolutionField, n_points: int) -> np.ndarray:
    """Values of ``u_h`` itself (not its projection) at the Gauss points of the
    boundary edges, shape ``(n_boundary_edges, n_points)``."""
    system = field.system
    mesh, m, dm = system.mesh, system.m, system.dofmap
    be = mesh.boundary_edges
    nodal = np.empty((len(be), m + 1))
    nodal[:, 0] = field.dofs[mesh.edges[be, 0]]
    nodal[:, m] = field.dofs[mesh.edges[be, 1]]
    if m > 1:
        idx = dm.edge_offset + be[:, None] * (m - 1) + np.arange(m - 1)[None, :]
        nodal[:, 1:m] = field.dofs[idx]
    L = lagrange_matrix(gauss_lobatto(m + 1).nodes, gauss_legendre(n_points).nodes)
    return nodal @ L.T


def energy_norm(
    u: Optional[Callable] = None,
    grad_u: Optional[Callable] = None,
    field: Optional[SolutionField] = None,
    mesh: Optional[PolyMesh] = None,
    h: Optional[float] = None,
    quad_degree: Optional[int] = None,
    edge_points: Optional[int] = None,
) -> float:
    """``|||u - u_h|||`` with ``|||v|||^2 = |v|_1^2 + h^{-1} ||v||^2_{boundary}``.

    Either side may be omitted: with only ``u``/``grad_u`` the norm of the
    function is returned, with only ``field`` the norm of the discrete
    solution. Inside cells ``u_h`` is replaced by ``Pi_nabla u_h``; on the
    boundary its exact edge trace is used.

    Args:
        u: exact function ``u(x, y)``.
        grad_u: its gradient, returning ``(n, 2)`` or a tuple of components.
        field: discrete solution.
        mesh: required when ``field`` is omitted.
        h: boundary weight, default ``N_V^{-1/2}`` (or the penalty ``h`` of the field's system).
        quad_degree: polygon rule degree, default ``2m + 2``.
        edge_points: Gauss points per boundary edge, default ``m + 2``.
    """
    sq = energy_terms(u, grad_u, field, mesh, h, quad_degree, edge_points)
    return float(np.sqrt(sq[0] + sq[1]))


def energy_terms(u=None, grad_u=None, field=None, mesh=None, h=None, quad_degree=None, edge_points=None):
    """Squared volume and (h-weighted) boundary parts of :func:`energy_norm`."""
    if field is None and mesh is None:
        raise ValueError("either field or mesh is required")
    if field is not None:
        mesh = field.system.mesh
        m = field.system.m
        h = field.system.params.h if h is None else h
    else:
        m = 1
        h = mesh.h if h is None else h
    degree = 2 * m + 2 if quad_degree is None else quad_degree
    nq = m + 2 if edge_points is None else edge_points

    _, offsets, pts, w = _cell_rules(mesh, degree)
    diff = np.zeros((len(pts), 2))
    if grad_u is not None:
        diff += _as_grad(grad_u(pts[:, 0], pts[:, 1]), len(pts))
    if field is not None:
        for c in range(mesh.n_cells):
            s = slice(offsets[c], offsets[c + 1])
            diff[s] -= field.cell_gradients(c, pts[s])
    vol = float(np.dot(w, np.sum(diff * diff, axis=1)))

    _, bpts, bw = _boundary_rule(mesh, nq)
    bd = np.zeros(bpts.shape[:2])
    if u is not None:
        bd += np.asarray(u(bpts[..., 0].ravel(), bpts[..., 1].ravel()), dtype=float).reshape(bd.shape)
    if field is not None:
        bd -= boundary_trace(field, nq)
    bnd = float(np.sum(bw * bd * bd)) / h
    return vol, bnd


def l2_error(
    u: Optional[Callable] = None,
    field: Optional[SolutionField] = None,
    mesh: Optional[PolyMesh] = None,
    quad_degree: Optional[int] = None,
    reconstruction: str = "pi_nabla",
) -> float:
    """``||u - u_h||_{0, Omega_h}`` with ``u_h`` represented by a cell polynomial.

    Args:
        reconstruction: ``"pi_nabla"`` (default) or ``"pi_zero"``, the
            ``Pi_nabla u_h`` shifted by a ``P_{m-2}`` term so that its moments
            match the moment dofs of ``u_h``; kept for comparison.
    """
    if field is None and mesh is None:
        raise ValueError("either field or mesh is required")
    if reconstruction not in ("pi_nabla", "pi_zero"):
        raise ValueError(f"unknown reconstruction {reconstruction!r}")
    mesh = field.system.mesh if field is not None else mesh
    m = field.system.m if field is not None else 1
    degree = 2 * m + 2 if quad_degree is None else quad_degree
    _, offsets, pts, w = _cell_rules(mesh, degree)
    diff = np.zeros(len(pts))
    if u is not None:
        diff += np.asarray(u(pts[:, 0], pts[:, 1]), dtype=float)
    if field is not None:
        for c in range(mesh.n_cells):
            s = slice(offsets[c], offsets[c + 1])
            if reconstruction == "pi_nabla":
                diff[s] -= field.cell_values(c, pts[s])
            else:
                diff[s] -= _pi_zero_values(field, c, pts[s], w[s])
    return float(np.sqrt(np.dot(w, diff * diff)))


def _pi_zero_values(field: SolutionField, c: int, pts, w) -> np.ndarray:
    # Pi_nabla corrected in P_{m-2} so that its moments match those of u_h
    from .dofs import n_moments

    system = field.system
    basis = system.bases[c]
    r = n_moments(system.m)
    P = basis.evaluate(pts)
    coeffs = field.coeffs[c].copy()
    if r:
        H = P.T @ (w[:, None] * P)
        dofs = field.dofs[system.dofmap.cell_dofs[c]]
        # moment dofs are averages against the first r basis functions
        F = float(np.sum(w)) * dofs[-r:]
        coeffs[:r] += np.linalg.solve(H[:r, :r], F - H[:r] @ coeffs)
    return P @ coeffs


@dataclass
class ErrorReport:
    """Errors of one discrete solution.

    Relative errors divide by the same norms of ``u`` computed with the same
    quadrature.
    """

    mesh: str
    m: int
    h: float
    n_vertices: int
    n_dofs: int
    energy_abs: float
    energy_rel: float
    l2_abs: float
    l2_rel: float

    def as_dict(self) -> dict:
        return asdict(self)


def error_report(field: SolutionField, u: Callable, grad_u: Callable, mesh_name: str = "",
                 quad_degree: Optional[int] = None) -> ErrorReport:
    """Absolute and relative energy and L2 errors of ``field`` against ``u``."""
    mesh = field.system.mesh
    m = field.system.m
    degree = 2 * m + 2 if quad_degree is None else quad_degree
    e = energy_norm(u, grad_u, field, quad_degree=degree)
    nu = energy_norm(u, grad_u, mesh=mesh, h=field.system.params.h, quad_degree=degree, edge_points=m + 2)
    l2 = l2_error(u, field, quad_degree=degree)
    nl2 = l2_error(u, mesh=mesh, quad_degree=degree)
    return ErrorReport(
        mesh=mesh_name,
        m=m,
        h=mesh.h,
        n_vertices=mesh.n_vertices,
        n_dofs=field.system.n_dofs,
        energy_abs=e,
        energy_rel=e / nu,
        l2_abs=l2,
        l2_rel=l2 / nl2,
    )


@dataclass
class ConvergenceSlopes:
    """Log-log slopes of an error sequence.

    ``vs_h`` is the rate in ``h``; ``vs_ndofs`` is the (positive) rate in
    ``N_DoFs``, i.e. ``error ~ N_DoFs^{-vs_ndofs}``.
    """

    vs_h: float
    vs_ndofs: float
    pairwise_h: list
    pairwise_ndofs: list


def _fit(x: np.ndarray, y: np.ndarray) -> float:
    A = np.column_stack([np.log(x), np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    return float(coef[0])


def convergence_slopes(reports: Sequence, key: str = "energy_rel", min_points: int = 3) -> ConvergenceSlopes:
    """Least-squares and pairwise slopes of ``key`` against ``h`` and ``N_DoFs``.

    Raises:
        InsufficientData: fewer than ``min_points`` reports.
    """
    if len(reports) < min_points:
        raise InsufficientData(f"need at least {min_points} meshes, got {len(reports)}")
    h = np.array([_get(r, "h") for r in reports], dtype=float)
    n = np.array([_get(r, "n_dofs") for r in reports], dtype=float)
    e = np.array([_get(r, key) for r in reports], dtype=float)
    lh, ln, le = np.log(h), np.log(n), np.log(e)
    return ConvergenceSlopes(
        vs_h=_fit(h, e),
        vs_ndofs=-_fit(n, e),
        pairwise_h=(np.diff(le) / np.diff(lh)).tolist(),
        pairwise_ndofs=(-np.diff(le) / np.diff(ln)).tolist(),
    )


def _get(r, name):
    return r[name] if isinstance(r, dict) else getattr(r, name)
