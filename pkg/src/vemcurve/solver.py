"""Global assembly, sparse solve and the discrete solution field."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .boundary_forms import (
    NitscheParams,
    bdt_correction_local,
    boundary_rhs_local,
    edge_ops,
    nitsche_local,
)
from .dofs import GlobalDofMap
from .exceptions import SolveFailure
from .geometry import DomainSpec, deltas
from .mesh import PolyMesh
from .quadrature import gauss_legendre
from .vem_local import MonomialBasis, build_projector, local_load

__all__ = ["GlobalDofMap", "GlobalSystem", "SolutionField", "assemble", "solve", "DELTA_MODES"]

log = logging.getLogger(__name__)

DELTA_MODES = ("signed", "nonnegative", "zero")


class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, dofs: np.ndarray, block: np.ndarray) -> None:
        n = len(dofs)
        self.rows.append(np.repeat(dofs, n))
        self.cols.append(np.tile(dofs, n))
        self.vals.append(block.ravel())

    def matrix(self, n: int) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix((n, n))
        r = np.concatenate(self.rows)
        c = np.concatenate(self.cols)
        v = np.concatenate(self.vals)
        # stable (row, col) ordering makes duplicate sums reproducible
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], v[order]
        key = r * n + c
        start = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        sums = np.add.reduceat(v, start)
        return sp.csr_matrix((sums, (r[start], c[start])), shape=(n, n))


@dataclass
class GlobalSystem:
    """Assembled linear system ``A x = b``.

    Attributes:
        A: sparse system matrix, the sum of ``blocks``.
        b: right-hand side.
        dofmap: global numbering.
        blocks: ``"stiffness"``, ``"nitsche"`` and ``"correction"`` parts of ``A``.
        bases: per-cell polynomial bases.
        pi_coeffs: per-cell ``Pi_nabla`` matrices (coefficients from local dofs).
        params: Nitsche parameters used.
        diagnostics: boundary sampling statistics (``max_abs_delta``,
            ``n_delta_fallback``, ``delta_h_over_h2``).
    """

    A: sp.csr_matrix
    b: np.ndarray
    dofmap: GlobalDofMap
    blocks: dict
    bases: list
    pi_coeffs: list
    params: NitscheParams
    mesh: PolyMesh
    m: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_dofs(self) -> int:
        return self.dofmap.n_dofs


@dataclass
class SolutionField:
    """Discrete solution with its per-cell ``Pi_nabla`` polynomials.

    Attributes:
        dofs: global dof vector.
        coeffs: per-cell coefficients of ``Pi_nabla u_h`` in the cell basis.
        residual: achieved relative residual of the linear solve.
        system: the system that was solved.
    """

    dofs: np.ndarray
    coeffs: list
    residual: float
    system: GlobalSystem

    @classmethod
    def from_dofs(cls, system: GlobalSystem, dofs: np.ndarray, residual: float = 0.0) -> "SolutionField":
        coeffs = [P @ dofs[idx] for P, idx in zip(system.pi_coeffs, system.dofmap.cell_dofs)]
        return cls(np.asarray(dofs), coeffs, residual, system)

    def cell_values(self, c: int, points: np.ndarray) -> np.ndarray:
        return self.system.bases[c].evaluate(points) @ self.coeffs[c]

    def cell_gradients(self, c: int, points: np.ndarray) -> np.ndarray:
        return np.einsum("pak,a->pk", self.system.bases[c].gradient(points), self.coeffs[c])

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Index of a cell containing each point, ``-1`` outside the mesh."""
        import shapely

        mesh = self.system.mesh
        if not hasattr(self, "_tree"):
            polys = [shapely.Polygon(mesh.cell_vertices(c)) for c in range(mesh.n_cells)]
            self._tree = shapely.STRtree(polys)
        pts = shapely.points(np.asarray(points, dtype=float))
        pairs = self._tree.query(pts, predicate="intersects")
        out = np.full(len(pts), -1, dtype=np.intp)
        # first hit wins: reverse assignment so lower pair index is written last
        out[pairs[0][::-1]] = pairs[1][::-1]
        return out

    def evaluate(self, points) -> np.ndarray:
        """``Pi_nabla u_h`` at arbitrary points; NaN outside the mesh."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        cells = self.locate(points)
        out = np.full(len(points), np.nan)
        for c in np.unique(cells[cells >= 0]):
            sel = cells == c
            out[sel] = self.cell_values(c, points[sel])
        return out


def _boundary_geometry(mesh: PolyMesh, n_points: int):
    rule = gauss_legendre(n_points)
    p0, p1, length, normal = mesh.edge_geometry(mesh.boundary_edges)
    t = 0.5 * (rule.nodes + 1.0)
    pts = p0[:, None, :] + t[None, :, None] * (p1 - p0)[:, None, :]
    return pts, normal, length


def assemble(
    mesh: PolyMesh,
    domain: DomainSpec,
    m: int,
    params: Optional[NitscheParams] = None,
    *,
    gamma: Optional[float] = None,
    k: Optional[int] = None,
    delta_mode: str = "signed",
    load_projection: str = "auto",
    quad_degree: Optional[int] = None,
    edge_points: Optional[int] = None,
    stab_factor: float = 1.0,
    basis: str = "orthonormal",
) -> GlobalSystem:
    """Assemble stiffness, Nitsche terms, correction and load vector.

    Args:
        mesh: polygonal mesh of the approximate domain.
        domain: exact domain with data ``f`` and ``g``.
        m: VEM order.
        params: Nitsche parameters; built from ``gamma``/``k`` and
            ``h = N_V^{-1/2}`` when omitted.
        delta_mode: ``"signed"`` (nearest crossing in either direction),
            ``"nonnegative"`` (outward only) or ``"zero"`` (plain Nitsche
            with ``g`` evaluated on the polygonal boundary).
        load_projection: see :func:`vemcurve.vem_local.local_load`.
        quad_degree: polygon rule degree, default ``2m + 2``.
        edge_points: Gauss points per boundary edge, default ``m + 2``.
        stab_factor: multiplier on the stabilization.
        basis: polynomial basis, see :func:`build_projector`.
    """
    if delta_mode not in DELTA_MODES:
        raise ValueError(f"delta_mode must be one of {DELTA_MODES}, got {delta_mode!r}")
    if params is None:
        params = NitscheParams.default(m, mesh.h, gamma, k)
    dofmap = GlobalDofMap(mesh, m)
    n = dofmap.n_dofs
    stiff, nit, cor = _Triplets(), _Triplets(), _Triplets()
    b = np.zeros(n)
    bases, pis, cell_ops = [], [], {}
    bcells = set(mesh.edge_cells[mesh.boundary_edges, 0].tolist())
    for c in range(mesh.n_cells):
        ops = build_projector(mesh.cell_vertices(c), m, quad_degree, stab_factor, basis)
        idx = dofmap.cell_dofs[c]
        stiff.add(idx, ops.stiffness)
        np.add.at(b, idx, local_load(ops, domain.f, load_projection))
        bases.append(ops.basis)
        pis.append(ops.pi_coeffs)
        if c in bcells:
            cell_ops[c] = ops

    nq = m + 2 if edge_points is None else edge_points
    pts, normals, _ = _boundary_geometry(mesh, nq)
    flat = pts.reshape(-1, 2)
    flat_n = np.repeat(normals, nq, axis=0)
    if delta_mode == "zero":
        dl = np.zeros(len(flat))
        n_fallback = 0
    else:
        dl, n_fallback = deltas(flat, flat_n, domain, signed=delta_mode == "signed")
    q = flat + dl[:, None] * flat_n
    gvals = np.asarray(domain.g(q[:, 0], q[:, 1]), dtype=float).reshape(-1, nq)
    dl = dl.reshape(-1, nq)

    for j, e in enumerate(mesh.boundary_edges):
        c = int(mesh.edge_cells[e, 0])
        ops = cell_ops[c]
        local = int(np.flatnonzero(mesh.cell_edges[c] == e)[0])
        eo = edge_ops(ops, local, max(1, params.k), nq, dl[j])
        idx = dofmap.cell_dofs[c]
        nit.add(idx, nitsche_local(eo, params))
        if params.k > 0:
            cor.add(idx, bdt_correction_local(eo, params))
        np.add.at(b, idx, boundary_rhs_local(eo, params, gvals[j]))

    blocks = {"stiffness": stiff.matrix(n), "nitsche": nit.matrix(n), "correction": cor.matrix(n)}
    A = (blocks["stiffness"] + blocks["nitsche"] + blocks["correction"]).tocsr()
    max_delta = float(np.max(np.abs(dl))) if dl.size else 0.0
    diagnostics = {
        "max_abs_delta": max_delta,
        "delta_h_over_h2": max_delta / params.h**2,
        "n_delta_fallback": int(n_fallback),
        "n_boundary_edges": int(len(mesh.boundary_edges)),
    }
    if n_fallback:
        log.warning("%d boundary points had no normal crossing; delta set to 0", n_fallback)
    return GlobalSystem(A, b, dofmap, blocks, bases, pis, params, mesh, m, diagnostics)


def solve(system: GlobalSystem, rtol: float = 1e-10, fail_tol: float = 1e-8, refine_steps: int = 3) -> SolutionField:
    """Sparse LU solve with up to ``refine_steps`` of iterative refinement.

    Raises:
        SolveFailure: relative residual above ``fail_tol`` after refinement,
            or a singular factorization.
    """
    A = system.A.tocsc()
    b = system.b
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return SolutionField.from_dofs(system, np.zeros(system.n_dofs), 0.0)
    try:
        lu = splu(A)
    except RuntimeError as exc:
        raise SolveFailure(f"sparse LU failed: {exc}") from exc
    x = lu.solve(b)
    res = np.linalg.norm(A @ x - b) / nb
    steps = 0
    while not res <= rtol and steps < refine_steps:
        x = x + lu.solve(b - A @ x)
        res = np.linalg.norm(A @ x - b) / nb
        steps += 1
    if not res <= fail_tol:
        raise SolveFailure(f"relative residual {res:.3e} after {steps} refinement steps")
    return SolutionField.from_dofs(system, x, float(res))
