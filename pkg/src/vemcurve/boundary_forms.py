"""Nitsche boundary terms and the Taylor-type correction on boundary edges."""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Optional

import numpy as np

from .quadrature import gauss_legendre, gauss_lobatto
from .vem_local import LocalElementOps, _edge_dof_columns


@dataclass(frozen=True)
class NitscheParams:
    """Penalty and correction depth.

    Attributes:
        gamma: dimensionless penalty, ``> 0``.
        k: number of Taylor terms in the correction, ``0 <= k <= m``.
        h: global mesh parameter scaling the penalty.
    """

    gamma: float
    k: int
    h: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.k < 0:
            raise ValueError(f"k must be non-negative, got {self.k}")
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")

    @classmethod
    def default(cls, m: int, h: float, gamma: Optional[float] = None, k: Optional[int] = None) -> "NitscheParams":
        """``gamma = 10 m^2`` and ``k = floor(m / 2)`` unless overridden."""
        gamma = 10.0 * m * m if gamma is None else gamma
        k = m // 2 if k is None else k
        if k > m:
            raise ValueError(f"k must not exceed m={m}, got {k}")
        return cls(float(gamma), int(k), float(h))


def lagrange_matrix(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Lagrange basis on ``nodes`` evaluated at ``x``, shape ``(len(x), len(nodes))``."""
    n = len(nodes)
    out = np.ones((len(x), n))
    for j in range(n):
        for i in range(n):
            if i != j:
                out[:, j] *= (x - nodes[i]) / (nodes[j] - nodes[i])
    return out


@dataclass
class BoundaryEdgeOps:
    """Quadrature data and dof-to-value matrices of one boundary edge.

    All matrices act on the local dof vector of the owning cell.

    Attributes:
        points: ``(n_q, 2)`` Gauss points on the edge.
        weights: ``(n_q,)`` length-scaled weights.
        normal: outward unit normal of the edge.
        length: edge length.
        trace: ``(n_q, n_dof)`` values of ``v_h`` at the Gauss points.
        normal_derivs: list, entry ``j`` is ``(n_q, n_dof)`` for ``d^j/dnu^j Pi_nabla v_h``
            (entry 0 holds ``Pi_nabla v_h`` itself).
        delta: per-point normal distance to the curved boundary (zeros if not set).
    """

    points: np.ndarray
    weights: np.ndarray
    normal: np.ndarray
    length: float
    trace: np.ndarray
    normal_derivs: list
    delta: np.ndarray


def edge_ops(ops: LocalElementOps, local_edge: int, max_order: int, n_points: Optional[int] = None,
             delta: Optional[np.ndarray] = None) -> BoundaryEdgeOps:
    """Build :class:`BoundaryEdgeOps` for local edge ``i`` (``v_i -> v_{i+1}``) of a cell.

    Args:
        ops: cell operators.
        local_edge: local edge index.
        max_order: highest normal derivative needed (at least 1).
        n_points: Gauss-Legendre points, default ``m + 2``.
        delta: per-point normal distances; zeros by default.
    """
    m = ops.m
    nv = len(ops.vertices)
    rule = gauss_legendre(m + 2 if n_points is None else n_points)
    p0 = ops.vertices[local_edge]
    p1 = ops.vertices[(local_edge + 1) % nv]
    d = p1 - p0
    length = float(np.hypot(d[0], d[1]))
    normal = np.array([d[1], -d[0]]) / length
    t = 0.5 * (rule.nodes + 1.0)
    points = p0 + t[:, None] * d
    weights = 0.5 * length * rule.weights
    trace = np.zeros((len(points), ops.n_dofs))
    cols = _edge_dof_columns(nv, m)[local_edge]
    trace[:, cols] = lagrange_matrix(gauss_lobatto(m + 1).nodes, rule.nodes)
    derivs = []
    for j in range(max(1, max_order) + 1):
        if j > m:
            derivs.append(np.zeros_like(trace))
        else:
            derivs.append(ops.basis.directional(points, normal, j) @ ops.pi_coeffs)
    if delta is None:
        delta = np.zeros(len(points))
    return BoundaryEdgeOps(points, weights, normal, length, trace, derivs, np.asarray(delta, dtype=float))


def nitsche_local(edge: BoundaryEdgeOps, params: NitscheParams, consistency: bool = True,
                  penalty: bool = True) -> np.ndarray:
    """``-<dnu Pi u, v> - <u, dnu Pi v> + gamma/h <u, v>`` on one edge.

    Rows index the test function, columns the trial function.
    """
    W = edge.weights[:, None]
    T = edge.trace
    N1 = edge.normal_derivs[1]
    A = np.zeros((T.shape[1], T.shape[1]))
    if consistency:
        C = T.T @ (W * N1)
        A -= C + C.T
    if penalty:
        A += (params.gamma / params.h) * (T.T @ (W * T))
    return A


def correction_operator(edge: BoundaryEdgeOps, k: int) -> np.ndarray:
    """``sum_{j=1..k} delta^j / j! d^j/dnu^j Pi_nabla u`` at the Gauss points, per dof."""
    out = np.zeros_like(edge.trace)
    for j in range(1, k + 1):
        if j >= len(edge.normal_derivs):
            break
        out += (edge.delta ** j / factorial(j))[:, None] * edge.normal_derivs[j]
    return out


def penalized_flux(edge: BoundaryEdgeOps, params: NitscheParams) -> np.ndarray:
    """``dnu Pi_nabla v - gamma/h v`` at the Gauss points, per dof."""
    return edge.normal_derivs[1] - (params.gamma / params.h) * edge.trace


def bdt_correction_local(edge: BoundaryEdgeOps, params: NitscheParams) -> np.ndarray:
    """``-int_e (sum_j delta^j/j! d^j Pi u) (dnu Pi v - gamma/h v)``; zero for ``k = 0``."""
    n = edge.trace.shape[1]
    if params.k == 0 or not np.any(edge.delta):
        return np.zeros((n, n))
    Cu = correction_operator(edge, params.k)
    return -penalized_flux(edge, params).T @ (edge.weights[:, None] * Cu)


def boundary_rhs_local(edge: BoundaryEdgeOps, params: NitscheParams, g_values: np.ndarray) -> np.ndarray:
    """``-int_e g* (dnu Pi v - gamma/h v)`` for ``g*`` sampled at the Gauss points."""
    return -penalized_flux(edge, params).T @ (edge.weights * np.asarray(g_values, dtype=float))
