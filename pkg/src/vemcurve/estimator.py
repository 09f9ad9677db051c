"""Estimator-style front end: configure, ``fit`` on a mesh and domain, ``predict`` at points."""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import error_report
from .geometry import DomainSpec
from .mesh import PolyMesh
from .solver import DELTA_MODES, assemble, solve


class VEMPoissonSolver(BaseEstimator):
    """Order-``m`` VEM for ``-Lap u = f`` with the corrected Nitsche boundary condition.

    Hyperparameters follow scikit-learn conventions, so ``get_params``,
    ``set_params`` and ``sklearn.base.clone`` work. ``fit`` takes a mesh and
    a domain rather than a design matrix.

    Args:
        m: polynomial order, 1 to 6.
        gamma: Nitsche penalty, default ``10 m^2``.
        k: correction depth, default ``floor(m / 2)``.
        delta_mode: ``"signed"``, ``"nonnegative"`` or ``"zero"``.
        load_projection: ``"auto"``, ``"pi_nabla"`` or ``"pi_zero"``.
        quad_degree: polygon quadrature degree, default ``2m + 2``.
        stab_factor: stabilization multiplier.

    Attributes:
        solution_: :class:`vemcurve.solver.SolutionField`.
        system_: assembled :class:`vemcurve.solver.GlobalSystem`.
        diagnostics_: boundary-distance statistics of the assembly.
        n_dofs_: number of global degrees of freedom.
    """

    def __init__(self, m: int = 1, gamma: Optional[float] = None, k: Optional[int] = None,
                 delta_mode: str = "signed", load_projection: str = "auto",
                 quad_degree: Optional[int] = None, stab_factor: float = 1.0):
        self.m = m
        self.gamma = gamma
        self.k = k
        self.delta_mode = delta_mode
        self.load_projection = load_projection
        self.quad_degree = quad_degree
        self.stab_factor = stab_factor

    def _check_params(self) -> None:
        if not isinstance(self.m, (int, np.integer)) or not 1 <= self.m <= 6:
            raise ValueError(f"m must be an integer in 1..6, got {self.m!r}")
        if self.delta_mode not in DELTA_MODES:
            raise ValueError(f"delta_mode must be one of {DELTA_MODES}, got {self.delta_mode!r}")
        if self.stab_factor <= 0:
            raise ValueError("stab_factor must be positive")

    def fit(self, mesh: PolyMesh, domain: DomainSpec) -> "VEMPoissonSolver":
        """Assemble and solve on ``mesh`` with data from ``domain``."""
        self._check_params()
        self.system_ = assemble(
            mesh, domain, int(self.m), gamma=self.gamma, k=self.k, delta_mode=self.delta_mode,
            load_projection=self.load_projection, quad_degree=self.quad_degree, stab_factor=self.stab_factor,
        )
        self.solution_ = solve(self.system_)
        self.diagnostics_ = dict(self.system_.diagnostics)
        self.n_dofs_ = self.system_.n_dofs
        self.domain_ = domain
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "solution_"):
            raise NotFittedError("call fit(mesh, domain) first")

    def predict(self, points) -> np.ndarray:
        """``Pi_nabla u_h`` at ``(n, 2)`` points; NaN outside the mesh."""
        self._check_fitted()
        return self.solution_.evaluate(points)

    def score(self, u=None, grad_u=None) -> float:
        """Negative relative energy error against the exact solution.

        Defaults to the domain's own ``u`` and ``grad_u``; larger is better.
        """
        self._check_fitted()
        u = self.domain_.u if u is None else u
        grad_u = self.domain_.grad_u if grad_u is None else grad_u
        if u is None or grad_u is None:
            raise ValueError("an exact solution and its gradient are required to score")
        return -error_report(self.solution_, u, grad_u, quad_degree=self.quad_degree).energy_rel
