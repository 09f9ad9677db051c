"""Virtual element solver for the Poisson problem on curved domains.

Polygonal meshes approximate the curved domain; the Dirichlet condition is
imposed weakly by Nitsche's method and corrected by a Taylor expansion along
the normal from the polygonal to the true boundary.
"""
from .cases import CASE_NAMES, BenchmarkCase, get_case
from .errors import ConvergenceSlopes, ErrorReport, convergence_slopes, energy_norm, error_report, l2_error
from .estimator import VEMPoissonSolver
from .exceptions import (
    DegenerateCell,
    InsufficientData,
    InvariantViolation,
    MeshInvalid,
    NoIntersection,
    NonConvergence,
    ParseError,
    SingularG,
    SingularMass,
    SolveFailure,
    VEMError,
)
from .experiments import ExperimentConfig, run_ablation_k, run_sweep
from .geometry import DomainSpec, NormalRay, ParametricCurve, delta_at, max_delta
from .mesh import PolyMesh, audit_shape, load_mesh, save_mesh, structured_quad_mesh
from .solver import GlobalSystem, SolutionField, assemble, solve
from .voronoi import generate_voronoi_mesh

__version__ = "0.1.0"
