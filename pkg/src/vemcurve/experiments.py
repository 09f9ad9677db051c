"""Mesh-refinement sweeps, the ``k`` ablation, CSV and summary-table output."""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .cases import CASE_NAMES, BenchmarkCase, get_case
from .errors import ConvergenceSlopes, ErrorReport, convergence_slopes, error_report
from .exceptions import InsufficientData, VEMError
from .mesh import PolyMesh, load_mesh
from .solver import assemble, solve
from .voronoi import generate_voronoi_mesh

log = logging.getLogger(__name__)

CSV_COLUMNS = ("m", "mesh", "h", "N_V", "N_DoFs", "eS", "eL2")


@dataclass
class ExperimentConfig:
    """Settings of a sweep.

    Attributes:
        test: case name, see :data:`vemcurve.cases.CASE_NAMES`.
        orders: VEM orders to run.
        seeds: explicit increasing Voronoi seed counts; by default
            ``base_seeds * 2**i`` for ``i < refinements``.
        refinements: number of meshes when ``seeds`` is not given.
        base_seeds: coarsest seed count, defaults to the case's own.
        gamma: penalty override (default ``10 m^2``).
        k: correction depth override (default ``floor(m / 2)``).
        rng_seed: seed of the mesh generator.
        lloyd_iters: Lloyd steps, defaults to the case's own.
        quad_degree: polygon rule degree override.
        angle: spiral angle convention, ``"principal"`` or ``"unwrapped"``.
        mesh_files: saved meshes to use instead of generating.
        out: output directory; nothing is written when ``None``.
    """

    test: str = "disk"
    orders: list = field(default_factory=lambda: [1])
    seeds: Optional[list] = None
    refinements: int = 4
    base_seeds: Optional[int] = None
    gamma: Optional[float] = None
    k: Optional[int] = None
    rng_seed: int = 0
    lloyd_iters: Optional[int] = None
    quad_degree: Optional[int] = None
    angle: str = "principal"
    mesh_files: Optional[list] = None
    out: Optional[str] = None

    def __post_init__(self):
        if self.test not in CASE_NAMES:
            raise ValueError(f"unknown test {self.test!r}; choose from {', '.join(CASE_NAMES)}")
        self.orders = [int(m) for m in self.orders]
        if not self.orders or any(not 1 <= m <= 6 for m in self.orders):
            raise ValueError(f"orders must lie in 1..6, got {self.orders}")
        if self.seeds is not None:
            self.seeds = [int(s) for s in self.seeds]
            if any(b <= a for a, b in zip(self.seeds, self.seeds[1:])) or min(self.seeds, default=1) < 1:
                raise ValueError(f"seed counts must be positive and increasing, got {self.seeds}")
        if self.refinements < 1:
            raise ValueError("refinements must be at least 1")
        if self.angle not in ("principal", "unwrapped"):
            raise ValueError(f"unknown angle convention {self.angle!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys: {', '.join(sorted(extra))}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        """Read a JSON object with the attribute names as keys."""
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def case(self) -> BenchmarkCase:
        return get_case(self.test, self.angle)

    def seed_counts(self, case: Optional[BenchmarkCase] = None) -> list:
        if self.seeds is not None:
            return list(self.seeds)
        base = self.base_seeds or (case or self.case()).base_seeds
        return [base * 2**i for i in range(self.refinements)]


@dataclass
class SweepResult:
    """Outcome of :func:`run_sweep`.

    Attributes:
        reports: error reports in run order.
        slopes: energy slopes per order (absent when too few meshes).
        l2_slopes: L2 slopes per order.
        failures: ``(mesh name, m, message)`` of failed runs.
        config: the configuration used.
    """

    reports: list
    slopes: dict
    l2_slopes: dict
    failures: list
    config: ExperimentConfig

    @property
    def ok(self) -> bool:
        return not self.failures

    def for_order(self, m: int) -> list:
        return [r for r in self.reports if r.m == m]


def build_meshes(config: ExperimentConfig, case: Optional[BenchmarkCase] = None) -> list:
    """Named meshes of a sweep, loaded from ``mesh_files`` or generated."""
    case = case or config.case()
    if config.mesh_files:
        out = []
        for p in config.mesh_files:
            mesh = load_mesh(p)
            mesh.validate(case.domain)
            out.append((Path(p).stem, mesh))
        return out
    iters = case.lloyd_iters if config.lloyd_iters is None else config.lloyd_iters
    out = []
    for i, n in enumerate(config.seed_counts(case)):
        t = time.perf_counter()
        mesh = generate_voronoi_mesh(case.domain, n, iters, config.rng_seed)
        log.info("%s%d: %d seeds -> N_V=%d in %.1fs", case.name, i + 1, n, mesh.n_vertices, time.perf_counter() - t)
        out.append((f"{case.name}{i + 1}", mesh))
    return out


def solve_case(case: BenchmarkCase, mesh: PolyMesh, m: int, name: str = "", gamma=None, k=None,
               quad_degree=None) -> ErrorReport:
    """Assemble, solve and measure one run."""
    system = assemble(mesh, case.domain, m, gamma=gamma, k=k, quad_degree=quad_degree)
    field_ = solve(system)
    return error_report(field_, case.u, case.grad_u, name, quad_degree)


def run_sweep(config: ExperimentConfig, meshes: Optional[list] = None) -> SweepResult:
    """Run every order of ``config`` on every mesh and collect errors.

    Failed runs are logged and listed in ``failures``; the remaining runs
    still execute. Writes ``sweep.csv`` and ``sweep_summary.txt`` when
    ``config.out`` is set.

    Args:
        config: sweep settings.
        meshes: optional precomputed ``(name, mesh)`` pairs.
    """
    case = config.case()
    meshes = build_meshes(config, case) if meshes is None else meshes
    reports, failures = [], []
    for m in config.orders:
        for name, mesh in meshes:
            t = time.perf_counter()
            try:
                rep = solve_case(case, mesh, m, name, config.gamma, config.k, config.quad_degree)
            except VEMError as exc:
                log.error("%s m=%d failed: %s", name, m, exc)
                failures.append((name, m, str(exc)))
                continue
            log.info("%s m=%d: N_DoFs=%d eS=%.6e eL2=%.6e (%.1fs)", name, m, rep.n_dofs, rep.energy_rel,
                     rep.l2_rel, time.perf_counter() - t)
            reports.append(rep)
    slopes, l2_slopes = {}, {}
    for m in config.orders:
        rows = [r for r in reports if r.m == m]
        try:
            slopes[m] = convergence_slopes(rows, "energy_rel")
            l2_slopes[m] = convergence_slopes(rows, "l2_rel")
        except InsufficientData:
            pass
    result = SweepResult(reports, slopes, l2_slopes, failures, config)
    if config.out:
        write_outputs(result, config.out)
    return result


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def sweep_csv(reports: list) -> str:
    """CSV text with columns :data:`CSV_COLUMNS`."""
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([r.m, r.mesh, f"{r.h:.6e}", r.n_vertices, r.n_dofs, f"{r.energy_rel:.6e}", f"{r.l2_rel:.6e}"])
    return buf.getvalue()


def summary_table(result: SweepResult) -> str:
    """Plain-text table with one row per mesh and one error column per order."""
    orders = result.config.orders
    names = list(dict.fromkeys(r.mesh for r in result.reports))
    by_key = {(r.mesh, r.m): r for r in result.reports}
    head = f"{'mesh':<12}{'h':>13}{'N_V':>9}" + "".join(f"{'e' + str(m):>15}" for m in orders)
    lines = [head, "-" * len(head)]
    for name in names:
        first = next(r for r in result.reports if r.mesh == name)
        cells = []
        for m in orders:
            r = by_key.get((name, m))
            cells.append(f"{r.energy_rel:>15.6e}" if r else f"{'failed':>15}")
        lines.append(f"{name:<12}{first.h:>13.5e}{first.n_vertices:>9d}" + "".join(cells))
    lines.append("")
    for m in orders:
        s, s2 = result.slopes.get(m), result.l2_slopes.get(m)
        if s is None:
            continue
        pair = " ".join(f"{p:.2f}" for p in s.pairwise_h)
        lines.append(f"m={m}: energy slope vs h {s.vs_h:.2f} (pairwise {pair}); "
                     f"L2 slope vs N_DoFs {s2.vs_ndofs:.2f}")
    for name, m, msg in result.failures:
        lines.append(f"FAILED {name} m={m}: {msg}")
    return "\n".join(lines) + "\n"


def write_outputs(result: SweepResult, out, stem: str = "sweep") -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / f"{stem}.csv", sweep_csv(result.reports))
    _atomic_write(out / f"{stem}_summary.txt", summary_table(result))


@dataclass
class AblationResult:
    """Sweeps of one order with ``k = 0`` and ``k = floor(m / 2)``.

    Attributes:
        runs: ``k -> SweepResult``; a single entry when both values coincide.
    """

    m: int
    runs: dict

    def slopes(self, k: int) -> Optional[ConvergenceSlopes]:
        return self.runs[k].slopes.get(self.m)

    @property
    def degenerate(self) -> bool:
        return len(self.runs) == 1

    def summary(self) -> str:
        lines = []
        for k, res in self.runs.items():
            s = res.slopes.get(self.m)
            errs = " ".join(f"{r.energy_rel:.3e}" for r in res.for_order(self.m))
            rate = "n/a" if s is None else f"{s.vs_h:.2f}, final pair {s.pairwise_h[-1]:.2f}"
            lines.append(f"m={self.m} k={k}: eS [{errs}] slope {rate}")
        return "\n".join(lines) + "\n"


def run_ablation_k(config: ExperimentConfig) -> AblationResult:
    """Compare the uncorrected scheme (``k = 0``) with ``k = floor(m / 2)``.

    Uses the first order of ``config.orders``; ``config.k`` is ignored. Both
    sweeps share the same meshes.
    """
    m = config.orders[0]
    case = config.case()
    meshes = build_meshes(config, case)
    runs = {}
    for k in dict.fromkeys((0, m // 2)):
        cfg = ExperimentConfig.from_dict({**config.to_dict(), "orders": [m], "k": k, "out": None})
        runs[k] = run_sweep(cfg, meshes)
        if config.out:
            write_outputs(runs[k], config.out, stem=f"ablation_m{m}_k{k}")
    result = AblationResult(m, runs)
    if config.out:
        _atomic_write(Path(config.out) / f"ablation_m{m}_summary.txt", result.summary())
    return result
