"""Command line interface: ``mesh``, ``solve``, ``sweep`` and ``ablate-k``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .cases import CASE_NAMES
from .exceptions import VEMError
from .experiments import (
    ExperimentConfig,
    build_meshes,
    run_ablation_k,
    run_sweep,
    solve_case,
    summary_table,
    sweep_csv,
)
from .mesh import audit_shape, save_mesh


def _int_list(text: str) -> list:
    return [int(t) for t in text.replace(",", " ").split()]


def _common(p: argparse.ArgumentParser, many_seeds: bool) -> None:
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields; flags override it")
    p.add_argument("--test", choices=CASE_NAMES, help="benchmark domain (default disk)")
    if many_seeds:
        p.add_argument("--seeds", type=_int_list, help="Voronoi seed counts, e.g. '125,250,500'")
        p.add_argument("--refinements", type=int, help="number of meshes when --seeds is omitted")
    else:
        p.add_argument("--seeds", type=int, help="Voronoi seed count")
    p.add_argument("--rng-seed", type=int, help="mesh generator seed")
    p.add_argument("--lloyd-iters", type=int, help="Lloyd relaxation steps")
    p.add_argument("--angle", choices=("principal", "unwrapped"), help="spiral angle convention")
    p.add_argument("--out", help="output directory (a .json path for 'mesh')")


def _solver_flags(p: argparse.ArgumentParser, many_orders: bool) -> None:
    if many_orders:
        p.add_argument("--m", type=_int_list, help="VEM orders, e.g. '1,2,3'")
    else:
        p.add_argument("--m", type=int, help="VEM order")
    p.add_argument("--gamma", type=float, help="Nitsche penalty (default 10 m^2)")
    p.add_argument("--k", type=int, help="correction depth (default floor(m/2))")
    p.add_argument("--quad-degree", type=int, help="polygon quadrature degree (default 2m+2)")
    p.add_argument("--mesh-file", action="append", type=Path, help="saved mesh to use; repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vemcurve", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", help="generate and save a Voronoi mesh")
    _common(p, many_seeds=False)

    p = sub.add_parser("solve", help="solve on one mesh and print the errors")
    _common(p, many_seeds=False)
    _solver_flags(p, many_orders=False)

    p = sub.add_parser("sweep", help="convergence sweep over meshes and orders")
    _common(p, many_seeds=True)
    _solver_flags(p, many_orders=True)

    p = sub.add_parser("ablate-k", help="compare k=0 with k=floor(m/2)")
    _common(p, many_seeds=True)
    _solver_flags(p, many_orders=False)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Merge ``--config`` (if any) with the explicitly given flags."""
    data = json.loads(args.config.read_text()) if getattr(args, "config", None) else {}
    seeds = getattr(args, "seeds", None)
    if isinstance(seeds, int):
        seeds = [seeds]
    m = getattr(args, "m", None)
    if isinstance(m, int):
        m = [m]
    flags = {
        "test": args.test,
        "orders": m,
        "seeds": seeds,
        "refinements": getattr(args, "refinements", None),
        "gamma": getattr(args, "gamma", None),
        "k": getattr(args, "k", None),
        "rng_seed": args.rng_seed,
        "lloyd_iters": args.lloyd_iters,
        "quad_degree": getattr(args, "quad_degree", None),
        "angle": args.angle,
        "mesh_files": [str(p) for p in args.mesh_file] if getattr(args, "mesh_file", None) else None,
        "out": args.out,
    }
    data.update({key: val for key, val in flags.items() if val is not None})
    if args.command in ("mesh", "solve") and "seeds" not in data and "mesh_files" not in data:
        data["refinements"] = 1
    return ExperimentConfig.from_dict(data)


def _cmd_mesh(cfg: ExperimentConfig) -> int:
    (name, mesh), *_ = build_meshes(cfg)
    shape = audit_shape(mesh)
    print(f"{name}: N_V={mesh.n_vertices} N_E={mesh.n_edges} N_C={mesh.n_cells} h={mesh.h:.5e} "
          f"quasi-uniformity={shape.quasi_uniformity:.3f}")
    if cfg.out:
        path = Path(cfg.out)
        if path.suffix != ".json":
            path.mkdir(parents=True, exist_ok=True)
            path = path / f"{name}.json"
        save_mesh(mesh, path)
        print(f"wrote {path}")
    return 0


def _cmd_solve(cfg: ExperimentConfig) -> int:
    case = cfg.case()
    (name, mesh), *_ = build_meshes(cfg, case)
    rep = solve_case(case, mesh, cfg.orders[0], name, cfg.gamma, cfg.k, cfg.quad_degree)
    print(f"{name} m={rep.m}: h={rep.h:.5e} N_V={rep.n_vertices} N_DoFs={rep.n_dofs} "
          f"eS={rep.energy_rel:.6e} eL2={rep.l2_rel:.6e}")
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}_m{rep.m}.csv").write_text(sweep_csv([rep]))
    return 0


def _cmd_sweep(cfg: ExperimentConfig) -> int:
    result = run_sweep(cfg)
    print(summary_table(result), end="")
    return 0 if result.ok else 1


def _cmd_ablate(cfg: ExperimentConfig) -> int:
    result = run_ablation_k(cfg)
    print(result.summary(), end="")
    return 0 if all(r.ok for r in result.runs.values()) else 1


COMMANDS = {"mesh": _cmd_mesh, "solve": _cmd_solve, "sweep": _cmd_sweep, "ablate-k": _cmd_ablate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg)
    except (VEMError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
