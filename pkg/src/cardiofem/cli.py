"""Command-line interface: ``simulate``, ``verify-mms`` and ``benchmark``.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 mesh/input error, 4 solver abort.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as rc
from .assembly import AssemblyError
from .mesh import MeshError
from .monodomain import ConfigError, SimulationAbort, run
from .output import VTKSink, write_stats_log
from .solver import SolverError, SolverSettings
from .verification import (
    BENCHMARK_DX,
    MMSParams,
    mms_ladder,
    run_mms,
    run_nversion,
    tail_is_stable,
    write_activation_curves,
)

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_MESH, EXIT_SOLVER = 0, 1, 2, 3, 4
MIN_MMS_ORDER = 1.5

log = logging.getLogger("cardiofem")


def _solver_overrides(args, base: SolverSettings) -> SolverSettings:
    changes = {}
    if args.tolerance is not None:
        changes.update(abs_tol=args.tolerance, rel_tol=args.tolerance)
    if args.max_iters is not None:
        changes["max_iters"] = args.max_iters
    return dataclasses.replace(base, **changes)


def cmd_simulate(args) -> int:
    cfg = rc.load_run_config(args.config)
    sim = dataclasses.replace(
        cfg.simulation,
        solver=_solver_overrides(args, cfg.simulation.solver),
        use_rcm=cfg.simulation.use_rcm and not args.no_rcm,
    )
    out = Path(args.output_dir) if args.output_dir else cfg.resolve(cfg.output_dir)
    mesh = rc.build_mesh(cfg)
    rc.check_regions(cfg, mesh)
    model = rc.build_model(cfg)
    stimuli = rc.build_stimuli(cfg, mesh.n_nodes)
    out.mkdir(parents=True, exist_ok=True)
    sinks = [VTKSink(mesh, out)] if sim.output_format == "vtk" and sim.output_interval is not None else []
    log.info("mesh: %d nodes, %d %ss; %d steps", mesh.n_nodes, mesh.n_elements, mesh.kind, sim.n_steps)
    result = run(mesh, cfg.conductivity, model, stimuli, sim, sinks)
    if not sinks:
        from .output import write_activation_csv

        write_activation_csv(result.maps, out / "activation.csv")
    write_stats_log(result, out / "stats.jsonl", {"seed": args.seed, "n_nodes": mesh.n_nodes})
    rc.dump_run_config(dataclasses.replace(cfg, simulation=sim), out / "run_config.yaml")
    print(f"{result.steps} steps in {result.wall_time:.1f} s; output in {out}")
    return EXIT_OK


def cmd_verify_mms(args) -> int:
    out = Path(args.output_dir or "mms_out")
    out.mkdir(parents=True, exist_ok=True)
    sign = -1.0 if args.flip_source_sign else 1.0
    base = MMSParams(T=args.T)
    if args.single is not None:
        p = dataclasses.replace(base, n=args.single, dt=args.dt, output_interval=args.output_interval)
        solver = _solver_overrides(args, SolverSettings(abs_tol=1e-8, rel_tol=1e-8, max_iters=1000))
        res = run_mms(p, solver, source_sign=sign)
        res.write_csv(out / f"mms_error_n{p.n}.csv")
        stable = tail_is_stable(res.times, res.l2, 2 * np.pi / p.lam, floor=solver.abs_tol)
        print(f"n={p.n}: {len(res.times)} rows, final L2={res.l2[-1]:.3e}, stable tail: {stable}")
        return EXIT_OK if stable else EXIT_VERIFY
    solver = _solver_overrides(args, SolverSettings(abs_tol=1e-10, rel_tol=1e-10, max_iters=1000))
    ladder = mms_ladder(args.ladder, base, solver=solver, source_sign=sign)
    for n, res in zip(ladder.ns, ladder.runs):
        res.write_csv(out / f"mms_error_n{n}.csv")
    table = ladder.table()
    (out / "convergence.txt").write_text(table + "\n")
    print(table)
    if not ladder.order >= MIN_MMS_ORDER:
        print(f"FAIL: measured order {ladder.order:.3f} < {MIN_MMS_ORDER}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_benchmark(args) -> int:
    out = Path(args.output_dir or "benchmark_out")
    out.mkdir(parents=True, exist_ok=True)
    solver = _solver_overrides(args, SolverSettings())
    summary = run_nversion(args.dx, solver=solver, use_rcm=not args.no_rcm, T_total=args.T)
    write_activation_curves(summary, out / "activation_curves.csv")
    for res in summary.results:
        sim = res.simulation
        print(
            f"dx={res.dx:g}: {sim.steps} steps, {sim.wall_time:.1f} s, "
            f"LAT(P1)={res.diagonal_lat[0]:.3f} ms, LAT(P8)={res.diagonal_lat[-1]:.3f} ms"
        )
    for (a, b), gap in zip(zip(summary.results, summary.results[1:]), summary.gaps):
        print(f"curve gap dx={a.dx:g} -> dx={b.dx:g}: {gap:.3f} ms (RMS)")
    with open(out / "summary.json", "w") as fh:
        json.dump(
            {"dx": [r.dx for r in summary.results], "gaps_ms": summary.gaps, "seed": args.seed}, fh, indent=2
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", help="directory for results")
    common.add_argument("--tolerance", type=float, help="PCG absolute and relative tolerance")
    common.add_argument("--max-iters", type=int, help="PCG iteration limit")
    common.add_argument("--no-rcm", action="store_true", help="disable reverse Cuthill-McKee renumbering")
    common.add_argument("--seed", type=int, default=0, help="recorded in the run log (runs are deterministic)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cardiofem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run a simulation from a YAML config")
    p.add_argument("config", help="path to the run configuration")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify-mms", parents=[common], help="manufactured-solution convergence study")
    p.add_argument("--ladder", type=int, nargs="+", default=[13, 25, 50], help="grid nodes per side")
    p.add_argument("--single", type=int, metavar="N", help="one run on an N x N node grid instead of a ladder")
    p.add_argument("--dt", type=float, default=0.01, help="time step for --single (ms)")
    p.add_argument("--T", type=float, default=1.0, help="final time (ms)")
    p.add_argument("--output-interval", type=float, default=None, help="error sampling interval for --single")
    p.add_argument("--flip-source-sign", action="store_true", help="debug: negate the source term")
    p.set_defaults(func=cmd_verify_mms)

    p = sub.add_parser("benchmark", parents=[common], help="cuboid activation-time benchmark")
    p.add_argument("--dx", type=float, nargs="+", default=[BENCHMARK_DX[0]], help="mesh spacings (mm)")
    p.add_argument("--T", type=float, default=200.0, help="maximum simulated time (ms)")
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MeshError, AssemblyError) as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except (SimulationAbort, SolverError) as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
