"""Write a runnable YAML config (plus stimulus node file) for the cuboid benchmark.

    python scripts/write_benchmark_config.py runs/bench --dx 0.5
    cardiofem simulate runs/bench/benchmark.yaml
"""
import argparse
from pathlib import Path

from cardiofem.config import MeshSpec, ModelSpec, RunConfig, StimulusSpec, dump_run_config, write_node_file
from cardiofem.monodomain import SimulationConfig
from cardiofem.verification import (
    BENCHMARK_SIGMA,
    BENCHMARK_SIZE,
    BENCHMARK_STIM_DURATION,
    BENCHMARK_STIM_INTENSITY,
    benchmark_stimulus_nodes,
)
from cardiofem.mesh import generate_cuboid_mesh


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("directory", type=Path)
    ap.add_argument("--dx", type=float, default=0.5, help="mesh spacing (mm)")
    ap.add_argument("--T", type=float, default=200.0, help="maximum simulated time (ms)")
    ap.add_argument("--output-interval", type=float, default=10.0, help="snapshot interval (ms)")
    args = ap.parse_args()

    args.directory.mkdir(parents=True, exist_ok=True)
    lx, ly, lz = BENCHMARK_SIZE
    mesh = generate_cuboid_mesh(lx, ly, lz, args.dx)
    write_node_file(benchmark_stimulus_nodes(mesh), args.directory / "stimulus_nodes.txt")
    cfg = RunConfig(
        mesh=MeshSpec(cuboid={"lx": lx, "ly": ly, "lz": lz, "dx": args.dx}),
        conductivity={0: BENCHMARK_SIGMA},
        ionic_model=ModelSpec("ten_tusscher_panfilov", {"cell_type": "epi"}),
        stimuli=(StimulusSpec("stimulus_nodes.txt", 0.0, BENCHMARK_STIM_DURATION, BENCHMARK_STIM_INTENSITY, "volumetric"),),
        simulation=SimulationConfig(T_total=args.T, output_interval=args.output_interval, stop_on_full_activation=True),
        output_dir=f"out_dx{args.dx:g}",
    )
    dump_run_config(cfg, args.directory / "benchmark.yaml")
    print(f"wrote {args.directory / 'benchmark.yaml'} ({mesh.n_nodes} nodes)")


if __name__ == "__main__":
    main()
