"""Snapshot and result writers: legacy ASCII VTK, activation CSV, JSON-lines statistics."""
from __future__ import annotations

import json
from concurrent.futures import Future, ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .mesh import Mesh
from .monodomain import ActivationMaps, SimulationResult, SnapshotFrame

VTK_CELL_TYPE = {"triangle": 5, "tetrahedron": 10}


def _fmt(values: np.ndarray) -> str:
    # repr() gives the shortest string that round-trips a float64 exactly
    return "\n".join(repr(float(v)) for v in values)


def write_vtk(frame: SnapshotFrame, mesh: Mesh, path) -> Path:
    """Legacy ASCII unstructured grid with point scalars ``Vm`` (plus ``LAT``/``LRT`` if present).

    Unset activation times are written as NaN.
    """
    if frame.V.shape != (mesh.n_nodes,):
        raise ValueError(f"frame has {frame.V.shape[0]} values, mesh has {mesh.n_nodes} nodes")
    path = Path(path)
    k = mesh.elements.shape[1]
    lines = [
        "# vtk DataFile Version 3.0",
        f"Vm t={frame.time!r} ms",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    lines += [" ".join(repr(float(c)) for c in p) for p in mesh.nodes]
    lines.append(f"CELLS {mesh.n_elements} {mesh.n_elements * (k + 1)}")
    lines += [f"{k} " + " ".join(str(int(i)) for i in e) for e in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += [str(VTK_CELL_TYPE[mesh.kind])] * mesh.n_elements
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    for name, values in (("Vm", frame.V), ("LAT", frame.lat), ("LRT", frame.lrt)):
        if values is not None:
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _fmt(values)]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_activation_csv(maps: ActivationMaps, path) -> Path:
    """``node,lat_ms,lrt_ms``; unset times are empty cells."""
    path = Path(path)

    def cell(v):
        return "" if np.isnan(v) else repr(float(v))

    rows = ["node,lat_ms,lrt_ms"]
    rows += [f"{i},{cell(a)},{cell(b)}" for i, (a, b) in enumerate(zip(maps.lat, maps.lrt))]
    path.write_text("\n".join(rows) + "\n")
    return path


def write_stats_log(result: SimulationResult, path, extra: dict | None = None) -> Path:
    """One JSON object per step, then a summary record."""
    path = Path(path)
    with open(path, "w") as fh:
        for k, (t, r) in enumerate(zip(result.times, result.reports)):
            rec = {
                "record": "step",
                "step": k,
                "t_ms": float(t),
                "pcg_iterations": r.iterations,
                "residual": r.residual_norm,
                "converged": r.converged,
            }
            fh.write(json.dumps(rec) + "\n")
        its = [r.iterations for r in result.reports]
        summary = {
            "record": "summary",
            "steps": result.steps,
            "total_pcg_iterations": int(sum(its)),
            "max_pcg_iterations": int(max(its, default=0)),
            "unconverged_steps": sum(not r.converged for r in result.reports),
            "wall_time_s": result.wall_time,
            "stopped_early": result.stopped_early,
        }
        summary.update(extra or {})
        fh.write(json.dumps(summary) + "\n")
    return path


class VTKSink:
    """Writes ``<prefix>_<index>.vtk`` per frame on a background thread.

    Frames are immutable, so the time loop continues while the previous frame
    is being formatted. :meth:`finalize` writes the LAT/LRT frame and the
    activation CSV, then waits for every pending write.
    """

    def __init__(self, mesh: Mesh, directory, prefix: str = "vm", write_activation: bool = True):
        self.mesh = mesh
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.prefix = prefix
        self.write_activation = write_activation
        self.paths: list[Path] = []
        self.frame_times: list[float] = []
        self._pool = ThreadPoolExecutor(max_workers=1)
        self._pending: list[Future] = []

    def write_frame(self, frame: SnapshotFrame) -> None:
        path = self.directory / f"{self.prefix}_{len(self.paths):05d}.vtk"
        self.paths.append(path)
        self.frame_times.append(frame.time)
        self._pending.append(self._pool.submit(write_vtk, frame, self.mesh, path))

    def finalize(self, frame: SnapshotFrame) -> None:
        try:
            if self.write_activation and frame.lat is not None:
                write_vtk(frame, self.mesh, self.directory / "activation.vtk")
                write_activation_csv(ActivationMaps(frame.lat, frame.lrt), self.directory / "activation.csv")
            self.close()
        except BaseException:
            self._pool.shutdown(wait=True)
            raise

    def close(self) -> None:
        for f in self._pending:
            f.result()
        self._pending.clear()
        self._pool.shutdown(wait=True)
