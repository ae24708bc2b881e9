"""Manufactured-solution study and the cuboid activation-time benchmark."""
from __future__ import annotations

import csv
import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .assembly import ConductivityField, assemble
from .ionic import CellModel, make_ten_tusscher_panfilov, volumetric_to_membrane
from .mesh import Mesh, generate_cuboid_mesh, generate_unit_square_mesh
from .monodomain import (
    SimulationConfig,
    SimulationResult,
    Stimulus,
    assemble_rhs,
    build_system_matrix,
    extrapolated_guess,
    run,
)
from .solver import SolveReport, SolverSettings, jacobi_preconditioner, pcg

# ---------------------------------------------------------------- manufactured solution


@dataclass(frozen=True)
class MMSParams:
    """Decaying travelling wave ``w = exp(-k t) cos(omega1 x + omega2 y - lam t)`` on the unit square.

    ``n`` is the number of grid nodes per side (``n - 1`` subdivisions).
    ``output_interval=None`` records the error after every step.
    """

    k: float = 1.0
    omega1: float = 2.0 * math.pi
    omega2: float = 2.0 * math.pi
    lam: float = 2.0 * math.pi
    n: int = 50
    dt: float = 0.01
    T: float = 1.0
    theta: float = 0.5
    output_interval: float | None = None

    def __post_init__(self):
        vals = (self.k, self.omega1, self.omega2, self.lam, self.dt, self.T)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("MMS parameters must be finite")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not (self.dt > 0 and self.T >= self.dt):
            raise ValueError("need dt > 0 and T >= dt")


def manufactured_w(x, y, t, p: MMSParams):
    return np.exp(-p.k * t) * np.cos(p.omega1 * x + p.omega2 * y - p.lam * t)


def manufactured_residual(x, y, t, p: MMSParams):
    """Source ``r = dw/dt - laplacian(w)`` that makes ``w`` an exact solution."""
    phase = p.omega1 * x + p.omega2 * y - p.lam * t
    decay = np.exp(-p.k * t)
    return decay * (-p.k * np.cos(phase) + p.lam * np.sin(phase)) + (p.omega1**2 + p.omega2**2) * decay * np.cos(
        phase
    )


@dataclass
class MMSResult:
    times: np.ndarray
    linf: np.ndarray
    l2: np.ndarray
    reports: list[SolveReport] = field(default_factory=list)
    h: float = float("nan")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_ms", "linf", "l2"])
            for row in zip(self.times, self.linf, self.l2):
                w.writerow([repr(float(v)) for v in row])


def dirichlet_system(A: sp.csr_matrix, boundary: np.ndarray) -> sp.csr_matrix:
    """Zero boundary rows and columns of ``A`` and put 1 on their diagonal (keeps SPD)."""
    n = A.shape[0]
    keep = np.ones(n)
    keep[boundary] = 0.0
    D = sp.diags(keep)
    fixed = np.zeros(n)
    fixed[boundary] = 1.0
    Ad = (D @ A @ D + sp.diags(fixed)).tocsr()
    Ad.eliminate_zeros()
    Ad.sort_indices()
    return Ad


def run_mms(p: MMSParams, solver: SolverSettings | None = None, source_sign: float = 1.0) -> MMSResult:
    """Solve the forced diffusion problem with exact Dirichlet data and track ``V - w``.

    The source is applied at the theta-weighted time ``t_k + theta dt``.
    ``source_sign=-1`` deliberately corrupts the forcing (a mutation check).
    """
    solver = solver or SolverSettings(abs_tol=1e-8, rel_tol=1e-8)
    mesh = generate_unit_square_mesh(p.n - 1)
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    M, K = assemble(mesh, {0: (1.0, 1.0)})
    cfg = SimulationConfig(theta=p.theta, dt=p.dt, T_total=p.T, chi=1.0, Cm=1.0, output_interval=None)
    A = build_system_matrix(M, K, cfg)
    B = np.asarray(mesh.boundary_nodes)
    A_b = A[:, B].tocsr()
    Ad = dirichlet_system(A, B)
    precond = jacobi_preconditioner(Ad)
    zero = np.zeros(mesh.n_nodes)

    stride = 1 if p.output_interval is None else int(round(p.output_interval / p.dt))
    V = manufactured_w(x, y, 0.0, p)
    V_prev = None
    times, linf, l2, reports = [], [], [], []

    def record(t, V):
        e = V - manufactured_w(x, y, t, p)
        times.append(t)
        linf.append(float(np.abs(e).max()))
        l2.append(float(math.sqrt(max(e @ (M @ e), 0.0))))

    record(0.0, V)
    for k in range(cfg.n_steps):
        t_src = (k + p.theta) * p.dt
        t_next = (k + 1) * p.dt
        r = source_sign * manufactured_residual(x, y, t_src, p)
        b = assemble_rhs(M, K, V, zero, r, cfg)
        g = manufactured_w(x[B], y[B], t_next, p)
        b -= A_b @ g
        b[B] = g
        x0 = extrapolated_guess(V, V_prev)
        x0[B] = g
        V_new, report = pcg(Ad, b, x0, precond, solver)
        reports.append(report)
        V_prev, V = V, V_new
        if (k + 1) % stride == 0:
            record(t_next, V)
    return MMSResult(np.array(times), np.array(linf), np.array(l2), reports, 1.0 / (p.n - 1))


def convergence_orders(h: Sequence[float], err: Sequence[float]) -> np.ndarray:
    """Observed orders ``log(e_i/e_{i+1}) / log(h_i/h_{i+1})`` between successive grids."""
    h, err = np.asarray(h, float), np.asarray(err, float)
    return np.log(err[:-1] / err[1:]) / np.log(h[:-1] / h[1:])


@dataclass
class LadderResult:
    ns: list[int]
    h: np.ndarray
    final_l2: np.ndarray
    final_linf: np.ndarray
    orders: np.ndarray
    runs: list[MMSResult]

    @property
    def order(self) -> float:
        """Least-squares slope of log(L2) against log(h)."""
        return float(np.polyfit(np.log(self.h), np.log(self.final_l2), 1)[0])

    def table(self) -> str:
        lines = ["n       h          L2(T)          Linf(T)        order"]
        for i, n in enumerate(self.ns):
            o = "" if i == 0 else f"{self.orders[i - 1]:.3f}"
            lines.append(f"{n:<7d} {self.h[i]:<10.5f} {self.final_l2[i]:<14.6e} {self.final_linf[i]:<14.6e} {o}")
        lines.append(f"fitted order: {self.order:.3f}")
        return "\n".join(lines)


def mms_ladder(
    ns: Sequence[int] = (13, 25, 50),
    base: MMSParams | None = None,
    dt_times_n: float = 0.1,
    solver: SolverSettings | None = None,
    source_sign: float = 1.0,
) -> LadderResult:
    """Refinement study with ``dt = dt_times_n / n`` so that temporal error shrinks with ``h``."""
    base = base or MMSParams()
    runs = []
    for n in ns:
        dt = dt_times_n / n
        steps = max(1, round(base.T / dt))
        p = replace(base, n=n, dt=base.T / steps, output_interval=None)
        runs.append(run_mms(p, solver or SolverSettings(abs_tol=1e-10, rel_tol=1e-10, max_iters=500), source_sign))
    h = np.array([r.h for r in runs])
    l2 = np.array([r.l2[-1] for r in runs])
    linf = np.array([r.linf[-1] for r in runs])
    return LadderResult(list(ns), h, l2, linf, convergence_orders(h, l2), runs)


def windowed_maxima(times: np.ndarray, err: np.ndarray, window: float, start: float) -> np.ndarray:
    """Maximum of ``err`` over consecutive windows of length ``window`` from ``start``."""
    out = []
    t0 = start
    while t0 < times[-1] - 1e-12:
        sel = (times >= t0 - 1e-12) & (times < t0 + window - 1e-12)
        if sel.any():
            out.append(err[sel].max())
        t0 += window
    return np.array(out)


def tail_is_stable(times, err, window: float, tail_fraction: float = 0.6, floor: float = 0.0) -> bool:
    """Running-maximum check on the final ``tail_fraction`` of an error series.

    True when the series is finite, nothing in the tail exceeds the maximum
    reached before it, and the per-window maxima in the tail do not increase
    (increases below ``floor`` are ignored as solver noise).
    """
    times, err = np.asarray(times), np.asarray(err)
    if not np.isfinite(err).all():
        return False
    t_cut = times[-1] * (1.0 - tail_fraction)
    head, tail = err[times < t_cut], err[times >= t_cut]
    if head.size and tail.max() > head.max():
        return False
    peaks = windowed_maxima(times, err, window, t_cut)
    return bool(np.all(np.diff(peaks) <= floor))


# ---------------------------------------------------------------- cuboid benchmark

BENCHMARK_SIZE = (20.0, 7.0, 3.0)  # mm
BENCHMARK_SIGMA = (0.1334177, 0.0173515)  # S/m, longitudinal / transverse
BENCHMARK_STIM_INTENSITY = 50.0  # uA/mm^3
BENCHMARK_STIM_EDGE = 1.5  # mm
BENCHMARK_STIM_DURATION = 2.0  # ms
BENCHMARK_DX = (0.5, 0.2, 0.1)


def benchmark_stimulus_nodes(mesh: Mesh, edge: float = BENCHMARK_STIM_EDGE) -> np.ndarray:
    inside = np.all(mesh.nodes <= edge + 1e-9, axis=1)
    return np.flatnonzero(inside)


def setup_nversion(dx: float, T_total: float = 200.0, **cfg_overrides):
    """Mesh, conductivities, stimulus, configuration and cell model for the cuboid benchmark."""
    if not any(math.isclose(dx, d) for d in BENCHMARK_DX):
        warnings.warn(f"dx={dx} is not one of the benchmark resolutions {BENCHMARK_DX}", stacklevel=2)
    mesh = generate_cuboid_mesh(*BENCHMARK_SIZE, dx)
    conductivity: ConductivityField = {0: BENCHMARK_SIGMA}
    chi = 140.0
    stim = Stimulus(
        benchmark_stimulus_nodes(mesh),
        start=0.0,
        duration=BENCHMARK_STIM_DURATION,
        intensity=volumetric_to_membrane(BENCHMARK_STIM_INTENSITY, chi),
    )
    settings = dict(
        theta=0.5, dt=0.005, T_total=T_total, chi=chi, Cm=0.01, output_interval=None, stop_on_full_activation=True
    )
    settings.update(cfg_overrides)
    cfg = SimulationConfig(**settings)
    return mesh, conductivity, stim, cfg, make_ten_tusscher_panfilov("epi")


def diagonal_sample_nodes(mesh: Mesh, n_samples: int = 101) -> tuple[np.ndarray, np.ndarray]:
    """Fractions ``s`` in [0, 1] along P1 -> P8 and the nearest mesh node to each point."""
    lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
    s = np.linspace(0.0, 1.0, n_samples)
    pts = lo + s[:, None] * (hi - lo)
    _, idx = cKDTree(mesh.nodes).query(pts)
    return s, idx


@dataclass
class BenchmarkResult:
    dx: float
    s: np.ndarray
    diagonal_lat: np.ndarray
    lat: np.ndarray
    simulation: SimulationResult

    @property
    def fully_activated(self) -> bool:
        return bool(np.isfinite(self.lat).all())


def run_benchmark(dx: float, n_samples: int = 101, sigma_scale: float = 1.0, **cfg_overrides) -> BenchmarkResult:
    mesh, cond, stim, cfg, model = setup_nversion(dx, **cfg_overrides)
    if sigma_scale != 1.0:
        cond = {tag: (sl * sigma_scale, st * sigma_scale) for tag, (sl, st) in cond.items()}
    sim = run(mesh, cond, model, [stim], cfg)
    s, idx = diagonal_sample_nodes(mesh, n_samples)
    return BenchmarkResult(dx, s, sim.maps.lat[idx], sim.maps.lat, sim)


def curve_gap(a: BenchmarkResult, b: BenchmarkResult) -> float:
    """Root-mean-square difference between two diagonal activation curves (ms)."""
    if not np.array_equal(a.s, b.s):
        raise ValueError("activation curves sampled at different points")
    return float(np.sqrt(np.mean((a.diagonal_lat - b.diagonal_lat) ** 2)))


@dataclass
class NVersionSummary:
    results: list[BenchmarkResult]
    gaps: list[float]  # between successive entries of ``results``


def run_nversion(dx_list: Sequence[float] = (0.5, 0.2), n_samples: int = 101, **cfg_overrides) -> NVersionSummary:
    results = []
    for dx in dx_list:
        res = run_benchmark(dx, n_samples, **cfg_overrides)
        if not res.fully_activated:
            missing = int(np.isnan(res.lat).sum())
            raise RuntimeError(f"dx={dx}: {missing} nodes never activated")
        results.append(res)
    gaps = [curve_gap(a, b) for a, b in zip(results, results[1:])]
    return NVersionSummary(results, gaps)


def write_activation_curves(summary: NVersionSummary, path) -> None:
    """CSV with the diagonal fraction ``s`` and one LAT column per resolution."""
    path = Path(path)
    cols = [r.diagonal_lat for r in summary.results]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s"] + [f"lat_dx{r.dx:g}_ms" for r in summary.results])
        for i, s in enumerate(summary.results[0].s):
            w.writerow([repr(float(s))] + [repr(float(c[i])) for c in cols])
