"""Operator-split theta-scheme driver for the monodomain equation.

Per step ``k -> k+1``:

1. advance the ionic states with forward Euler and evaluate ``I_ion(V^k, u^{k+1})``;
2. evaluate the applied stimulus at ``t_k``;
3. form ``b = chi M (Cm V^k - dt I_ion + dt I_stim) - (1 - theta) dt K V^k``;
4. solve ``(chi Cm M + theta dt K) V^{k+1} = b`` by Jacobi-PCG, starting from
   ``2 V^k - V^{k-1}``;
5. update activation/repolarisation times;
6. hand a snapshot to the sinks on the output cadence.

Nodes are optionally renumbered once by reverse Cuthill-McKee; every array
that leaves :func:`run` is in the mesh's original node order.
"""
from __future__ import annotations

import math
import time
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
import scipy.sparse as sp

from .assembly import ConductivityField, assemble, permute_system, rcm_permutation
from .ionic.base import CellModel, IonicError, ionic_step
from .mesh import Mesh
from .solver import SolveReport, SolverError, SolverSettings, jacobi_preconditioner, pcg

LAT_THRESHOLD = 0.0  # mV, strictly exceeded
LRT_THRESHOLD = -70.0  # mV, undershot with negative slope
INITIAL_GUESSES = ("extrapolate", "previous", "zero")


class ConfigError(ValueError):
    pass


class SimulationAbort(RuntimeError):
    """Raised when the time loop cannot continue; ``step`` is the failing step index."""

    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


def _is_multiple(value: float, unit: float) -> bool:
    ratio = value / unit
    return abs(ratio - round(ratio)) <= 1e-9 * max(1.0, abs(ratio))


@dataclass(frozen=True)
class SimulationConfig:
    """Time-stepping parameters. Units: ms, 1/mm, uF/mm^2.

    ``output_interval=None`` disables snapshots. ``stop_on_full_activation``
    ends the run at the first step by which every node has activated.
    ``compare_zero_guess`` additionally solves each step from a zero initial
    guess (result discarded) and records its iteration count.
    """

    theta: float = 0.5
    dt: float = 0.005
    T_total: float = 100.0
    chi: float = 140.0
    Cm: float = 0.01
    solver: SolverSettings = field(default_factory=SolverSettings)
    output_interval: float | None = 10.0
    output_format: str = "vtk"
    lat_lrt_enabled: bool = True
    use_rcm: bool = True
    initial_guess: str = "extrapolate"
    failure_budget: int = 3
    stop_on_full_activation: bool = False
    compare_zero_guess: bool = False

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError(f"theta must lie in [0, 1], got {self.theta}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.T_total >= self.dt * (1 - 1e-12):
            raise ConfigError(f"T_total ({self.T_total}) must be at least dt ({self.dt})")
        if not (self.chi > 0 and self.Cm > 0):
            raise ConfigError("chi and Cm must be positive")
        if self.output_interval is not None and not (
            self.output_interval > 0 and _is_multiple(self.output_interval, self.dt)
        ):
            raise ConfigError(f"output_interval {self.output_interval} is not a positive multiple of dt {self.dt}")
        if self.initial_guess not in INITIAL_GUESSES:
            raise ConfigError(f"initial_guess must be one of {INITIAL_GUESSES}")
        if self.failure_budget < 0:
            raise ConfigError("failure_budget must be non-negative")
        if self.stop_on_full_activation and not self.lat_lrt_enabled:
            raise ConfigError("stop_on_full_activation requires lat_lrt_enabled")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.T_total / self.dt + 1e-9))

    @property
    def output_stride(self) -> int | None:
        if self.output_interval is None:
            return None
        return int(round(self.output_interval / self.dt))


@dataclass(frozen=True)
class Stimulus:
    """Current ``intensity`` (uA/mm^2, membrane density) on ``nodes`` for ``start <= t < start + duration``."""

    nodes: np.ndarray
    start: float
    duration: float
    intensity: float

    def __post_init__(self):
        nodes = np.unique(np.asarray(self.nodes, dtype=np.int64).ravel())
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        if not self.duration > 0:
            raise ConfigError(f"stimulus duration must be positive, got {self.duration}")
        if not math.isfinite(self.intensity):
            raise ConfigError("stimulus intensity must be finite")
        if nodes.size and nodes[0] < 0:
            raise ConfigError("stimulus node indices must be non-negative")

    def active(self, t: float) -> bool:
        return self.start <= t < self.start + self.duration


@dataclass
class ActivationMaps:
    """Local activation/repolarisation times in ms; NaN marks "not yet"."""

    lat: np.ndarray
    lrt: np.ndarray

    @classmethod
    def empty(cls, n: int) -> ActivationMaps:
        return cls(np.full(n, np.nan), np.full(n, np.nan))

    @property
    def all_activated(self) -> bool:
        return bool(np.isfinite(self.lat).all())

    def permuted(self, index: np.ndarray) -> ActivationMaps:
        return ActivationMaps(self.lat[index], self.lrt[index])


@dataclass(frozen=True)
class CellStateField:
    V: np.ndarray
    U: np.ndarray


@dataclass(frozen=True)
class SnapshotFrame:
    """Nodal potential at ``time``; LAT/LRT are attached to the final frame only."""

    time: float
    V: np.ndarray
    lat: np.ndarray | None = None
    lrt: np.ndarray | None = None

    def __post_init__(self):
        for name in ("V", "lat", "lrt"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=np.float64)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)


class SnapshotSink(Protocol):
    def write_frame(self, frame: SnapshotFrame) -> None: ...

    def finalize(self, frame: SnapshotFrame) -> None: ...


@dataclass
class SimulationResult:
    state: CellStateField
    maps: ActivationMaps
    reports: list[SolveReport]
    times: np.ndarray  # t_{k+1} for each completed step
    wall_time: float
    zero_guess_iterations: list[int] | None = None
    stopped_early: bool = False

    @property
    def steps(self) -> int:
        return len(self.reports)


# ---------------------------------------------------------------- building blocks


def build_system_matrix(M, K, cfg: SimulationConfig) -> sp.csr_matrix:
    """``A = chi Cm M + theta dt K``."""
    if M.shape != K.shape or M.shape[0] != M.shape[1]:
        raise ValueError(f"M {M.shape} and K {K.shape} must be square and equal-sized")
    A = (cfg.chi * cfg.Cm) * sp.csr_matrix(M) + (cfg.theta * cfg.dt) * sp.csr_matrix(K)
    A = sp.csr_matrix(A)
    A.sort_indices()
    return A


def assemble_rhs(M, K, V_k, I_ion, I_stim, cfg: SimulationConfig) -> np.ndarray:
    """``b = chi M (Cm V^k - dt I_ion + dt I_stim) - (1 - theta) dt K V^k``."""
    n = M.shape[0]
    V_k, I_ion, I_stim = (np.asarray(v, dtype=np.float64) for v in (V_k, I_ion, I_stim))
    if not (V_k.shape == I_ion.shape == I_stim.shape == (n,)):
        raise ValueError(f"vectors must all have length {n}")
    b = cfg.chi * (M @ (cfg.Cm * V_k - cfg.dt * I_ion + cfg.dt * I_stim))
    if cfg.theta != 1.0:
        b -= (1.0 - cfg.theta) * cfg.dt * (K @ V_k)
    return b


def extrapolated_guess(V_k, V_km1=None) -> np.ndarray:
    """Linear extrapolation ``2 V^k - V^{k-1}``; ``V^k`` when there is no history."""
    V_k = np.asarray(V_k, dtype=np.float64)
    if V_km1 is None:
        return V_k.copy()
    V_km1 = np.asarray(V_km1, dtype=np.float64)
    if V_km1.shape != V_k.shape:
        raise ValueError("V_k and V_km1 must have equal length")
    return 2.0 * V_k - V_km1


def stimulus_vector(stimuli: Iterable[Stimulus], t: float, n: int) -> np.ndarray:
    """Sum of all stimuli active at ``t`` as a nodal vector of length ``n``."""
    out = np.zeros(n)
    for s in stimuli:
        if s.active(t):
            if s.nodes.size and s.nodes[-1] >= n:
                raise ConfigError(f"stimulus node {int(s.nodes[-1])} outside mesh of {n} nodes")
            out[s.nodes] += s.intensity
    return out


def update_activation_maps(maps: ActivationMaps, V_prev, V_now, t: float) -> ActivationMaps:
    """Record first upstroke above 0 mV and the first fall below -70 mV after it.

    A node can only repolarise on a step strictly after the one that activated it.
    Updates ``maps`` in place and returns it.
    """
    V_prev = np.asarray(V_prev)
    V_now = np.asarray(V_now)
    unset_lat = np.isnan(maps.lat)
    repol = ~unset_lat & np.isnan(maps.lrt) & (V_now < LRT_THRESHOLD) & (V_now - V_prev < 0)
    maps.lrt[repol] = t
    maps.lat[unset_lat & (V_now > LAT_THRESHOLD)] = t
    return maps


# ---------------------------------------------------------------- driver


def _emit(sinks: Sequence[SnapshotSink], t: float, V_perm: np.ndarray, inv: np.ndarray | None) -> None:
    if sinks:
        frame = SnapshotFrame(t, V_perm if inv is None else V_perm[inv])
        for s in sinks:
            s.write_frame(frame)


def run(
    mesh: Mesh,
    conductivity: ConductivityField,
    model: CellModel,
    stimuli: Sequence[Stimulus],
    cfg: SimulationConfig,
    sinks: Sequence[SnapshotSink] = (),
    V0: np.ndarray | None = None,
    matrices: tuple | None = None,
) -> SimulationResult:
    """Integrate the monodomain equation from ``t = 0`` to ``cfg.T_total``.

    ``V0`` overrides the model's resting potential as the initial condition.
    ``matrices`` may supply pre-assembled ``(M, K)`` in original node order.
    """
    t_start = time.perf_counter()
    n = mesh.n_nodes
    for s in stimuli:
        if s.nodes.size and s.nodes[-1] >= n:
            raise ConfigError(f"stimulus node {int(s.nodes[-1])} outside mesh of {n} nodes")
    M, K = matrices if matrices is not None else assemble(mesh, conductivity)

    V, U = model.initial_state(n)
    if V0 is not None:
        V = np.array(V0, dtype=np.float64)
        if V.shape != (n,):
            raise ConfigError(f"initial potential must have length {n}")

    perm = inv = None
    if cfg.use_rcm:
        perm = rcm_permutation(M)
        M, K, perm, inv = permute_system(M, K, perm)
        V, U = V[perm], U[perm]
        stimuli = [Stimulus(inv[s.nodes], s.start, s.duration, s.intensity) for s in stimuli]

    A = build_system_matrix(M, K, cfg)
    precond = jacobi_preconditioner(A)
    maps = ActivationMaps.empty(n)
    reports: list[SolveReport] = []
    zero_iters: list[int] | None = [] if cfg.compare_zero_guess else None
    times = []
    stride = cfg.output_stride
    V_prev = None
    consecutive_failures = 0
    stopped_early = False

    if stride is not None:
        _emit(sinks, 0.0, V, inv)

    for k in range(cfg.n_steps):
        t_k = k * cfg.dt
        t_next = (k + 1) * cfg.dt
        try:
            U, I_ion = ionic_step(model, V, U, cfg.dt, cm=cfg.Cm)
        except IonicError as exc:
            node = exc.node if perm is None or exc.node is None else int(perm[exc.node])
            raise SimulationAbort(f"non-finite ionic state at node {node}", k) from exc
        I_stim = stimulus_vector(stimuli, t_k, n)
        b = assemble_rhs(M, K, V, I_ion, I_stim, cfg)

        if cfg.initial_guess == "extrapolate":
            x0 = extrapolated_guess(V, V_prev)
        elif cfg.initial_guess == "previous":
            x0 = V
        else:
            x0 = np.zeros(n)
        try:
            V_new, report = pcg(A, b, x0, precond, cfg.solver)
            if zero_iters is not None:
                zero_iters.append(pcg(A, b, np.zeros(n), precond, cfg.solver)[1].iterations)
        except SolverError as exc:
            raise SimulationAbort(str(exc), k) from exc
        if not np.isfinite(V_new).all():
            bad = int(np.flatnonzero(~np.isfinite(V_new))[0])
            raise SimulationAbort(f"non-finite potential at node {bad if inv is None else int(perm[bad])}", k)
        reports.append(report)
        times.append(t_next)
        consecutive_failures = 0 if report.converged else consecutive_failures + 1
        if consecutive_failures > cfg.failure_budget:
            raise SimulationAbort(
                f"PCG failed to converge on {consecutive_failures} consecutive steps "
                f"(residual {report.residual_norm:.3e})",
                k,
            )

        if cfg.lat_lrt_enabled:
            update_activation_maps(maps, V, V_new, t_next)
        V_prev, V = V, V_new
        if stride is not None and (k + 1) % stride == 0:
            _emit(sinks, t_next, V, inv)
        if cfg.stop_on_full_activation and maps.all_activated:
            stopped_early = k + 1 < cfg.n_steps
            break

    if inv is not None:
        V, U, maps = V[inv], U[inv], maps.permuted(inv)
    state = CellStateField(V, U)
    t_final = times[-1] if times else 0.0
    final = SnapshotFrame(t_final, V, maps.lat if cfg.lat_lrt_enabled else None,
                          maps.lrt if cfg.lat_lrt_enabled else None)  # fmt: skip
    for s in sinks:
        s.finalize(final)
    return SimulationResult(
        state, maps, reports, np.asarray(times), time.perf_counter() - t_start, zero_iters, stopped_early
    )
