import dataclasses

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from cardiofem.assembly import assemble
from cardiofem.ionic import make_mitchell_schaeffer, make_ten_tusscher_panfilov
from cardiofem.mesh import generate_cuboid_mesh, generate_unit_square_mesh
from cardiofem.monodomain import (
    ActivationMaps,
    ConfigError,
    SimulationAbort,
    SimulationConfig,
    Stimulus,
    assemble_rhs,
    build_system_matrix,
    extrapolated_guess,
    run,
    stimulus_vector,
    update_activation_maps,
)
from cardiofem.solver import SolverSettings, jacobi_preconditioner, pcg

ONE = sp.csr_matrix([[1.0]])
COND = {0: (0.1334177, 0.0173515)}


class RecordingSink:
    def __init__(self):
        self.frames = []
        self.final = None

    def write_frame(self, frame):
        self.frames.append(frame)

    def finalize(self, frame):
        self.final = frame


@pytest.fixture(scope="module")
def small_mesh():
    return generate_cuboid_mesh(3.0, 1.0, 1.0, 0.5)


def _corner_stimulus(mesh, intensity=0.5, duration=2.0):
    nodes = np.flatnonzero(mesh.nodes[:, 0] <= 0.5 + 1e-9)
    return Stimulus(nodes, 0.0, duration, intensity)


# ---------------------------------------------------------------- system matrix and right-hand side


def test_system_matrix_scalar_example():
    cfg = SimulationConfig(theta=0.5, dt=0.01, T_total=1.0, chi=1.0, Cm=1.0)
    assert build_system_matrix(ONE, ONE, cfg)[0, 0] == pytest.approx(1.005, rel=1e-15)


def test_system_matrix_forward_euler_is_scaled_mass():
    M = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0)
    K = sp.csr_matrix([[1.0, -1.0], [-1.0, 1.0]])
    cfg = SimulationConfig(theta=0.0, dt=0.005, chi=140.0, Cm=0.01)
    assert np.array_equal(build_system_matrix(M, K, cfg).toarray(), (cfg.chi * cfg.Cm * M).toarray())


def test_system_matrix_benchmark_constants():
    K = sp.csr_matrix([[1.0, -1.0], [-1.0, 1.0]])
    cfg = SimulationConfig(theta=0.5, dt=0.005, chi=140.0, Cm=0.01)
    np.testing.assert_allclose(
        build_system_matrix(sp.identity(2, format="csr"), K, cfg).toarray(),
        [[1.4025, -0.0025], [-0.0025, 1.4025]],
        rtol=1e-14,
    )


def test_system_matrix_shape_mismatch():
    with pytest.raises(ValueError):
        build_system_matrix(ONE, sp.identity(2, format="csr"), SimulationConfig())


def test_system_matrix_is_spd_on_mesh(small_mesh):
    M, K = assemble(small_mesh, COND)
    A = build_system_matrix(M, K, SimulationConfig())
    assert abs(A - A.T).max() == 0.0
    assert np.linalg.eigvalsh(A.toarray()).min() > 0


def test_rhs_scalar_example():
    cfg = SimulationConfig(theta=0.5, dt=0.1, T_total=1.0, chi=1.0, Cm=1.0)
    b = assemble_rhs(ONE, ONE, np.array([1.0]), np.array([0.2]), np.array([0.0]), cfg)
    assert b[0] == pytest.approx(0.93, rel=1e-14)


def test_rhs_homogeneous_and_implicit_limit(small_mesh, rng):
    M, K = assemble(small_mesh, COND)
    n = small_mesh.n_nodes
    zero = np.zeros(n)
    assert np.array_equal(assemble_rhs(M, K, zero, zero, zero, SimulationConfig()), zero)
    V = rng.normal(size=n)
    cfg = SimulationConfig(theta=1.0)
    np.testing.assert_allclose(assemble_rhs(M, K, V, zero, zero, cfg), cfg.chi * cfg.Cm * (M @ V), rtol=1e-14)


def test_rhs_length_mismatch():
    with pytest.raises(ValueError):
        assemble_rhs(ONE, ONE, np.zeros(2), np.zeros(1), np.zeros(1), SimulationConfig())


# ---------------------------------------------------------------- initial guess and stimuli


def test_extrapolated_guess_examples():
    assert extrapolated_guess(np.array([2.0]), np.array([1.0]))[0] == 3.0
    V = np.array([0.3, -4.0])
    assert np.array_equal(extrapolated_guess(V, V), V)
    assert np.array_equal(extrapolated_guess(np.array([1.0, 0.0]), np.array([0.0, 1.0])), [2.0, -1.0])
    assert np.array_equal(extrapolated_guess(V), V)
    with pytest.raises(ValueError):
        extrapolated_guess(V, np.zeros(3))


def test_stimulus_vector_examples():
    s = Stimulus([0], 0.0, 2.0, 50.0)
    assert np.array_equal(stimulus_vector([Stimulus([0], 5.0, 2.0, 50.0)], 1.0, 4), np.zeros(4))
    assert np.array_equal(stimulus_vector([s], 1.0, 4), [50.0, 0.0, 0.0, 0.0])
    assert np.array_equal(stimulus_vector([s], 2.0, 4), np.zeros(4))  # window is half-open
    both = stimulus_vector([Stimulus([3], 0.0, 1.0, 1.5), Stimulus([3, 1], 0.0, 1.0, 2.25)], 0.5, 4)
    assert np.array_equal(both, [0.0, 2.25, 0.0, 3.75])


def test_stimulus_validation():
    with pytest.raises(ConfigError):
        Stimulus([0], 0.0, 0.0, 1.0)
    with pytest.raises(ConfigError):
        Stimulus([0], 0.0, 1.0, float("nan"))
    with pytest.raises(ConfigError):
        Stimulus([-1], 0.0, 1.0, 1.0)
    assert np.array_equal(Stimulus([4, 1, 4], 0.0, 1.0, 1.0).nodes, [1, 4])


@pytest.mark.parametrize(
    "changes",
    [dict(theta=1.5), dict(dt=0.0), dict(T_total=0.001), dict(chi=0.0), dict(Cm=-1.0),
     dict(output_interval=0.0123), dict(initial_guess="random"), dict(failure_budget=-1),
     dict(stop_on_full_activation=True, lat_lrt_enabled=False)],
)  # fmt: skip
def test_config_invariants(changes):
    with pytest.raises(ConfigError):
        SimulationConfig(**changes)


def test_config_step_counts():
    assert SimulationConfig(dt=0.005, T_total=100.0).n_steps == 20000
    assert SimulationConfig(dt=0.1, T_total=0.3).n_steps == 3
    assert SimulationConfig(dt=0.005, output_interval=10.0).output_stride == 2000


# ---------------------------------------------------------------- activation maps


def test_activation_examples():
    maps = ActivationMaps.empty(1)
    update_activation_maps(maps, np.array([-10.0]), np.array([5.0]), 12.0)
    assert maps.lat[0] == 12.0
    update_activation_maps(maps, np.array([-69.0]), np.array([-72.0]), 300.0)
    assert maps.lrt[0] == 300.0

    rising = ActivationMaps(np.array([1.0]), np.array([np.nan]))
    update_activation_maps(rising, np.array([-75.0]), np.array([-71.0]), 2.0)
    assert np.isnan(rising.lrt[0])


def test_activation_threshold_is_strict():
    maps = update_activation_maps(ActivationMaps.empty(1), np.array([-1.0]), np.array([0.0]), 1.0)
    assert np.isnan(maps.lat[0])


def test_repolarisation_needs_a_later_step():
    # a single step cannot both activate and repolarise a node
    maps = update_activation_maps(ActivationMaps.empty(1), np.array([-60.0]), np.array([10.0]), 1.0)
    assert maps.lat[0] == 1.0 and np.isnan(maps.lrt[0])


@given(trace=st.lists(st.floats(-100.0, 50.0), min_size=2, max_size=60))
def test_activation_times_are_ordered(trace):
    maps = ActivationMaps.empty(1)
    for k in range(1, len(trace)):
        update_activation_maps(maps, np.array([trace[k - 1]]), np.array([trace[k]]), float(k))
    if np.isfinite(maps.lrt[0]):
        assert maps.lrt[0] > maps.lat[0]
    first_up = next((k for k in range(1, len(trace)) if trace[k] > 0), None)
    assert (np.isnan(maps.lat[0]) and first_up is None) or maps.lat[0] == first_up


# ---------------------------------------------------------------- time loop


def test_single_step_run(small_mesh):
    cfg = SimulationConfig(dt=0.005, T_total=0.005, output_interval=None)
    res = run(small_mesh, COND, make_mitchell_schaeffer(), [], cfg)
    assert res.steps == 1 and len(res.reports) == 1
    assert res.times.tolist() == [0.005]


@pytest.mark.parametrize("T, interval", [(10.0, 10.0), (10.0, 2.5), (7.0, 2.0), (0.5, 0.5)])
def test_snapshot_count(small_mesh, T, interval):
    sink = RecordingSink()
    cfg = SimulationConfig(dt=0.05, T_total=T, output_interval=interval)
    run(small_mesh, COND, make_mitchell_schaeffer(), [], cfg, sinks=[sink])
    assert len(sink.frames) == int(np.floor(T / interval)) + 1
    assert sink.frames[0].time == 0.0
    ratios = np.array([f.time for f in sink.frames]) / interval
    np.testing.assert_allclose(ratios, np.round(ratios), atol=1e-9 / interval)
    assert sink.final is not None and sink.final.lat is not None


def test_quiescent_tissue_stays_at_rest(small_mesh):
    model = make_ten_tusscher_panfilov()
    cfg = SimulationConfig(T_total=100.0, output_interval=None)
    res = run(small_mesh, COND, model, [], cfg)
    assert np.abs(res.state.V - model.V_rest).max() < 0.5
    assert all(r.converged for r in res.reports)


def test_activation_spreads_from_stimulus(small_mesh):
    cfg = SimulationConfig(dt=0.02, T_total=40.0, output_interval=None)
    res = run(small_mesh, COND, make_mitchell_schaeffer(), [_corner_stimulus(small_mesh)], cfg)
    x = small_mesh.nodes[:, 0]
    assert res.maps.all_activated
    assert res.maps.lat[x == 0].max() < res.maps.lat[x == x.max()].min()


def test_reordering_does_not_change_results(small_mesh):
    stim = [_corner_stimulus(small_mesh)]
    cfg = SimulationConfig(dt=0.02, T_total=20.0, output_interval=None, solver=SolverSettings(1e-10, 1e-10, 200))
    a = run(small_mesh, COND, make_mitchell_schaeffer(), stim, cfg)
    b = run(small_mesh, COND, make_mitchell_schaeffer(), stim, dataclasses.replace(cfg, use_rcm=False))
    np.testing.assert_allclose(a.state.V, b.state.V, atol=1e-7)
    np.testing.assert_array_equal(a.maps.lat, b.maps.lat)


def test_early_stop_on_full_activation(small_mesh):
    cfg = SimulationConfig(dt=0.02, T_total=100.0, output_interval=None, stop_on_full_activation=True)
    res = run(small_mesh, COND, make_mitchell_schaeffer(), [_corner_stimulus(small_mesh)], cfg)
    assert res.stopped_early and res.maps.all_activated
    assert res.times[-1] == pytest.approx(np.nanmax(res.maps.lat))


def test_persistent_solver_failure_aborts_with_step(small_mesh):
    cfg = SimulationConfig(dt=0.02, T_total=1.0, output_interval=None,
                           solver=SolverSettings(1e-300, 1e-300, 1), failure_budget=3)  # fmt: skip
    with pytest.raises(SimulationAbort) as info:
        run(small_mesh, COND, make_mitchell_schaeffer(), [_corner_stimulus(small_mesh)], cfg)
    assert info.value.step == 3
    assert str(info.value).startswith("step 3:")


def test_non_finite_potential_aborts(small_mesh):
    V0 = np.full(small_mesh.n_nodes, -80.0)
    V0[5] = np.nan
    with pytest.raises(SimulationAbort):
        run(small_mesh, COND, make_mitchell_schaeffer(), [], SimulationConfig(T_total=0.01, output_interval=None), V0=V0)


def test_zero_guess_comparison_is_recorded(small_mesh):
    cfg = SimulationConfig(dt=0.02, T_total=2.0, output_interval=None, compare_zero_guess=True)
    res = run(small_mesh, COND, make_mitchell_schaeffer(), [_corner_stimulus(small_mesh)], cfg)
    assert len(res.zero_guess_iterations) == res.steps


def test_stimulus_outside_mesh_rejected(small_mesh):
    with pytest.raises(ConfigError):
        run(small_mesh, COND, make_mitchell_schaeffer(), [Stimulus([10**6], 0.0, 1.0, 1.0)], SimulationConfig())


def test_runs_are_deterministic(small_mesh):
    cfg = SimulationConfig(dt=0.02, T_total=5.0, output_interval=None)
    a, b = (run(small_mesh, COND, make_mitchell_schaeffer(), [_corner_stimulus(small_mesh)], cfg) for _ in range(2))
    assert np.array_equal(a.state.V, b.state.V) and np.array_equal(a.state.U, b.state.U)


def test_theta_schemes_agree_as_dt_shrinks():
    """Crank-Nicolson and backward Euler converge to each other at first order for pure diffusion."""
    mesh = generate_unit_square_mesh(16)
    M, K = assemble(mesh, {0: (1.0, 1.0)})
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    V0 = np.cos(np.pi * x) * np.cos(np.pi * y)
    zero = np.zeros(mesh.n_nodes)

    def solve(theta, dt):
        cfg = SimulationConfig(theta=theta, dt=dt, T_total=0.1, chi=1.0, Cm=1.0, output_interval=None)
        A = build_system_matrix(M, K, cfg)
        P = jacobi_preconditioner(A)
        V = V0.copy()
        for _ in range(cfg.n_steps):
            V, _ = pcg(A, assemble_rhs(M, K, V, zero, zero, cfg), V, P, SolverSettings(1e-13, 1e-13, 1000))
        return V

    gaps = np.array([np.abs(solve(0.5, dt) - solve(1.0, dt)).max() for dt in (0.02, 0.01, 0.005, 0.0025)])
    orders = np.log2(gaps[:-1] / gaps[1:])
    assert (orders >= 1.0).all(), orders
