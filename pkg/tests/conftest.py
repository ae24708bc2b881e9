import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=50, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_simplex(rng: np.random.Generator, k: int, dim: int = 3, min_quality: float = 0.05) -> np.ndarray:
    """Random non-degenerate simplex with ``k`` vertices in ``dim`` dimensions (padded to 3D)."""
    while True:
        p = rng.uniform(-2.0, 2.0, size=(k, dim))
        edges = p[1:] - p[0]
        sv = np.linalg.svd(edges, compute_uv=False)
        if sv[-1] / sv[0] > min_quality:
            return np.column_stack([p, np.zeros((k, 3 - dim))]) if dim < 3 else p


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# ---------------------------------------------------------------- shared benchmark runs (minutes each)


@pytest.fixture(scope="session")
def benchmark_coarse():
    """dx = 0.5 mm cuboid benchmark, also recording zero-guess PCG iteration counts."""
    from cardiofem.verification import run_benchmark

    return run_benchmark(0.5, compare_zero_guess=True)


@pytest.fixture(scope="session")
def benchmark_coarse_no_rcm():
    from cardiofem.verification import run_benchmark

    return run_benchmark(0.5, use_rcm=False)


@pytest.fixture(scope="session")
def benchmark_coarse_fast():
    """dx = 0.5 mm with both conductivities doubled."""
    from cardiofem.verification import run_benchmark

    return run_benchmark(0.5, sigma_scale=2.0)


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def benchmark_medium():
    """dx = 0.2 mm cuboid benchmark (tens of minutes single-threaded)."""
    from cardiofem.verification import run_benchmark

    return run_benchmark(0.2)


@pytest.fixture(scope="session")
def benchmark_fine():
    from cardiofem.verification import run_benchmark

    return run_benchmark(0.1)
