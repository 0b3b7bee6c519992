import functools
import time

import numpy as np
import pytest

from dndegen import fem
from dndegen.mesh import build_mesh
from dndegen.spectral import extract_mu

N_SWEEP = 16
NB = 256
H = 0.05


@functools.lru_cache(maxsize=None)
def torus_case(eps, tau=1j, h=H, nb=NB, N=N_SWEEP):
    """Mesh, calibrated DN map, dual forms and spectrum for one hole radius."""
    surface = build_mesh(tau, eps, h, n_boundary=nb)
    dn = fem.assemble_dn(surface, N, calibrate=True)
    forms = fem.harmonic_form_basis(surface)
    return {"surface": surface, "dn": dn, "forms": forms, "spectral": extract_mu(dn)}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_mean_zero(rng, N):
    from dndegen.circle import BoundaryFunction

    c = rng.normal(size=2 * N + 1) + 1j * rng.normal(size=2 * N + 1)
    c[N] = 0
    return BoundaryFunction(c, N)


@pytest.fixture(scope="session")
def torus_sweep(tmp_path_factory):
    """The default torus-with-hole sweep, run once with a fresh cache, then rerun from it.

    Returns (config, first result, second result, factorizations during the rerun,
    CSV bytes of both runs).  The wall time of the first run is stored on the
    first result as ``seconds``.
    """
    from dndegen.experiments import ExperimentConfig, run_sweep

    out = tmp_path_factory.mktemp("sweep")
    cfg = ExperimentConfig(out=str(out))
    t0 = time.perf_counter()
    first = run_sweep(cfg)
    first.seconds = time.perf_counter() - t0
    csv1 = first.csv_path.read_bytes()
    before = fem.FACTORIZATIONS
    second = run_sweep(cfg)
    factorizations = fem.FACTORIZATIONS - before
    return cfg, first, second, factorizations, (csv1, second.csv_path.read_bytes())


# One line per acceptance criterion, printed at the end of the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
