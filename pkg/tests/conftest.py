import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from magberry.eigen import SolverConfig, lowest_eigenpairs
from magberry.hamiltonian import FluxDensity, GaussianWell, GridSpec, build_hamiltonian

settings.register_profile(
    "magberry", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.function_scoped_fixture, HealthCheck.too_slow],
)
settings.load_profile("magberry")


@pytest.fixture(scope="session")
def strong():
    """Strong-field system small enough for quick tests: xi=0.2 on 64x64, h=0.25."""
    grid = GridSpec(64, 64, 0.25)
    flux = FluxDensity(0.2)
    well = GaussianWell(2.0, 0.8)
    H = build_hamiltonian(grid, flux, well, containment_factor=6.0)
    pairs = lowest_eigenpairs(H, SolverConfig(k=2, tol=1e-10))
    return {"grid": grid, "flux": flux, "well": well, "H": H, "pairs": pairs, "psi0": pairs[0]}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def record(request):
    """Log one acceptance line; the summary prints them all after the run."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def log(label, ok, detail):
        lines.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        return ok

    return log


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
