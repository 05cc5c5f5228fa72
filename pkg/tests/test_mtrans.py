import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magberry import mtrans
from magberry.eigen import SolverConfig, lowest_eigenpairs
from magberry.hamiltonian import (
    ContainmentError,
    FluxDensity,
    GaussianWell,
    GridSpec,
    Offset,
    Tabulated,
    build_hamiltonian,
    inner,
    norm,
)

GRID = GridSpec(64, 64, 0.25)


def _packet(grid, c=(0.3, -0.2), s=0.6, k=(0.7, 0.2)):
    X, Y = grid.mesh()
    return np.exp(-((X - c[0]) ** 2 + (Y - c[1]) ** 2) / (2 * s * s) + 1j * (k[0] * X + k[1] * Y))


def test_zero_offset_is_the_identity():
    psi = _packet(GRID)
    out = mtrans.translate(psi, Offset(), FluxDensity(0.3), GRID)
    assert np.array_equal(out, psi)


def test_zero_field_is_a_plain_shift():
    psi = _packet(GRID)
    out = mtrans.translate(psi, Offset.from_cells(3, -2, GRID.h), FluxDensity(0.0), GRID)
    assert np.array_equal(out[3:, :-2], psi[:-3, 2:])


def test_translation_is_unitary_for_contained_states():
    psi = _packet(GRID)
    psi /= norm(psi, GRID.h)
    out = mtrans.translate(psi, Offset.from_cells(5, 4, GRID.h), FluxDensity(0.05), GRID)
    assert abs(norm(out, GRID.h) - 1) <= 1e-10


def test_weight_off_the_grid_is_refused():
    psi = _packet(GRID, c=(3.5, 0.0))
    with pytest.raises(ContainmentError, match="weight"):
        mtrans.translate(psi, Offset.from_cells(12, 0, GRID.h), FluxDensity(0.05), GRID)


def test_non_lattice_offsets_are_refused():
    with pytest.raises(ValueError, match="integer multiple"):
        mtrans.translate(_packet(GRID), Offset(0.1, 0.0), FluxDensity(0.05), GRID)


@pytest.mark.parametrize("xi", [0.05, 0.0, -0.3])
def test_intertwining(rng, xi):
    well = GaussianWell(2.0, 0.8)
    a = Offset.from_cells(4, -2, GRID.h)
    probes = [_packet(GRID, c=rng.uniform(-2, 2, 2), k=rng.uniform(-1, 1, 2)) for _ in range(3)]
    assert mtrans.intertwining_residual(well, a, FluxDensity(xi), GRID, probes) <= 1e-12
    assert mtrans.intertwining_residual(well, Offset(), FluxDensity(xi), GRID, probes) == 0.0


def test_intertwining_tabulated_on_the_same_grid(rng):
    tab = Tabulated.from_function(GRID, lambda X, Y: -2 * np.exp(-(X**2 + 2 * Y**2)))
    probes = [_packet(GRID, c=rng.uniform(-1, 1, 2)) for _ in range(3)]
    a = Offset.from_cells(-3, 2, GRID.h)
    assert mtrans.intertwining_residual(tab, a, FluxDensity(0.05), GRID, probes) <= 1e-12


def test_transport_at_zero_offset_keeps_the_solver_residual(strong):
    _, r = mtrans.transported_eigenstate(strong["psi0"], Offset(), strong["flux"], strong["H"])
    assert r == strong["psi0"].residual


def test_transported_state_matches_a_direct_solve():
    grid, flux, well = GridSpec(160, 160, 0.2), FluxDensity(0.05), GaussianWell(2.0, 0.8)
    cfg = SolverConfig(k=2, tol=1e-11)
    psi0 = lowest_eigenpairs(build_hamiltonian(grid, flux, well), cfg)[0]
    a = Offset(1.0, 0.6)
    Ha = build_hamiltonian(grid, flux, well, a)
    psi_a, residual = mtrans.transported_eigenstate(psi0, a, flux, Ha, allowance=1e-7)
    assert residual <= 1e-7
    solved = lowest_eigenpairs(Ha, cfg)[0]
    assert abs(inner(solved.state, psi_a, grid.h)) >= 1 - 1e-8


def test_zero_field_reduces_to_shift_covariance():
    grid, flux, well = GridSpec(96, 96, 0.25), FluxDensity(0.0), GaussianWell(8.0, 0.8)
    psi0 = lowest_eigenpairs(build_hamiltonian(grid, flux, well, containment_factor=None),
                             SolverConfig(k=2))[0]
    a = Offset.from_cells(2, 1, grid.h)
    Ha = build_hamiltonian(grid, flux, well, a, containment_factor=None)
    psi_a, r = mtrans.transported_eigenstate(psi0, a, flux, Ha, allowance=1e-7)
    assert np.array_equal(psi_a[2:, 1:], psi0.state[:-2, :-1])  # no phase at zero field
    assert r <= 1e-7


def test_wrong_wedge_orientation_breaks_transport(strong):
    a = Offset.from_cells(4, -2, strong["grid"].h)
    Ha = build_hamiltonian(strong["grid"], strong["flux"], strong["well"], a)
    res = mtrans.wedge_sign_residuals(strong["psi0"], a, strong["flux"], Ha)
    assert res[mtrans.WEDGE_SIGN] <= 1e-6  # box-edge truncation on this small grid
    assert res[-mtrans.WEDGE_SIGN] > 1e-2
    with pytest.raises(mtrans.TransportError, match="transport broken"):
        mtrans.transported_eigenstate(strong["psi0"], a, strong["flux"], Ha, sign=-mtrans.WEDGE_SIGN)


def test_cocycle_reference_case():
    flux = FluxDensity(0.05)
    h = GRID.h
    a, b = Offset.from_cells(4, 0, h), Offset.from_cells(0, 4, h)
    psi = _packet(GRID)
    dev, phi = mtrans.cocycle_check(a, b, flux, GRID, psi)
    assert dev <= 1e-12
    assert phi == pytest.approx(math.pi * 0.05 * 1.0, abs=1e-12)
    # the group commutator carries twice the multiplier phase
    assert mtrans.commutator_phase(a, b, flux, GRID, psi) == pytest.approx(2 * math.pi * 0.05, abs=1e-12)


@pytest.mark.parametrize("xi,b", [(0.05, Offset()), (0.0, Offset(1.0, 0.5))])
def test_cocycle_trivial_cases(xi, b):
    dev, phi = mtrans.cocycle_check(Offset(0.5, -0.25), b, FluxDensity(xi), GRID, _packet(GRID))
    assert dev <= 1e-14 and phi == 0.0


cells = st.integers(-4, 4)


@given(k=st.tuples(cells, cells, cells, cells), xi=st.floats(-0.4, 0.4))
def test_cocycle_phase_is_the_multiplier(k, xi):
    h = GRID.h
    a, b = Offset.from_cells(k[0], k[1], h), Offset.from_cells(k[2], k[3], h)
    flux = FluxDensity(xi)
    dev, phi = mtrans.cocycle_check(a, b, flux, GRID, _packet(GRID))
    assert dev <= 1e-11
    expect = mtrans.multiplier_phase(a, b, flux)
    assert abs(math.remainder(phi - expect, 2 * math.pi)) <= 1e-12


@given(k1=cells, k2=cells, xi=st.floats(-0.4, 0.4))
def test_inverse_translation(k1, k2, xi):
    a = Offset.from_cells(k1, k2, GRID.h)
    psi = _packet(GRID)
    flux = FluxDensity(xi)
    back = mtrans.translate(mtrans.translate(psi, a, flux, GRID), -a, flux, GRID)
    assert np.max(np.abs(back - psi)) <= 1e-12
