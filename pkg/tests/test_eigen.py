import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magberry.eigen import (
    ConvergenceError,
    DegenerateLevelError,
    EigenPair,
    SolverConfig,
    dense_reference,
    fix_phase,
    gap_check,
    hermitian_eigh,
    householder_tridiagonal,
    lowest_eigenpairs,
)
from magberry.hamiltonian import FluxDensity, GaussianWell, GridSpec, build_hamiltonian, inner


def test_dirichlet_laplacian_spectrum():
    n, h = 8, 0.3
    H = build_hamiltonian(GridSpec(n, n, h), FluxDensity(0.0))
    got = np.array([p.energy for p in dense_reference(H)])
    s = np.sin(np.pi * np.arange(1, n + 1) / (2 * (n + 1))) ** 2
    exact = np.sort((4 / h**2) * (s[:, None] + s[None, :]).ravel())
    assert np.max(np.abs(got - exact)) <= 1e-10


def test_krylov_matches_dense_oracle():
    H = build_hamiltonian(GridSpec(24, 24, 0.25), FluxDensity(0.05), GaussianWell(2.0, 0.8))
    kry = lowest_eigenpairs(H, SolverConfig(k=3, tol=1e-10))
    dense = dense_reference(H)
    for p, q in zip(kry, dense[:3]):
        assert abs(p.energy - q.energy) <= 1e-8
        assert abs(abs(inner(p.state, q.state, 0.25)) - 1) <= 1e-8


def test_householder_ql_against_numpy(rng):
    n = 40
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A = A + A.conj().T
    d, e, Q = householder_tridiagonal(A)
    T = np.diag(d) + np.diag(e[:-1], 1) + np.diag(e[:-1], -1)
    assert np.allclose(Q @ T @ Q.conj().T, A, atol=1e-12)
    w, V = hermitian_eigh(A)
    assert np.max(np.abs(w - np.linalg.eigvalsh(A))) <= 1e-12
    assert np.allclose(A @ V, V * w, atol=1e-11)


def test_residual_contract_and_ordering():
    H = build_hamiltonian(GridSpec(40, 40, 0.25), FluxDensity(0.2), GaussianWell(2.0, 0.8))
    pairs = lowest_eigenpairs(H, SolverConfig(k=3))
    assert [p.index for p in pairs] == [0, 1, 2]
    assert all(p.residual <= p.tolerance for p in pairs)
    assert pairs[0].energy <= pairs[1].energy <= pairs[2].energy
    one = lowest_eigenpairs(H, SolverConfig(k=1))
    assert len(one) == 1 and one[0].residual <= one[0].tolerance
    assert one[0].energy == pytest.approx(pairs[0].energy, abs=1e-7)


def test_bit_identical_reruns():
    H = build_hamiltonian(GridSpec(32, 32, 0.25), FluxDensity(0.2), GaussianWell(2.0, 0.8))
    a = lowest_eigenpairs(H, SolverConfig(k=2))
    b = lowest_eigenpairs(H, SolverConfig(k=2))
    assert [p.energy for p in a] == [p.energy for p in b]
    assert np.array_equal(a[0].state, b[0].state)


def test_dense_oracle_cap():
    H = build_hamiltonian(GridSpec(41, 40, 0.25), FluxDensity(0.2))
    with pytest.raises(ValueError, match="capped"):
        dense_reference(H)


def test_iteration_budget_raises():
    H = build_hamiltonian(GridSpec(40, 40, 0.25), FluxDensity(0.2), GaussianWell(2.0, 0.8))
    with pytest.raises(ConvergenceError) as info:
        lowest_eigenpairs(H, SolverConfig(k=2, tol=1e-12, max_iterations=10, basis_size=8))
    assert info.value.best_residual > 0


def test_well_has_a_gap():
    # dense oracle on a coarse grid: the bound state is well separated
    H = build_hamiltonian(GridSpec(24, 24, 0.3), FluxDensity(0.05), GaussianWell(2.0, 0.8),
                          containment_factor=None)
    gap = gap_check(dense_reference(H)[:2], threshold=1e-3)
    assert gap > 0.1


def test_free_landau_level_is_refused():
    H = build_hamiltonian(GridSpec(48, 48, 0.25), FluxDensity(0.2))
    pairs = lowest_eigenpairs(H, SolverConfig(k=3))
    with pytest.raises(DegenerateLevelError) as info:
        gap_check(pairs)
    assert info.value.gap < info.value.threshold


def test_gap_check_contract():
    mk = [EigenPair(e, None, 0.0, i, 1e-9) for i, e in enumerate((0.1, 0.4, 0.45))]
    assert gap_check(mk) == pytest.approx(0.3)
    assert gap_check(mk, level=1) == pytest.approx(0.05)
    with pytest.raises(ValueError, match="sorted"):
        gap_check(mk[::-1])


@given(phase=st.floats(-math.pi, math.pi))
def test_fix_phase_is_a_gauge_choice(phase):
    v = np.array([0.1 + 0.2j, -0.9 + 0.3j, 0.05j])
    a, b = fix_phase(v), fix_phase(v * np.exp(1j * phase))
    assert np.allclose(a, b, atol=1e-14)
    assert abs(a[1].imag) <= 1e-15 and a[1].real > 0


@given(n=st.integers(2, 12), seed=st.integers(0, 2**32 - 1))
def test_hermitian_input_gives_real_ascending_spectrum(n, seed):
    r = np.random.default_rng(seed)
    A = r.standard_normal((n, n)) + 1j * r.standard_normal((n, n))
    A = A + A.conj().T
    w, V = hermitian_eigh(A)
    assert w.dtype.kind == "f"
    assert np.all(np.diff(w) >= 0)
    assert np.allclose(V.conj().T @ V, np.eye(n), atol=1e-12)
