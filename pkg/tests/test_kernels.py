import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magberry import kernels
from magberry.hamiltonian import FluxDensity, GaussianWell, GridSpec, build_hamiltonian

py = kernels.python_backend
cy = kernels.compiled_backend
needs_ext = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def _operator(n, xi, seed):
    grid = GridSpec(n, n + 3, 0.3)
    H = build_hamiltonian(grid, FluxDensity(xi), GaussianWell(1.5, 0.7))
    r = np.random.default_rng(seed)
    psi = r.standard_normal(grid.shape) + 1j * r.standard_normal(grid.shape)
    return H, psi


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")
    assert (kernels.BACKEND == "cython") == (cy is not None)


def test_pure_python_override():
    code = "from magberry import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, MAGBERRY_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_ext
@given(n=st.integers(8, 20), xi=st.floats(-0.5, 0.5), seed=st.integers(0, 1000))
def test_stencil_backends_agree(n, xi, seed):
    H, psi = _operator(n, xi, seed)
    args = (H.ux, H.uy, H.diag, H.inv_h2)
    a, b = py.stencil_apply(psi, *args), cy.stencil_apply(psi, *args)
    assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a)))


@needs_ext
@given(n=st.integers(8, 16), xi=st.floats(-0.5, 0.5), tau=st.floats(1e-4, 0.02), seed=st.integers(0, 1000))
def test_cn_solve_backends_agree(n, xi, tau, seed):
    H, b = _operator(n, xi, seed)
    args = (H.ux, H.uy, H.diag, H.inv_h2, tau, 1e-14, 500)
    xp, sp, up = py.cn_jacobi_solve(b, b, *args)
    xc, sc, uc = cy.cn_jacobi_solve(b, b, *args)
    assert up <= 1e-14 and uc <= 1e-14
    assert np.max(np.abs(xp - xc)) <= 1e-12 * np.max(np.abs(xp))
    # it really solves (1 + i tau H) x = b
    res = xc + 1j * tau * py.stencil_apply(xc, *args[:4]) - b
    assert np.max(np.abs(res)) <= 1e-11 * np.max(np.abs(b))


@given(m=st.integers(1, 30), seed=st.integers(0, 1000))
def test_tql2_matches_numpy(m, seed):
    r = np.random.default_rng(seed)
    d, e = r.standard_normal(m), np.append(r.standard_normal(m - 1), 0.0)
    T = np.diag(d) + np.diag(e[:-1], 1) + np.diag(e[:-1], -1)
    for backend in [b for b in (py, cy) if b is not None]:
        dw, Z = d.copy(), np.eye(m)
        backend.tql2(dw, e.copy(), Z)
        assert np.max(np.abs(np.sort(dw) - np.linalg.eigvalsh(T))) <= 1e-12 * max(1.0, np.abs(d).max())
        # rows of Z are eigenvectors
        assert np.allclose(Z @ T, dw[:, None] * Z, atol=1e-11)


_SCRIPT = """
from magberry.eigen import SolverConfig, lowest_eigenpairs
from magberry.hamiltonian import FluxDensity, GaussianWell, GridSpec, build_hamiltonian
from magberry.adiabatic import Schedule, propagate
from magberry.berry import Rectangle
g, f, V = GridSpec(40, 40, 0.25), FluxDensity(0.2), GaussianWell(2.0, 0.8)
H = build_hamiltonian(g, f, V, containment_factor=None)
p = lowest_eigenpairs(H, SolverConfig(k=2))
s = Schedule.for_operator(Rectangle(corner=(0.0, 0.0), widths=(0.25, 0.25), samples=4), 0.5, H)
r = propagate(g, f, V, p[0], s, checkpoints=0)
print(repr(p[0].energy), repr(r.overlap.real), repr(r.overlap.imag))
"""


@needs_ext
def test_end_to_end_backends_agree():
    runs = []
    for flag in ("0", "1"):
        env = dict(os.environ, MAGBERRY_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", _SCRIPT], env=env, capture_output=True, text=True,
                             check=True)
        runs.append([float(v) for v in out.stdout.split()])
    assert np.max(np.abs(np.subtract(*runs))) <= 1e-10
