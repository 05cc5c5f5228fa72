"""Acceptance gate: one PASS/FAIL line per criterion, printed in the terminal summary.

Run with ``pytest tests/test_acceptance.py -m slow -v``.
"""
import math
import time

import numpy as np
import pytest

from magberry import berry, hannay, mtrans
from magberry.adiabatic import convergence_study, non_increasing
from magberry.berry import Rectangle, wrap_phase
from magberry.eigen import SolverConfig, dense_reference, lowest_eigenpairs
from magberry.hamiltonian import (FluxDensity, GaussianWell, GridSpec, HarmonicWell, Offset,
                                  build_hamiltonian, minimal_grid)

pytestmark = pytest.mark.slow

WELL = GaussianWell(2.0, 0.8)


def _ground(grid, flux, V, k=2):
    return lowest_eigenpairs(build_hamiltonian(grid, flux, V), SolverConfig(k=k))[0]


def test_1_quantized_berry_phase(record):
    t0 = time.perf_counter()
    grid, flux = GridSpec(96, 96, 0.25), FluxDensity(0.05)
    target = 0.4 * math.pi
    # translated samples must sit on the lattice: M=32 gives a step of exactly one cell
    tr = berry.berry_phase_translated(_ground(grid, flux, WELL), Rectangle.square(2.0, samples=32),
                                      flux, grid, potential=WELL)
    rs = berry.berry_phase_resolved(Rectangle.square(2.0, samples=64), flux, grid, WELL,
                                    SolverConfig(k=2))
    wall = time.perf_counter() - t0
    e_tr, e_rs = abs(tr.gamma_accumulated - target), abs(rs.gamma_accumulated - target)
    diff = abs(tr.gamma_accumulated - rs.gamma_accumulated)
    ok = e_tr <= 1.3e-2 and e_rs <= 1.3e-2 and diff <= 1e-3 and wall <= 300
    assert record("1 quantized Berry phase", ok,
                  f"|err| translated {e_tr:.2e}, resolved {e_rs:.2e} (<= 1.3e-2); "
                  f"methods differ {diff:.2e} (<= 1e-3); {wall:.0f} s (<= 300)")


def test_2_linear_in_flux_and_area(record):
    xis, sides = (0.02, 0.05, 0.10), (1.0, 2.0, 3.0)
    fluxes, gammas = [], []
    for xi in xis:
        flux = FluxDensity(xi)
        for side in sides:
            # one cell per step; the step phase is about pi xi (side/2) h and must stay below 0.1
            h = 0.25 if math.pi * xi * side / 2 * 0.25 <= 0.1 else 0.125
            loop = Rectangle.square(side, samples=round(4 * side / h))
            grid = minimal_grid(h, flux, WELL, loop.points())
            res = berry.berry_phase_translated(_ground(grid, flux, WELL), loop, flux, grid)
            fluxes.append(xi * side**2)
            gammas.append(res.gamma_accumulated)
    slope = float(np.linalg.lstsq(np.array(fluxes)[:, None], np.array(gammas), rcond=None)[0][0])
    rel = abs(slope / (2 * math.pi) - 1)
    assert record("2 linear in flux and area", rel <= 1e-2,
                  f"fitted slope {slope:.6f} vs 2 pi, relative error {rel:.2e} (<= 1e-2, 9 runs)")


def test_3_winding_beyond_two_pi(record):
    flux = FluxDensity(0.05)
    loop = Rectangle.square(4.0, samples=32, turns=2)
    grid = minimal_grid(0.25, flux, WELL, loop.points())
    res = berry.berry_phase_translated(_ground(grid, flux, WELL), loop, flux, grid)
    exact = 2 * math.pi * 0.05 * 16 * 2
    err = abs(res.gamma_accumulated - 10.05)
    reduced = wrap_phase(exact)  # (-pi, pi]
    mod_ok = abs(res.gamma_mod - reduced) <= 1e-2
    assert record("3 winding beyond 2 pi", err <= 0.1 and mod_ok,
                  f"accumulated {res.gamma_accumulated:.4f} (10.05 +- 0.1), "
                  f"mod 2 pi {res.gamma_mod:.4f} (expect {reduced:.4f})")


def test_4_connection_and_constants(record):
    grid, flux = GridSpec(72, 72, 0.25), FluxDensity(0.2)
    V = GaussianWell(2.0, 0.8, center=(0.25, -0.5))
    psi0 = _ground(grid, flux, V)
    pts = [Offset.from_cells(i, j, grid.h) for i, j in ((0, 0), (2, 0), (0, 3), (-2, 2), (3, -1))]
    conn = [berry.connection_estimate(psi0, a, flux, grid) for a in pts]
    dev_diff = max(
        float(np.max(np.abs((c.U - conn[0].U)
                            - math.pi * flux.xi * np.array([-(c.a.a2 - conn[0].a.a2),
                                                            c.a.a1 - conn[0].a.a1]))))
        for c in conn[1:])
    c1, c2 = berry.c_constants(psi0, flux, grid)
    expect = -math.pi * flux.xi * np.array([c1, c2])
    dev_const = max(float(np.max(np.abs(c.constant - expect))) for c in conn)
    ok = dev_diff <= 1e-3 and dev_const <= 1e-3
    assert record("4 connection and constants", ok,
                  f"difference deviation {dev_diff:.2e}, constant deviation {dev_const:.2e} "
                  f"(both <= 1e-3; c = ({c1:.4f}, {c2:.4f}))")


def test_5_constant_curvature(record):
    grid, flux = GridSpec(72, 72, 0.25), FluxDensity(0.2)
    psi0 = _ground(grid, flux, WELL)
    target = 2 * math.pi * flux.xi
    tr = berry.curvature_map(flux, grid, corner=(-0.5, -0.5), counts=(5, 5), delta=0.25, psi0=psi0)
    rs = berry.curvature_map(flux, grid, corner=(-0.5, -0.5), counts=(5, 5), delta=0.25,
                             potential=WELL, cfg=SolverConfig(k=2))
    d_tr = float(np.max(np.abs(tr.values - target)))
    d_rs = float(np.max(np.abs(rs.values - target)))
    ok = tr.values.shape == (5, 5) and d_tr <= 1e-3 and d_rs <= 1e-3
    assert record("5 constant curvature", ok,
                  f"max |F - 2 pi xi| translated {d_tr:.2e}, resolved {d_rs:.2e} (<= 1e-3, 25 plaquettes)")


def test_6_structural_identities(record):
    rng = np.random.default_rng(7)
    grid, flux = GridSpec(64, 64, 0.25), FluxDensity(0.2)
    X, Y = grid.mesh()
    a = Offset.from_cells(4, -2, grid.h)
    probes = [np.exp(-((X - c1) ** 2 + (Y - c2) ** 2)) * np.exp(1j * rng.uniform(0, 6, grid.shape))
              for c1, c2 in rng.uniform(-2, 2, (3, 2))]
    inter = mtrans.intertwining_residual(WELL, a, flux, grid, probes)

    cfg = SolverConfig(k=2, tol=1e-10)
    E0 = lowest_eigenpairs(build_hamiltonian(grid, flux, WELL), cfg)[0]
    Ea = lowest_eigenpairs(build_hamiltonian(grid, flux, WELL, a), cfg)[0].energy
    trans = abs(Ea - E0.energy) / abs(E0.energy)

    loop = Rectangle.square(1.0, samples=16)
    states = [mtrans.translate(E0.state, o, flux, grid) for o in loop.offsets()]
    g1 = berry.wilson_loop_phase(states, max_step=None, h=grid.h).gamma_accumulated
    rephased = [s * np.exp(1j * rng.uniform(-math.pi, math.pi)) for s in states]
    g2 = berry.wilson_loop_phase(rephased, max_step=None, h=grid.h).gamma_mod
    gauge = abs(wrap_phase(g1 - g2))

    small = GridSpec(40, 40, 0.3)
    assert small.size <= 1600
    Hs = build_hamiltonian(small, flux, WELL)
    dense = dense_reference(Hs)[:3]
    kry = lowest_eigenpairs(Hs, SolverConfig(k=3, tol=1e-12))
    krylov = max(abs(p.energy - q.energy) for p, q in zip(kry, dense))

    free = GridSpec(96, 96, 0.2)
    Ef = lowest_eigenpairs(build_hamiltonian(free, flux, None), SolverConfig(k=1))[0].energy
    landau = abs(Ef - flux.landau_level(0)) / flux.landau_level(0)

    ok = inter <= 1e-12 and trans <= 1e-6 and gauge <= 1e-12 and krylov <= 1e-8 and landau <= 1e-2
    assert record("6 structural identities", ok,
                  f"intertwining {inter:.1e} (<= 1e-12), eigenvalue shift {trans:.1e} (<= 1e-6), "
                  f"gauge {gauge:.1e} (<= 1e-12), Krylov vs dense {krylov:.1e} (<= 1e-8), "
                  f"Landau {landau:.1e} (<= 1e-2)")


def test_7_adiabatic_limit(record):
    t0 = time.perf_counter()
    rows = convergence_study([50, 100, 200], GridSpec(90, 90, 0.25), FluxDensity(0.05), WELL,
                             Rectangle.square(1.0, samples=16), checkpoints=4)
    wall = time.perf_counter() - t0
    errs = [r.error for r in rows]
    drift = max(r.norm_drift for r in rows)
    ok = non_increasing(errs, noise=0.0) and errs[-1] <= 5e-2 and drift <= 1e-9 and wall <= 900
    assert record("7 adiabatic limit", ok,
                  "errors " + ", ".join(f"T={r.T:g}: {r.error:.2e}" for r in rows)
                  + f" (non-increasing, <= 5e-2 at T=200); norm drift {drift:.1e} (<= 1e-9); "
                  f"{wall:.0f} s (<= 900)")


def test_8_hannay_angle_and_level_independence(record):
    flux = FluxDensity(0.05)
    system = hannay.ClassicalSystem(flux, 1.0)
    wp, wm = hannay.flow_frequencies(system)
    ens = hannay.Ensemble.on_torus(system, n_side=8)
    assert ens.size == 64
    res = hannay.hannay_angle(system, Rectangle.square(2.0), 1e4 / wm, ens)
    angle = float(np.max(np.abs(res.delta_theta)))

    rng = np.random.default_rng(8)
    moved = [hannay.flow_frequencies(hannay.ClassicalSystem(flux, 1.0, Offset(*rng.uniform(-3, 3, 2))))
             for _ in range(8)]
    freq = max(max(abs(m[0] - wp), abs(m[1] - wm)) for m in moved)

    grid, V = GridSpec(96, 96, 0.25), HarmonicWell(1.0)
    loop = Rectangle.square(2.0, samples=16)
    gam = [berry.berry_phase_resolved(loop, flux, grid, V, SolverConfig(k=3), level=n).gamma_accumulated
           for n in (0, 1)]
    levels = hannay.correspondence_check(gam)

    ok = angle <= 1e-2 and freq <= 1e-10 and levels <= 1e-2
    assert record("8 Hannay angle and level independence", ok,
                  f"|dtheta| {angle:.1e} (<= 1e-2, N=64, T w- = 1e4); frequency shift {freq:.1e} "
                  f"(<= 1e-10); |gamma_1 - gamma_0| {levels:.1e} (<= 1e-2)")
