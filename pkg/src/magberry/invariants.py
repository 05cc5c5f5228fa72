"""Cross-module invariant suite behind ``magberry check``.

Every check returns a :class:`Check` with the measured value and the bound it
must respect. The reference configuration is small enough to run in well
under a minute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from magberry import berry, hannay, mtrans
from magberry.adiabatic import Schedule, propagate
from magberry.eigen import SolverConfig, dense_reference, lowest_eigenpairs
from magberry.hamiltonian import (
    FluxDensity,
    GaussianWell,
    GridSpec,
    Offset,
    build_hamiltonian,
)


@dataclass
class Check:
    name: str
    value: float
    bound: float
    passed: bool
    detail: str = ""


def _check(name, value, bound, detail=""):
    return Check(name, float(value), float(bound), bool(value <= bound), detail)


REFERENCE = {
    "grid": GridSpec(72, 72, 0.25),
    "flux": FluxDensity(0.2),
    # loop centred at -2 b for a well at b: the constant part of the connection
    # then cancels in the step phases, keeping them small
    "potential": GaussianWell(2.0, 0.8, center=(0.25, 0.0)),
    "loop": berry.Rectangle.square(1.0, center=(-0.5, 0.0), samples=16),
    "dense_grid": GridSpec(30, 30, 0.3),
}


def run_suite(ref=None, seed=SolverConfig().seed):
    ref = dict(REFERENCE, **(ref or {}))
    grid, flux, V, loop = ref["grid"], ref["flux"], ref["potential"], ref["loop"]
    h = grid.h
    cfg = SolverConfig(k=2, seed=seed)
    rng = np.random.default_rng(seed)
    out = []

    H0 = build_hamiltonian(grid, flux, V, containment_factor=6.0)
    pairs = lowest_eigenpairs(H0, cfg)
    psi0 = pairs[0]

    a = Offset.from_cells(4, -2, h)
    X, Y = grid.mesh()
    probes = [np.exp(-((X - c1) ** 2 + (Y - c2) ** 2)) * np.exp(1j * rng.uniform(0, 6, grid.shape))
              for c1, c2 in rng.uniform(-2, 2, (3, 2))]
    out.append(_check("intertwining residual", mtrans.intertwining_residual(V, a, flux, grid, probes),
                      1e-12))

    Ha = build_hamiltonian(grid, flux, V, a)
    Ea = lowest_eigenpairs(Ha, cfg)[0].energy
    out.append(_check("eigenvalue translation invariance (relative)",
                      abs(Ea - psi0.energy) / abs(psi0.energy), 1e-6))

    res = mtrans.wedge_sign_residuals(psi0, a, flux, Ha)
    out.append(_check("transport residual, configured wedge sign", res[mtrans.WEDGE_SIGN], 1e-7))
    out.append(Check("other wedge sign fails", res[-mtrans.WEDGE_SIGN], 1e-7,
                     res[-mtrans.WEDGE_SIGN] > 1e-7, "must exceed the bound"))

    b1, b2 = Offset.from_cells(4, 0, h), Offset.from_cells(0, 4, h)
    dev, phi = mtrans.cocycle_check(b1, b2, flux, grid, psi0.state)
    out.append(_check("cocycle deviation", dev, 1e-12))
    out.append(_check("cocycle phase vs pi xi (a^b)",
                      abs(phi - mtrans.multiplier_phase(b1, b2, flux)), 1e-12))

    tr = berry.berry_phase_translated(psi0, loop, flux, grid, potential=V)
    analytic = berry.analytic_phase(flux, loop)
    out.append(_check("translated Berry phase vs 2 pi xi S", abs(tr.gamma_accumulated - analytic),
                      max(1e-2, 1e-2 * abs(analytic))))
    offs = loop.offsets()
    states = [mtrans.translate(psi0.state, o, flux, grid) for o in offs]
    rephased = [s * np.exp(1j * rng.uniform(-math.pi, math.pi)) for s in states]
    g1 = berry.wilson_loop_phase(states, max_step=None, h=h).gamma_accumulated
    g2 = berry.wilson_loop_phase(rephased, max_step=None, h=h).gamma_mod
    out.append(_check("Wilson gauge invariance", abs(berry.wrap_phase(g1 - g2)), 1e-12))

    rs = berry.berry_phase_resolved(loop, flux, grid, V, cfg)
    out.append(_check("resolved vs translated Berry phase",
                      abs(rs.gamma_accumulated - tr.gamma_accumulated), 1e-3))

    c1, c2, imag = berry.c_constants(psi0, flux, grid, full=True)
    conn = berry.connection_estimate(psi0, Offset(), flux, grid)
    expect = -math.pi * flux.xi * np.array([c1, c2])
    out.append(_check("connection constant vs c constants",
                      float(np.max(np.abs(conn.constant - expect))), 1e-3))
    out.append(_check("c constants imaginary residue", imag, 1e-10))

    cmap = berry.curvature_map(flux, grid, corner=(-0.5, -0.5), counts=(3, 3), psi0=psi0)
    out.append(_check("curvature vs 2 pi xi",
                      float(np.max(np.abs(cmap.values - 2 * math.pi * flux.xi))), 1e-3))

    dg = ref["dense_grid"]
    Hd = build_hamiltonian(dg, flux, V)
    dense = dense_reference(Hd)[:3]
    kry = lowest_eigenpairs(Hd, SolverConfig(k=3, tol=1e-12, seed=seed))
    out.append(_check("Krylov vs dense oracle",
                      max(abs(p.energy - q.energy) for p, q in zip(kry, dense)), 1e-8))

    Hf = build_hamiltonian(grid, flux, None)
    E0 = lowest_eigenpairs(Hf, SolverConfig(k=1, seed=seed))[0].energy
    ll = flux.landau_level(0)
    out.append(_check("lowest Landau level (relative)", abs(E0 - ll) / ll, 1e-2))

    sched = Schedule.static((0.0, 0.0), 1.0, 400)
    pr = propagate(grid, flux, V, psi0, sched, checkpoints=0)
    out.append(_check("Crank-Nicolson norm drift", pr.norm_drift, 1e-9))
    out.append(_check("static propagation phase", abs(pr.gamma_adiabatic), 1e-6))

    sysc = hannay.ClassicalSystem(flux, 1.0)
    w0 = hannay.flow_frequencies(sysc)
    shifted = [hannay.flow_frequencies(hannay.ClassicalSystem(flux, 1.0, Offset(*rng.uniform(-3, 3, 2))))
               for _ in range(5)]
    out.append(_check("classical frequencies independent of a",
                      max(abs(w[i] - w0[i]) for w in shifted for i in range(2)), 1e-10))
    out.append(_check("flow map symplectic over one period",
                      hannay.symplectic_defect(sysc, 2 * math.pi / w0[1]), 1e-10))
    return out


def summarize(checks):
    passed = sum(c.passed for c in checks)
    return {"passed": passed, "failed": len(checks) - passed, "total": len(checks)}
