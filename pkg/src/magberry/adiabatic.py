"""Time-dependent Schrodinger evolution with a slowly moving well.

Crank-Nicolson with the midpoint Hamiltonian,
``(1 + i dt/2 H(a(t + dt/2))) psi_{n+1} = (1 - i dt/2 H(a(t + dt/2))) psi_n``,
the linear system solved by Jacobi sweeps in :mod:`magberry.kernels`.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from magberry import kernels, mtrans
from magberry.berry import (
    LoopSpec,
    Polygon,
    berry_phase_resolved,
    berry_phase_translated,
    wrap_phase,
)
from magberry.eigen import SolverConfig, lowest_eigenpairs
from magberry.hamiltonian import Offset, build_hamiltonian, inner, norm, sample_potential

STABILITY_BOUND = 0.5  # dt * ||H|| upper limit
INNER_TOL = 1e-14
MAX_SWEEPS = 500
POPULATION_WARNING = 0.9
MIN_OVERLAP = 0.5


class NonAdiabaticWarning(UserWarning):
    """Instantaneous ground-state population fell below the adiabatic threshold."""


class InnerSolveError(RuntimeError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class Schedule:
    """Motion of the well around ``loop`` in total time ``T`` using ``steps`` steps.

    The arc-length parameter follows the ramp ``s(t) = L sin^2(pi t / (2 T))``:
    smooth, with zero speed at both ends.
    """

    loop: LoopSpec
    T: float
    steps: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        pts = self.loop.closed_points()
        seg = np.diff(pts, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        object.__setattr__(self, "_pts", pts)
        object.__setattr__(self, "_starts", np.concatenate([[0.0], np.cumsum(lengths)]))

    @classmethod
    def for_operator(cls, loop, T, H, bound=STABILITY_BOUND):
        """Fewest steps with ``dt * ||H||_est <= bound``."""
        return cls(loop, T, max(1, math.ceil(T * H.norm_estimate() / bound)))

    @classmethod
    def static(cls, point, T, steps):
        p = (float(point[0]), float(point[1]))
        return cls(Polygon(vertices=(p, p), samples=4), T, steps)

    @property
    def dt(self):
        return self.T / self.steps

    @property
    def length(self):
        return float(self._starts[-1])

    def arc(self, t):
        u = min(max(t / self.T, 0.0), 1.0)
        return self.length * math.sin(0.5 * math.pi * u) ** 2

    def position(self, t):
        s = self.arc(t)
        starts = self._starts
        if self.length == 0.0 or s <= 0.0:
            return Offset(*self._pts[0])
        if s >= self.length:
            return Offset(*self._pts[-1])
        i = int(np.searchsorted(starts, s, side="right") - 1)
        i = min(i, len(starts) - 2)
        seg_len = starts[i + 1] - starts[i]
        f = (s - starts[i]) / seg_len if seg_len > 0 else 0.0
        p = self._pts[i] + f * (self._pts[i + 1] - self._pts[i])
        return Offset(float(p[0]), float(p[1]))


@dataclass
class PropagationResult:
    final_state: np.ndarray
    norm_drift: float
    max_step_norm_change: float
    overlap: complex  # <psi_{a(0)}, psi(T)>
    gamma_adiabatic: float
    populations: list  # (t, |<psi_gs(a(t)), psi(t)>|^2)
    steps: int
    dt: float
    max_sweeps: int
    warnings: list = field(default_factory=list)

    @property
    def min_population(self):
        return min(p for _, p in self.populations) if self.populations else float("nan")


def geometric_phase(overlap, E0, T):
    """``arg <psi_{a(0)}, psi(T)> + E0 T`` reduced to (-pi, pi]."""
    if isinstance(overlap, PropagationResult):
        overlap = overlap.overlap
    if abs(overlap) < MIN_OVERLAP:
        raise ValueError(
            f"overlap modulus {abs(overlap):.3g} < {MIN_OVERLAP}: the state left the level"
        )
    return wrap_phase(math.atan2(overlap.imag, overlap.real) + E0 * T)


def _ground_state(grid, flux, potential, offset, cfg):
    return lowest_eigenpairs(build_hamiltonian(grid, flux, potential, offset), cfg)[0]


def propagate(grid, flux, potential, psi0, schedule, *, cfg=SolverConfig(), checkpoints=8,
              inner_tol=INNER_TOL, max_sweeps=MAX_SWEEPS, bound=STABILITY_BOUND):
    """Evolve ``psi0`` (the ground state at ``a(0)``) along ``schedule``.

    The instantaneous ground-state population is sampled at ``checkpoints``
    evenly spaced times by independent eigensolves.
    """
    a0 = schedule.position(0.0)
    H0 = build_hamiltonian(grid, flux, potential, a0)
    if schedule.dt * H0.norm_estimate() > bound * (1 + 1e-12):
        raise ValueError(
            f"dt*||H|| = {schedule.dt * H0.norm_estimate():.3g} exceeds {bound}; "
            f"use at least {math.ceil(schedule.T * H0.norm_estimate() / bound)} steps"
        )
    h = grid.h
    ref = psi0.state
    r0 = norm(H0.apply(ref) - psi0.energy * ref, h)
    if r0 > 1e-6 * H0.norm_estimate():
        raise ValueError(f"psi0 is not an eigenstate of H(a(0)) (residual {r0:.3g})")

    ux, uy, inv_h2 = H0.ux, H0.uy, H0.inv_h2
    kinetic = 4.0 * inv_h2
    tau = 0.5 * schedule.dt
    psi = np.array(ref, dtype=np.complex128, order="C")
    n_start = norm(psi, h)
    prev_norm = n_start
    max_change = 0.0
    worst_sweeps = 0
    marks = {}
    if checkpoints > 0:
        for c in range(1, checkpoints + 1):
            marks[round(c * schedule.steps / checkpoints)] = None
    populations = [(0.0, 1.0)]
    notes = []
    prev = psi

    for n in range(schedule.steps):
        a = schedule.position((n + 0.5) * schedule.dt)
        diag = np.ascontiguousarray(kinetic + sample_potential(grid, potential, a))
        Hpsi = kernels.stencil_apply(psi, ux, uy, diag, inv_h2)
        b = psi - 1j * tau * Hpsi
        guess = 2.0 * psi - prev  # linear extrapolation in time
        prev = psi
        psi, sweeps, upd = kernels.cn_jacobi_solve(b, guess, ux, uy, diag, inv_h2, tau,
                                                   inner_tol, max_sweeps)
        if upd > inner_tol:
            raise InnerSolveError(
                f"inner solve did not converge at step {n} (update {upd:.3g} after {sweeps} sweeps)",
                step=n,
            )
        worst_sweeps = max(worst_sweeps, sweeps)
        cur = norm(psi, h)
        max_change = max(max_change, abs(cur - prev_norm))
        prev_norm = cur
        if (n + 1) in marks and n + 1 < schedule.steps:
            t = (n + 1) * schedule.dt
            gs = _ground_state(grid, flux, potential, schedule.position(t), cfg)
            populations.append((t, abs(inner(gs.state, psi, h)) ** 2))

    overlap = complex(inner(ref, psi, h))
    populations.append((schedule.T, abs(overlap) ** 2))
    low = min(p for _, p in populations)
    if low < POPULATION_WARNING:
        msg = (f"non-adiabatic regime: ground-state population fell to {low:.3g} "
               f"(T={schedule.T})")
        notes.append(msg)
        warnings.warn(msg, NonAdiabaticWarning, stacklevel=2)
    try:
        gamma = geometric_phase(overlap, psi0.energy, schedule.T)
    except ValueError as exc:
        notes.append(str(exc))
        gamma = float("nan")
    return PropagationResult(
        final_state=psi,
        norm_drift=abs(prev_norm - n_start),
        max_step_norm_change=max_change,
        overlap=overlap,
        gamma_adiabatic=gamma,
        populations=populations,
        steps=schedule.steps,
        dt=schedule.dt,
        max_sweeps=worst_sweeps,
        warnings=notes,
    )


@dataclass
class ConvergenceRow:
    T: float
    gamma_ad: float
    error: float
    min_population: float
    norm_drift: float
    steps: int
    warnings: list


def _study_task(args):
    grid, flux, potential, psi0, loop, T, cfg, gamma_ref, checkpoints = args
    H = build_hamiltonian(grid, flux, potential, Offset(*loop.points()[0]))
    sched = Schedule.for_operator(loop, T, H)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonAdiabaticWarning)
        res = propagate(grid, flux, potential, psi0, sched, cfg=cfg, checkpoints=checkpoints)
    err = abs(wrap_phase(res.gamma_adiabatic - gamma_ref)) if math.isfinite(
        res.gamma_adiabatic) else float("nan")
    return ConvergenceRow(T, res.gamma_adiabatic, err, res.min_population, res.norm_drift,
                          res.steps, res.warnings)


def reference_phase(loop, flux, grid, potential, psi0=None, cfg=SolverConfig()):
    """Wilson-loop phase of ``loop``: translated when commensurate, else resolved.

    ``psi0`` is the ground state at the first loop sample.
    """
    if psi0 is not None and loop.commensurate(grid.h):
        start = Offset(*loop.points()[0])
        base = mtrans.translate(psi0.state, -start, flux, grid)
        origin = dataclasses.replace(psi0, state=base)
        return berry_phase_translated(origin, loop, flux, grid).gamma_accumulated
    return berry_phase_resolved(loop, flux, grid, potential, cfg).gamma_accumulated


def convergence_study(Ts, grid, flux, potential, loop, *, psi0=None, cfg=SolverConfig(),
                      gamma_ref=None, workers=1, checkpoints=8):
    """Rows ``(T, gamma_ad, |gamma_ad - gamma_wilson| mod 2 pi, min population)``."""
    Ts = [float(t) for t in Ts]
    if any(b < a for a, b in zip(Ts, Ts[1:])):
        raise ValueError("Ts must be non-decreasing")
    if psi0 is None:
        psi0 = _ground_state(grid, flux, potential, Offset(*loop.points()[0]), cfg)
    if gamma_ref is None:
        gamma_ref = reference_phase(loop, flux, grid, potential, psi0, cfg)
    tasks = [(grid, flux, potential, psi0, loop, T, cfg, gamma_ref, checkpoints) for T in Ts]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_study_task, tasks))
    return [_study_task(t) for t in tasks]


def non_increasing(values, noise=1e-3):
    return all(b <= a + noise for a, b in zip(values, values[1:]))
