"""Classical charged particle in a harmonic well: frequencies and Hannay angles.

Units mirror the quantum ones: ``H = (p - A(r))^2 + (omega0^2 / 4) |r - a|^2``
with ``A = pi xi (-y, x)``, i.e. mass 1/2, so the cyclotron frequency is
``4 pi |xi|``. The state is ``z = (x, y, p_x, p_y)`` and the flow is affine,
``dz/dt = F z + B a``, with ``F`` independent of the well position ``a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import minimize_scalar

from magberry.berry import LoopSpec
from magberry.hamiltonian import FluxDensity, Offset

J4 = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
RK4_STEP_LIMIT = 0.05  # dt * max(omega)
ADIABATIC_MIN = 1e3  # T * min(omega)


@dataclass(frozen=True)
class ClassicalSystem:
    flux: FluxDensity
    omega0: float
    offset: Offset = Offset()

    def __post_init__(self):
        if self.omega0 < 0:
            raise ValueError("omega0 must be non-negative")

    @property
    def hessian(self):
        """``K`` in ``H = z^T K z / 2 + l(a)^T z + const``."""
        c = math.pi * self.flux.xi
        M = np.array([[0.0, -c], [c, 0.0]])
        K = np.empty((4, 4))
        K[:2, :2] = 2.0 * M.T @ M + 0.5 * self.omega0 ** 2 * np.eye(2)
        K[:2, 2:] = -2.0 * M.T
        K[2:, :2] = -2.0 * M
        K[2:, 2:] = 2.0 * np.eye(2)
        return K

    @property
    def flow_matrix(self):
        return J4 @ self.hessian

    @property
    def drive(self):
        """``B`` with ``dz/dt = F z + B a``."""
        lin = np.zeros((4, 2))
        lin[:2, :] = -0.5 * self.omega0 ** 2 * np.eye(2)
        return J4 @ lin

    def generator(self, a=None):
        """Affine generator ``(F, b)`` for a well at ``a`` (default: own offset)."""
        a = self.offset if a is None else a
        return self.flow_matrix, self.drive @ np.array([a.a1, a.a2])

    def equilibrium(self, a=None):
        a = self.offset if a is None else a
        c = math.pi * self.flux.xi
        return np.array([a.a1, a.a2, -c * a.a2, c * a.a1])

    def energy(self, z, a=None):
        z = np.asarray(z, dtype=float)
        a = self.offset if a is None else a
        c = math.pi * self.flux.xi
        x, y, px, py = z[0], z[1], z[2], z[3]
        kin = (px + c * y) ** 2 + (py - c * x) ** 2
        return kin + 0.25 * self.omega0 ** 2 * ((x - a.a1) ** 2 + (y - a.a2) ** 2)


def flow_frequencies(system):
    """``(omega_plus, omega_minus)`` from the eigenvalues of the flow matrix."""
    if system.omega0 == 0 and system.flux.is_zero:
        raise ValueError("free particle (omega0 = 0 and xi = 0) has no invariant tori")
    ev = np.linalg.eigvals(system.flow_matrix)
    w = np.sort(np.abs(ev.imag))[::-1]
    # eigenvalues come in pairs +-i omega
    return float(w[0]), float(w[2])


def closed_form_frequencies(flux, omega0):
    wc = flux.cyclotron_frequency
    root = math.sqrt(wc * wc / 4.0 + omega0 * omega0)
    return root + wc / 2.0, root - wc / 2.0


def symplectic_defect(system, t):
    """``max |Phi^T J Phi - J|`` for the flow map over time ``t``."""
    phi = expm(system.flow_matrix * t)
    return float(np.max(np.abs(phi.T @ J4 @ phi - J4)))


# -- normal modes -------------------------------------------------------------


@dataclass
class NormalModes:
    omegas: np.ndarray  # (omega_plus, omega_minus)
    vectors: np.ndarray  # columns: eigenvectors for eigenvalues -i omega
    basis_inv: np.ndarray  # inverse of [v+, conj v+, v-, conj v-]

    def amplitudes(self, w):
        """Complex mode amplitudes ``(c+, c-)`` of displacement(s) ``w``."""
        c = self.basis_inv @ np.asarray(w, dtype=complex)
        return c[[0, 2]]

    def angles(self, w):
        return -np.angle(self.amplitudes(w))

    def displacement(self, amps):
        amps = np.asarray(amps, dtype=complex)
        out = np.multiply.outer(self.vectors[:, 0], amps[0]) + np.multiply.outer(
            self.vectors[:, 1], amps[1])
        return 2.0 * out.real


def normal_modes(system):
    if system.omega0 <= 0:
        raise ValueError("angle variables need a confining well (omega0 > 0)")
    F = system.flow_matrix
    ev, vec = np.linalg.eig(F)
    wp, wm = flow_frequencies(system)
    cols = []
    for w in (wp, wm):
        k = int(np.argmin(np.abs(ev - (-1j * w))))
        cols.append(vec[:, k])
    V = np.column_stack(cols)
    full = np.column_stack([V[:, 0], V[:, 0].conj(), V[:, 1], V[:, 1].conj()])
    return NormalModes(np.array([wp, wm]), V, np.linalg.inv(full))


def mode_actions(system, modes, w):
    """Action per mode, ``E_mode / omega``, for displacement(s) ``w`` (4, N)."""
    K = system.hessian
    amps = modes.amplitudes(w)
    out = []
    for m in range(2):
        part = 2.0 * (amps[m][None, ...] * modes.vectors[:, m:m + 1]).real
        e = 0.5 * np.einsum("i...,ij,j...->...", part, K, part)
        out.append(e / modes.omegas[m])
    return np.array(out)


@dataclass
class Ensemble:
    """Phase-space points on one invariant torus, angles on a uniform grid."""

    points: np.ndarray  # (4, N) displacements from equilibrium
    angles: np.ndarray  # (2, N)

    @classmethod
    def on_torus(cls, system, n_side=8, amplitudes=(1.0, 1.0)):
        if n_side * n_side < 64:
            raise ValueError("ensemble needs N >= 64 members")
        modes = normal_modes(system)
        th = 2.0 * math.pi * np.arange(n_side) / n_side
        tp, tm = np.meshgrid(th, th, indexing="ij")
        angles = np.vstack([tp.ravel(), tm.ravel()])
        amps = np.vstack([amplitudes[0] * np.exp(-1j * angles[0]),
                          amplitudes[1] * np.exp(-1j * angles[1])])
        return cls(modes.displacement(amps), angles)

    @property
    def size(self):
        return self.points.shape[1]


# -- integration --------------------------------------------------------------


def affine_propagator(system, dt):
    """``(Phi, G_a, G_v)``: exact step ``z' = Phi z + G_a a + G_v (da/dt)``
    for a well moving linearly in time over the step."""
    F, B = system.flow_matrix, system.drive
    M = np.zeros((8, 8))
    M[:4, :4] = F
    M[:4, 4:6] = B
    M[4:6, 6:8] = np.eye(2)
    E = expm(M * dt)
    return E[:4, :4], E[:4, 4:6], E[:4, 6:8]


def _rk4_step(F, B, z, a0, a1, dt):
    am = 0.5 * (a0 + a1)

    def f(zz, a):
        return F @ zz + (B @ a)[:, None] if zz.ndim == 2 else F @ zz + B @ a

    k1 = f(z, a0)
    k2 = f(z + 0.5 * dt * k1, am)
    k3 = f(z + 0.5 * dt * k2, am)
    k4 = f(z + dt * k3, a1)
    return z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(system, state, t_final, dt, *, method="exact", path=None, record_every=1):
    """Trajectory of ``state`` (shape (4,) or (4, N)) up to ``t_final``.

    ``path(t)`` gives the well position (default: the system's offset).
    Returns ``(times, states)`` sampled every ``record_every`` steps.
    """
    wmax = max(flow_frequencies(system))
    if method == "rk4" and dt * wmax > RK4_STEP_LIMIT * (1 + 1e-12):
        raise ValueError(f"dt*omega_max = {dt * wmax:.3g} exceeds {RK4_STEP_LIMIT} for RK4")
    if method not in ("exact", "rk4"):
        raise ValueError(f"unknown method {method!r}")
    steps = max(1, int(round(t_final / dt)))
    dt = t_final / steps
    if path is None:
        fixed = np.array([system.offset.a1, system.offset.a2])

        def path(t):
            return fixed

    z = np.array(state, dtype=float)
    if method == "exact":
        phi, ga, gv = affine_propagator(system, dt)
    F, B = system.flow_matrix, system.drive
    times = [0.0]
    traj = [z.copy()]
    a_prev = np.asarray(path(0.0), dtype=float)
    for n in range(steps):
        a_next = np.asarray(path((n + 1) * dt), dtype=float)
        if method == "exact":
            drive = ga @ a_prev + gv @ ((a_next - a_prev) / dt)
            z = phi @ z + (drive[:, None] if z.ndim == 2 else drive)
        else:
            z = _rk4_step(F, B, z, a_prev, a_next, dt)
        a_prev = a_next
        if (n + 1) % record_every == 0 or n + 1 == steps:
            times.append((n + 1) * dt)
            traj.append(z.copy())
    return np.array(times), np.array(traj)


def spectral_peaks(times, signal, n_peaks=2, min_separation=None):
    """Angular frequencies of the strongest spectral lines of a uniformly
    sampled signal: FFT peak picking refined by maximising the windowed DTFT."""
    t = np.asarray(times, dtype=float)
    s = np.asarray(signal, dtype=float)
    s = s - s.mean()
    dt = t[1] - t[0]
    n = s.size
    win = np.hanning(n)
    sw = s * win
    pad = 8 * n
    spec = np.abs(np.fft.rfft(sw, pad))
    freqs = 2.0 * math.pi * np.fft.rfftfreq(pad, dt)
    sep = min_separation if min_separation is not None else 8.0 * 2.0 * math.pi / (n * dt)
    order = np.argsort(spec)[::-1]
    picked = []
    for k in order:
        if k == 0:
            continue
        if all(abs(freqs[k] - p) > sep for p in picked):
            picked.append(freqs[k])
        if len(picked) == n_peaks:
            break
    refined = []
    df = freqs[1] - freqs[0]
    for f0 in picked:
        res = minimize_scalar(lambda w: -abs(np.sum(sw * np.exp(-1j * w * t))),
                              bounds=(f0 - 2 * df, f0 + 2 * df), method="bounded",
                              options={"xatol": 1e-10})
        refined.append(float(res.x))
    return sorted(refined, reverse=True)


# -- Hannay angle -------------------------------------------------------------


def loop_path(loop, T):
    """Well position along ``loop`` with the sin^2 speed ramp over time ``T``."""
    from magberry.adiabatic import Schedule

    sched = Schedule(loop, T, 1)

    def path(t):
        o = sched.position(t)
        return np.array([o.a1, o.a2])

    return path


@dataclass
class HannayResult:
    delta_theta: np.ndarray  # (plus, minus)
    advance: np.ndarray  # mean angle advance per mode, moving well
    frozen_advance: np.ndarray  # same with the well held fixed
    analytic_advance: np.ndarray  # omega * T
    action_spread: float
    T: float
    steps: int
    extra: dict = field(default_factory=dict)


def _mean_advance(system, modes, ensemble, T, dt, path, track_every):
    steps = max(1, int(round(T / dt)))
    dt = T / steps
    phi, ga, gv = affine_propagator(system, dt)
    z = ensemble.points + system.equilibrium()[:, None]
    a_prev = np.asarray(path(0.0), dtype=float)
    start = a_prev.copy()
    last = modes.angles(z - system.equilibrium(Offset(*a_prev))[:, None])
    total = np.zeros_like(last)
    for n in range(steps):
        a_next = np.asarray(path((n + 1) * dt), dtype=float)
        drive = ga @ a_prev + gv @ ((a_next - a_prev) / dt)
        z = phi @ z + drive[:, None]
        a_prev = a_next
        if (n + 1) % track_every == 0 or n + 1 == steps:
            cur = modes.angles(z - system.equilibrium(Offset(*a_prev))[:, None])
            total += (cur - last + math.pi) % (2.0 * math.pi) - math.pi
            last = cur
    if not np.allclose(a_prev, start, atol=1e-12):
        raise ValueError("the well path does not return to its start")
    # angles are -arg(c) with c ~ exp(-i omega t): they increase at rate omega
    return total.mean(axis=1), steps, z


def hannay_angle(system, loop, T, ensemble=None, *, dt=None, step_fraction=0.05):
    """Mean extra angle per mode after transporting the ensemble around ``loop``.

    The frozen advance is measured with the identical stepper and a fixed
    well, so integration round-off cancels; ``analytic_advance`` is
    ``omega * T`` for reference.
    """
    modes = normal_modes(system)
    wp, wm = modes.omegas
    if T * min(wp, wm) < ADIABATIC_MIN:
        raise ValueError(
            f"adiabaticity requires T*omega_min >= {ADIABATIC_MIN:g}, got {T * min(wp, wm):.3g}"
        )
    if ensemble is None:
        ensemble = Ensemble.on_torus(system)
    if dt is None:
        dt = step_fraction / max(wp, wm)
    track_every = max(1, int(0.5 / (max(wp, wm) * dt)))
    path = loop_path(loop, T) if isinstance(loop, LoopSpec) else loop
    a0 = Offset(*path(0.0))
    sys0 = ClassicalSystem(system.flux, system.omega0, a0)
    moving, steps, _ = _mean_advance(sys0, modes, ensemble, T, dt, path, track_every)
    fixed = np.array([a0.a1, a0.a2])
    frozen, _, _ = _mean_advance(sys0, modes, ensemble, T, dt, lambda t: fixed, track_every)
    actions = mode_actions(sys0, modes, ensemble.points)
    spread = float(np.max(np.ptp(actions, axis=1)))
    return HannayResult(
        delta_theta=moving - frozen,
        advance=moving,
        frozen_advance=frozen,
        analytic_advance=modes.omegas * T,
        action_spread=spread,
        T=T,
        steps=steps,
    )


def correspondence_check(berry_phases_by_level):
    """Largest pairwise difference of Berry phases across levels."""
    g = [float(x) for x in berry_phases_by_level]
    if len(g) < 2:
        raise ValueError("need Berry phases of at least two levels")
    return max(abs(a - b) for i, a in enumerate(g) for b in g[i + 1:])
