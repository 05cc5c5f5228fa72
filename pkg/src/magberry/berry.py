"""Berry connection, Wilson-loop Berry phase and curvature in offset space.

Sign convention: ``gamma = -sum_k arg <psi_k, psi_{k+1}>`` along the loop, so
a counterclockwise loop at positive flux density gives a positive phase equal
to ``2 pi xi S``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from magberry import mtrans
from magberry.eigen import DegenerateLevelError, SolverConfig, gap_check, lowest_eigenpairs
from magberry.hamiltonian import (
    DEFAULT_CONTAINMENT_FACTOR,
    Offset,
    build_hamiltonian,
    check_containment,
    inner,
)

MAX_STEP_PHASE = 0.1
MIN_OVERLAP = 1e-6
MAX_REFINEMENTS = 3
# loose: catches a broken gauge convention (residual O(1)) while tolerating
# edge truncation of wide Landau tails on desk-sized boxes
TRANSPORT_CHECK = 1e-3


class DiscretizationError(RuntimeError):
    """Consecutive loop samples are too far apart for a faithful overlap phase."""

    def __init__(self, message, step=None, value=None):
        super().__init__(message)
        self.step = step
        self.value = value


class StepPhaseError(DiscretizationError):
    """A single step phase exceeds the refinement bound; refine and retry."""


# -- loops --------------------------------------------------------------------


@dataclass(frozen=True, kw_only=True)
class LoopSpec:
    """A closed loop in offset space, sampled at ``samples`` points per turn.

    ``orientation`` +1 traverses the geometric description counterclockwise,
    -1 clockwise. ``turns`` repeats the traversal.
    """

    samples: int = 64
    orientation: int = 1
    turns: int = 1

    def __post_init__(self):
        if self.samples < 4:
            raise ValueError("a loop needs at least 4 samples")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        if self.turns < 1:
            raise ValueError("turns must be >= 1")

    def _ccw_points(self):
        raise NotImplementedError

    def points(self):
        """Distinct samples in traversal order, shape ``(samples * turns, 2)``."""
        pts = np.asarray(self._ccw_points(), dtype=float)
        if self.orientation == -1:
            pts = np.concatenate([pts[:1], pts[:0:-1]])
        return np.tile(pts, (self.turns, 1))

    def closed_points(self):
        pts = self.points()
        return np.concatenate([pts, pts[:1]])

    def offsets(self):
        return [Offset(float(p[0]), float(p[1])) for p in self.points()]

    def commensurate(self, h):
        return all(o.commensurate(h) for o in self.offsets()[: self.samples])

    def refined(self):
        return dataclasses.replace(self, samples=2 * self.samples)

    def describe(self):
        d = dataclasses.asdict(self)
        d["kind"] = type(self).__name__.lower()
        return d


def _polyline_samples(vertices, m):
    v = np.asarray(vertices, dtype=float)
    closed = np.concatenate([v, v[:1]])
    seg = np.diff(closed, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    total = lengths.sum()
    if total == 0.0:
        return np.repeat(v[:1], m, axis=0)
    starts = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
    out = np.empty((m, 2))
    for k in range(m):
        s = k * total / m
        i = int(np.searchsorted(starts, s, side="right") - 1)
        while lengths[i] == 0.0:
            i += 1
        t = (s - starts[i]) / lengths[i]
        out[k] = closed[i] + t * seg[i]
    return out


@dataclass(frozen=True)
class Polygon(LoopSpec):
    vertices: tuple = ()

    def __post_init__(self):
        super().__post_init__()
        vs = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(vs) < 2:
            raise ValueError("a polygon needs at least 2 vertices")
        object.__setattr__(self, "vertices", vs)

    def _ccw_points(self):
        return _polyline_samples(self.vertices, self.samples)


@dataclass(frozen=True)
class Rectangle(LoopSpec):
    corner: tuple = (0.0, 0.0)
    widths: tuple = (1.0, 1.0)

    def __post_init__(self):
        super().__post_init__()
        if min(self.widths) < 0:
            raise ValueError("rectangle widths must be non-negative")

    @classmethod
    def square(cls, side, center=(0.0, 0.0), **kw):
        return cls(corner=(center[0] - side / 2, center[1] - side / 2), widths=(side, side), **kw)

    def _ccw_points(self):
        x0, y0 = self.corner
        w1, w2 = self.widths
        return _polyline_samples([(x0, y0), (x0 + w1, y0), (x0 + w1, y0 + w2), (x0, y0 + w2)],
                                 self.samples)


@dataclass(frozen=True)
class Circle(LoopSpec):
    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if self.radius < 0:
            raise ValueError("radius must be non-negative")

    @property
    def exact_area(self):
        return self.orientation * self.turns * math.pi * self.radius ** 2

    def _ccw_points(self):
        t = 2.0 * math.pi * np.arange(self.samples) / self.samples
        return np.column_stack([self.center[0] + self.radius * np.cos(t),
                                self.center[1] + self.radius * np.sin(t)])


LOOP_KINDS = {"polygon": Polygon, "rectangle": Rectangle, "circle": Circle}


def _closed_array(loop):
    if isinstance(loop, LoopSpec):
        return loop.closed_points()
    pts = np.asarray(loop, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("a loop needs at least two points")
    if not np.allclose(pts[0], pts[-1], rtol=0.0, atol=1e-12):
        raise ValueError("polyline is open: first and last points differ")
    return pts


def oriented_area(loop):
    """Shoelace area of a loop (``LoopSpec`` or closed ``(n, 2)`` polyline)."""
    p = _closed_array(loop)[:, :2]
    return 0.5 * float(np.sum(p[:-1, 0] * p[1:, 1] - p[:-1, 1] * p[1:, 0]))


def analytic_phase(flux, loop):
    """``2 pi xi S`` with ``S`` the oriented area (a number or a loop)."""
    area = loop if isinstance(loop, (int, float)) else oriented_area(loop)
    return 2.0 * math.pi * flux.xi * area


def projected_phase_3d(loop3d, flux):
    """Phase of a loop in 3D offset space: only its projection on the plane counts."""
    p = np.asarray(loop3d, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("expected an (n, 3) polyline")
    return analytic_phase(flux, _closed_array(p)[:, :2])


# -- Wilson loop --------------------------------------------------------------


def wrap_phase(x):
    """Reduce to (-pi, pi]."""
    y = x - 2.0 * math.pi * round(x / (2.0 * math.pi))
    if y <= -math.pi:
        y += 2.0 * math.pi
    return y


@dataclass
class PhaseResult:
    gamma_accumulated: float
    gamma_mod: float
    per_step_phases: np.ndarray
    area: float = float("nan")
    flux_quanta: float = float("nan")
    method: str = "wilson"
    refinements: int = 0
    points: Optional[np.ndarray] = None
    energies: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    @property
    def cumulative_phases(self):
        return np.cumsum(self.per_step_phases)

    def rows(self):
        """CSV rows ``k, a1, a2, step_phase, cumulative_phase``."""
        cum = self.cumulative_phases
        pts = self.points if self.points is not None else np.full((len(cum), 2), np.nan)
        return [(k, float(pts[k, 0]), float(pts[k, 1]), float(s), float(c))
                for k, (s, c) in enumerate(zip(self.per_step_phases, cum))]

    def to_csv(self, digits=12):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "a1", "a2", "step_phase", "cumulative_phase"])
        for k, *vals in self.rows():
            w.writerow([k] + [f"{v:.{digits}g}" for v in vals])
        return buf.getvalue()

    def to_dict(self):
        d = {
            "gamma_accumulated": self.gamma_accumulated,
            "gamma_mod": self.gamma_mod,
            "area": self.area,
            "flux_quanta": self.flux_quanta,
            "method": self.method,
            "refinements": self.refinements,
            "max_step_phase": float(np.max(np.abs(self.per_step_phases))),
            "per_step_phases": [float(x) for x in self.per_step_phases],
        }
        if self.points is not None:
            d["points"] = self.points.tolist()
        if self.energies is not None:
            d["energies"] = [float(e) for e in self.energies]
        d.update(self.extra)
        return d


def step_phases(states, closed=True, h=1.0):
    """``-arg <psi_k, psi_{k+1}>`` for consecutive states, in loop order."""
    n = len(states)
    if n < 2:
        raise ValueError("need at least two states")
    pairs = n if closed else n - 1
    out = np.empty(pairs)
    for k in range(pairs):
        a, b = states[k], states[(k + 1) % n]
        z = inner(a, b, h)
        scale = math.sqrt(inner(a, a, h).real * inner(b, b, h).real)
        if scale == 0.0 or abs(z) < MIN_OVERLAP * scale:
            raise DiscretizationError(
                f"discretization too coarse: overlap {abs(z) / scale if scale else 0.0:.3g} "
                f"between samples {k} and {(k + 1) % n}",
                step=k,
                value=abs(z) / scale if scale else 0.0,
            )
        out[k] = -math.atan2(z.imag, z.real)
    return out


def wilson_loop_phase(states, closed=True, *, max_step=MAX_STEP_PHASE, h=1.0,
                      points=None, flux=None, method="wilson"):
    """Discrete Berry phase of an ordered family of states.

    With ``closed=True`` the overlap from the last state back to the first is
    included. Raises :class:`StepPhaseError` when a step exceeds ``max_step``.
    """
    steps = step_phases(states, closed, h)
    worst = int(np.argmax(np.abs(steps)))
    if max_step is not None and abs(steps[worst]) > max_step:
        raise StepPhaseError(
            f"step phase {steps[worst]:.3g} rad at sample {worst} exceeds {max_step} rad; "
            "refine the loop",
            step=worst,
            value=float(steps[worst]),
        )
    gamma = 0.0
    for s in steps:
        gamma += s
    area = float("nan")
    if points is not None and closed:
        area = oriented_area(np.concatenate([points, points[:1]]))
    quanta = flux.xi * area if flux is not None else float("nan")
    return PhaseResult(
        gamma_accumulated=gamma,
        gamma_mod=wrap_phase(gamma),
        per_step_phases=steps,
        area=area,
        flux_quanta=quanta,
        method=method,
        points=None if points is None else np.asarray(points),
    )


def _refining(loop, compute, max_refinements):
    count = 0
    while True:
        try:
            result = compute(loop)
        except StepPhaseError:
            if count >= max_refinements:
                raise
            loop = loop.refined()
            count += 1
            continue
        result.refinements = count
        return result


# -- translated transport -----------------------------------------------------


def berry_phase_translated(psi0, loop, flux, grid, *, potential=None,
                           max_refinements=MAX_REFINEMENTS, transport_check=TRANSPORT_CHECK):
    """Berry phase from states ``[a_k] psi0`` on a commensurate loop.

    With ``potential`` given, every transported state is checked to be an
    eigenstate of ``H(a_k)``: the largest residual is reported and one above
    ``transport_check`` raises :class:`magberry.mtrans.TransportError`.
    """

    def compute(lp):
        if not lp.commensurate(grid.h):
            if lp.samples > loop.samples:
                raise StepPhaseError(
                    f"refining to {lp.samples} samples leaves the lattice at h={grid.h}; "
                    "use a finer grid or berry_phase_resolved"
                )
            raise ValueError(
                f"loop samples are not lattice points at h={grid.h}; "
                "use berry_phase_resolved for this loop"
            )
        offs = lp.offsets()
        states = []
        worst = 0.0
        for off in offs[: lp.samples]:
            if potential is not None:
                H_a = build_hamiltonian(grid, flux, potential, off)
                psi_a, r = mtrans.transported_eigenstate(
                    psi0, off, flux, H_a, allowance=transport_check, check=True)
                worst = max(worst, r)
                states.append(psi_a)
            else:
                states.append(mtrans.translate(psi0.state, off, flux, grid))
        res = wilson_loop_phase(states * lp.turns, True, h=grid.h, points=lp.points(),
                                flux=flux, method="translated")
        if potential is not None:
            res.extra["max_transport_residual"] = worst
        return res

    return _refining(loop, compute, max_refinements)


# -- resolved transport -------------------------------------------------------


def _bilinear(values, grid, p):
    fx = (p[0] - grid.x[0]) / grid.h
    fy = (p[1] - grid.y[0]) / grid.h
    i = min(max(int(math.floor(fx)), 0), grid.nx - 2)
    j = min(max(int(math.floor(fy)), 0), grid.ny - 2)
    tx, ty = fx - i, fy - j
    return ((1 - tx) * (1 - ty) * values[i, j] + tx * (1 - ty) * values[i + 1, j]
            + (1 - tx) * ty * values[i, j + 1] + tx * ty * values[i + 1, j + 1])


def anchor_gauge(states, points, grid):
    """Rephase each state so its value at ``a_k + r*`` is real and positive.

    ``r*`` is the peak of the first state relative to its offset. Solver
    phases are arbitrary; this smooth gauge keeps step phases small without
    affecting the closed-loop phase.
    """
    i, j = np.unravel_index(int(np.argmax(np.abs(states[0]))), states[0].shape)
    r_star = (grid.x[i] - points[0][0], grid.y[j] - points[0][1])
    out = []
    for s, p in zip(states, points):
        z = _bilinear(s, grid, (p[0] + r_star[0], p[1] + r_star[1]))
        out.append(s * (np.conj(z) / abs(z)) if abs(z) > 0 else s)
    return out


def solve_level(grid, flux, potential, offset, cfg, level=0, gap_threshold=None):
    """Eigenpair ``level`` of ``H(offset)`` after a gap check."""
    k = max(cfg.k, level + 2)
    if k != cfg.k:
        cfg = dataclasses.replace(cfg, k=k)
    H = build_hamiltonian(grid, flux, potential, offset)
    pairs = lowest_eigenpairs(H, cfg)
    gap_check(pairs, gap_threshold, level)
    return pairs[level]


def _solve_task(args):
    return solve_level(*args)


def solve_samples(grid, flux, potential, offsets, cfg, *, level=0, gap_threshold=None,
                  workers=1):
    """Independent eigensolves at each offset, returned in input order."""
    tasks = [(grid, flux, potential, o, cfg, level, gap_threshold) for o in offsets]
    results = [None] * len(tasks)
    try:
        if workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for idx, res in enumerate(pool.map(_solve_task, tasks)):
                    results[idx] = res
        else:
            for idx, t in enumerate(tasks):
                results[idx] = _solve_task(t)
    except DegenerateLevelError as exc:
        idx = next((i for i, r in enumerate(results) if r is None), None)
        raise DegenerateLevelError(
            f"{exc} at loop sample {idx}", gap=exc.gap, threshold=exc.threshold, sample=idx
        ) from exc
    return results


def berry_phase_resolved(loop, flux, grid, potential, cfg=SolverConfig(), *, level=0,
                         workers=1, gap_threshold=None, max_refinements=MAX_REFINEMENTS,
                         containment_factor=DEFAULT_CONTAINMENT_FACTOR):
    """Berry phase from independent eigensolves of ``H(a_k)`` at every sample."""
    check_containment(grid, flux, potential, loop.points(), containment_factor)
    cache = {}

    def compute(lp):
        offs = lp.offsets()[: lp.samples]
        todo = [o for o in offs if (o.a1, o.a2) not in cache]
        for o, pair in zip(todo, solve_samples(grid, flux, potential, todo, cfg, level=level,
                                               gap_threshold=gap_threshold, workers=workers)):
            cache[(o.a1, o.a2)] = pair
        pairs = [cache[(o.a1, o.a2)] for o in offs]
        pts = lp.points()[: lp.samples]
        states = anchor_gauge([p.state for p in pairs], pts, grid)
        res = wilson_loop_phase(states * lp.turns, True, h=grid.h, points=lp.points(),
                                flux=flux, method="resolved")
        res.energies = np.array([p.energy for p in pairs])
        res.extra["max_residual"] = max(p.residual for p in pairs)
        res.extra["level"] = level
        return res

    return _refining(loop, compute, max_refinements)


# -- connection and constants -------------------------------------------------


@dataclass
class ConnectionSample:
    a: Offset
    U: np.ndarray
    constant: np.ndarray  # U - pi xi (-a2, a1)
    delta: float
    c: Optional[tuple] = None


def _step_phase(psi, a, d, flux, grid):
    pa = mtrans.translate(psi, a, flux, grid)
    pb = mtrans.translate(psi, a + d, flux, grid)
    z = inner(pa, pb, grid.h)
    return -math.atan2(z.imag, z.real)


def connection_estimate(psi0, a, flux, grid, delta=None):
    """Central-difference Berry connection ``U(a)`` from translated states."""
    delta = 2.0 * grid.h if delta is None else delta
    U = np.empty(2)
    for i, e in enumerate((Offset(delta, 0.0), Offset(0.0, delta))):
        fwd = _step_phase(psi0.state, a, e, flux, grid)
        bwd = _step_phase(psi0.state, a, -e, flux, grid)
        U[i] = (fwd - bwd) / (2.0 * delta)
    linear = math.pi * flux.xi * np.array([-a.a2, a.a1])
    return ConnectionSample(a=a, U=U, constant=U - linear, delta=delta)


def _derivative(f, axis, h, order):
    pad = order // 2
    width = [(0, 0), (0, 0)]
    width[axis] = (pad, pad)
    g = np.pad(f, width)
    n = f.shape[axis]

    def sl(k):
        return np.take(g, range(pad + k, pad + k + n), axis=axis)

    if order == 2:
        return (sl(1) - sl(-1)) / (2.0 * h)
    if order == 4:
        return (-sl(2) + 8.0 * sl(1) - 8.0 * sl(-1) + sl(-2)) / (12.0 * h)
    raise ValueError("order must be 2 or 4")


def c_constants(psi0, flux, grid, *, order=4, full=False):
    """Constants ``(c1, c2)`` with ``U(a) = pi xi (-a2, a1) - pi xi (c1, c2)``.

    ``c1 = <y> - <psi, d_x psi> / (i pi xi)`` and
    ``c2 = -<x> - <psi, d_y psi> / (i pi xi)`` for the wedge orientation used
    by :mod:`magberry.mtrans`. Derivatives are centered differences of the
    given ``order``. ``full=True`` also returns the largest imaginary residue.
    """
    if flux.is_zero:
        raise ValueError("c constants are undefined at zero flux (the formula divides by xi)")
    psi = psi0.state if hasattr(psi0, "state") else np.asarray(psi0)
    h = grid.h
    X, Y = grid.mesh()
    nrm = inner(psi, psi, h).real
    mx = inner(psi, X * psi, h) / nrm
    my = inner(psi, Y * psi, h) / nrm
    gx = inner(psi, _derivative(psi, 0, h, order), h) / nrm
    gy = inner(psi, _derivative(psi, 1, h, order), h) / nrm
    pix = math.pi * 1j * flux.xi
    c1 = my - gx / pix
    c2 = -mx - gy / pix
    if full:
        return float(c1.real), float(c2.real), max(abs(c1.imag), abs(c2.imag))
    return float(c1.real), float(c2.real)


# -- curvature ----------------------------------------------------------------


@dataclass
class CurvatureMap:
    values: np.ndarray  # F per plaquette, shape (n1, n2)
    phases: np.ndarray  # plaquette Wilson phases
    corner: tuple
    delta: float
    method: str

    def rows(self):
        n1, n2 = self.values.shape
        return [(i, j, self.corner[0] + (i + 0.5) * self.delta,
                 self.corner[1] + (j + 0.5) * self.delta, float(self.values[i, j]))
                for i in range(n1) for j in range(n2)]


def plaquette_phases(states, h=1.0):
    """Wilson phase of every elementary plaquette of a node array ``states[i][j]``."""
    n1, n2 = len(states) - 1, len(states[0]) - 1
    out = np.empty((n1, n2))
    for i in range(n1):
        for j in range(n2):
            z = (inner(states[i][j], states[i + 1][j], h)
                 * inner(states[i + 1][j], states[i + 1][j + 1], h)
                 * inner(states[i + 1][j + 1], states[i][j + 1], h)
                 * inner(states[i][j + 1], states[i][j], h))
            out[i, j] = -math.atan2(z.imag, z.real)
    return out


def curvature_map(flux, grid, corner=(0.0, 0.0), counts=(5, 5), delta=None, *, psi0=None,
                  potential=None, cfg=SolverConfig(), workers=1):
    """Berry curvature on a ``counts`` array of square plaquettes of side ``delta``.

    With ``psi0`` the node states are magnetic translations of it; otherwise
    each node is an independent eigensolve of ``H(a)`` for ``potential``.
    """
    delta = 2.0 * grid.h if delta is None else delta
    n1, n2 = counts
    nodes = [[Offset(corner[0] + i * delta, corner[1] + j * delta) for j in range(n2 + 1)]
             for i in range(n1 + 1)]
    flat = [o for row in nodes for o in row]
    if psi0 is not None:
        states = [mtrans.translate(psi0.state, o, flux, grid) for o in flat]
        method = "translated"
    else:
        if potential is None:
            raise ValueError("curvature_map needs psi0 (translated) or potential (resolved)")
        check_containment(grid, flux, potential, [o.vector for o in flat])
        states = [p.state for p in solve_samples(grid, flux, potential, flat, cfg,
                                                 workers=workers)]
        method = "resolved"
    grid_states = [states[i * (n2 + 1):(i + 1) * (n2 + 1)] for i in range(n1 + 1)]
    phases = plaquette_phases(grid_states, grid.h)
    return CurvatureMap(values=phases / delta ** 2, phases=phases, corner=tuple(corner),
                        delta=delta, method=method)
