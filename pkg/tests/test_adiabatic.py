import dataclasses
import math

import numpy as np
import pytest

from magberry import adiabatic
from magberry.adiabatic import NonAdiabaticWarning, Schedule, convergence_study, propagate
from magberry.berry import Rectangle, analytic_phase, wrap_phase
from magberry.hamiltonian import Offset, inner
from magberry.mtrans import translate


def _static(strong, T, steps=None):
    if steps is None:
        steps = math.ceil(T * strong["H"].norm_estimate() / adiabatic.STABILITY_BOUND)
    return Schedule.static((0.0, 0.0), T, steps)


def test_schedule_ramp():
    sched = Schedule(Rectangle.square(1.0, samples=8), 10.0, 100)
    assert sched.length == pytest.approx(4.0)
    assert sched.arc(0.0) == 0.0 and sched.arc(10.0) == pytest.approx(4.0)
    # zero speed at both ends
    assert sched.arc(1e-3) < 1e-6 and 4.0 - sched.arc(10.0 - 1e-3) < 1e-6
    assert sched.position(0.0) == sched.position(10.0)
    mid = sched.position(5.0)
    assert (mid.a1, mid.a2) == pytest.approx((0.5, 0.5))
    with pytest.raises(ValueError):
        Schedule(Rectangle.square(1.0), 0.0, 10)


def test_step_count_respects_the_stability_bound(strong):
    sched = Schedule.for_operator(Rectangle.square(1.0), 7.0, strong["H"])
    assert sched.dt * strong["H"].norm_estimate() <= adiabatic.STABILITY_BOUND
    with pytest.raises(ValueError, match="steps"):
        propagate(strong["grid"], strong["flux"], strong["well"], strong["psi0"], _static(strong, 1.0, 10))


def test_stationary_state_only_picks_up_the_dynamical_phase(strong):
    psi0, T = strong["psi0"], 2.0
    res = propagate(strong["grid"], strong["flux"], strong["well"], psi0, _static(strong, T), checkpoints=2)
    assert abs(res.overlap) >= 1 - 1e-8
    assert abs(res.gamma_adiabatic) <= 1e-6
    expect = np.exp(-1j * psi0.energy * T) * psi0.state
    assert abs(inner(expect, res.final_state, strong["grid"].h)) >= 1 - 1e-8
    assert res.min_population >= 1 - 1e-8


def test_norm_drift_over_ten_thousand_steps(strong):
    sched = _static(strong, 1.0, 10_000)
    res = propagate(strong["grid"], strong["flux"], strong["well"], strong["psi0"], sched, checkpoints=0)
    assert res.steps == 10_000
    assert res.norm_drift <= 1e-9


@pytest.mark.slow
def test_second_order_in_time(strong):
    psi0, T = strong["psi0"], 20.0
    errs = []
    for steps in (5120, 10240):
        res = propagate(strong["grid"], strong["flux"], strong["well"], psi0, _static(strong, T, steps),
                        checkpoints=0)
        errs.append(abs(wrap_phase(np.angle(res.overlap) + psi0.energy * T)))
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_refuses_a_non_eigenstate(strong, rng):
    fake = type(strong["psi0"])(strong["psi0"].energy, strong["psi0"].state * np.exp(
        1j * rng.uniform(0, 0.1, strong["grid"].shape)), 0.0)
    with pytest.raises(ValueError, match="not an eigenstate"):
        propagate(strong["grid"], strong["flux"], strong["well"], fake, _static(strong, 1.0))


def test_sudden_limit_warns(strong):
    loop = Rectangle.square(1.0, samples=16)
    sched = Schedule.for_operator(loop, 1.0, strong["H"])
    start = Offset(*loop.points()[0])
    psi0 = dataclasses.replace(strong["psi0"], state=translate(strong["psi0"].state, start,
                                                               strong["flux"], strong["grid"]))
    with pytest.warns(NonAdiabaticWarning):
        res = propagate(strong["grid"], strong["flux"], strong["well"], psi0, sched, checkpoints=2)
    assert res.min_population < adiabatic.POPULATION_WARNING
    err = abs(wrap_phase(res.gamma_adiabatic - analytic_phase(strong["flux"], loop))) \
        if math.isfinite(res.gamma_adiabatic) else math.inf
    assert err > 0.1


def test_repeated_T_gives_identical_rows(strong):
    loop = Rectangle.square(0.5, samples=8)
    rows = convergence_study([3.0, 3.0], strong["grid"], strong["flux"], strong["well"], loop,
                             checkpoints=1)
    a, b = rows
    assert (a.gamma_ad, a.error, a.min_population, a.norm_drift) == \
        (b.gamma_ad, b.error, b.min_population, b.norm_drift)


def test_study_validates_T_order(strong):
    with pytest.raises(ValueError, match="non-decreasing"):
        convergence_study([5.0, 2.0], strong["grid"], strong["flux"], strong["well"],
                          Rectangle.square(0.5, samples=8), psi0=strong["psi0"])


@pytest.mark.slow
def test_reversed_loop(strong):
    """Reversal flips the orientation-odd part; the remainder is the O(L^2/T) correction."""
    ref = analytic_phase(strong["flux"], Rectangle.square(0.5, samples=8))
    odd, even = [], []
    for T in (60.0, 120.0):
        g = [convergence_study([T], strong["grid"], strong["flux"], strong["well"],
                               Rectangle.square(0.5, samples=8, orientation=o), checkpoints=1)[0].gamma_ad
             for o in (1, -1)]
        odd.append(0.5 * (g[0] - g[1]))
        even.append(abs(g[0] + g[1]))
    assert abs(odd[-1] - ref) <= 5e-2
    assert 1.6 < even[0] / even[1] < 2.4


def test_geometric_phase_needs_overlap():
    with pytest.raises(ValueError, match="left the level"):
        adiabatic.geometric_phase(0.3 + 0j, 1.0, 1.0)
    assert adiabatic.geometric_phase(np.exp(-2j), 1.0, 2.0) == pytest.approx(0.0)


def test_non_increasing():
    assert adiabatic.non_increasing([0.3, 0.1, 0.1005])
    assert not adiabatic.non_increasing([0.3, 0.1, 0.2])
