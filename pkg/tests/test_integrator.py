import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from glflow.energy import total_energy
from glflow.grid import ComplexField, GridSpec, set_workers
from glflow.integrator import (History, StepError, StepperConfig, dudt, evolve_to, ode_excess, rhs,
                               step, supersolution, supersolution_check)
from glflow.seeds import constant, plane_wave, random_perturbation, seed_vortex_configuration
from glflow.vortex import detect_vortices

EPS = 0.1


def small_grid():
    return GridSpec.from_length(2, 64, 2.0, 0.09375)


def amplitude_oracle(k2, eps, a0, t):
    """Modulus of a plane wave solution: a' = a(-|k|^2 + (1 - a^2)/eps^2)."""
    sol = solve_ivp(lambda s, a: a * (-k2 + (1 - a * a) / eps**2), (0, t), [a0], rtol=1e-12, atol=1e-14)
    return sol.y[0, -1]


@pytest.mark.parametrize("scheme", ["spectral_if", "explicit_fd"])
def test_fixed_points(scheme):
    g = small_grid()
    cfg = StepperConfig(StepperConfig(1.0, scheme).max_dt(g), scheme)
    for value in (1.0, 0.0):
        f = constant(g, value)
        out = step(f, cfg)
        assert np.array_equal(out.values, f.values)


def test_constant_half_explicit_step():
    g = small_grid()
    cfg = StepperConfig(StepperConfig(1.0, "explicit_fd").max_dt(g), "explicit_fd")
    out = step(constant(g, 0.5), cfg)
    expected = 0.5 + cfg.dt * 0.5 * 0.75 / g.epsilon**2
    assert np.allclose(out.values, expected, rtol=0, atol=1e-15)


def test_evolve_to_same_time_is_identity():
    f = constant(small_grid(), 0.7)
    seen = []
    out = evolve_to(f, 0.0, StepperConfig(1e-4), callbacks=[lambda t, u, d: seen.append(t)])
    assert out is f
    assert seen == [0.0]
    with pytest.raises(ValueError):
        evolve_to(f, -1.0, StepperConfig(1e-4))


def test_stability_bounds_rejected():
    g = small_grid()
    with pytest.raises(ValueError, match="stability"):
        step(constant(g, 1.0), StepperConfig(g.epsilon**2 / 4 * 1.01))
    fd = StepperConfig(g.h**2 / 4 * 1.01, "explicit_fd")
    with pytest.raises(ValueError, match="stability"):
        step(constant(g, 1.0), fd)
    with pytest.raises(ValueError):
        StepperConfig(1e-4, "crank")
    with pytest.raises(ValueError):
        StepperConfig(1e-4, "explicit_fd", order=2)


def test_large_data_need_a_shorter_step():
    g = small_grid()
    f = constant(g, 3.0)
    with pytest.raises(ValueError, match="reaction"):
        step(f, StepperConfig(g.epsilon**2 / 4))
    cfg = StepperConfig(StepperConfig(1.0).max_dt(g, sup=3.0))
    assert cfg.dt == pytest.approx(g.epsilon**2 / 12)
    out = step(f, cfg)
    assert 1 - 1e-12 <= out.sup() < 3


def test_non_finite_step_aborts(monkeypatch):
    import glflow.integrator as integ
    g = small_grid()
    monkeypatch.setattr(integ, "_advance", lambda grid, u, *a: np.full(u.shape, np.nan, dtype=complex))
    with pytest.raises(StepError, match="non-finite"):
        step(constant(g, 1.0), StepperConfig(1e-4))


def test_callbacks_get_equation_time_derivative():
    g = small_grid()
    f = random_perturbation(g, 0.3, 0.4, 1)
    seen = []
    evolve_to(f, 0.01, StepperConfig(5e-4, cadence=4), callbacks=[lambda t, u, d: seen.append((t, u, d))])
    assert seen[0][0] == 0.0 and seen[-1][0] == pytest.approx(0.01)
    for t, u, d in seen:
        assert np.array_equal(d, rhs(g, u.values))


def test_stops_are_landed_on_exactly():
    f = constant(small_grid(), 0.5)
    times = []
    evolve_to(f, 0.01, StepperConfig(7e-4, cadence=1000), callbacks=[lambda t, u, d: times.append(t)],
              stops=[0.0031, 0.0062])
    assert times == [0.0, 0.0031, 0.0062, 0.01]


@pytest.mark.parametrize("order,dt_div,tol", [(1, 8, 1e-5), (2, 4, 5e-6), (2, 8, 1e-6)])
def test_plane_wave_spectral_against_amplitude_ode(order, dt_div, tol):
    g = GridSpec.from_length(2, 192, 2 * math.pi, EPS)
    u = evolve_to(plane_wave(g, (1, 0)), 0.1, StepperConfig(EPS**2 / dt_div, order=order))
    mod = np.abs(u.values)
    assert np.ptp(mod) < 1e-12
    assert abs(mod.max() - amplitude_oracle(1.0, EPS, 1.0, 0.1)) < tol


def test_plane_wave_explicit_against_amplitude_ode():
    g = GridSpec.from_length(2, 192, 2 * math.pi, EPS)
    cfg = StepperConfig(StepperConfig(1.0, "explicit_fd").max_dt(g), "explicit_fd")
    u = evolve_to(plane_wave(g, (1, 0)), 0.1, cfg)
    assert abs(np.abs(u.values).max() - amplitude_oracle(1.0, EPS, 1.0, 0.1)) < 2e-6


def test_heun_order():
    g = GridSpec.from_length(2, 96, 2 * math.pi, 0.2)
    ex = amplitude_oracle(1.0, 0.2, 1.0, 0.1)
    errs = [abs(np.abs(evolve_to(plane_wave(g, (1, 0)), 0.1, StepperConfig(0.01 / d, order=2)).values).max() - ex)
            for d in (1, 2)]
    assert math.log2(errs[0] / errs[1]) > 1.8


def test_schemes_agree_after_refinement():
    """spectral_if and explicit_fd on smooth data, max-norm gap at t = 0.1."""
    gaps = []
    for n in (96, 192):
        g = GridSpec.from_length(2, n, 4.0, 0.125)
        f = random_perturbation(g, 0.3, 0.8, 5)
        fd = StepperConfig(StepperConfig(1.0, "explicit_fd").max_dt(g), "explicit_fd")
        a = evolve_to(f, 0.1, StepperConfig(fd.dt, order=2))
        b = evolve_to(f, 0.1, fd)
        gaps.append(float(np.max(np.abs(a.values - b.values))))
    assert gaps[1] < gaps[0]
    assert gaps[1] <= 1e-3


def test_vortex_lattice_is_stationary():
    # a checkerboard of +-1 is an equilibrium by symmetry; the torus has no single vortex
    g = GridSpec.from_length(2, 128, 4.0, 0.1)
    pts = [((1.0, 1.0), 1), ((3.0, 1.0), -1), ((1.0, 3.0), -1), ((3.0, 3.0), 1)]
    f = seed_vortex_configuration(g, [((x + 0.5 * g.h, y + 0.5 * g.h), l) for (x, y), l in pts])
    before = detect_vortices(f)
    after = detect_vortices(evolve_to(f, 0.5, StepperConfig(g.epsilon**2 / 4, order=2)))
    assert len(after) == 4
    for a in before:
        b = min(after, key=lambda v: g.separation(v.position, a.position))
        assert b.degree == a.degree
        assert g.separation(a.position, b.position) <= 2 * g.h


def test_thread_count_does_not_change_results():
    g = GridSpec.from_length(2, 64, 2.0, 0.09375)
    f = random_perturbation(g, 0.8, 0.3, 2)
    out = []
    try:
        for w in (1, 2):
            set_workers(w)
            out.append(evolve_to(f, 0.02, StepperConfig(g.epsilon**2 / 4)).values.tobytes())
    finally:
        set_workers(None)
    assert out[0] == out[1]


# Energy dissipation -----------------------------------------------------------


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), amp=st.floats(0.05, 1.5), order=st.sampled_from([1, 2]),
       frac=st.floats(0.1, 1.0))
def test_energy_never_increases(seed, amp, order, frac):
    g = small_grid()
    f = random_perturbation(g, amp, 0.3, seed)
    cfg = StepperConfig(frac * StepperConfig(1.0).max_dt(g, f.sup()), order=order)
    E = [total_energy(f)]
    for _ in range(10):
        f = step(f, cfg)
        E.append(total_energy(f))
    assert np.all(np.diff(E) <= 1e-12 * max(E[0], 1))


# Maximum principle -------------------------------------------------------------


def test_supersolution_closed_form_checks():
    s = np.linspace(0, 20, 200)
    # ode_excess solves y' = -2y(1+y)
    for M in (1.2, 1.5, 3.0):
        sol = solve_ivp(lambda t, y: -2 * y * (1 + y), (0, 20), [M * M - 1], t_eval=s, rtol=1e-11, atol=1e-13)
        assert np.allclose(ode_excess(s, M), sol.y[0], rtol=1e-8, atol=1e-12)
    assert np.all(supersolution(s, 1.0) == 0)


@settings(max_examples=50, deadline=None)
@given(M=st.floats(1.001, 20.0), s=st.floats(0.0, 50.0))
def test_supersolution_dominates_ode(M, s):
    assert supersolution(s, M) >= ode_excess(s, M) * (1 - 1e-12)
    assert supersolution(0.0, M) == pytest.approx(M * M - 1, rel=1e-9)


def test_unit_data_bound_reduces_to_maximum_principle():
    g = small_grid()
    f = plane_wave(g, (1, 1))
    h = History()
    evolve_to(f, 0.05, StepperConfig(g.epsilon**2 / 4), history=h)
    rep = supersolution_check(h, g.epsilon)
    assert rep.passed and rep.worst_margin >= -1e-12
    assert max(h.sup_u) <= 1 + 1e-12


def test_constant_data_follow_the_ode():
    g = small_grid()
    eps = g.epsilon
    h = History()
    evolve_to(constant(g, 1.5), 0.02, StepperConfig(eps**2 / 1600, order=2), history=h)
    t = np.asarray(h.t)
    excess = np.asarray(h.sup_u) ** 2 - 1
    assert np.max(np.abs(excess - ode_excess(t / eps**2, 1.5))) <= 1e-6
    assert supersolution_check(h, eps).passed


def test_random_data_sup_three():
    g = small_grid()
    f = random_perturbation(g, 1.0, 0.3, 9)
    f = f.with_values(3.0 * f.values / f.sup())
    h = History()
    evolve_to(f, 0.05, StepperConfig(StepperConfig(1.0).max_dt(g, sup=3.0)), history=h)
    assert h.u0_sup == pytest.approx(3.0)
    rep = supersolution_check(h, g.epsilon)
    assert rep.passed
    k = h.pointwise_constants(g.epsilon)
    assert k["sup_u"] <= 2


def test_supersolution_flags_violation():
    h = History(t=[0.0, 0.01], sup_u=[1.0, 1.5], sup_grad=[0, 0], sup_dudt=[0, 0], u0_sup=1.0)
    assert not supersolution_check(h, 0.1).passed
    with pytest.raises(ValueError):
        supersolution_check(History(), 0.1)


def test_dudt_matches_rhs():
    g = small_grid()
    f = random_perturbation(g, 0.5, 0.3, 4)
    assert np.array_equal(dudt(f), rhs(g, f.values))
    assert isinstance(f, ComplexField)
