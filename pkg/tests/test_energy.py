import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glflow import energy
from glflow.energy import (EnergyBalanceProbe, XiIdentityProbe, energy_density, h1_norm, local_energy,
                           monotonicity_scan, parabolic_density, stress_energy_tensor,
                           stress_identity_residual, weighted_energy, xi_density)
from glflow.grid import ComplexField, GridSpec, gradient
from glflow.integrator import StepperConfig, dudt
from glflow.record import simulate
from glflow.seeds import (constant, plane_wave, random_perturbation, seed_vortex_configuration,
                          vacuum)


def checkerboard(n, eps, L=4.0):
    """Four vortices of alternating degree; symmetry cancels the smooth
    external current at every core, so each behaves like an isolated vortex."""
    g = GridSpec.from_length(2, n, L, eps)
    off, q = 0.3 * g.h, L / 4
    pts = [((q + off, q + off), 1), ((3 * q + off, q + off), -1),
           ((q + off, 3 * q + off), -1), ((3 * q + off, 3 * q + off), 1)]
    return seed_vortex_configuration(g, pts), pts


def wave_grid(n=128, eps=0.15):
    return GridSpec.from_length(2, n, 2 * math.pi, eps)


# Densities -----------------------------------------------------------------------


def test_density_vacuum_and_plane_wave():
    g = wave_grid()
    assert np.all(energy_density(vacuum(g)).values == 0)
    e = energy_density(plane_wave(g, (1, 0))).values
    assert np.allclose(e, 0.5, atol=1e-12)
    e = energy_density(plane_wave(g, (1, 1))).values
    assert np.allclose(e, 1.0, atol=1e-12)


def test_spectral_and_difference_densities_converge():
    errs = []
    for n in (96, 192):
        g = GridSpec.from_length(2, n, 4.0, 0.125)
        x, y = g.coords()
        u = np.exp(1j * (np.sin(math.pi * x / 2) + 0.5 * np.cos(math.pi * y))) * (1 - 0.2 * np.cos(math.pi * x / 2))
        f = ComplexField(g, u)
        errs.append(np.max(np.abs(energy_density(f).values - energy_density(f, spectral=False).values)))
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.1)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), amp=st.floats(0.0, 2.0))
def test_density_nonnegative(seed, amp):
    g = GridSpec.from_length(2, 48, 3.0, 0.1875)
    e = energy_density(random_perturbation(g, amp, 0.3, seed)).values
    assert np.all(e >= 0)
    as_mu = energy_density(random_perturbation(g, amp, 0.3, seed)).as_measure()
    assert as_mu.normalized and as_mu.total == pytest.approx(e.sum() * g.cell_volume / g.log_eps)


# Local energies ------------------------------------------------------------------


def test_local_energy_plane_wave():
    g = GridSpec.from_length(2, 256, 2 * math.pi, 0.075)
    f = plane_wave(g, (1, 0))
    assert local_energy(f, (3, 3), 1.0) == pytest.approx(math.pi / 2, abs=5 * g.h)
    assert local_energy(vacuum(g), (1, 1), 2.0) == 0
    with pytest.raises(ValueError, match="half the box"):
        local_energy(f, (1, 1), 3.5)


@pytest.mark.parametrize("index", [0, 1])
def test_vortex_energy_grows_like_pi_log(index):
    f, pts = checkerboard(256, 0.05)
    d = energy_density(f)
    eps = f.grid.epsilon
    rs = np.geomspace(10 * eps, 1.0, 12)
    E = [local_energy(d, pts[index][0], r) for r in rs]
    slope = np.polyfit(np.log(rs / eps), E, 1)[0]
    assert slope == pytest.approx(math.pi, rel=0.03)


def test_h1_norm_values():
    g = GridSpec.from_length(2, 384, 2 * math.pi, 0.05)
    assert h1_norm(vacuum(g)) == 0
    assert h1_norm(plane_wave(g, (1, 0))) == pytest.approx((math.pi / 2) / math.log(20), rel=2e-3)
    with pytest.raises(ValueError):
        h1_norm(vacuum(GridSpec.from_length(2, 64, 1.5, 0.09375)))


def test_h1_norm_of_vortex_approaches_pi():
    """Ball energy is pi |ln eps| + O(1), so M0 -> pi like 1/|ln eps|."""
    vals = []
    for n, eps in ((128, 0.1), (256, 0.05), (512, 0.025)):
        f, _ = checkerboard(n, eps)
        vals.append((math.log(1 / eps), h1_norm(f)))
    gaps = [abs(m - math.pi) for _, m in vals]
    assert gaps[0] > gaps[1] > gaps[2]
    le, m = np.array(vals).T
    assert np.polyfit(le, le * m, 1)[0] == pytest.approx(math.pi, rel=0.03)


# Weighted energies ---------------------------------------------------------------


def test_weighted_energy_closed_forms():
    g = wave_grid(256, 0.075)
    assert weighted_energy(vacuum(g), (1, 1), 0.3) == 0
    pw = plane_wave(g, (1, 0))
    for R in (0.1, 0.2, 0.3):
        # the truncated weight drops a tail of relative size ~exp(-18)
        assert weighted_energy(pw, (2, 2), R) == pytest.approx(2 * math.pi * R * R, rel=1e-7)
        assert weighted_energy(pw, (2, 2), R, images=True) == pytest.approx(2 * math.pi * R * R, rel=1e-9)
    assert weighted_energy(pw, (2, 2), 0.5, images=True) == pytest.approx(2 * math.pi * 0.25, rel=1e-9)
    with pytest.raises(ValueError, match="6R"):
        weighted_energy(pw, (2, 2), 0.6)
    with pytest.raises(ValueError):
        weighted_energy(pw, (2, 2), 0.0)


def test_weighted_energy_against_brute_image_sum():
    f, pts = checkerboard(256, 0.05)
    g = f.grid
    e = energy_density(f).values
    x, y = g.coords()
    for R in (0.1, 0.2, 1 / 3):
        c = pts[0][0]
        brute = 0.0
        for i in (-1, 0, 1):
            for j in (-1, 0, 1):
                r2 = (x - c[0] - i * g.lengths[0]) ** 2 + (y - c[1] - j * g.lengths[1]) ** 2
                brute += np.sum(e * np.exp(-r2 / (4 * R * R)))
        brute *= g.cell_volume
        assert weighted_energy(f, c, R, images=True) == pytest.approx(brute, rel=1e-12)
        truncated = weighted_energy(f, c, R)
        if 6 * math.sqrt(2) * R <= g.lengths[0] / 2 - g.h:
            assert truncated == pytest.approx(brute, rel=1e-6)
        else:
            # cut at L/2 - h: the loss is bounded by the Gaussian tail there
            tail = math.exp(-((g.lengths[0] / 2 - g.h) ** 2) / (4 * R * R))
            assert 0 < brute - truncated <= 4 * tail * brute


# Xi multiplier --------------------------------------------------------------------


def test_xi_density_vacuum_and_errors():
    g = wave_grid()
    f = vacuum(g)
    assert np.all(xi_density(f, dudt(f), (1, 1), 0.5) == 0)
    with pytest.raises(ValueError, match="t = t"):
        xi_density(f, dudt(f), (1, 1), 0.0)


def test_xi_density_static_radial_profile():
    g = GridSpec.from_length(2, 128, 4.0, 0.09375)
    c = (2.0, 2.0)
    r = g.distance(c)
    s = 0.3
    u = 1 - 0.5 * np.exp(-r**2 / (2 * s * s))
    f = ComplexField(g, u + 0j, 0.1)
    # (x - x*).grad u = r U'(r) for a radial profile
    direct = (r * r * 0.5 * np.exp(-r**2 / (2 * s * s)) / (s * s)) ** 2 / (4 * 0.4)
    xi = xi_density(f, np.zeros(g.shape), c, 0.5)
    assert np.max(np.abs(xi - direct)) < 1e-10 * np.max(direct)


def test_xi_identity_vacuum():
    g = wave_grid()
    p = XiIdentityProbe((1, 1), 0.05)
    simulate(vacuum(g), StepperConfig(g.epsilon**2 / 4), 0.05, probes=[p])
    assert p.residual() == 0


def test_xi_identity_for_spatially_constant_data():
    """Both sides reduce to scalars: int_0^t* V + (t* - t)|u_t|^2 dt = t* V(0)."""
    g = GridSpec.from_length(2, 64, 2.0, 0.09375)
    eps = g.epsilon
    res = []
    for div in (8, 16):
        p = XiIdentityProbe((1.0, 1.0), 0.02)
        rec = simulate(constant(g, 0.5), StepperConfig(eps**2 / div, order=2), 0.02, probes=[p])
        res.append(energy.xi_identity_residual(rec, (1.0, 1.0), 0.02))
    assert res[1] <= 1e-3
    assert math.log2(res[0] / res[1]) >= 1.9
    V0 = 0.75**2 / (4 * eps**2)
    assert p.rhs() == pytest.approx(0.02 * V0, rel=1e-9)
    with pytest.raises(ValueError, match="exceeds"):
        energy.xi_identity_residual(rec, (1.0, 1.0), 0.5)


# Monotonicity ---------------------------------------------------------------------


def test_monotonicity_scan_closed_forms():
    g = wave_grid(256, 0.075)
    radii = [0.1, 0.2, 0.3, 0.4]
    ts = 0.2
    times = [ts - r * r for r in radii]
    # plane waves lose modulus slowly; constant-modulus reference via vacuum
    rec = simulate(vacuum(g), StepperConfig(g.epsilon**2 / 4), ts, snapshot_times=times)
    curve = monotonicity_scan(rec, (2, 2), ts, radii)
    assert np.all(curve.E == 0) and curve.monotone
    rec = simulate(plane_wave(g, (1, 0)), StepperConfig(g.epsilon**2 / 4), ts, snapshot_times=times)
    curve = monotonicity_scan(rec, (2, 2), ts, radii)
    assert np.all(np.diff(curve.E) > 0) and curve.monotone
    # the modulus relaxes to sqrt(1 - eps^2), so the closed form holds to O(eps^2)
    assert np.allclose(curve.E, 2 * math.pi * np.array(radii) ** 2, rtol=2 * g.epsilon**2)


def test_monotonicity_scan_errors():
    g = wave_grid()
    rec = simulate(vacuum(g), StepperConfig(g.epsilon**2 / 4), 0.1, snapshot_times=[0.09])
    with pytest.raises(KeyError, match="t=0.06"):
        monotonicity_scan(rec, (1, 1), 0.1, [0.1, 0.2])
    with pytest.raises(ValueError, match="sqrt"):
        monotonicity_scan(rec, (1, 1), 0.1, [0.1, 0.5])


def test_parabolic_density_vacuum():
    g = wave_grid()
    rs = [0.1, 0.15, 0.2]
    rec = simulate(vacuum(g), StepperConfig(g.epsilon**2 / 4), 0.05,
                   snapshot_times=[0.05 - r * r for r in rs])
    out = parabolic_density(rec, (1, 1), 0.05, rs)
    assert np.all(out["density"] == 0)


# Balance laws ---------------------------------------------------------------------


def test_global_dissipation_balance():
    g = GridSpec.from_length(2, 96, 3.0, 0.09375)
    res = []
    for div in (16, 32):
        p = EnergyBalanceProbe(None, "one")
        simulate(random_perturbation(g, 0.4, 0.4, 3), StepperConfig(g.epsilon**2 / div, order=2), 0.02, probes=[p])
        res.append(p.relative_residual())
        assert np.all(np.asarray(p.rate) <= 0)
    assert res[1] <= 5e-3
    assert math.log2(res[0] / res[1]) >= 1.9


def test_balance_vacuum_is_zero():
    g = wave_grid()
    p = EnergyBalanceProbe(energy.bump(g, (2, 2), 0.5), "bump")
    simulate(vacuum(g), StepperConfig(g.epsilon**2 / 4), 0.01, probes=[p])
    assert np.all(np.asarray(p.mass) == 0) and np.all(np.asarray(p.rate) == 0)


def test_bump_balance_second_order_in_dt():
    g = GridSpec.from_length(2, 128, 4.0, 0.1)
    f = seed_vortex_configuration(g, [((1.5 + 0.3 * g.h, 2.0), 1), ((2.5 + 0.3 * g.h, 2.0), -1)])
    chi = energy.bump(g, (1.5, 2.2), 0.4)
    res = []
    for div in (4, 8):
        p = EnergyBalanceProbe(chi, "bump")
        simulate(f, StepperConfig(g.epsilon**2 / div, order=2), 0.03, probes=[p])
        res.append(p.relative_residual(t_min=0.005))
    assert res[1] <= 0.01
    assert math.log2(res[0] / res[1]) >= 1.8


# Stress-energy ---------------------------------------------------------------------


def test_stress_tensor_closed_forms():
    g = wave_grid()
    assert np.all(stress_energy_tensor(vacuum(g)) == 0)
    A = stress_energy_tensor(plane_wave(g, (1, 0)))
    assert np.allclose(A[0, 0], -0.5) and np.allclose(A[1, 1], 0.5)
    assert np.allclose(A[0, 1], 0) and np.allclose(A[1, 0], 0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), dim=st.sampled_from([2, 3]))
def test_stress_trace_identity(seed, dim):
    # Tr A = d e - |grad u|^2 = (d - 2) e + 2 V
    g = GridSpec.from_length(dim, 48, 3.0, 0.1875)
    f = random_perturbation(g, 1.0, 0.3, seed)
    A = stress_energy_tensor(f)
    e = energy_density(f).values
    V = energy.potential(f.values, g.epsilon)
    tr = sum(A[i, i] for i in range(dim))
    assert np.allclose(tr, (dim - 2) * e + 2 * V, rtol=0, atol=1e-12 * np.max(e))
    for i in range(dim):
        for j in range(dim):
            assert np.array_equal(A[i, j], A[j, i])


def test_stress_identity_trivial_cases():
    g = wave_grid()
    X = [np.ones(g.shape), np.ones(g.shape)]
    f = vacuum(g)
    assert stress_identity_residual(f, dudt(f), X)["residual"] == 0
    f = plane_wave(g, (1, 0))
    r = stress_identity_residual(f, dudt(f), X)
    assert abs(r["stress_term"]) < 1e-12 and abs(r["transport_term"]) < 1e-12


def test_stress_identity_on_dipole():
    errs = []
    for n in (128, 256):
        g = GridSpec.from_length(2, n, 4.0, 0.1)
        f = seed_vortex_configuration(g, [((1.5, 2.0), 1), ((2.5, 2.0), -1)])
        X = gradient(g, energy.bump(g, (1.6, 2.2), 0.4))
        assert stress_identity_residual(f, dudt(f), X)["residual"] < 1e-6
        errs.append(stress_identity_residual(f, dudt(f, "explicit_fd"), X, spectral=False)["residual"])
    assert errs[1] <= 0.01
    assert math.log2(errs[0] / errs[1]) >= 1.9
