import io
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glflow.energy import h1_norm
from glflow.phase import phase_gradient
from glflow.grid import ComplexField, GridSpec, gradient, laplacian
from glflow.profile import radial_residual, vortex_profile
from glflow.seeds import (plane_wave, random_phase, seed_vortex_configuration, seed_vortex_ring,
                          vacuum)
from glflow.snapshot import MAGIC, SnapshotError, decode, encode, read_snapshot, write_snapshot
from glflow.vortex import detect_vortices, extract_filament, jacobian
from oracles import bvp_profile


# Grid -------------------------------------------------------------------------


def test_grid_invariants():
    g = GridSpec.from_length(2, 64, 4.0, 0.25)
    assert g.shape == (64, 64) and g.h == 4.0 / 64
    with pytest.raises(ValueError, match="even"):
        GridSpec(2, 63, 0.1, 0.5)
    with pytest.raises(ValueError, match="even"):
        GridSpec(2, 6, 0.1, 0.3)
    with pytest.raises(ValueError, match="under-resolved"):
        GridSpec(2, 64, 0.1, 0.2)
    with pytest.raises(ValueError, match="16"):
        GridSpec(2, 64, 0.1, 0.5)
    with pytest.raises(ValueError):
        GridSpec(4, 64, 0.1, 0.3)


def test_min_image_separation():
    g = GridSpec.from_length(2, 64, 4.0, 0.1875)
    assert g.separation((0.1, 0.1), (3.9, 3.9)) == pytest.approx(math.sqrt(0.08))
    assert g.separation((1, 2), (1, 2)) == 0.0
    assert g.distance((0, 0))[0, 32] == pytest.approx(2.0)


def test_field_rejects_bad_values():
    g = GridSpec.from_length(2, 48, 3.0, 0.1875)
    with pytest.raises(ValueError, match="shape"):
        ComplexField(g, np.ones((48, 8)))
    bad = np.ones((48, 48), dtype=complex)
    bad[3, 3] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        ComplexField(g, bad)
    f = vacuum(g)
    with pytest.raises(ValueError):
        f.values[0, 0] = 2


def test_spectral_calculus_on_trig_polynomial():
    g = GridSpec.from_length(2, 64, 2 * math.pi, 0.375)
    x, y = g.coords()
    v = np.sin(2 * x) * np.cos(3 * y) + 0j
    gx, gy = gradient(g, v)
    assert np.allclose(gx, 2 * np.cos(2 * x) * np.cos(3 * y), atol=1e-12)
    assert np.allclose(gy, -3 * np.sin(2 * x) * np.sin(3 * y), atol=1e-12)
    assert np.allclose(laplacian(g, v), -13 * v, atol=1e-11)
    # the difference oracle converges to the same thing at second order
    err = []
    for n in (64, 128):
        gn = GridSpec.from_length(2, n, 2 * math.pi, 0.39)
        s = np.sin(2 * gn.coords()[0]) + 0 * gn.coords()[1]
        err.append(np.max(np.abs(laplacian(gn, s, spectral=False) + 4 * s)))
    assert math.log2(err[0] / err[1]) == pytest.approx(2.0, abs=0.05)


# Vortex profile ----------------------------------------------------------------


def test_profile_boundary_values():
    assert vortex_profile(1, 0.0) == 0.0
    assert vortex_profile(1, 40.0) == pytest.approx(1.0, abs=1e-3)
    assert vortex_profile(-2, 0.0) == 0.0


@pytest.mark.parametrize("degree", [1, 2])
def test_profile_matches_collocation_oracle(degree):
    oracle = bvp_profile(degree)
    r = np.array([0.25, 0.5, 1.0, 2.0, 4.0, 8.0])
    assert np.max(np.abs(vortex_profile(degree, r) - oracle(r)[0])) < 1e-7


def test_profile_value_at_one():
    # value fixed by the collocation oracle
    assert vortex_profile(1, 1.0) == pytest.approx(0.5200517, abs=2e-7)


def test_profile_ode_residual():
    r = np.linspace(0.1, 15, 3000)
    res = radial_residual(1, r, vortex_profile(1, r), vortex_profile(1, r, 1), vortex_profile(1, r, 2))
    assert np.max(np.abs(res)) <= 1e-6


def test_profile_monotone_and_errors():
    r = np.linspace(0, 30, 5000)
    assert np.all(np.diff(vortex_profile(1, r)) >= 0)
    assert np.all(vortex_profile(3, r) < 1)
    with pytest.raises(ValueError):
        vortex_profile(0, 1.0)
    with pytest.raises(ValueError):
        vortex_profile(1, -0.1)


# Seeds ---------------------------------------------------------------------------


def test_empty_configuration_is_vacuum():
    g = GridSpec.from_length(2, 64, 4.0, 0.1875)
    f = seed_vortex_configuration(g, [])
    assert np.all(f.values == 1)


def test_unbalanced_degree_rejected():
    g = GridSpec.from_length(2, 64, 4.0, 0.1875)
    with pytest.raises(ValueError, match="unbalanced"):
        seed_vortex_configuration(g, [((2, 2), 1)])


def test_overlap_flag():
    g = GridSpec.from_length(2, 64, 4.0, 0.1875)
    f = seed_vortex_configuration(g, [((2, 2), 1), ((2.5, 2), -1)])
    assert f.meta.get("overlap_warning") is True
    f = seed_vortex_configuration(g, [((1, 2), 1), ((3, 2), -1)])
    assert "overlap_warning" not in f.meta


def test_dipole_detected():
    g = GridSpec.from_length(2, 128, 4.0, 0.1)
    c = (1.5 + 0.3 * g.h, 2.0 + 0.2 * g.h)
    pts = [(c, 1), ((c[0] + 1.0, c[1]), -1)]
    vs = detect_vortices(seed_vortex_configuration(g, pts))
    assert sorted(v.degree for v in vs) == [-1, 1]
    for (p, l) in pts:
        match = [v for v in vs if v.degree == l][0]
        assert g.separation(match.position, p) <= g.h


def test_alternating_lattice():
    g = GridSpec.from_length(2, 128, 4.0, 0.1)
    q = 1.0
    pts = [((q * (i + 0.5), q * (j + 0.5)), 1 if (i + j) % 2 == 0 else -1) for i in range(4) for j in range(4)]
    vs = detect_vortices(seed_vortex_configuration(g, pts))
    assert len(vs) == 16
    assert sum(v.degree for v in vs) == 0
    # four per L/2 x L/2 cell of the pattern
    assert sum(1 for v in vs if v.position[0] < 2 and v.position[1] < 2) == 4


def test_seeded_jacobian_mass():
    g = GridSpec.from_length(2, 128, 4.0, 0.1)
    pts = [((1.0 + 0.3 * g.h, 2.0 + 0.4 * g.h), 1), ((3.0 + 0.3 * g.h, 2.0 + 0.4 * g.h), -1)]
    jac = jacobian(seed_vortex_configuration(g, pts))
    for p, l in pts:
        assert jac.integrate(p, 5 * g.epsilon) == pytest.approx(math.pi * l, abs=0.05)


def test_seed_phase_is_harmonic_conjugate():
    """Phase gradient of a seeded dipole against the spectral stream function
    of its Jacobian, with each point source smeared into a narrow Gaussian
    (same far field). They may differ only by a constant harmonic current."""
    g = GridSpec.from_length(2, 128, 4.0, 0.125)
    off = np.array([0.3, 0.2]) * g.h
    pts = [(tuple(np.array(p) + off), l) for p, l in [((1.0, 2.0), 1), ((3.0, 2.0), -1)]]
    gp = phase_gradient(seed_vortex_configuration(g, pts))
    s = 0.05
    src = sum(l * np.exp(-g.distance(p) ** 2 / (2 * s * s)) / (s * s) for p, l in pts)
    k2 = g.k2.copy()
    k2[0, 0] = 1.0
    psi_hat = np.fft.fft2(src) / k2
    psi_hat[0, 0] = 0.0
    px, py = gradient(g, np.fft.ifft2(psi_hat).real)
    far = (g.distance(pts[0][0]) > 0.6) & (g.distance(pts[1][0]) > 0.6)
    for a, b in ((gp[0], py), (gp[1], -px)):
        d = (a - b)[far]
        assert abs(d.mean()) <= math.pi / 4.0 + 1e-9
        assert np.max(np.abs(d - d.mean())) < 1e-4


def test_ring_seed():
    g = GridSpec.from_length(3, 96, 3.0, 3 * 3.0 / 96)
    R0 = 0.75
    f = seed_vortex_ring(g, R0)
    fs = extract_filament(f)
    assert len(fs) == 1 and fs.filaments[0].closed
    assert fs.filaments[0].length == pytest.approx(2 * math.pi * R0, rel=0.05)
    c = np.array(f.meta["center"])
    v = fs.filaments[0].vertices
    radii = np.hypot(v[:, 0] - c[0], v[:, 1] - c[1])
    assert np.all(np.abs(radii - R0) <= g.h)
    assert np.all(np.abs(v[:, 2] - c[2]) <= g.h)


def test_ring_modulus_on_core_circle():
    g = GridSpec.from_length(3, 64, 2.0, 0.09375)
    R0 = 0.6
    f = seed_vortex_ring(g, R0)
    c = f.meta["center"]
    # trilinear interpolation of u (not |u|, which has a cone at the zero)
    from scipy.interpolate import RegularGridInterpolator
    ax = [np.arange(n + 1) * g.h for n in g.n]
    vals = np.pad(f.values, [(0, 1)] * 3, mode="wrap")
    interp = RegularGridInterpolator(ax, vals)
    s = np.linspace(0, 2 * math.pi, 200, endpoint=False)
    pts = np.stack([c[0] + R0 * np.cos(s), c[1] + R0 * np.sin(s), np.full_like(s, c[2])], axis=1)
    assert np.max(np.abs(interp(pts))) <= 0.05


def test_ring_bounds():
    g = GridSpec.from_length(3, 64, 2.0, 0.09375)
    with pytest.raises(ValueError, match="outside"):
        seed_vortex_ring(g, 5 * g.epsilon)
    with pytest.raises(ValueError, match="outside"):
        seed_vortex_ring(g, 0.8)
    with pytest.raises(ValueError):
        seed_vortex_ring(GridSpec.from_length(2, 64, 2.0, 0.09375), 0.6)


def test_builders_have_finite_h1_norm():
    g = GridSpec.from_length(2, 128, 4.0, 0.1)
    for f in (vacuum(g), plane_wave(g, (1, 0)), random_phase(g, 1.0, 0.4, 3),
              seed_vortex_configuration(g, [((1, 2), 1), ((3, 2), -1)])):
        assert math.isfinite(h1_norm(f))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), amp=st.floats(0.1, 3.0))
def test_builders_deterministic(seed, amp):
    g = GridSpec.from_length(2, 64, 4.0, 0.1875)
    a = random_phase(g, amp, 0.5, seed)
    b = random_phase(g, amp, 0.5, seed)
    assert np.array_equal(a.values, b.values)
    assert np.allclose(np.abs(a.values), 1.0)


# Snapshots -----------------------------------------------------------------------


def test_snapshot_roundtrip_bytes():
    g = GridSpec.from_length(2, 48, 3.0, 0.1875)
    rng = np.random.default_rng(0)
    f = ComplexField(g, rng.standard_normal((48, 48)) + 1j * rng.standard_normal((48, 48)), 0.125)
    data = encode(f)
    back = decode(data)
    assert back.values.tobytes() == f.values.tobytes()
    assert back.t == f.t and back.grid == g
    assert encode(back) == data


def test_snapshot_file_and_stream(tmp_path):
    f = plane_wave(GridSpec.from_length(3, 48, 3.0, 0.1875), (1, 0, 0))
    write_snapshot(f, tmp_path / "a.glf")
    assert read_snapshot(tmp_path / "a.glf").values.tobytes() == f.values.tobytes()
    buf = io.BytesIO()
    write_snapshot(f, buf, precision=64)
    buf.seek(0)
    back = read_snapshot(buf)
    assert np.allclose(back.values, f.values, atol=1e-7)
    assert back.grid.dim == 3


def test_snapshot_header_layout():
    g = GridSpec.from_length(2, 48, 3.0, 0.1875)
    data = encode(vacuum(g))
    assert data[:8] == MAGIC
    version, dim = struct.unpack("<IB", data[8:13])
    assert (version, dim) == (1, 2)
    assert len(data) == 8 + 5 + 16 + 25 + 48 * 48 * 16


def test_snapshot_decode_errors():
    g = GridSpec.from_length(2, 48, 3.0, 0.1875)
    data = encode(vacuum(g))
    with pytest.raises(SnapshotError, match="magic"):
        decode(b"XXXXXXXX" + data[8:])
    with pytest.raises(SnapshotError, match="version"):
        decode(data[:8] + struct.pack("<I", 2) + data[12:])
    with pytest.raises(SnapshotError, match="truncated"):
        decode(data[:-3])
    with pytest.raises(SnapshotError, match="trailing"):
        decode(data + b"\0")
    with pytest.raises(SnapshotError, match="precision"):
        decode(data[:53] + b"\x07" + data[54:])
