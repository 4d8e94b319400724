"""Initial-condition builders: vortex configurations, rings, plane waves, noise.

All builders are pure functions of (grid, parameters, seed).
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from .grid import ComplexField, GridSpec, fftn, ifftn
from .profile import vortex_profile

log = logging.getLogger(__name__)

_IMAGE_ROWS = 6


def _row_angle(u, v, period):
    """arg sin(pi (u + i v) / period), written to stay finite for large |v|."""
    a = np.pi * u / period
    b = np.pi * v / period
    return np.arctan2(np.cos(a) * np.tanh(b), np.sin(a))


def periodic_phase(x, y, Lx: float, Ly: float | None, vortices, rows: int = _IMAGE_ROWS):
    """Multivalued phase of a zero-net-degree set of planar point vortices.

    The phase is the argument of a product of sine rows (a truncated theta
    function), so it is exactly harmonic away from the vortices, winds by
    2*pi*l around each one and is periodic with period ``Lx`` in x. When
    ``Ly`` is given, image rows are added in y and a linear term restores
    y-periodicity; integer plane waves are then removed so the mean current
    is as small as possible.
    """
    if sum(int(l) for _, l in vortices) != 0:
        raise ValueError("net degree must be zero for a single-valued periodic phase")
    theta = np.zeros(np.broadcast(x, y).shape)
    if not vortices:
        return theta
    ms = range(-rows, rows + 1) if Ly is not None else [0]
    for (ax, ay), l in vortices:
        for m in ms:
            shift = m * Ly if Ly is not None else 0.0
            theta = theta + l * _row_angle(x - ax, y - ay - shift, Lx)
    if Ly is not None:
        # jump accumulated over one y-period: rows entering minus rows leaving
        jump = 0.0
        for (ax, ay), l in vortices:
            jump += l * (_row_angle(0.0 - ax, 0.0 - ay + (rows + 1) * Ly, Lx)
                         - _row_angle(0.0 - ax, 0.0 - ay - rows * Ly, Lx))
        jump = math.remainder(jump, 2 * math.pi)
        theta = theta - jump * y / Ly
    return theta


def _remove_mean_winding(grid: GridSpec, theta: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Subtract integer plane waves so that |mean phase gradient| <= pi/L per axis."""
    X = grid.coords()
    for ax in axes:
        d = np.angle(np.exp(1j * (np.roll(theta, -1, axis=ax) - theta)))
        winding = float(np.mean(d)) * grid.n[ax] / (2 * np.pi)
        k = round(winding)
        if k:
            theta = theta - 2 * np.pi * k * X[ax] / grid.lengths[ax]
    return theta


def vacuum(grid: GridSpec) -> ComplexField:
    return ComplexField(grid, np.ones(grid.shape, dtype=complex), 0.0)


def seed_vortex_configuration(grid: GridSpec, vortices: Sequence[tuple[Sequence[float], int]],
                              min_separation: float = 6.0) -> ComplexField:
    """Product of vortex profiles times a periodic phase with the given winding.

    ``vortices`` holds (position, degree) pairs; positions are planar. In 3D
    each vortex is a straight filament along the last axis. Cores closer than
    ``min_separation * epsilon`` set ``meta['overlap_warning']``.
    """
    vortices = [(tuple(float(c) for c in p[:2]), int(l)) for p, l in vortices]
    if any(l == 0 for _, l in vortices):
        raise ValueError("vortex degree must be nonzero")
    total = sum(l for _, l in vortices)
    if total != 0:
        raise ValueError(
            f"unbalanced total degree {total}: a periodic cell needs net degree 0"
        )
    if not vortices:
        return vacuum(grid)
    Lx, Ly = grid.lengths[0], grid.lengths[1]
    X = grid.coords()
    # planar coordinates; in 3D the last axis is added back at the end
    x, y = (X[0], X[1]) if grid.dim == 2 else (X[0][..., 0], X[1][..., 0])
    theta = np.broadcast_to(periodic_phase(x, y, Lx, Ly, vortices), grid.shape[:2])
    theta = _remove_mean_winding(
        GridSpec(2, grid.n[:2], grid.h, grid.epsilon) if grid.dim == 3 else grid,
        np.ascontiguousarray(theta), axes=(0, 1))

    amp = np.ones(grid.shape[:2])
    overlap = False
    for i, ((ax, ay), l) in enumerate(vortices):
        for (bx, by), _ in vortices[i + 1:]:
            dx = grid.min_image(np.asarray(ax - bx), 0)
            dy = grid.min_image(np.asarray(ay - by), 1)
            if math.hypot(dx, dy) < min_separation * grid.epsilon:
                overlap = True
        # nearest 3x3 periodic images keep the modulus smooth across the cell edge
        for ix in (-1, 0, 1):
            for iy in (-1, 0, 1):
                r = np.hypot(x - ax - ix * Lx, y - ay - iy * Ly) / grid.epsilon
                amp = amp * vortex_profile(l, r)
    values = amp * np.exp(1j * theta)
    if grid.dim == 3:
        values = np.broadcast_to(values[..., None], grid.shape)
    meta = {"kind": "vortices", "vortices": [[list(p), l] for p, l in vortices]}
    if overlap:
        log.warning("vortex cores closer than %g epsilon", min_separation)
        meta["overlap_warning"] = True
    return ComplexField(grid, values, 0.0, meta)


def seed_vortex_ring(grid: GridSpec, radius: float, axis: Sequence[float] = (0, 0, 1),
                     center: Sequence[float] | None = None) -> ComplexField:
    """Degree-one vortex ring of the given radius about a coordinate axis.

    Near the core the field is U_1(rho_c/eps) exp(i atan2(z, s)) with s the
    signed distance from the ring circle in the meridional plane. The phase
    carries a mirror antivortex across the axis and a sine-row product along
    the axis, which makes it smooth on the axis and periodic along it.
    """
    if grid.dim != 3:
        raise ValueError("vortex ring needs a 3D grid")
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = int(np.argmax(np.abs(axis)))
    if not np.isclose(abs(axis[k]), 1.0):
        raise ValueError("ring axis must be a coordinate axis on a periodic box")
    L = min(grid.lengths)
    if not (6 * grid.epsilon <= radius <= L / 3 + 1e-12):
        raise ValueError(
            f"ring radius {radius:g} outside [6 eps, L/3] = [{6 * grid.epsilon:g}, {L / 3:g}]"
        )
    if center is None:
        center = [0.5 * Li + 0.5 * grid.h for Li in grid.lengths]
    d = grid.displacement(center)
    others = [i for i in range(3) if i != k]
    rho = np.sqrt(d[others[0]] ** 2 + d[others[1]] ** 2)
    rho, z = np.broadcast_arrays(rho, d[k])
    rho, z = np.broadcast_to(rho, grid.shape), np.broadcast_to(z, grid.shape)
    s = rho - radius
    rc = np.hypot(s, z)
    sign = 1.0 if axis[k] > 0 else -1.0
    # (z, rho) plane: sine rows along the periodic axis coordinate z
    theta = periodic_phase(z, rho, grid.lengths[k], None,
                           [((0.0, radius), -1), ((0.0, -radius), 1)])
    values = vortex_profile(1, rc / grid.epsilon) * np.exp(1j * sign * theta)
    meta = {"kind": "ring", "radius": radius, "axis": axis.tolist(),
            "center": [float(c) for c in center]}
    return ComplexField(grid, np.ascontiguousarray(values), 0.0, meta)


def plane_wave(grid: GridSpec, modes: Sequence[int]) -> ComplexField:
    """exp(i k.x) with k_i = 2 pi modes_i / L_i (integer modes keep it periodic)."""
    phase = sum(2 * np.pi * m * x / Li for m, x, Li in zip(modes, grid.coords(), grid.lengths))
    values = np.broadcast_to(np.exp(1j * phase), grid.shape)
    return ComplexField(grid, values, 0.0, {"kind": "plane_wave", "modes": list(modes)})


def constant(grid: GridSpec, value: complex) -> ComplexField:
    return ComplexField(grid, np.full(grid.shape, value, dtype=complex), 0.0,
                        {"kind": "constant"})


def smooth_random(grid: GridSpec, correlation: float, seed: int, complex_valued: bool = True) -> np.ndarray:
    """Gaussian random field with Gaussian spectrum, scaled to unit sup norm."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(grid.shape)
    if complex_valued:
        noise = noise + 1j * rng.standard_normal(grid.shape)
    filt = np.exp(-0.5 * grid.k2 * correlation**2)
    out = ifftn(filt * fftn(noise))
    if not complex_valued:
        out = out.real
    return out / np.max(np.abs(out))


def random_phase(grid: GridSpec, amplitude: float, correlation: float, seed: int) -> ComplexField:
    """exp(i A phi) with phi a smooth real random field, sup|phi| = 1. Vortex free."""
    phi = smooth_random(grid, correlation, seed, complex_valued=False)
    return ComplexField(grid, np.exp(1j * amplitude * phi), 0.0,
                        {"kind": "random_phase", "amplitude": amplitude, "seed": seed})


def random_perturbation(grid: GridSpec, amplitude: float, correlation: float, seed: int) -> ComplexField:
    """1 + A xi with xi a smooth complex random field, sup|xi| = 1.

    Zeros (vortex pairs) can only appear once A >= 1/2 or so.
    """
    xi = smooth_random(grid, correlation, seed, complex_valued=True)
    return ComplexField(grid, 1.0 + amplitude * xi, 0.0,
                        {"kind": "random_perturbation", "amplitude": amplitude, "seed": seed})
