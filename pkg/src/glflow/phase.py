"""Supercurrent splitting and the caloric phase away from vortices.

The supercurrent j = Im(conj(u) grad u) splits on the 2D torus as

    j = grad phi + perp grad psi + c,     perp grad = (-d_y, d_x),

with c the mean current. In Fourier space this is exact for every nonzero
wavenumber, so the reconstruction residual is roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import expm_multiply, spsolve

from .energy import energy_density
from .grid import ComplexField, GridSpec, fftn, gradient, ifftn
from .vortex import detect_vortices


@dataclass(frozen=True, eq=False)
class HodgeSplit:
    grid: GridSpec
    phi: np.ndarray
    psi: np.ndarray
    harmonic: tuple
    residual: float
    current: tuple

    @property
    def rotational_energy(self) -> float:
        """Integral of |grad psi|^2."""
        g = gradient(self.grid, self.psi)
        return float(np.sum(g[0] ** 2 + g[1] ** 2)) * self.grid.cell_volume


def supercurrent(field: ComplexField) -> list[np.ndarray]:
    grads = gradient(field.grid, field.values)
    u = field.values
    return [(u.real * gi.imag - u.imag * gi.real) for gi in grads]


def hodge_decompose(field: ComplexField) -> HodgeSplit:
    g = field.grid
    if g.dim != 2:
        raise ValueError("hodge_decompose needs a 2D field")
    deg = sum(v.degree for v in detect_vortices(field))
    if deg != 0:
        raise ValueError(f"total degree {deg} != 0: no single-valued splitting on the torus")
    j = supercurrent(field)
    kx, ky = (np.broadcast_to(k, g.shape) for k in g.wavenumbers)
    k2 = kx**2 + ky**2
    jx, jy = fftn(j[0]), fftn(j[1])
    nz = k2 > 0
    inv = np.where(nz, 1.0 / np.where(nz, k2, 1.0), 0.0)
    phi_hat = -1j * (kx * jx + ky * jy) * inv
    psi_hat = -1j * (kx * jy - ky * jx) * inv
    harmonic = (float(jx[0, 0].real) / jx.size, float(jy[0, 0].real) / jy.size)
    rec_x = 1j * kx * phi_hat - 1j * ky * psi_hat
    rec_y = 1j * ky * phi_hat + 1j * kx * psi_hat
    rec_x[0, 0] += harmonic[0] * jx.size
    rec_y[0, 0] += harmonic[1] * jy.size
    rx = ifftn(rec_x).real - j[0]
    ry = ifftn(rec_y).real - j[1]
    norm = math.sqrt(float(np.sum(j[0] ** 2 + j[1] ** 2)))
    err = math.sqrt(float(np.sum(rx**2 + ry**2)))
    residual = err / norm if norm > 0 else err
    return HodgeSplit(g, ifftn(phi_hat).real, ifftn(psi_hat).real, harmonic, residual, tuple(j))


# Phase reconstruction ----------------------------------------------------------


def phase_gradient(field: ComplexField) -> list[np.ndarray]:
    """grad of the phase, j / |u|^2 (needs |u| bounded away from 0)."""
    m2 = np.abs(field.values) ** 2
    return [c / m2 for c in supercurrent(field)]


def global_phase(field: ComplexField) -> tuple[np.ndarray, np.ndarray]:
    """Phase of a vortex-free field on the whole torus.

    Returns (periodic part, mean gradient): phi = periodic + mean . x. The
    periodic part is the least-squares potential of j/|u|^2.
    """
    g = field.grid
    gp = phase_gradient(field)
    mean = np.array([float(np.mean(c)) for c in gp])
    div_hat = sum(D * fftn(c) for D, c in zip(g.derivative_symbols, gp))
    D2 = sum(np.abs(D) ** 2 for D in g.derivative_symbols)
    nz = D2 > 0
    per_hat = np.where(nz, -div_hat / np.where(nz, D2, 1.0), 0.0)
    periodic = ifftn(per_hat).real
    return periodic, mean


def unwrap_region(values: np.ndarray, region: np.ndarray) -> np.ndarray:
    """Integrate wrapped phase differences along a BFS spanning tree of the region."""
    idx = -np.ones(region.shape, dtype=np.int64)
    nodes = np.argwhere(region)
    idx[tuple(nodes.T)] = np.arange(len(nodes))
    rows, cols = [], []
    for ax in range(region.ndim):
        nb = nodes.copy()
        nb[:, ax] += 1
        ok = nb[:, ax] < region.shape[ax]
        a = idx[tuple(nodes[ok].T)]
        b = idx[tuple(nb[ok].T)]
        keep = b >= 0
        rows.append(a[keep])
        cols.append(b[keep])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    adj = sparse.coo_matrix((np.ones(r.size), (r, c)), shape=(len(nodes),) * 2)
    adj = (adj + adj.T).tocsr()
    order, pred = csgraph.breadth_first_order(adj, 0, directed=False, return_predecessors=True)
    z = values[tuple(nodes.T)]
    phase = np.zeros(len(nodes))
    phase[0] = np.angle(z[0])
    for v in order[1:]:
        p = pred[v]
        phase[v] = phase[p] + np.angle(z[v] * np.conj(z[p]))
    out = np.full(region.shape, np.nan)
    out[tuple(nodes.T)] = phase
    return out


def check_simply_connected(region: np.ndarray) -> None:
    lab, n = ndimage.label(region)
    if n != 1:
        raise ValueError(f"region has {n} components; need exactly one")
    edge = np.zeros_like(region)
    for ax in range(region.ndim):
        sl = [slice(None)] * region.ndim
        sl[ax] = 0
        edge[tuple(sl)] = True
        sl[ax] = -1
        edge[tuple(sl)] = True
    if np.any(region & edge):
        raise ValueError("region touches the box boundary; use region=None for the whole torus")
    comp, m = ndimage.label(~region, structure=np.ones((3,) * region.ndim))
    if m > 1:
        holes = np.argwhere((comp > 0) & (comp != comp[tuple([0] * region.ndim)]))
        raise ValueError(f"region is not simply connected; hole cells e.g. {holes[:5].tolist()}")


def _dirichlet_laplacian(grid: GridSpec, region: np.ndarray):
    """5/7-point Laplacian on region nodes; neighbours outside are boundary data."""
    nodes = np.argwhere(region)
    idx = -np.ones(region.shape, dtype=np.int64)
    idx[tuple(nodes.T)] = np.arange(len(nodes))
    n = len(nodes)
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.full(n, -2.0 * grid.dim)]
    bnd_rows, bnd_nodes = [], []
    for ax in range(grid.dim):
        for s in (-1, 1):
            nb = nodes.copy()
            nb[:, ax] = (nb[:, ax] + s) % region.shape[ax]
            j = idx[tuple(nb.T)]
            inside = j >= 0
            rows.append(np.arange(n)[inside])
            cols.append(j[inside])
            vals.append(np.ones(int(inside.sum())))
            bnd_rows.append(np.arange(n)[~inside])
            bnd_nodes.append(nb[~inside])
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return A / grid.h**2, nodes, np.concatenate(bnd_rows), np.concatenate(bnd_nodes)


@dataclass
class PhaseReport:
    region: np.ndarray
    phi: np.ndarray
    Phi: np.ndarray
    kappa: np.ndarray
    kappa_sup: float
    energy_sup: float
    gradient_gap_sup: float
    t0: float
    t1: float

    @property
    def kappa_ratio(self) -> float:
        return self.kappa_sup / self.energy_sup if self.energy_sup > 0 else 0.0


def extract_heat_phase(run, t0: float, t1: float, region: np.ndarray | None = None,
                       sigma: float = 0.5) -> PhaseReport:
    """Heat-evolve the phase of the slice at ``t0`` to ``t1`` and split the energy there.

    kappa = e - |grad Phi|^2 / 2, so that kappa -> 0 when u = exp(i Phi) with
    Phi caloric. ``region=None`` means the whole torus (vortex-free runs); a
    mask must be simply connected and is handled with its boundary values
    frozen to the harmonic extension of the initial phase.
    """
    if not 0 < sigma <= 0.5:
        raise ValueError("sigma must lie in (0, 1/2]")
    f0, f1 = run.snapshot(t0), run.snapshot(t1)
    g = f0.grid
    full = np.ones(g.shape, dtype=bool) if region is None else np.asarray(region, dtype=bool)
    for f in (f0, f1):
        low = full & (np.abs(f.values) < 1 - sigma)
        if low.any():
            raise ValueError(f"|u| < 1 - sigma at t={f.t:g} in cells {np.argwhere(low)[:5].tolist()}")
    tau = t1 - t0
    dens = energy_density(f1).values
    if region is None:
        periodic, mean = global_phase(f0)
        X = g.coords()
        phi = periodic + sum(m * x for m, x in zip(mean, X))
        heat = np.exp(-g.k2 * tau)
        Phi_per = ifftn(heat * fftn(periodic)).real
        Phi = Phi_per + sum(m * x for m, x in zip(mean, X))
        gP = [gp + m for gp, m in zip(gradient(g, Phi_per), mean)]
        per1, mean1 = global_phase(f1)
        gphi = [gp + m for gp, m in zip(gradient(g, per1), mean1)]
        kappa = dens - 0.5 * sum(c**2 for c in gP)
        gap = np.sqrt(sum((a - b) ** 2 for a, b in zip(gphi, gP)))
        mask = full
    else:
        check_simply_connected(full)
        phi = unwrap_region(f0.values, full)
        A, nodes, brow, bnodes = _dirichlet_laplacian(g, full)
        # boundary data: phase of the exterior neighbour, continued from its interior partner
        inner = phi[tuple(nodes[brow].T)]
        zb = f0.values[tuple(bnodes.T)]
        zi = f0.values[tuple(nodes[brow].T)]
        bval = inner + np.angle(zb * np.conj(zi))
        rhs = np.zeros(len(nodes))
        np.add.at(rhs, brow, bval / g.h**2)
        harm = spsolve(A.tocsc(), -rhs)
        start = phi[tuple(nodes.T)] - harm
        evolved = harm + expm_multiply(A * tau, start)
        Phi = np.full(g.shape, np.nan)
        Phi[tuple(nodes.T)] = evolved
        interior = ndimage.binary_erosion(full, iterations=2)
        gP = np.gradient(np.where(full, Phi, 0.0), g.h)
        phi1 = unwrap_region(f1.values, full)
        gphi = np.gradient(np.where(full, phi1, 0.0), g.h)
        kappa = np.where(interior, dens - 0.5 * sum(c**2 for c in gP), np.nan)
        gap = np.where(interior, np.sqrt(sum((a - b) ** 2 for a, b in zip(gphi, gP))), np.nan)
        mask = interior
    ksup = float(np.nanmax(np.abs(np.where(mask, kappa, np.nan))))
    esup = float(np.max(dens[mask]))
    return PhaseReport(mask, phi, Phi, kappa, ksup, esup, float(np.nanmax(np.where(mask, gap, np.nan))), t0, t1)


def caloric_defect(field: ComplexField, dudt: np.ndarray) -> float:
    """||phi_t - Lap phi||_2 / ||Lap phi||_2 for a vortex-free field."""
    g = field.grid
    m2 = np.abs(field.values) ** 2
    phi_t = (field.values.real * dudt.imag - field.values.imag * dudt.real) / m2
    gp = phase_gradient(field)
    lap = sum(gradient(g, c)[i] for i, c in enumerate(gp))
    den = math.sqrt(float(np.sum(lap**2)))
    return math.sqrt(float(np.sum((phi_t - lap) ** 2))) / den if den > 0 else 0.0


@dataclass
class ModulusReport:
    epsilon: float
    deficit_sup: float
    grad_phase_sup: float
    bound: float
    C: float
    passed: bool

    @property
    def margin(self) -> float:
        return self.bound - self.deficit_sup


def modulus_ratio(field: ComplexField, region: np.ndarray | None = None, shrink: int = 2) -> tuple[float, float, float]:
    """(sup(1 - |u|), sup|grad phi|, ratio to eps^2 (sup|grad phi| + |ln eps|)) on the shrunk region."""
    g = field.grid
    mod = np.abs(field.values)
    mask = np.ones(g.shape, dtype=bool) if region is None else ndimage.binary_erosion(region, iterations=shrink)
    if np.any(mod[mask] < 0.5):
        raise ValueError("|u| < 1/2 inside the region")
    gp = phase_gradient(field)
    gsup = float(np.max(np.sqrt(sum(c**2 for c in gp))[mask]))
    deficit = float(max(0.0, np.max(1 - mod[mask])))
    scale = g.epsilon**2 * (gsup + g.log_eps)
    return deficit, gsup, deficit / scale


def modulus_asymptotics_check(fields, region=None, safety: float = 2.0) -> list[ModulusReport]:
    """1 - |u| <= C eps^2 (sup|grad phi| + |ln eps|) across an eps sweep.

    ``fields`` are snapshots ordered from coarsest to finest eps. C is fitted
    on the first (times ``safety``) and then frozen for the others.
    """
    fields = list(fields)
    if not fields:
        return []
    regions = region if isinstance(region, (list, tuple)) else [region] * len(fields)
    stats = [modulus_ratio(f, r) for f, r in zip(fields, regions)]
    C = safety * stats[0][2] if stats[0][2] > 0 else 0.0
    out = []
    for f, (deficit, gsup, _) in zip(fields, stats):
        eps = f.grid.epsilon
        bound = C * eps**2 * (gsup + f.grid.log_eps)
        out.append(ModulusReport(eps, deficit, gsup, bound, C, deficit <= bound + 1e-15))
    return out
