"""Vortex detection from discrete winding numbers, filaments, tracking, clearing-out.

A plaquette's winding is the sum of the wrapped phase increments around its
four edges divided by 2 pi, an exact integer. The Jacobian density
J = pi * w / h^2 sits at plaquette centres, so its integral over a region is
pi times the enclosed degree (the J = d(u ^ du)/2 normalization).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .energy import energy_density, local_energy, point_value
from .grid import ComplexField, GridSpec, fftn, ifftn

log = logging.getLogger(__name__)

ZERO_MODULUS = 1e-12


def _edge_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Wrapped phase increment arg(b/a) in (-pi, pi]."""
    return np.angle(b * np.conj(a))


def plaquette_winding(values: np.ndarray, ax1: int, ax2: int) -> tuple[np.ndarray, np.ndarray]:
    """Winding of every elementary square in the (ax1, ax2) plane.

    Entry [idx] belongs to the square with lowest corner idx, traversed
    counterclockwise in (ax1, ax2). Returns (integer winding, indeterminate mask).
    """
    u00 = values
    u10 = np.roll(values, -1, axis=ax1)
    u11 = np.roll(u10, -1, axis=ax2)
    u01 = np.roll(values, -1, axis=ax2)
    total = (_edge_angle(u00, u10) + _edge_angle(u10, u11)
             + _edge_angle(u11, u01) + _edge_angle(u01, u00))
    w = np.rint(total / (2 * np.pi)).astype(np.int64)
    # an exactly vanishing corner leaves the phase of two edges undefined
    small = np.abs(values) < ZERO_MODULUS
    s10 = np.roll(small, -1, axis=ax1)
    s01 = np.roll(small, -1, axis=ax2)
    s11 = np.roll(s10, -1, axis=ax2)
    bad = small | s10 | s01 | s11
    return w, bad


@dataclass(frozen=True, eq=False)
class Jacobian:
    """2D: one winding per plaquette. 3D: ``winding[a]`` holds the windings of
    faces normal to axis a, oriented by the cyclic order of the axes."""

    grid: GridSpec
    winding: np.ndarray
    indeterminate: np.ndarray

    @property
    def density(self) -> np.ndarray:
        if self.grid.dim != 2:
            raise ValueError("scalar Jacobian density only in 2D")
        return np.pi * self.winding / self.grid.h**2

    def centers(self) -> list[np.ndarray]:
        return [x + 0.5 * self.grid.h for x in self.grid.coords()]

    def integrate(self, center, radius: float) -> float:
        """Integral of J over plaquette centres within the periodic ball."""
        g = self.grid
        d = [g.min_image(c - x0, i) for i, (c, x0) in enumerate(zip(self.centers(), center))]
        mask = sum(di**2 for di in d) <= radius**2
        return float(np.pi * np.sum(np.where(mask, self.winding, 0)))


_CYCLIC = {0: (1, 2), 1: (2, 0), 2: (0, 1)}


def jacobian(field: ComplexField) -> Jacobian:
    g = field.grid
    if g.dim == 2:
        w, bad = plaquette_winding(field.values, 0, 1)
        return Jacobian(g, w, bad)
    ws, bads = [], []
    for a in range(3):
        b, c = _CYCLIC[a]
        w, bad = plaquette_winding(field.values, b, c)
        ws.append(w)
        bads.append(bad)
    return Jacobian(g, np.stack(ws), np.stack(bads))


# 2D point vortices ------------------------------------------------------------


@dataclass
class VortexRecord:
    position: tuple
    degree: int
    t: float
    sigma: float
    min_modulus: float


def _periodic_labels(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connected components on the torus."""
    lab, n = ndimage.label(mask, structure=np.ones((3,) * mask.ndim))
    if n == 0:
        return lab, 0
    parent = list(range(n + 1))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for ax in range(mask.ndim):
        first = np.take(lab, 0, axis=ax)
        last = np.take(lab, -1, axis=ax)
        for shift in (-1, 0, 1):
            other = np.roll(first, shift, axis=0) if first.ndim else first
            pairs = np.stack([last.ravel(), other.ravel()], axis=1)
            for a, b in pairs[(pairs[:, 0] > 0) & (pairs[:, 1] > 0)]:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(n + 1)])
    lab = roots[lab]
    uniq = np.unique(lab[lab > 0])
    remap = np.zeros(n + 1, dtype=np.int64)
    remap[uniq] = np.arange(1, uniq.size + 1)
    return remap[lab], int(uniq.size)


def _bilinear_zero(c00, c10, c01, c11, guess=(0.5, 0.5)):
    """Zero of the bilinear interpolant of complex corner values in [0,1]^2."""
    s, t = guess
    for _ in range(30):
        f = c00 * (1 - s) * (1 - t) + c10 * s * (1 - t) + c01 * (1 - s) * t + c11 * s * t
        fs = (c10 - c00) * (1 - t) + (c11 - c01) * t
        ft = (c01 - c00) * (1 - s) + (c11 - c10) * s
        J = np.array([[fs.real, ft.real], [fs.imag, ft.imag]])
        try:
            ds, dt = np.linalg.solve(J, [-f.real, -f.imag])
        except np.linalg.LinAlgError:
            return None
        s, t = s + ds, t + dt
        if abs(ds) + abs(dt) < 1e-13:
            break
    if -0.05 <= s <= 1.05 and -0.05 <= t <= 1.05:
        return float(np.clip(s, 0, 1)), float(np.clip(t, 0, 1))
    return None


def _loop_winding(values: np.ndarray, i0: int, i1: int, j0: int, j1: int) -> int:
    """Winding along the boundary of the node box [i0, i1] x [j0, j1] (periodic indices)."""
    n0, n1 = values.shape
    path = ([(i, j0) for i in range(i0, i1)] + [(i1, j) for j in range(j0, j1)]
            + [(i, j1) for i in range(i1, i0, -1)] + [(i0, j) for j in range(j1, j0, -1)])
    z = np.array([values[i % n0, j % n1] for i, j in path] + [values[i0 % n0, j0 % n1]])
    return int(np.rint(np.sum(np.angle(z[1:] * np.conj(z[:-1]))) / (2 * np.pi)))


def _unwrap_indices(idx: np.ndarray, n: int) -> np.ndarray:
    """Shift periodic indices of one cluster so they are contiguous."""
    idx = np.sort(np.unique(idx))
    if idx.size == 0:
        return idx
    gaps = np.diff(np.concatenate([idx, [idx[0] + n]]))
    cut = int(np.argmax(gaps))
    start = idx[(cut + 1) % idx.size]
    return (idx - start) % n + start


def detect_vortices(field: ComplexField, r_mass: float | None = None,
                    merge_distance: float | None = None) -> list[VortexRecord]:
    """One record per cluster of nonzero (or indeterminate) plaquettes."""
    g = field.grid
    if g.dim != 2:
        raise ValueError("detect_vortices needs a 2D field")
    eps = g.epsilon
    r_mass = 10 * eps if r_mass is None else r_mass
    merge_distance = 4 * eps if merge_distance is None else merge_distance
    jac = jacobian(field)
    mask = (jac.winding != 0) | jac.indeterminate
    lab, n = _periodic_labels(mask)
    u = field.values
    mod = np.abs(u)
    n0, n1 = g.n
    found = []
    for k in range(1, n + 1):
        ii, jj = np.nonzero(lab == k)
        if jac.indeterminate[ii, jj].any():
            ui = _unwrap_indices(ii, n0)
            uj = _unwrap_indices(jj, n1)
            degree = _loop_winding(u, int(ui.min()) - 1, int(ui.max()) + 2, int(uj.min()) - 1, int(uj.max()) + 2)
        else:
            degree = int(np.sum(jac.winding[ii, jj]))
        # plaquette whose corners carry the smallest modulus
        corner = (mod[ii, jj] + mod[(ii + 1) % n0, jj] + mod[ii, (jj + 1) % n1]
                  + mod[(ii + 1) % n0, (jj + 1) % n1])
        p = int(np.argmin(np.where(jac.winding[ii, jj] != 0, corner, corner + 10)))
        i, j = int(ii[p]), int(jj[p])
        zero = _bilinear_zero(u[i, j], u[(i + 1) % n0, j], u[i, (j + 1) % n1], u[(i + 1) % n0, (j + 1) % n1])
        s, t = zero if zero is not None else (0.5, 0.5)
        pos = np.array([(i + s) * g.h, (j + t) * g.h])
        cmin = float(min(mod[i, j], mod[(i + 1) % n0, j], mod[i, (j + 1) % n1], mod[(i + 1) % n0, (j + 1) % n1]))
        found.append([pos, degree, cmin])

    # merge clusters closer than merge_distance
    merged = True
    while merged:
        merged = False
        for a in range(len(found)):
            for b in range(a + 1, len(found)):
                d = [g.min_image(np.asarray(found[a][0][i] - found[b][0][i]), i) for i in range(2)]
                if math.hypot(*d) < merge_distance:
                    log.warning("merging vortex clusters %.3g apart", math.hypot(*d))
                    pa = found[a][0]
                    found[a] = [np.mod(pa - 0.5 * np.array(d, dtype=float), g.lengths),
                                found[a][1] + found[b][1], min(found[a][2], found[b][2])]
                    del found[b]
                    merged = True
                    break
            if merged:
                break

    dens = energy_density(field) if 3 * r_mass <= min(g.lengths) / 2 else None
    out = []
    for pos, degree, cmin in found:
        if degree == 0:
            continue
        sigma = float("nan")
        if dens is not None:
            sigma = vortex_mass(dens, pos, r_mass)
        out.append(VortexRecord(tuple(float(c) for c in pos), int(degree), field.t, sigma, cmin))
    out.sort(key=lambda r: r.position)
    return out


def vortex_mass(dens, position, r_mass: float) -> float:
    """Ball energy / |ln eps| minus the diffuse part estimated on [2r, 3r]."""
    g = dens.grid
    r = g.distance(position)
    ring = (r >= 2 * r_mass) & (r <= 3 * r_mass)
    baseline = float(np.median(dens.values[ring])) * math.pi * r_mass**2
    return (local_energy(dens, position, r_mass) - baseline) / g.log_eps


# 3D filaments -----------------------------------------------------------------


@dataclass
class Filament:
    vertices: np.ndarray
    closed: bool
    degree: int = 1
    degraded: bool = False
    period: tuple | None = None

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        """Segment midpoints and edge vectors.

        With ``period`` set, edges are min-image differences, so a loop that
        winds around the box closes with a short edge.
        """
        v = self.vertices
        nxt = np.roll(v, -1, axis=0) if self.closed else v[1:]
        cur = v if self.closed else v[:-1]
        e = nxt - cur
        if self.period is not None:
            L = np.asarray(self.period, dtype=float)
            e = e - L * np.round(e / L)
        return cur + 0.5 * e, e

    @property
    def length(self) -> float:
        _, e = self.segments()
        return float(np.sum(np.linalg.norm(e, axis=1)))


@dataclass
class FilamentSet:
    filaments: list = dc_field(default_factory=list)
    t: float = 0.0

    @property
    def degraded(self) -> bool:
        return any(f.degraded for f in self.filaments)

    def __len__(self):
        return len(self.filaments)


def _face_point(values, a, idx, g):
    """Crossing point of the vortex line on the face normal to ``a`` at ``idx``."""
    b, c = _CYCLIC[a]
    n = g.n
    i0 = list(idx)
    i_b = list(idx); i_b[b] = (i_b[b] + 1) % n[b]
    i_c = list(idx); i_c[c] = (i_c[c] + 1) % n[c]
    i_bc = list(i_b); i_bc[c] = (i_bc[c] + 1) % n[c]
    z = _bilinear_zero(values[tuple(i0)], values[tuple(i_b)], values[tuple(i_c)], values[tuple(i_bc)])
    s, t = z if z is not None else (0.5, 0.5)
    p = np.array(idx, dtype=float) * g.h
    p[b] += s * g.h
    p[c] += t * g.h
    return p


def extract_filament(field: ComplexField, smooth: bool = True) -> FilamentSet:
    """Link pierced faces cell to cell into polylines.

    A face with winding w normal to axis a carries |w| units of vortex line
    from the cell below it to the cell above it (reversed when w < 0).
    Vertices are the zero-crossing points on pierced faces; one pass of
    (1/4, 1/2, 1/4) averaging follows.
    """
    g = field.grid
    if g.dim != 3:
        raise ValueError("extract_filament needs a 3D field")
    jac = jacobian(field)
    out_edges: dict = {}
    in_count: dict = {}
    for a in range(3):
        w = jac.winding[a]
        for idx in zip(*np.nonzero(w)):
            idx = tuple(int(v) for v in idx)
            upper = list(idx)
            lower = list(idx)
            lower[a] = (lower[a] - 1) % g.n[a]
            src, dst = (tuple(lower), tuple(upper)) if w[idx] > 0 else (tuple(upper), tuple(lower))
            for _ in range(abs(int(w[idx]))):
                out_edges.setdefault(src, []).append((dst, a, idx))
                in_count[dst] = in_count.get(dst, 0) + 1

    used = set()
    filaments = []
    starts = sorted(out_edges)
    for s in starts:
        while any((s, k) not in used for k in range(len(out_edges[s]))):
            pts = []
            cell = s
            closed = False
            while True:
                edges = out_edges.get(cell, [])
                k = next((k for k in range(len(edges)) if (cell, k) not in used), None)
                if k is None:
                    break
                used.add((cell, k))
                dst, a, face = edges[k]
                pts.append(_face_point(field.values, a, face, g))
                cell = dst
                if cell == s:
                    closed = True
                    break
            if len(pts) == 0:
                break
            v = np.array(pts)
            # make the polyline continuous across the periodic box
            for i in range(1, len(v)):
                d = v[i] - v[i - 1]
                v[i] = v[i - 1] + np.array([g.min_image(np.asarray(d[k]), k) for k in range(3)])
            if smooth and len(v) >= 3:
                if closed:
                    L = np.asarray(g.lengths, dtype=float)
                    prev = np.roll(v, 1, axis=0) - v
                    nxt = np.roll(v, -1, axis=0) - v
                    v = v + 0.25 * ((prev - L * np.round(prev / L)) + (nxt - L * np.round(nxt / L)))
                else:
                    v[1:-1] = 0.25 * v[:-2] + 0.5 * v[1:-1] + 0.25 * v[2:]
            filaments.append(Filament(v, closed, 1, degraded=not closed, period=tuple(g.lengths)))
    if any(not f.closed for f in filaments):
        log.warning("open filament: extraction degraded")
    return FilamentSet(filaments, field.t)


# Tracking ------------------------------------------------------------------------


@dataclass
class VortexTrack:
    track_id: int
    degree: int
    records: list = dc_field(default_factory=list)
    death: float | None = None

    @property
    def birth(self) -> float:
        return self.records[0].t

    def positions(self) -> np.ndarray:
        return np.array([r.position for r in self.records])

    def max_displacement(self, grid: GridSpec) -> float:
        p = self.positions()
        d = [grid.min_image(p[:, i] - p[0, i], i) for i in range(p.shape[1])]
        return float(np.max(np.sqrt(sum(di**2 for di in d))))


def track(frames: Sequence[Sequence[VortexRecord]], grid: GridSpec, gate: float | None = None) -> list[VortexTrack]:
    """Greedy nearest-neighbour linking of time-ordered record lists."""
    gate = 3 * grid.h if gate is None else gate
    tracks: list[VortexTrack] = []
    active: list[VortexTrack] = []
    events = []

    def dist(p, q):
        return math.sqrt(sum(grid.min_image(np.asarray(a - b), i) ** 2 for i, (a, b) in enumerate(zip(p, q))))

    for frame in frames:
        pairs = []
        for ti, tr in enumerate(active):
            last = tr.records[-1]
            for ri, rec in enumerate(frame):
                d = dist(last.position, rec.position)
                if d <= gate:
                    pairs.append((d, tr.degree != rec.degree, ti, ri))
        # prefer degree matches when two candidates are within 10% in distance
        pairs.sort(key=lambda p: (p[0], p[1]))
        for k in range(len(pairs) - 1):
            a, b = pairs[k], pairs[k + 1]
            if a[2] == b[2] and b[0] <= 1.1 * a[0] and a[1] and not b[1]:
                log.info("ambiguous match resolved by degree")
                pairs[k], pairs[k + 1] = b, a
        taken_t, taken_r = set(), set()
        for d, mismatch, ti, ri in pairs:
            if ti in taken_t or ri in taken_r or mismatch:
                continue
            active[ti].records.append(frame[ri])
            taken_t.add(ti)
            taken_r.add(ri)
        t_now = frame[0].t if frame else None
        still = []
        for ti, tr in enumerate(active):
            if ti in taken_t:
                still.append(tr)
            else:
                tr.death = tr.records[-1].t if t_now is None else t_now
                events.append(("end", tr.track_id, tr.death))
        for ri, rec in enumerate(frame):
            if ri not in taken_r:
                tr = VortexTrack(len(tracks), rec.degree, [rec])
                tracks.append(tr)
                still.append(tr)
                if tracks[0] is not tr or len(tracks) > 1:
                    events.append(("start", tr.track_id, rec.t))
        active = still
    for kind, tid, t in events:
        log.info("track %d %s at t=%.6g", tid, kind, t)
    return tracks


def write_tracks_csv(tracks: Sequence[VortexTrack], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        dim = len(tracks[0].records[0].position) if tracks and tracks[0].records else 2
        w.writerow(["track_id", "t", "x", "y", "z"][: 2 + dim] + ["degree", "sigma", "min_modulus"])
        for tr in tracks:
            for r in tr.records:
                w.writerow([tr.track_id, f"{r.t:.17g}", *(f"{c:.17g}" for c in r.position),
                            r.degree, f"{r.sigma:.17g}", f"{r.min_modulus:.17g}"])


class VortexProbe:
    """Runs detect_vortices on every ``every``-th sample."""

    def __init__(self, every: int = 1, r_mass: float | None = None):
        self.every = every
        self.r_mass = r_mass
        self.frames: list[list[VortexRecord]] = []
        self._n = 0

    def __call__(self, t, field, du):
        if self._n % self.every == 0:
            self.frames.append(detect_vortices(field, r_mass=self.r_mass))
        self._n += 1


class FilamentProbe:
    """Runs extract_filament on every ``every``-th sample (3D runs)."""

    def __init__(self, every: int = 1, smooth: bool = True):
        self.every = every
        self.smooth = smooth
        self.frames: list[FilamentSet] = []
        self._n = 0

    def __call__(self, t, field, du):
        if self._n % self.every == 0:
            self.frames.append(extract_filament(field, smooth=self.smooth))
        self._n += 1


# Clearing-out ---------------------------------------------------------------------


@dataclass
class ClearingOutResult:
    eta: float
    min_modulus: float
    T0: float
    window: tuple
    verdict: str
    core_persistent: bool | None = None


def clearing_out_eta(field: ComplexField, x_T, R: float, lam: float = 4.0) -> float:
    """R^(2-d) * energy in B(x_T, lam R) / |ln eps|."""
    g = field.grid
    return R ** (2 - g.dim) * local_energy(field, x_T, lam * R) / g.log_eps


def waiting_time(dim: int, eps: float, eta: float, eta_cfg: float, R: float) -> float:
    if dim == 2:
        return 2 * eps
    return max(2 * eps, (eta / eta_cfg) ** (2 / (dim - 2)) * R * R)


class ClearingOutProbe:
    """Energy at time T and the smallest |u| on B(x_T, R/2) over the later window.

    With ``track_core`` every window sample also runs detect_vortices and
    records whether a vortex of nonzero degree sits within R/2 of x_T.
    """

    def __init__(self, x_T, T: float, R: float, lam: float = 4.0, eta_cfg: float | None = None,
                 track_core: bool = False):
        self.x_T = tuple(float(c) for c in x_T)
        self.track_core = track_core
        self.core_seen: list[bool] = []
        self.T = float(T)
        self.R = float(R)
        self.lam = lam
        self.eta_cfg = eta_cfg
        self.eta = None
        self.min_modulus = math.inf
        self.T0 = None
        self.samples = 0
        self._mask = None

    def __call__(self, t, field, du):
        g = field.grid
        if self.eta is None and abs(t - self.T) <= 1e-12 * max(1, self.T):
            self.eta = clearing_out_eta(field, self.x_T, self.R, self.lam)
            cfg = self.eta_cfg if self.eta_cfg else max(self.eta, 1e-300)
            self.T0 = waiting_time(g.dim, g.epsilon, self.eta, cfg, self.R)
        if self.eta is None:
            return
        if self.T + self.T0 - 1e-12 <= t <= self.T + self.R**2 + 1e-12:
            if self._mask is None:
                self._mask = g.distance(self.x_T) <= self.R / 2
            self.min_modulus = min(self.min_modulus, float(np.min(np.abs(field.values[self._mask]))))
            self.samples += 1
            if self.track_core:
                self.core_seen.append(any(v.degree != 0 and g.separation(v.position, self.x_T) <= self.R / 2
                                          for v in detect_vortices(field)))

    def result(self, sigma: float) -> ClearingOutResult:
        if self.eta is None or self.samples == 0:
            raise ValueError("run does not cover [T, T + R^2]")
        window = (self.T + self.T0, self.T + self.R**2)
        ok = self.min_modulus >= 1 - sigma
        if self.eta_cfg is not None and self.eta > self.eta_cfg:
            verdict = "NOT-APPLICABLE"
        else:
            verdict = "PASS" if ok else "FAIL"
        core = all(self.core_seen) if self.track_core else None
        return ClearingOutResult(self.eta, self.min_modulus, self.T0, window, verdict, core)


def clearing_out_test(run, x_T, T: float, R: float, sigma: float, lam: float = 4.0,
                      eta_cfg: float | None = None) -> ClearingOutResult:
    """Clearing-out check from a run.

    Uses a matching ClearingOutProbe if the run carried one, otherwise the
    stored snapshots inside the window (at least its two end points).
    """
    g = run.grid
    if not math.sqrt(2 * g.epsilon) - 1e-12 <= R <= 1 + 1e-12:
        raise ValueError(f"R={R:g} outside [sqrt(2 eps), 1]")
    if run.t_end < T + R * R - 1e-12:
        raise ValueError(f"run ends at {run.t_end:g} before T + R^2 = {T + R * R:g}")
    try:
        p = run.probe(ClearingOutProbe, x_T=tuple(float(c) for c in x_T), T=float(T), R=float(R))
        return p.result(sigma)
    except KeyError:
        pass
    eta = clearing_out_eta(run.snapshot(T), x_T, R, lam)
    T0 = waiting_time(g.dim, g.epsilon, eta, eta_cfg or max(eta, 1e-300), R)
    times = [t for t in run.snapshots if T + T0 - 1e-12 <= t <= T + R * R + 1e-12]
    if len(times) < 2:
        raise ValueError("run coverage insufficient: need snapshots across [T + T0, T + R^2]")
    mask = g.distance(x_T) <= R / 2
    mn = min(float(np.min(np.abs(run.snapshots[t].values[mask]))) for t in times)
    if eta_cfg is not None and eta > eta_cfg:
        verdict = "NOT-APPLICABLE"
    else:
        verdict = "PASS" if mn >= 1 - sigma else "FAIL"
    return ClearingOutResult(eta, mn, T0, (T + T0, T + R * R), verdict)


def jacobian_concentration_check(field: ComplexField, phi: np.ndarray | Callable) -> dict:
    """|int J phi - pi sum l_i phi(a_i)| with (a_i, l_i) from detect_vortices.

    ``phi`` is a callable on coordinates or a real nodal array (then sampled
    at plaquette centres and vortex positions by trigonometric interpolation).
    """
    g = field.grid
    jac = jacobian(field)
    if callable(phi):
        phi_c = phi(*jac.centers())
        phi_at = lambda p: float(phi(*p))  # noqa: E731
        sup = float(np.max(np.abs(phi(*g.coords()))))
    else:
        arr = np.asarray(phi, dtype=float)
        shift = np.exp(1j * sum(k * 0.5 * g.h for k in g.wavenumbers))
        phi_c = ifftn(fftn(arr) * shift).real
        phi_at = lambda p: point_value(g, arr, p)  # noqa: E731
        sup = float(np.max(np.abs(arr)))
    integral = float(np.sum(jac.density * np.broadcast_to(phi_c, g.shape))) * g.cell_volume
    vort = detect_vortices(field)
    point = math.pi * sum(v.degree * phi_at(v.position) for v in vort)
    bound = sup * energy_density(field).total / g.log_eps
    return {"integral": integral, "point_sum": point, "residual": abs(integral - point), "bound_proxy": bound}
