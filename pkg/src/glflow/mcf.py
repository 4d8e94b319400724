"""Curve-shortening references for vortex filaments.

Two independent oracles: the closed-form shrinking circle, and an explicit
parametric integrator moving each polyline vertex by the discrete curvature
vector. Comparison helpers measure extracted filaments against either, and a
discrete Brakke check tests the sub-solution inequality on filament data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

LINE_DENSITY = math.pi
MIN_VERTICES = 32


def circle_radius(R0: float, t: float) -> float:
    if R0 <= 0:
        raise ValueError("R0 must be positive")
    t_c = 0.5 * R0 * R0
    if t < 0 or t > t_c * (1 + 1e-12):
        raise ValueError(f"t={t} outside [0, {t_c}] (collapse at R0^2/2)")
    return math.sqrt(max(R0 * R0 - 2.0 * t, 0.0))


# Curve state and integrator --------------------------------------------------------


def _edges(v: np.ndarray, closed: bool) -> np.ndarray:
    nxt = np.roll(v, -1, axis=0) if closed else v[1:]
    cur = v if closed else v[:-1]
    return nxt - cur


@dataclass
class CurveState:
    vertices: np.ndarray
    closed: bool = True
    t: float = 0.0
    spacing: float | None = None
    collapsed: bool = False

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.spacing is None and len(self.vertices) > 1:
            self.spacing = float(np.mean(self.spacings()))

    def spacings(self) -> np.ndarray:
        if len(self.vertices) < 2:
            return np.zeros(0)
        return np.linalg.norm(_edges(self.vertices, self.closed), axis=1)

    @property
    def length(self) -> float:
        return float(np.sum(self.spacings()))

    def centroid(self) -> np.ndarray:
        return polyline_centroid(self.vertices, self.closed)

    def mean_radius(self) -> float:
        return polyline_radius(self.vertices, self.closed)


def circle_curve(R0: float, n: int, center=(0.0, 0.0, 0.0), axis=(0.0, 0.0, 1.0),
                 t: float = 0.0) -> CurveState:
    """Regular n-gon inscribed in the circle of radius R0 normal to ``axis``."""
    e1, e2 = _plane_basis(axis)
    th = 2 * np.pi * np.arange(n) / n
    v = np.asarray(center, float) + R0 * (np.cos(th)[:, None] * e1 + np.sin(th)[:, None] * e2)
    return CurveState(v, True, t)


def ellipse_curve(a: float, b: float, n: int, center=(0.0, 0.0, 0.0)) -> CurveState:
    th = 2 * np.pi * np.arange(n) / n
    v = np.zeros((n, 3))
    v[:, 0] = a * np.cos(th)
    v[:, 1] = b * np.sin(th)
    curve = CurveState(v + np.asarray(center, float), True, 0.0)
    return resample(curve)


def _plane_basis(axis) -> tuple[np.ndarray, np.ndarray]:
    n = np.asarray(axis, float)
    n = n / np.linalg.norm(n)
    trial = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, trial)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def curvature_vectors(vertices: np.ndarray, closed: bool) -> np.ndarray:
    """H_i = 2[(x+ - x)/s+ - (x - x-)/s-]/(s+ + s-); zero at open endpoints."""
    v = np.asarray(vertices, float)
    H = np.zeros_like(v)
    if len(v) < 3:
        return H
    if closed:
        fwd = np.roll(v, -1, axis=0) - v
        bwd = v - np.roll(v, 1, axis=0)
        sp = np.linalg.norm(fwd, axis=1)[:, None]
        sm = np.linalg.norm(bwd, axis=1)[:, None]
        return 2 * (fwd / sp - bwd / sm) / (sp + sm)
    fwd = v[2:] - v[1:-1]
    bwd = v[1:-1] - v[:-2]
    sp = np.linalg.norm(fwd, axis=1)[:, None]
    sm = np.linalg.norm(bwd, axis=1)[:, None]
    H[1:-1] = 2 * (fwd / sp - bwd / sm) / (sp + sm)
    return H


def resample(curve: CurveState, spacing: float | None = None) -> CurveState:
    """Respace vertices uniformly in arc length along a cubic spline.

    Closed curves use a periodic spline; open curves keep their endpoints.
    When the curve is too short for ``MIN_VERTICES`` points at the target
    spacing the target shrinks so resolution is kept near collapse.
    """
    v = curve.vertices
    target = spacing or curve.spacing
    s = np.concatenate([[0.0], np.cumsum(curve.spacings())])
    length = s[-1]
    n = max(int(round(length / target)), MIN_VERTICES if curve.closed else 2)
    target = min(target, length / (n if curve.closed else max(n - 1, 1)))
    if curve.closed:
        pts = np.vstack([v, v[:1]])
        spl = CubicSpline(s, pts, bc_type="periodic")
        new = spl(np.linspace(0.0, length, n, endpoint=False))
    else:
        spl = CubicSpline(s, v)
        new = spl(np.linspace(0.0, length, n))
        new[0], new[-1] = v[0], v[-1]
    return replace(curve, vertices=new, spacing=target)


def max_curve_dt(curve: CurveState, courant: float = 0.2) -> float:
    return courant * float(np.min(curve.spacings())) ** 2


def evolve_curve(curve: CurveState, dt: float, collapse_floor: float | None = None) -> CurveState:
    """One explicit step x <- x + dt H, then respacing if needed.

    Respacing happens only when some spacing leaves [0.5, 2] x target;
    interpolating every step would add numerical smoothing. A loop with a
    spacing below ``collapse_floor`` (default 1e-3 x target) collapses.
    """
    if curve.collapsed:
        return replace(curve, t=curve.t + dt)
    if dt > max_curve_dt(curve) * (1 + 1e-9):
        raise ValueError(f"dt={dt:.3g} exceeds 0.2*(min spacing)^2={max_curve_dt(curve):.3g}")
    H = curvature_vectors(curve.vertices, curve.closed)
    new = replace(curve, vertices=curve.vertices + dt * H, t=curve.t + dt)
    sp = new.spacings()
    floor = 1e-3 * curve.spacing if collapse_floor is None else collapse_floor
    if curve.closed and (sp.min() < floor or new.length < MIN_VERTICES * floor):
        return CurveState(np.zeros((0, 3)), True, new.t, curve.spacing, collapsed=True)
    if sp.min() < 0.5 * curve.spacing or sp.max() > 2.0 * curve.spacing:
        new = resample(new)
    return new


def flow_curve(curve: CurveState, t_end: float, sample_times: Sequence[float] = (),
               courant: float = 0.2, collapse_fraction: float = 1e-3) -> tuple[CurveState, dict]:
    """Integrate to ``t_end`` with the largest stable step, landing on samples.

    Returns the final state and a dict {t: CurveState} at ``sample_times``.
    The collapse floor is fixed by the initial target spacing.
    """
    floor_spacing = curve.spacing
    stops = sorted(float(s) for s in sample_times if curve.t <= s <= t_end)
    samples = {}
    cur = curve
    while stops and stops[0] <= cur.t + 1e-15:
        samples[stops.pop(0)] = cur
    while cur.t < t_end - 1e-15:
        target = min([t_end] + stops[:1])
        dt = target - cur.t
        if not cur.collapsed:
            dt = min(dt, max_curve_dt(cur, courant))
        cur = evolve_curve(cur, dt, collapse_fraction * floor_spacing)
        if abs(cur.t - target) < 1e-12 * max(1.0, abs(target)):
            cur = replace(cur, t=target)
        while stops and stops[0] <= cur.t + 1e-15:
            samples[stops.pop(0)] = cur
    return cur, samples


def collapse_time(curve: CurveState, t_max: float, courant: float = 0.2) -> float:
    """First time the evolved loop is declared collapsed (inf if not by t_max)."""
    floor_spacing = curve.spacing
    cur = curve
    while cur.t < t_max:
        dt = min(t_max - cur.t, max_curve_dt(cur, courant))
        cur = evolve_curve(cur, dt, 1e-3 * floor_spacing)
        if cur.collapsed:
            return cur.t
    return math.inf


def enclosed_area(vertices: np.ndarray) -> float:
    """Shoelace area of a planar loop (x-y components)."""
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def eccentricity(vertices: np.ndarray) -> float:
    c = vertices - vertices.mean(axis=0)
    ev = np.sort(np.linalg.eigvalsh(c.T @ c))[::-1]
    ev = ev[ev > 1e-14 * ev[0]]
    if len(ev) < 2:
        return 1.0
    return math.sqrt(max(0.0, 1.0 - ev[1] / ev[0]))


# Polyline measures --------------------------------------------------------------------


def polyline_centroid(v: np.ndarray, closed: bool = True) -> np.ndarray:
    e = _edges(v, closed)
    cur = v if closed else v[:-1]
    mid = cur + 0.5 * e
    w = np.linalg.norm(e, axis=1)
    return (mid * w[:, None]).sum(axis=0) / w.sum()


def polyline_radius(v: np.ndarray, closed: bool = True) -> float:
    """Length-weighted mean distance of the segments from the centroid."""
    e = _edges(v, closed)
    cur = v if closed else v[:-1]
    mid = cur + 0.5 * e
    w = np.linalg.norm(e, axis=1)
    c = (mid * w[:, None]).sum(axis=0) / w.sum()
    return float(np.sum(np.linalg.norm(mid - c, axis=1) * w) / w.sum())


def densify(v: np.ndarray, closed: bool, step: float) -> np.ndarray:
    """Points along the polyline no further than ``step`` apart."""
    e = _edges(v, closed)
    cur = v if closed else v[:-1]
    pieces = []
    for p, d in zip(cur, e):
        k = max(1, int(math.ceil(np.linalg.norm(d) / step)))
        pieces.append(p + np.outer(np.arange(k) / k, d))
    if not closed:
        pieces.append(v[-1:])
    return np.vstack(pieces)


def hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(), db.max()))


# Oracles and comparison ------------------------------------------------------------------


@dataclass
class CircleOracle:
    """Exact shrinking circle."""
    R0: float
    center: tuple = (0.0, 0.0, 0.0)
    axis: tuple = (0.0, 0.0, 1.0)

    def radius(self, t: float) -> float:
        return circle_radius(self.R0, min(t, 0.5 * self.R0 ** 2))

    def curve(self, t: float, n: int = 1024) -> CurveState | None:
        r = self.radius(t)
        if r == 0.0:
            return None
        return circle_curve(r, n, self.center, self.axis, t)


class CurveOracle:
    """Parametric integrator started from a given curve; states are cached."""

    def __init__(self, initial: CurveState, courant: float = 0.2):
        self.initial = initial
        self.courant = courant
        self._cache: dict = {}

    def prepare(self, times: Sequence[float]) -> None:
        todo = sorted(t for t in times if t not in self._cache)
        if todo:
            _, samples = flow_curve(self.initial, todo[-1], todo, self.courant)
            self._cache.update(samples)

    def curve(self, t: float) -> CurveState | None:
        if t not in self._cache:
            self.prepare([t])
        c = self._cache[t]
        return None if c.collapsed else c

    def radius(self, t: float) -> float:
        c = self.curve(t)
        return 0.0 if c is None else c.mean_radius()


@dataclass
class FlowRow:
    t: float
    hausdorff: float
    R_fit: float
    R_oracle: float
    degraded: bool = False
    n_filaments: int = 1


@dataclass
class FlowComparison:
    rows: list = dc_field(default_factory=list)
    note: str = ""

    def usable(self) -> list:
        return [r for r in self.rows if not r.degraded and math.isfinite(r.R_fit)]

    @property
    def max_hausdorff(self) -> float:
        u = self.usable()
        return max((r.hausdorff for r in u), default=math.nan)

    def radius_sq_slope(self) -> float:
        """Slope of the least-squares line through (t, R_fit^2)."""
        u = self.usable()
        if len(u) < 2:
            return math.nan
        t = np.array([r.t for r in u])
        r2 = np.array([r.R_fit for r in u]) ** 2
        return float(np.polyfit(t, r2, 1)[0])

    def max_radius_sq_gap(self) -> float:
        u = self.usable()
        return max((abs(r.R_fit ** 2 - r.R_oracle ** 2) for r in u), default=math.nan)

    def max_radius_gap(self) -> float:
        u = self.usable()
        return max((abs(r.R_fit - r.R_oracle) for r in u), default=math.nan)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "hausdorff", "R_fit", "R_oracle"])
            for r in self.rows:
                w.writerow([f"{r.t:.17g}", f"{r.hausdorff:.17g}", f"{r.R_fit:.17g}", f"{r.R_oracle:.17g}"])


def _frames(run) -> list:
    if hasattr(run, "probe"):
        from .vortex import FilamentProbe
        return run.probe(FilamentProbe).frames
    return list(run)


def _shift_near(v: np.ndarray, target: np.ndarray, box) -> np.ndarray:
    """Translate an unwrapped polyline by whole periods toward ``target``."""
    if box is None:
        return v
    box = np.asarray(box, float)
    d = polyline_centroid(v) - target
    return v - box * np.round(d / box)


def compare_flow(run, oracle, box=None, h: float | None = None) -> FlowComparison:
    """Extracted filaments against an oracle curve at every sampled time.

    ``run`` is a RunRecord carrying a FilamentProbe, or a sequence of
    FilamentSets. ``box`` (periodic lengths) lets loops unwrapped into a
    neighbouring image be matched to the oracle. Degraded frames are kept
    but flagged and excluded from fits.
    """
    if hasattr(run, "grid"):
        box = box if box is not None else run.grid.lengths
        h = h if h is not None else run.grid.h
    frames = _frames(run)
    out = FlowComparison()
    for fs in frames:
        if len(fs) == 0:
            continue
        ref = oracle.curve(fs.t)
        step = (h or 0.01) / 4
        if ref is None:
            out.rows.append(FlowRow(fs.t, math.inf, math.nan, 0.0, True, len(fs)))
            continue
        ref_pts = densify(ref.vertices, ref.closed, step)
        c_ref = ref.centroid()
        loops = [_shift_near(f.vertices, c_ref, box) for f in fs.filaments]
        pts = np.vstack([densify(v, f.closed, step) for v, f in zip(loops, fs.filaments)])
        main = max(range(len(loops)), key=lambda i: fs.filaments[i].length)
        r_fit = polyline_radius(loops[main], fs.filaments[main].closed)
        out.rows.append(FlowRow(fs.t, hausdorff(pts, ref_pts), r_fit, oracle.radius(fs.t),
                                fs.degraded or len(fs) != 1, len(fs)))
    if not out.rows:
        out.note = "no filament"
    return out


# Brakke inequality ------------------------------------------------------------------------


@dataclass
class TestFunction:
    """A smooth nonnegative periodic chi with its gradient, evaluated at points."""
    value: Callable
    grad: Callable
    name: str = "chi"


def constant_chi(c: float = 1.0) -> TestFunction:
    return TestFunction(lambda p: np.full(len(p), c), lambda p: np.zeros_like(p), "one")


def bump_chi(center, width: float, box, name: str = "bump") -> TestFunction:
    """exp(-|x - c|^2 / (2 w^2)) with minimum-image distance; needs w << box."""
    c = np.asarray(center, float)
    box = np.asarray(box, float)

    def disp(p):
        d = np.asarray(p, float) - c
        return d - box * np.round(d / box)

    def value(p):
        return np.exp(-np.sum(disp(p) ** 2, axis=1) / (2 * width ** 2))

    def grad(p):
        d = disp(p)
        return -d / width ** 2 * np.exp(-np.sum(d ** 2, axis=1) / (2 * width ** 2))[:, None]

    return TestFunction(value, grad, name)


def moving_average(a: np.ndarray, closed: bool, width: int = 5) -> np.ndarray:
    k = width // 2
    if len(a) < width:
        return a.copy()
    if closed:
        return sum(np.roll(a, s, axis=0) for s in range(-k, k + 1)) / width
    out = a.copy()
    out[k:-k] = sum(a[k + s: len(a) - k + s] for s in range(-k, k + 1)) / width
    return out


def brakke_terms(fs, chi: TestFunction, density: float = LINE_DENSITY) -> tuple[float, float]:
    """(nu(chi), -int chi |H|^2 dnu + int grad chi . H dnu) for one frame."""
    mass = 0.0
    rhs = 0.0
    for f in fs.filaments:
        v = f.vertices
        if len(v) < 3:
            continue
        mid, e = f.segments()
        seg = np.linalg.norm(e, axis=1)
        mass += density * float(np.sum(chi.value(mid) * seg))
        H = moving_average(curvature_vectors(v, f.closed), f.closed)
        if f.closed:
            dual = 0.5 * (seg + np.roll(seg, 1))
        else:
            dual = np.zeros(len(v))
            dual[:-1] += 0.5 * seg
            dual[1:] += 0.5 * seg
            H[0] = H[-1] = 0.0
        chi_v = chi.value(v)
        g_v = chi.grad(v)
        rhs += density * float(np.sum((-chi_v * np.sum(H * H, axis=1) + np.sum(g_v * H, axis=1)) * dual))
    return mass, rhs


@dataclass
class BrakkePair:
    t1: float
    t2: float
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs


@dataclass
class BrakkeReport:
    chi: str
    pairs: list
    slack: float
    floor: float
    skipped: int = 0

    def _scale(self, p: BrakkePair) -> float:
        return max(abs(p.rhs), abs(p.lhs), self.floor)

    @property
    def worst_margin(self) -> float:
        return max((p.margin for p in self.pairs), default=0.0)

    @property
    def slack_needed(self) -> float:
        """Smallest relative slack that admits every pair."""
        return max((max(0.0, p.margin) / self._scale(p) for p in self.pairs), default=0.0)

    @property
    def violations(self) -> list:
        return [p for p in self.pairs if p.margin > self.slack * self._scale(p)]

    @property
    def ok(self) -> bool:
        return not self.violations


def brakke_inequality_check(run, chi: TestFunction, slack: float = 0.15,
                            density: float = LINE_DENSITY, floor: float = 1e-8) -> BrakkeReport:
    """Discrete Brakke sub-solution check over consecutive sample pairs.

    LHS is the difference quotient of nu(chi) = density * sum chi(mid) len;
    RHS is the trapezoid average of -int chi |H|^2 + int grad chi . H over
    the pair. Pairs touching a degraded frame are skipped. ``floor`` is the
    absolute scale below which both sides count as zero.
    """
    frames = _frames(run)
    terms = [None if fs.degraded else brakke_terms(fs, chi, density) for fs in frames]
    pairs = []
    skipped = 0
    for k in range(len(frames) - 1):
        a, b = terms[k], terms[k + 1]
        dt = frames[k + 1].t - frames[k].t
        if a is None or b is None or dt <= 0:
            skipped += 1
            continue
        pairs.append(BrakkePair(frames[k].t, frames[k + 1].t, (b[0] - a[0]) / dt, 0.5 * (a[1] + b[1])))
    return BrakkeReport(chi.name, pairs, slack, floor, skipped)
