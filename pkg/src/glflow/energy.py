"""Energy densities, local and Gaussian-weighted energies, and balance laws.

Conventions: e = |grad u|^2/2 + (1 - |u|^2)^2/(4 eps^2), V is the second
term, |ln eps| = ln(1/eps), and for complex a, b the real product is
a.b = Re(a conj(b)).

Time-integrated identities are computed by probes (see ``record``): callables
fed (t, field, du/dt) during the run that keep only scalar series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .grid import ComplexField, GridSpec, fftn, gradient, grid_sum, ifftn

# Gaussian truncation radius in units of R: six standard deviations of
# exp(-r^2/4R^2), whose standard deviation is sqrt(2) R.
TRUNCATION = 6 * math.sqrt(2)


def potential(values: np.ndarray, epsilon: float) -> np.ndarray:
    m2 = values.real**2 + values.imag**2
    return (1.0 - m2) ** 2 / (4 * epsilon**2)


def _grad_sq(grads) -> np.ndarray:
    return sum(g.real**2 + g.imag**2 for g in grads)


def current(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Real inner product a.b = Re(a conj b) of two complex arrays."""
    return a.real * b.real + a.imag * b.imag


@dataclass(frozen=True, eq=False)
class EnergyDensity:
    grid: GridSpec
    values: np.ndarray
    normalized: bool = False

    @property
    def total(self) -> float:
        return grid_sum(self.values) * self.grid.cell_volume

    def as_measure(self) -> EnergyDensity:
        """Divide by |ln eps| (the mu_eps normalization)."""
        if self.normalized:
            return self
        return EnergyDensity(self.grid, self.values / self.grid.log_eps, True)


def energy_density(field: ComplexField, spectral: bool = True) -> EnergyDensity:
    g = field.grid
    grads = gradient(g, field.values, spectral=spectral)
    e = 0.5 * _grad_sq(grads) + potential(field.values, g.epsilon)
    return EnergyDensity(g, e)


def total_energy(field: ComplexField, spectral: bool = True) -> float:
    return energy_density(field, spectral).total


def _density(obj, spectral=True) -> EnergyDensity:
    if isinstance(obj, EnergyDensity):
        return obj
    return energy_density(obj, spectral)


def local_energy(field: ComplexField | EnergyDensity, center, radius: float) -> float:
    """Energy in the closed periodic ball B(center, radius)."""
    dens = _density(field)
    g = dens.grid
    if radius > min(g.lengths) / 2 + 1e-12:
        raise ValueError(f"radius {radius:g} exceeds half the box {min(g.lengths) / 2:g}")
    mask = g.distance(center) <= radius
    return grid_sum(np.where(mask, dens.values, 0.0)) * g.cell_volume


def ball_indicator(grid: GridSpec, radius: float) -> np.ndarray:
    return (grid.distance([0.0] * grid.dim) <= radius).astype(float)


def h1_norm(field: ComplexField | EnergyDensity) -> float:
    """max over a lattice of centres of local_energy(., ., 1) / |ln eps|.

    Centres sit every ceil(1/(2h)) nodes. Ball sums for all nodes at once come
    from one periodic FFT convolution with the unit-ball indicator.
    """
    dens = _density(field)
    g = dens.grid
    if min(g.lengths) < 2:
        raise ValueError("h1_norm needs box length >= 2")
    stride = math.ceil(1 / (2 * g.h))
    ball = ball_indicator(g, 1.0)
    sums = ifftn(fftn(dens.values) * fftn(ball)).real * g.cell_volume
    sl = tuple(slice(None, None, stride) for _ in range(g.dim))
    return max(0.0, float(np.max(sums[sl]))) / g.log_eps


# Gaussian weights ----------------------------------------------------------


def _image_shifts(grid: GridSpec, s: float, cutoff: float = 40.0):
    """Integer image vectors whose Gaussian exp(-d^2/4s) can exceed e^-cutoff."""
    reach = math.sqrt(4 * s * cutoff)
    ranges = [range(-(math.ceil(reach / L) + 1), math.ceil(reach / L) + 2) for L in grid.lengths]
    for idx in np.ndindex(*[len(r) for r in ranges]):
        yield tuple(r[i] for r, i in zip(ranges, idx))


def gaussian_images(grid: GridSpec, center, s: float, cutoff: float = 40.0):
    """Yield (displacement list, exp(-|x - c - nL|^2 / 4s)) over periodic images.

    The sum over images is the exact weight of the periodic extension on R^d.
    """
    center = np.asarray(center, dtype=float)
    base = [x - c for x, c in zip(grid.coords(), center)]
    for n in _image_shifts(grid, s, cutoff):
        d = [b - ni * L for b, ni, L in zip(base, n, grid.lengths)]
        # nearest possible distance from this image to the box
        near = sum(max(0.0, float(np.min(np.abs(di)))) ** 2 for di in d)
        if near / (4 * s) > cutoff:
            continue
        r2 = sum(di**2 for di in d)
        yield d, np.exp(-r2 / (4 * s))


def gaussian_weight(grid: GridSpec, center, R: float, images: bool = False) -> np.ndarray:
    """exp(-|x - x*|^2 / 4R^2) on the grid.

    Default: min-image distance, truncated at six standard deviations
    (or L/2 - h if smaller). ``images=True`` sums all periodic images instead.
    """
    if images:
        w = np.zeros(grid.shape)
        for _, wi in gaussian_images(grid, center, R * R):
            w = w + wi
        return w
    if 6 * R > min(grid.lengths) / 2 + 1e-12:
        raise ValueError(
            f"R={R:g} too large for truncated weights: need 6R <= L/2 = {min(grid.lengths) / 2:g}"
        )
    r = grid.distance(center)
    cut = min(TRUNCATION * R, min(grid.lengths) / 2 - grid.h)
    return np.where(r <= cut, np.exp(-(r**2) / (4 * R * R)), 0.0)


def weighted_energy(field: ComplexField | EnergyDensity, x_star, R: float,
                    images: bool = False) -> float:
    """R^(2-d) * integral of e * exp(-|x - x*|^2 / 4R^2) for one time slice.

    The caller supplies the slice at t* - R^2.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    dens = _density(field)
    g = dens.grid
    w = gaussian_weight(g, x_star, R, images)
    return R ** (2 - g.dim) * grid_sum(dens.values * w) * g.cell_volume


def heat_kernel(grid: GridSpec, center, s: float) -> np.ndarray:
    """Periodized heat kernel (4 pi s)^(-d/2) sum_n exp(-|x - c - nL|^2/4s)."""
    w = np.zeros(grid.shape)
    for _, wi in gaussian_images(grid, center, s):
        w = w + wi
    return w / (4 * math.pi * s) ** (grid.dim / 2)


# Xi multiplier --------------------------------------------------------------


def xi_density(field: ComplexField, dudt: np.ndarray, x_star, t_star: float,
               displacement: Sequence[np.ndarray] | None = None,
               grads: Sequence[np.ndarray] | None = None) -> np.ndarray:
    """[(x - x*).grad u + 2 (t - t*) u_t]^2 / (4 |t - t*|)  (complex square = |.|^2)."""
    g = field.grid
    tau = field.t - t_star
    if tau == 0:
        raise ValueError("Xi is undefined at t = t*")
    if displacement is None:
        displacement = g.displacement(x_star)
    if grads is None:
        grads = gradient(g, field.values)
    w = sum(d * gi for d, gi in zip(displacement, grads)) + 2 * tau * dudt
    return (w.real**2 + w.imag**2) / (4 * abs(tau))


def point_value(grid: GridSpec, values: np.ndarray, x) -> float:
    """Trigonometric interpolation of a real nodal array at point x."""
    vhat = fftn(values)
    phase = sum(k * xi for k, xi in zip(grid.wavenumbers, np.asarray(x, dtype=float)))
    return float((np.sum(vhat * np.exp(1j * phase)) / vhat.size).real)


class XiIdentityProbe:
    """Accumulates t -> integral of (V + Xi) G over the box, t in [0, t*].

    The kernel is the backward heat kernel G(x - x*, t* - t), summed over
    periodic images with Xi taken per image, so the identity is that of the
    periodic extension on R^d. At t = t* the integrand's limit e(x*, t*) is used.
    """

    def __init__(self, x_star, t_star: float):
        self.x_star = tuple(float(c) for c in x_star)
        self.t_star = float(t_star)
        self.t: list[float] = []
        self.values: list[float] = []
        self.initial_weighted = None
        self.dim = None

    def __call__(self, t, field, du):
        if t > self.t_star + 1e-12:
            return
        g = field.grid
        dens = energy_density(field)
        if not self.t:
            self.dim = g.dim
            self.initial_weighted = weighted_energy(dens, self.x_star, math.sqrt(self.t_star), images=True) \
                if self.t_star > 0 else 0.0
        s = self.t_star - t
        if s <= 1e-14:
            val = point_value(g, dens.values, self.x_star)
        else:
            V = potential(field.values, g.epsilon)
            grads = gradient(g, field.values)
            total = 0.0
            for d, w in gaussian_images(g, self.x_star, s):
                xi = xi_density(field, du, self.x_star, self.t_star, displacement=d, grads=grads)
                total += grid_sum((V + xi) * w)
            val = total * g.cell_volume / (4 * math.pi * s) ** (g.dim / 2)
        self.t.append(float(t))
        self.values.append(float(val))

    def lhs(self) -> float:
        t, v = np.asarray(self.t), np.asarray(self.values)
        return float(np.trapezoid(v, t)) if t.size > 1 else 0.0

    def rhs(self) -> float:
        """(4 pi)^(-d/2) E_w(z*, sqrt t*) from the initial slice."""
        if self.initial_weighted is None:
            raise ValueError("probe saw no samples")
        return self.initial_weighted / (4 * math.pi) ** (self.dim / 2)

    def residual(self) -> float:
        if not self.t or abs(self.t[-1] - self.t_star) > 1e-9 * max(1, self.t_star):
            raise ValueError(f"run does not cover [0, t*={self.t_star:g}]")
        rhs = self.rhs()
        floor = np.finfo(float).tiny
        return abs(self.lhs() - rhs) / max(abs(rhs), floor) if rhs != 0 else abs(self.lhs())


def xi_identity_residual(run, x_star, t_star: float) -> float:
    """Relative residual of the space-time Xi identity at z* = (x*, t*)."""
    if t_star > run.t_end + 1e-12:
        raise ValueError(f"t*={t_star:g} exceeds run length {run.t_end:g}")
    return run.probe(XiIdentityProbe, x_star=tuple(float(c) for c in x_star),
                     t_star=float(t_star)).residual()


# Monotonicity ---------------------------------------------------------------


@dataclass
class WeightedEnergyCurve:
    x_star: tuple
    t_star: float
    R: np.ndarray
    E: np.ndarray
    truncation: float | None
    tol: float
    small_r_estimate: float
    decreases: list = dc_field(default_factory=list)

    @property
    def monotone(self) -> bool:
        return not self.decreases

    @property
    def worst_drop(self) -> float:
        d = np.diff(self.E)
        return float(max(0.0, -np.min(d))) if d.size else 0.0


def monotonicity_scan(run, x_star, t_star: float, R_list: Sequence[float],
                      tol: float = 1e-3, images: bool = False) -> WeightedEnergyCurve:
    """E_w(z*, R) for each R from the run's snapshot at t* - R^2."""
    R = np.asarray(sorted(R_list), dtype=float)
    if np.any(np.diff(R) <= 0):
        raise ValueError("R_list must be strictly increasing")
    if R.size == 0 or R[0] <= 0 or R[-1] > math.sqrt(t_star) * (1 + 1e-12):
        raise ValueError("need 0 < R <= sqrt(t*)")
    E = []
    dens0 = None
    for r in R:
        snap = run.snapshot(t_star - r * r)
        dens = energy_density(snap)
        if dens0 is None:
            dens0 = dens
        E.append(weighted_energy(dens, x_star, r, images=images))
    E = np.asarray(E)
    g = run.grid
    scale = float(np.max(np.abs(E))) if E.size else 0.0
    drops = [(float(R[i]), float(R[i + 1]), float(E[i] - E[i + 1]))
             for i in range(len(E) - 1) if E[i + 1] < E[i] - tol * scale]
    # leading small-R behaviour: E_w ~ (4 pi)^(d/2) R^2 e(x*), which tends to 0
    small = (4 * math.pi) ** (g.dim / 2) * R[0] ** 2 * point_value(g, dens0.values, x_star)
    return WeightedEnergyCurve(tuple(x_star), float(t_star), R, E,
                               None if images else TRUNCATION, tol, float(small), drops)


def parabolic_density(run, x, t: float, r_list: Sequence[float], images: bool = True) -> dict:
    """r -> r^(2-d) integral exp(-|x - y|^2/4r^2) d mu(t - r^2), mu = e/|ln eps|.

    A plateau is reported when the last three values agree within 10%.
    """
    curve = monotonicity_scan(run, x, t, r_list, images=images)
    vals = curve.E / run.grid.log_eps
    plateau = None
    if vals.size >= 3:
        tail = vals[-3:]
        if np.max(tail) - np.min(tail) <= 0.1 * max(abs(float(np.max(tail))), 1e-300):
            plateau = float(np.mean(tail))
    return {"r": curve.R, "density": vals, "plateau": plateau}


# Balance laws ---------------------------------------------------------------


class EnergyBalanceProbe:
    """Series for  d/dt int chi e  =  -int chi |u_t|^2  -  int grad chi . (u_t . grad u).

    ``chi`` is a real nodal array (its gradient is taken spectrally) or None
    for chi = 1.
    """

    def __init__(self, chi: np.ndarray | None = None, name: str = "chi"):
        self.chi = chi
        self.name = name
        self.t: list[float] = []
        self.mass: list[float] = []
        self.rate: list[float] = []
        self._grad_chi = None

    def __call__(self, t, field, du):
        g = field.grid
        grads = gradient(g, field.values)
        e = 0.5 * _grad_sq(grads) + potential(field.values, g.epsilon)
        dis = du.real**2 + du.imag**2
        if self.chi is None:
            mass = grid_sum(e)
            rate = -grid_sum(dis)
        else:
            if self._grad_chi is None:
                self._grad_chi = gradient(g, np.asarray(self.chi, dtype=float))
            flux = sum(gc * current(du, gu) for gc, gu in zip(self._grad_chi, grads))
            mass = grid_sum(self.chi * e)
            rate = -grid_sum(self.chi * dis) - grid_sum(flux)
        self.t.append(float(t))
        self.mass.append(mass * g.cell_volume)
        self.rate.append(rate * g.cell_volume)

    def residuals(self, t_min: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Per-interval |difference quotient - trapezoid mean rate| and the mean rate."""
        t = np.asarray(self.t)
        m = np.asarray(self.mass)
        r = np.asarray(self.rate)
        keep = t[:-1] >= t_min - 1e-12
        lhs = np.diff(m) / np.diff(t)
        rhs = 0.5 * (r[1:] + r[:-1])
        return np.abs(lhs - rhs)[keep], rhs[keep]

    def relative_residual(self, t_min: float = 0.0) -> float:
        res, rhs = self.residuals(t_min)
        if res.size == 0:
            raise ValueError("no sample intervals after t_min")
        scale = float(np.max(np.abs(rhs)))
        return float(np.max(res)) / scale if scale > 0 else float(np.max(res))


def energy_balance_residual(run, name: str = "chi", t_min: float = 0.0) -> float:
    return run.probe(EnergyBalanceProbe, name=name).relative_residual(t_min)


def bump(grid: GridSpec, center, width: float) -> np.ndarray:
    """Smooth periodic test function: Gaussian of the min-image distance."""
    r = grid.distance(center)
    return np.exp(-(r**2) / (2 * width**2))


# Stress-energy ---------------------------------------------------------------


def stress_energy_tensor(field: ComplexField, spectral: bool = True) -> np.ndarray:
    """A_ij = e delta_ij - Re(d_i u conj d_j u), shape (d, d, *grid.shape)."""
    g = field.grid
    grads = gradient(g, field.values, spectral=spectral)
    e = 0.5 * _grad_sq(grads) + potential(field.values, g.epsilon)
    A = np.empty((g.dim, g.dim) + g.shape)
    for i in range(g.dim):
        for j in range(g.dim):
            A[i, j] = -current(grads[i], grads[j])
            if i == j:
                A[i, j] += e
    return A


def stress_identity_residual(field: ComplexField, dudt: np.ndarray, X: Sequence[np.ndarray],
                             spectral: bool = True) -> dict:
    """Compare  int A : grad X  with  int X . (u_t . grad u).

    They agree for solutions since div A = -(u_t . grad u). Returns both terms
    and their difference relative to the larger one.
    """
    g = field.grid
    grads = gradient(g, field.values, spectral=spectral)
    A = stress_energy_tensor(field, spectral)
    gX = [gradient(g, np.asarray(Xi, dtype=float), spectral=spectral) for Xi in X]
    t1 = sum(grid_sum(A[i, j] * gX[i][j]) for i in range(g.dim) for j in range(g.dim))
    t2 = sum(grid_sum(np.asarray(X[i]) * current(dudt, grads[i])) for i in range(g.dim))
    t1 *= g.cell_volume / g.log_eps
    t2 *= g.cell_volume / g.log_eps
    scale = max(abs(t1), abs(t2))
    rel = abs(t1 - t2) / scale if scale > 0 else 0.0
    return {"stress_term": t1, "transport_term": t2, "residual": rel}


class DissipationProbe:
    """Total energy and (1/|ln eps|) int |u_t|^2 per sample."""

    def __init__(self):
        self.t: list[float] = []
        self.energy: list[float] = []
        self.dissipation: list[float] = []

    def __call__(self, t, field, du):
        g = field.grid
        self.t.append(float(t))
        self.energy.append(total_energy(field))
        self.dissipation.append(grid_sum(du.real**2 + du.imag**2) * g.cell_volume)

    def budget(self, log_eps: float) -> float:
        """(1/|ln eps|) int_0^T int |u_t|^2."""
        return float(np.trapezoid(self.dissipation, self.t)) / log_eps


class StressProbe:
    """Stress identity residual for a fixed vector field X every ``every`` samples."""

    def __init__(self, X: Sequence[np.ndarray], every: int = 1, t_min: float = 0.0):
        self.X = [np.asarray(x, dtype=float) for x in X]
        self.every = every
        self.t_min = t_min
        self.t: list[float] = []
        self.residual: list[float] = []
        self.scale: list[float] = []
        self._n = 0

    def __call__(self, t, field, du):
        if self._n % self.every == 0 and t >= self.t_min - 1e-12:
            r = stress_identity_residual(field, du, self.X)
            self.t.append(float(t))
            self.residual.append(r["residual"])
            self.scale.append(max(abs(r["stress_term"]), abs(r["transport_term"])))
        self._n += 1

    def worst(self) -> float:
        return max(self.residual, default=0.0)
